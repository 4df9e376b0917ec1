/*
   Copyright 2026 The erwsim Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#include "erw/env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace erw {

using nlohmann::json;

CookieStack::CookieStack(std::vector<double> probs) : probs_(std::move(probs)) {
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    const double p = probs_[i];
    if (!(p >= 0.0 && p <= 1.0))
      throw UsageError("probs[" + std::to_string(i) + "] = " + std::to_string(p) +
                       " is outside [0, 1]");
  }
}

double CookieStack::drift() const {
  double d = 0.0;
  for (double p : probs_) d += 2.0 * p - 1.0;
  return d;
}

EnvironmentLaw::EnvironmentLaw(std::vector<Atom> atoms) : atoms_(std::move(atoms)) {
  if (atoms_.empty()) throw UsageError("law has no atoms");
  M_ = atoms_.front().stack.size();
  double total = 0.0;
  for (std::size_t a = 0; a < atoms_.size(); ++a) {
    const Atom& atom = atoms_[a];
    if (atom.stack.size() != M_)
      throw UsageError("atom " + std::to_string(a) + ": has " +
                       std::to_string(atom.stack.size()) + " cookies, expected M = " +
                       std::to_string(M_));
    if (!(atom.weight > 0.0))
      throw UsageError("atom " + std::to_string(a) + ": weight must be positive");
    total += atom.weight;
    cumulative_.push_back(total);
  }
  if (std::fabs(total - 1.0) > 1e-12)
    throw UsageError("atom weights sum to " + std::to_string(total) + ", expected 1");
  cumulative_.back() = 1.0;
}

EnvironmentLaw EnvironmentLaw::single(std::vector<double> probs) {
  return EnvironmentLaw({Atom{CookieStack(std::move(probs)), 1.0}});
}

EnvironmentLaw EnvironmentLaw::homogeneous(double delta, std::size_t M) {
  if (M == 0) throw UsageError("homogeneous law needs M >= 1");
  if (std::fabs(delta) > static_cast<double>(M))
    throw UsageError("|delta| cannot exceed M");
  const double p = 0.5 + delta / (2.0 * static_cast<double>(M));
  return single(std::vector<double>(M, p));
}

EnvironmentLaw EnvironmentLaw::placebo(std::size_t M) {
  return single(std::vector<double>(M, 0.5));
}

EnvironmentLaw EnvironmentLaw::from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("law file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw UsageError("law must be a JSON object");
  if (!doc.contains("M") || !doc["M"].is_number_integer() || doc["M"].get<long long>() < 0)
    throw UsageError("law: key 'M' must be a non-negative integer");
  const auto M = doc["M"].get<std::size_t>();
  if (!doc.contains("atoms") || !doc["atoms"].is_array() || doc["atoms"].empty())
    throw UsageError("law: key 'atoms' must be a non-empty list");

  const auto& list = doc["atoms"];
  std::vector<Atom> atoms;
  for (std::size_t a = 0; a < list.size(); ++a) {
    const std::string where = "atom " + std::to_string(a);
    const auto& entry = list[a];
    if (!entry.is_object() || !entry.contains("probs") || !entry["probs"].is_array())
      throw UsageError(where + ": missing 'probs' list");
    const auto& probs = entry["probs"];
    if (probs.size() != M)
      throw UsageError(where + ": has " + std::to_string(probs.size()) +
                       " cookies, expected M = " + std::to_string(M));
    std::vector<double> values;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (!probs[i].is_number())
        throw UsageError(where + ": probs[" + std::to_string(i) + "] is not a number");
      values.push_back(probs[i].get<double>());
    }
    double weight = 1.0;
    if (entry.contains("weight")) {
      if (!entry["weight"].is_number()) throw UsageError(where + ": weight is not a number");
      weight = entry["weight"].get<double>();
    } else if (list.size() > 1) {
      throw UsageError(where + ": missing 'weight'");
    }
    try {
      atoms.push_back(Atom{CookieStack(std::move(values)), weight});
    } catch (const UsageError& e) {
      throw UsageError(where + ": " + e.what());
    }
  }
  return EnvironmentLaw(std::move(atoms));
}

EnvironmentLaw EnvironmentLaw::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open law file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

std::string EnvironmentLaw::to_json() const {
  json doc;
  doc["M"] = M_;
  doc["atoms"] = json::array();
  for (const Atom& a : atoms_) {
    json entry;
    entry["probs"] = std::vector<double>(a.stack.probs().begin(), a.stack.probs().end());
    entry["weight"] = a.weight;
    doc["atoms"].push_back(entry);
  }
  return doc.dump();
}

std::size_t EnvironmentLaw::sample_atom(rng::Rng& rng) const {
  if (atoms_.size() == 1) return 0;
  const double u = rng.uniform();
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()),
                               atoms_.size() - 1);
}

Environment::Environment(const EnvironmentLaw& law, std::int64_t reserve_radius)
    : law_(&law), lo_(-reserve_radius), hi_(reserve_radius) {
  sites_.assign(static_cast<std::size_t>(hi_ - lo_), blank());
}

Environment::Site Environment::peek(std::int64_t x) const {
  if (x < lo_ || x >= hi_) return blank();
  return sites_[static_cast<std::size_t>(x - lo_)];
}

void Environment::grow(std::int64_t x) {
  const std::int64_t width = hi_ - lo_;
  std::int64_t new_lo = lo_;
  std::int64_t new_hi = hi_;
  if (x < lo_) new_lo = std::min(x, lo_ - width);
  if (x >= hi_) new_hi = std::max(x + 1, hi_ + width);
  std::vector<Site> grown(static_cast<std::size_t>(new_hi - new_lo), blank());
  std::copy(sites_.begin(), sites_.end(), grown.begin() + (lo_ - new_lo));
  sites_ = std::move(grown);
  lo_ = new_lo;
  hi_ = new_hi;
}

std::string_view to_string(RegimeKind kind) {
  switch (kind) {
  case RegimeKind::Recurrent: return "recurrent";
  case RegimeKind::TransientZeroSpeed: return "transient_zero_speed";
  case RegimeKind::StableFluct: return "stable_fluctuations";
  case RegimeKind::StableBoundary: return "stable_boundary";
  case RegimeKind::Gaussian: return "gaussian";
  }
  return "unknown";
}

double delta_of_law(const EnvironmentLaw& law) {
  double delta = 0.0;
  for (const auto& atom : law.atoms()) delta += atom.weight * atom.stack.drift();
  return delta;
}

EnvironmentLaw reflect_law(const EnvironmentLaw& law) {
  std::vector<EnvironmentLaw::Atom> atoms;
  for (const auto& atom : law.atoms()) {
    std::vector<double> probs;
    for (double p : atom.stack.probs()) probs.push_back(1.0 - p);
    atoms.push_back({CookieStack(std::move(probs)), atom.weight});
  }
  return EnvironmentLaw(std::move(atoms));
}

bool check_nondegeneracy(const EnvironmentLaw& law) {
  double right = 0.0;
  double left = 0.0;
  for (const auto& atom : law.atoms()) {
    double pr = atom.weight;
    double pl = atom.weight;
    for (double p : atom.stack.probs()) {
      pr *= p;
      pl *= 1.0 - p;
    }
    right += pr;
    left += pl;
  }
  return right > 0.0 && left > 0.0;
}

Regime classify_regime(double delta) {
  if (!(delta >= 0.0))
    throw UsageError("negative delta: reflect the law (omega -> 1 - omega) first");
  const auto near = [delta](double b) { return std::fabs(delta - b) <= kRegimeBoundaryTol; };
  RegimeKind kind;
  if (delta <= 1.0 || near(1.0))
    kind = RegimeKind::Recurrent;
  else if (delta <= 2.0 || near(2.0))
    kind = RegimeKind::TransientZeroSpeed;
  else if (near(4.0))
    kind = RegimeKind::StableBoundary;
  else if (delta < 4.0)
    kind = RegimeKind::StableFluct;
  else
    kind = RegimeKind::Gaussian;
  return {kind, delta};
}

} // namespace erw
