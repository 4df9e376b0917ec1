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

#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "erw/rng.hpp"

namespace erw {

/// Raised for invalid user-facing input (bad law files, out-of-range
/// arguments). The CLI maps it to exit status 2.
class UsageError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Cookie probabilities omega(1..M) of one site. Visits past M are fair.
class CookieStack {
public:
  CookieStack() = default;
  explicit CookieStack(std::vector<double> probs);

  /// Probability of a right step on the `visit`-th visit (1-based).
  double at(std::size_t visit) const {
    return visit >= 1 && visit <= probs_.size() ? probs_[visit - 1] : 0.5;
  }

  std::size_t size() const { return probs_.size(); }
  std::span<const double> probs() const { return probs_; }

  /// Sum of 2*omega(i) - 1 over the stack.
  double drift() const;

  friend bool operator==(const CookieStack&, const CookieStack&) = default;

private:
  std::vector<double> probs_;
};

/// Finite discrete i.i.d. law of cookie stacks.
class EnvironmentLaw {
public:
  struct Atom {
    CookieStack stack;
    double weight = 1.0;
    friend bool operator==(const Atom&, const Atom&) = default;
  };

  explicit EnvironmentLaw(std::vector<Atom> atoms);

  static EnvironmentLaw single(std::vector<double> probs);
  /// Constant stack of length M with drift delta spread evenly.
  static EnvironmentLaw homogeneous(double delta, std::size_t M);
  /// All-placebo law with M cookies of value 1/2.
  static EnvironmentLaw placebo(std::size_t M = 1);

  /// Parses the JSON law grammar:
  ///   {"M": <int>, "atoms": [{"probs": [<real>...], "weight": <real>}, ...]}
  /// "weight" may be omitted when there is a single atom.
  static EnvironmentLaw from_json(std::string_view text);
  static EnvironmentLaw from_file(const std::string& path);
  std::string to_json() const;

  std::size_t cookies() const { return M_; }
  std::span<const Atom> atoms() const { return atoms_; }
  bool deterministic() const { return atoms_.size() == 1; }
  const CookieStack& stack(std::size_t atom) const { return atoms_[atom].stack; }

  /// Index of an atom drawn according to the weights.
  std::size_t sample_atom(rng::Rng& rng) const;
  const CookieStack& sample(rng::Rng& rng) const { return atoms_[sample_atom(rng)].stack; }

  friend bool operator==(const EnvironmentLaw&, const EnvironmentLaw&) = default;

private:
  std::vector<Atom> atoms_;
  std::vector<double> cumulative_;
  std::size_t M_ = 0;
};

/// Per-site state over the visited range, sampled lazily from a law.
class Environment {
public:
  static constexpr std::uint32_t kUnsampled = 0xFFFFFFFFU;

  struct Site {
    std::uint32_t visits = 0;
    std::uint32_t atom = kUnsampled;
    std::uint32_t left_jumps = 0;
  };

  explicit Environment(const EnvironmentLaw& law, std::int64_t reserve_radius = 64);

  /// State of site x; the stack is drawn on first access and then frozen.
  Site& site(std::int64_t x, rng::Rng& rng) {
    if (x < lo_ || x >= hi_) grow(x);
    Site& s = sites_[static_cast<std::size_t>(x - lo_)];
    if (s.atom == kUnsampled) s.atom = static_cast<std::uint32_t>(law_->sample_atom(rng));
    return s;
  }

  /// Read-only lookup; unvisited sites report zero visits.
  Site peek(std::int64_t x) const;

  /// Right-step probability for the i-th visit (1-based) to x.
  double cookie(std::int64_t x, std::size_t visit, rng::Rng& rng) {
    const Site& s = site(x, rng);
    return law_->stack(s.atom).at(visit);
  }

  const EnvironmentLaw& law() const { return *law_; }
  std::int64_t lowest() const { return lo_; }
  std::int64_t highest() const { return hi_ - 1; }

private:
  void grow(std::int64_t x);
  Site blank() const { return Site{0, law_->deterministic() ? 0U : kUnsampled, 0}; }

  const EnvironmentLaw* law_;
  std::vector<Site> sites_;
  std::int64_t lo_;
  std::int64_t hi_;
};

enum class RegimeKind { Recurrent, TransientZeroSpeed, StableFluct, StableBoundary, Gaussian };

struct Regime {
  RegimeKind kind;
  double delta;
};

std::string_view to_string(RegimeKind kind);

/// Average total drift per site: sum over atoms of weight * sum(2 omega - 1).
double delta_of_law(const EnvironmentLaw& law);

/// Replaces every cookie omega(i) by 1 - omega(i).
EnvironmentLaw reflect_law(const EnvironmentLaw& law);

/// True iff E[prod omega(i)] > 0 and E[prod (1 - omega(i))] > 0.
bool check_nondegeneracy(const EnvironmentLaw& law);

/// Tolerance used when matching delta against the regime boundaries 1, 2, 4.
inline constexpr double kRegimeBoundaryTol = 1e-9;

/// Boundary convention: delta <= 1 is Recurrent, (1, 2] TransientZeroSpeed,
/// (2, 4) StableFluct, 4 StableBoundary, (4, inf) Gaussian.
/// Negative delta throws UsageError; reflect the law first.
Regime classify_regime(double delta);

} // namespace erw
