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

#include "erw/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "erw/env.hpp"
#include "erw/parallel.hpp"
#include "erw/sample.hpp"

namespace erw::diffusion {

DiffusionConfig DiffusionConfig::defaults(double delta, double y0) {
  DiffusionConfig c;
  c.delta = delta;
  c.y0 = y0;
  c.dt = 1e-4 * std::max(y0, 1.0);
  c.t_max = 1e3 * y0;
  return c;
}

void DiffusionConfig::validate() const {
  if (!(delta > 0.0)) throw UsageError("diffusion delta must be positive");
  if (!(y0 > 0.0)) throw UsageError("diffusion y0 must be positive");
  if (!(dt > 0.0)) throw UsageError("diffusion dt must be positive");
  if (!(dt < y0 / 10.0)) throw UsageError("diffusion dt must be below y0 / 10");
  if (!(t_max >= 0.0)) throw UsageError("diffusion t_max must be non-negative");
  if (!std::is_sorted(levels.begin(), levels.end()))
    throw UsageError("diffusion levels must be ascending");
}

DiffusionResult simulate_Y(const DiffusionConfig& config, rng::Rng& rng) {
  config.validate();
  DiffusionResult res;
  const auto& levels = config.levels;
  res.level_hits.assign(levels.size(), std::nullopt);

  // Unhit levels form two runs around the path: [0, below] and [above, end).
  const auto first_above = std::upper_bound(levels.begin(), levels.end(), config.y0);
  std::ptrdiff_t below = (first_above - levels.begin()) - 1;
  std::size_t above = static_cast<std::size_t>(first_above - levels.begin());
  // A level equal to y0 counts as hit at time 0.
  while (below >= 0 && levels[static_cast<std::size_t>(below)] == config.y0) {
    res.level_hits[static_cast<std::size_t>(below)] = 0.0;
    --below;
  }

  const double dt = config.dt;
  const double drift = (1.0 - config.delta) * dt;
  const double two_dt = 2.0 * dt;
  const auto max_steps = static_cast<std::uint64_t>(std::floor(config.t_max / dt));

  constexpr double kInf = std::numeric_limits<double>::infinity();
  const auto lo_bound = [&] { return below >= 0 ? levels[static_cast<std::size_t>(below)] : -kInf; };
  const auto hi_bound = [&] { return above < levels.size() ? levels[above] : kInf; };
  double next_lo = lo_bound();
  double next_hi = hi_bound();

  double y = config.y0;
  std::uint64_t step = 0;
  bool level_stop = false;
  if (config.path_stride) res.path.push_back(y);
  while (step < max_steps) {
    const double y_next = y + drift + std::sqrt(two_dt * std::max(y, 0.0)) * sample::normal(rng);
    const double t = static_cast<double>(step) * dt;

    if (y_next <= next_lo || y_next >= next_hi) {
      while (below >= 0 && y_next <= levels[static_cast<std::size_t>(below)]) {
        const double L = levels[static_cast<std::size_t>(below)];
        res.level_hits[static_cast<std::size_t>(below)] = t + dt * (y - L) / (y - y_next);
        --below;
        level_stop = config.stop_at_level;
      }
      while (above < levels.size() && y_next >= levels[above]) {
        const double L = levels[above];
        res.level_hits[above] = t + dt * (L - y) / (y_next - y);
        ++above;
        level_stop = config.stop_at_level;
      }
      next_lo = lo_bound();
      next_hi = hi_bound();
    }

    if (y_next <= 0.0) {
      const double frac = y / (y - y_next);
      res.tau0 = t + frac * dt;
      res.area += 0.5 * y * frac * dt;
      res.final_value = 0.0;
      res.final_time = *res.tau0;
      if (config.path_stride) res.path.push_back(0.0);
      return res;
    }
    res.area += 0.5 * (y + y_next) * dt;
    y = y_next;
    ++step;
    if (config.path_stride && step % config.path_stride == 0) res.path.push_back(y);
    if (level_stop) break;
  }
  res.censored = true;
  res.final_value = y;
  res.final_time = static_cast<double>(step) * dt;
  return res;
}

double hitting_prob(double y, double a, double b, double delta) {
  if (!(0.0 <= a && a < y && y < b))
    throw UsageError("hitting_prob needs 0 <= a < y < b");
  if (!(delta > 0.0)) throw UsageError("hitting_prob needs delta > 0");
  const double bd = std::pow(b, delta);
  return (bd - std::pow(y, delta)) / (bd - std::pow(a, delta));
}

std::string to_string(Functional f) { return f == Functional::Tau0 ? "tau0" : "area"; }

std::string to_jsonl(const DiffusionResult& result, std::uint64_t rep, std::uint64_t seed) {
  nlohmann::json row;
  row["rep"] = rep;
  row["seed"] = seed;
  row["tau0"] = result.tau0 ? nlohmann::json(*result.tau0) : nlohmann::json(nullptr);
  row["censored"] = result.censored;
  row["area"] = result.area;
  auto hits = nlohmann::json::array();
  for (const auto& h : result.level_hits)
    hits.push_back(h ? nlohmann::json(*h) : nlohmann::json(nullptr));
  row["level_hits"] = hits;
  return row.dump();
}

FunctionalSample PathSample::functional(Functional f) const {
  FunctionalSample out;
  out.censored = censored;
  for (std::size_t r = 0; r < tau0.size(); ++r)
    if (tau0[r]) out.values.push_back(f == Functional::Tau0 ? *tau0[r] : area[r]);
  return out;
}

PathSample sample_paths(const DiffusionConfig& config, std::size_t reps,
                        const rng::Streams& streams, unsigned workers) {
  config.validate();
  struct Row {
    double tau0 = 0.0;
    double area = 0.0;
    bool censored = false;
  };
  auto run = [&](const DiffusionConfig& c, std::size_t r) {
    auto rng = streams.at(r);
    const auto res = simulate_Y(c, rng);
    return Row{res.tau0.value_or(0.0), res.area, !res.tau0.has_value()};
  };
  auto rows = parallel_map(reps, workers, [&](std::size_t r) { return run(config, r); });

  DiffusionConfig c = config;
  for (int d = 0; d < kMaxHorizonDoublings; ++d) {
    std::vector<std::size_t> redo;
    for (std::size_t r = 0; r < reps; ++r)
      if (rows[r].censored) redo.push_back(r);
    if (static_cast<double>(redo.size()) <= kRetryCensoring * static_cast<double>(reps)) break;
    c.t_max *= 2.0;
    const auto again =
        parallel_map(redo.size(), workers, [&](std::size_t i) { return run(c, redo[i]); });
    for (std::size_t i = 0; i < redo.size(); ++i) rows[redo[i]] = again[i];
  }

  PathSample out;
  out.t_max = c.t_max;
  out.tau0.reserve(reps);
  out.area.reserve(reps);
  for (const Row& row : rows) {
    if (row.censored) ++out.censored;
    out.tau0.push_back(row.censored ? std::nullopt : std::optional<double>(row.tau0));
    out.area.push_back(row.area);
  }
  return out;
}

FunctionalSample sample_functional(const DiffusionConfig& config, Functional f, std::size_t reps,
                                   const rng::Streams& streams, unsigned workers) {
  return sample_paths(config, reps, streams, workers).functional(f);
}

ScalingReport scaling_report(const FunctionalSample& scaled, const FunctionalSample& unit,
                             double y, Functional f, double threshold) {
  const double div = std::pow(y, f == Functional::Tau0 ? 1.0 : 2.0);
  std::vector<double> rescaled(scaled.values);
  for (double& v : rescaled) v /= div;
  ScalingReport rep;
  const auto ks = stats::ks_two_sample(rescaled, unit.values);
  rep.ks_distance = ks.distance;
  rep.p_value = ks.p_value;
  rep.pass = ks.distance < threshold;
  rep.censored_scaled = scaled.censored;
  rep.censored_unit = unit.censored;
  return rep;
}

ScalingReport verify_scaling(double y, double delta, Functional f, std::size_t reps,
                             const rng::Streams& streams, double threshold, unsigned workers) {
  if (!(y > 0.0)) throw UsageError("verify_scaling needs y > 0");
  const auto scaled = sample_functional(DiffusionConfig::defaults(delta, y), f, reps,
                                        streams.sub("scaled"), workers);
  const auto unit = sample_functional(DiffusionConfig::defaults(delta, 1.0), f, reps,
                                      streams.sub("unit"), workers);
  return scaling_report(scaled, unit, y, f, threshold);
}

TailExperiment tail_experiment(double delta, Functional f, std::size_t reps,
                               const stats::TailConfig& thresholds, const rng::Streams& streams,
                               unsigned workers) {
  if (!(delta > 1.0)) throw UsageError("tail experiment needs delta > 1");
  return tail_experiment(
      sample_functional(DiffusionConfig::defaults(delta, 1.0), f, reps, streams, workers), f,
      thresholds);
}

TailExperiment tail_experiment(FunctionalSample sample, Functional f,
                               const stats::TailConfig& thresholds) {
  if (f == Functional::Area)
    for (double& v : sample.values) v = std::sqrt(v);
  TailExperiment out;
  out.fit = stats::fit_tail_exponent(sample.values, stats::TailMethod::LogLogSurvival, thresholds);
  out.censored = sample.censored;
  out.used = sample.values.size();
  std::size_t at_lo = 0;
  for (double v : sample.values)
    if (v > out.fit.lo) ++at_lo;
  out.censoring_flag = static_cast<double>(out.censored) > 0.01 * static_cast<double>(at_lo);
  if (out.censoring_flag) out.fit.warnings.push_back("censoring above 1% of exceedances");
  out.samples = std::move(sample.values);
  return out;
}

} // namespace erw::diffusion
