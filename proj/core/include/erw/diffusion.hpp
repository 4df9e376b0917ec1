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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "erw/rng.hpp"
#include "erw/stats.hpp"

// dY = (1 - delta) dt + sqrt(2 Y) dB, absorbed at 0.
namespace erw::diffusion {

struct DiffusionConfig {
  double delta = 1.5;
  double y0 = 1.0;
  double dt = 1e-4;
  double t_max = 1e3;
  std::vector<double> levels; // ascending
  /// End the path at the first level crossing instead of at absorption.
  bool stop_at_level = false;
  /// Keep every `path_stride`-th point of the path (0 = no path).
  std::size_t path_stride = 0;

  /// dt = 1e-4 * max(y0, 1), t_max = 1e3 * y0.
  static DiffusionConfig defaults(double delta, double y0);
  /// Throws UsageError unless delta > 0, y0 > 0, dt < y0 / 10, levels sorted.
  void validate() const;
};

struct DiffusionResult {
  std::optional<double> tau0; // interpolated absorption time
  bool censored = false;      // reached t_max (or stopped at a level) first
  double area = 0.0;          // trapezoidal integral of Y up to tau0
  std::vector<std::optional<double>> level_hits; // aligned with config.levels
  std::vector<double> path;
  double final_value = 0.0;
  double final_time = 0.0;
};

/// Full-truncation Euler-Maruyama:
///   Y <- Y + (1 - delta) dt + sqrt(2 max(Y, 0) dt) N(0, 1),
/// with crossing times of 0 and of each level linearly interpolated.
DiffusionResult simulate_Y(const DiffusionConfig& config, rng::Rng& rng);

/// P_y(tau_a < tau_b) = (b^delta - y^delta) / (b^delta - a^delta),
/// for 0 <= a < y < b.
double hitting_prob(double y, double a, double b, double delta);

enum class Functional { Tau0, Area };

std::string to_string(Functional f);

/// {rep, seed, tau0, censored, area, level_hits}
std::string to_jsonl(const DiffusionResult& result, std::uint64_t rep, std::uint64_t seed);

/// Absorption functional of `reps` independent paths from y0; censored
/// paths are dropped and counted.
struct FunctionalSample {
  std::vector<double> values;
  std::size_t censored = 0;
};

/// Both functionals of the same paths, indexed by rep, plus the horizon
/// finally used. Censored reps have no tau0 and a partial area.
struct PathSample {
  std::vector<std::optional<double>> tau0;
  std::vector<double> area;
  std::size_t censored = 0;
  double t_max = 0.0;

  FunctionalSample functional(Functional f) const;
};

/// Censoring fraction above which the horizon is doubled and the censored
/// paths are rerun (their streams replay the same prefix).
inline constexpr double kRetryCensoring = 1e-3;
inline constexpr int kMaxHorizonDoublings = 3;

PathSample sample_paths(const DiffusionConfig& config, std::size_t reps,
                        const rng::Streams& streams, unsigned workers = 0);

FunctionalSample sample_functional(const DiffusionConfig& config, Functional f, std::size_t reps,
                                   const rng::Streams& streams, unsigned workers = 0);

struct ScalingReport {
  double ks_distance = 0.0;
  double p_value = 1.0;
  bool pass = false;
  std::size_t censored_scaled = 0;
  std::size_t censored_unit = 0;
};

/// Compares functional(Y^y) / y^power with functional(Y^1), where the power is
/// 1 for tau0 and 2 for the area. Both sides use the default step for their
/// start, so the discretisations are themselves scale-related.
ScalingReport verify_scaling(double y, double delta, Functional f, std::size_t reps,
                             const rng::Streams& streams, double threshold = 0.02,
                             unsigned workers = 0);

/// The comparison step of verify_scaling on samples already drawn.
ScalingReport scaling_report(const FunctionalSample& scaled, const FunctionalSample& unit,
                             double y, Functional f, double threshold = 0.02);

struct TailExperiment {
  stats::TailFit fit;
  std::size_t censored = 0;
  std::size_t used = 0;
  /// Censored paths exceed 1% of the exceedances at the smallest threshold.
  bool censoring_flag = false;
  std::vector<double> samples;
};

/// Survival exponent of tau0, or of sqrt(area) (so that P(area > y^2) ~ y^-delta).
/// Requires delta > 1.
TailExperiment tail_experiment(double delta, Functional f, std::size_t reps,
                               const stats::TailConfig& thresholds, const rng::Streams& streams,
                               unsigned workers = 0);

/// Fit step of tail_experiment on a sample of the raw functional.
TailExperiment tail_experiment(FunctionalSample sample, Functional f,
                               const stats::TailConfig& thresholds);

} // namespace erw::diffusion
