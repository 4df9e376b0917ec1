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
#include <vector>

#include "erw/env.hpp"
#include "erw/rng.hpp"
#include "erw/stats.hpp"

// Statistical checks of the walk's limit theorems that need fresh samples.
namespace erw::stats {

enum class PassageMethod {
  Walk,      // step the walk until it first reaches n
  Branching, // V/W chain representation, O(n) per draw
};

/// Samples of T_n; draws that exceed `cap` are dropped (dropped count in
/// the second member).
std::pair<std::vector<double>, std::size_t>
passage_time_samples(const EnvironmentLaw& law, std::uint64_t n, std::size_t reps,
                     const rng::Streams& streams, PassageMethod method,
                     std::uint64_t cap = 100'000'000ULL, unsigned workers = 0);

struct GrowthFit {
  std::vector<std::uint64_t> levels;
  std::vector<double> median_position;
  std::vector<double> median_max;
  double slope = 0.0;     // log median X_n vs log n
  double slope_max = 0.0; // same for sup_{i<=n} X_i
  double slope_stderr = 0.0;     // bootstrap over trajectories
  double slope_max_stderr = 0.0;
  double difference_stderr = 0.0; // bootstrap SE of slope_max - slope
};

/// Each trajectory is observed at every level, so the two slopes share
/// samples; the bootstrap resamples whole trajectories.
GrowthFit growth_exponent_subballistic(const EnvironmentLaw& law,
                                       std::span<const std::uint64_t> levels, std::size_t reps,
                                       const rng::Streams& streams, std::size_t bootstrap = 200,
                                       unsigned workers = 0);

enum class WeakconFunctional {
  HittingTime,  // sigma_{eps n} / n  vs  tau_eps of Y^y
  InitialValue, // V_0 / n            vs  Y_0
};

struct WeakconReport {
  double ks_distance = 0.0;
  double p_value = 1.0;
  std::size_t censored_branching = 0;
  std::size_t censored_diffusion = 0;
  std::vector<double> branching;
  std::vector<double> diffusion;
};

/// Compares the rescaled branching chain started from [n y] and stopped on
/// entering [0, eps n] with the diffusion started at y and stopped at eps.
WeakconReport weakcon_check(const EnvironmentLaw& law, double epsilon, double y,
                            std::uint64_t n_scale, std::size_t reps, const rng::Streams& streams,
                            WeakconFunctional functional = WeakconFunctional::HittingTime,
                            unsigned workers = 0);

struct GaussianReport {
  double ks_distance = 0.0;
  double speed = 0.0; // sample mean of X_n / n
  double sd = 0.0;    // sample SD of X_n
  bool gaussian = false;
};

/// KS distance of (X_n - v n) / (s sqrt(n)) against N(0, 1), with v and s
/// estimated from the same sample.
GaussianReport gaussian_regime_check(std::span<const double> positions, std::uint64_t n,
                                     double threshold = 0.02);
GaussianReport gaussian_regime_check(const EnvironmentLaw& law, std::uint64_t n, std::size_t reps,
                                     const rng::Streams& streams, double threshold = 0.02,
                                     unsigned workers = 0);

} // namespace erw::stats
