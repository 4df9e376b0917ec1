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

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

// Estimators over in-memory samples. Everything here is deterministic in its
// inputs and reentrant.
namespace erw::stats {

struct StableParams {
  double alpha = 2.0; // (0, 2]
  double b = 1.0;     // > 0
};

/// log E exp(iuZ) for the totally skewed stable law Z_{alpha,b}:
///   -b|u|^a (1 - i sgn(u) tan(pi a / 2))           a != 1
///   -b|u| (1 + (2i/pi) sgn(u) log|u|)              a == 1
std::complex<double> stable_log_cf(const StableParams& params, double u);

enum class TailMethod { Hill, LogLogSurvival };

std::string to_string(TailMethod m);

struct TailConfig {
  /// Threshold range. Defaults: lo = 0.9 quantile, hi = value with
  /// min_exceed exceedances. For Hill, lo (if set) fixes the threshold.
  std::optional<double> lo;
  std::optional<double> hi;
  std::size_t grid_points = 16;
  std::optional<std::size_t> hill_k; // default ceil(sqrt(n))
  std::size_t min_exceed = 30;
  std::size_t min_samples = 1000;
};

struct TailFit {
  double exponent = 0.0; // reported positive
  /// hill: exponent / sqrt(k). loglog: multinomial sampling error of the
  /// slope combined with the regression residual error.
  double stderr_ = 0.0;
  TailMethod method = TailMethod::LogLogSurvival;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t n_exceed = 0; // exceedances at the top threshold (loglog) or k (hill)
  bool reliable = true;     // n_exceed >= min_exceed
  /// Relative change of the log-log slope between the lower and upper half
  /// of the grid; large values mean the data is not a power law there.
  double curvature = 0.0;
  bool power_law = true;
  std::vector<std::string> warnings;
  std::vector<std::pair<double, double>> survival; // (threshold, P(X > threshold))
};

/// Throws UsageError for too few samples or an empty usable range.
TailFit fit_tail_exponent(std::span<const double> samples, TailMethod method,
                          const TailConfig& config = {});

struct KsResult {
  double distance = 0.0;
  double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov statistic with the asymptotic p-value.
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

/// One-sample KS distance against N(0, 1).
KsResult ks_standard_normal(std::span<const double> samples);

/// Kolmogorov survival function Q(lambda) = 2 sum (-1)^{j-1} exp(-2 j^2 lambda^2).
double kolmogorov_q(double lambda);

struct ChiSquare {
  double statistic = 0.0;
  std::size_t dof = 0;
  double p_value = 1.0;
  std::size_t bins = 0;
};

/// Pearson goodness of fit of counts over cells 0..K plus a trailing tail cell
/// (observed.size() == expected_prob.size()). Adjacent cells are pooled until
/// each expected count is at least `min_expected`.
ChiSquare chi_square_gof(std::span<const std::uint64_t> observed,
                         std::span<const double> expected_prob, double min_expected = 5.0);

/// (T - n / v) / n^{2/delta} for delta in (2, 4), (T - n / v) / sqrt(n ln n)
/// at delta = 4 and (T - n / v) / sqrt(n) above 4. delta <= 2 throws.
std::vector<double> normalize_passage_times(std::span<const double> T, std::uint64_t n, double v,
                                            double delta);

/// Scale used by normalize_passage_times.
double passage_time_scale(std::uint64_t n, double delta);

struct Summary {
  double mean = 0.0;
  double sd = 0.0;
  double stderr_ = 0.0;
  std::size_t n = 0;
};

Summary summarize(std::span<const double> x);

/// Linear-interpolated quantile of unsorted data.
double quantile(std::span<const double> x, double q);
double median(std::span<const double> x);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
};

LineFit least_squares(std::span<const double> x, std::span<const double> y);

} // namespace erw::stats
