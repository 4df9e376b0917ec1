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

#include "erw/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <boost/math/special_functions/gamma.hpp>

#include "erw/env.hpp"

namespace erw::stats {

std::complex<double> stable_log_cf(const StableParams& params, double u) {
  if (!(params.alpha > 0.0 && params.alpha <= 2.0))
    throw UsageError("stable alpha must lie in (0, 2]");
  if (!(params.b > 0.0)) throw UsageError("stable b must be positive");
  if (u == 0.0) return {0.0, 0.0};
  const double sgn = u > 0.0 ? 1.0 : -1.0;
  const double au = std::fabs(u);
  if (params.alpha == 1.0) {
    const double re = -params.b * au;
    return {re, re * (2.0 / std::numbers::pi) * sgn * std::log(au)};
  }
  const double mag = -params.b * std::pow(au, params.alpha);
  return {mag, -mag * sgn * std::tan(std::numbers::pi * params.alpha / 2.0)};
}

std::string to_string(TailMethod m) {
  return m == TailMethod::Hill ? "hill" : "loglog_survival";
}

namespace {

TailFit fit_hill(const std::vector<double>& desc, const TailConfig& config) {
  TailFit fit;
  fit.method = TailMethod::Hill;
  const std::size_t n = desc.size();
  std::size_t k;
  double threshold;
  if (config.lo) {
    threshold = *config.lo;
    k = static_cast<std::size_t>(
        std::count_if(desc.begin(), desc.end(), [&](double v) { return v > threshold; }));
  } else {
    k = config.hill_k.value_or(static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n)))));
    k = std::min(k, n - 1);
    threshold = desc[k];
  }
  if (!(threshold > 0.0)) throw UsageError("hill estimator needs a positive threshold");
  double h = 0.0;
  std::size_t exceed = 0;
  for (std::size_t i = 0; i < k; ++i) {
    if (desc[i] > threshold) ++exceed;
    h += std::log(desc[i] / threshold);
  }
  if (exceed == 0 || h <= 0.0) throw UsageError("no exceedances above the tail threshold");
  fit.exponent = static_cast<double>(k) / h;
  fit.stderr_ = fit.exponent / std::sqrt(static_cast<double>(k));
  fit.lo = threshold;
  fit.hi = desc.front();
  fit.n_exceed = exceed;
  if (exceed < config.min_exceed) {
    fit.reliable = false;
    fit.warnings.push_back("fewer than " + std::to_string(config.min_exceed) +
                           " exceedances; fit unreliable");
  }
  return fit;
}

TailFit fit_loglog(const std::vector<double>& desc, const TailConfig& config) {
  TailFit fit;
  fit.method = TailMethod::LogLogSurvival;
  const std::size_t n = desc.size();
  const auto count_above = [&](double t) {
    // desc is sorted descending
    const auto it = std::partition_point(desc.begin(), desc.end(), [&](double v) { return v > t; });
    return static_cast<std::size_t>(it - desc.begin());
  };

  const double lo = config.lo.value_or(desc[n / 10]);
  const double hi_default = desc[std::min(config.min_exceed, n) - 1];
  double hi = config.hi.value_or(hi_default);
  if (!(lo > 0.0)) throw UsageError("log-log survival fit needs a positive lower threshold");
  if (!(hi > lo)) throw UsageError("empty usable threshold range");
  const std::size_t g = std::max<std::size_t>(config.grid_points, 3);

  std::vector<double> lx, ly;
  const double ratio = std::log(hi / lo) / static_cast<double>(g - 1);
  double top = lo;
  std::size_t top_count = 0;
  bool shrunk = false;
  for (std::size_t i = 0; i < g; ++i) {
    const double t = lo * std::exp(ratio * static_cast<double>(i));
    const std::size_t c = count_above(t);
    if (c < config.min_exceed) {
      shrunk = true;
      break;
    }
    lx.push_back(std::log(t));
    ly.push_back(std::log(static_cast<double>(c) / static_cast<double>(n)));
    fit.survival.emplace_back(t, static_cast<double>(c) / static_cast<double>(n));
    top = t;
    top_count = c;
  }
  if (lx.size() < 3) throw UsageError("empty usable threshold range (fewer than 3 grid points)");
  if (shrunk)
    fit.warnings.push_back("range shrunk to top threshold " + std::to_string(top) +
                           " to keep " + std::to_string(config.min_exceed) + " exceedances");

  const LineFit line = least_squares(lx, ly);
  fit.exponent = -line.slope;
  // Sampling error of the slope under the multinomial model. For t_i <= t_j,
  // Cov(log S(t_i), log S(t_j)) ~ (1 - S(t_i)) / (n S(t_i)).
  const std::size_t m = lx.size();
  const double mean_x = std::accumulate(lx.begin(), lx.end(), 0.0) / static_cast<double>(m);
  double sxx = 0.0;
  for (double x : lx) sxx += (x - mean_x) * (x - mean_x);
  double var = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double wi = (lx[i] - mean_x) / sxx;
    for (std::size_t j = 0; j < m; ++j) {
      const double wj = (lx[j] - mean_x) / sxx;
      const double p = std::exp(ly[std::min(i, j)]);
      var += wi * wj * (1.0 - p) / (static_cast<double>(n) * p);
    }
  }
  fit.stderr_ = std::sqrt(std::max(var, 0.0) + line.slope_stderr * line.slope_stderr);
  fit.lo = lo;
  fit.hi = top;
  fit.n_exceed = top_count;

  const std::size_t half = lx.size() / 2;
  if (half >= 2 && lx.size() - half >= 2) {
    const std::span<const double> sx(lx), sy(ly);
    const double s_low = least_squares(sx.first(half + 1), sy.first(half + 1)).slope;
    const double s_high = least_squares(sx.subspan(half), sy.subspan(half)).slope;
    fit.curvature = (s_low - s_high) / std::fabs(line.slope);
    if (std::fabs(fit.curvature) > 0.5) {
      fit.power_law = false;
      fit.warnings.push_back("log-log survival is curved over the range; not a power law");
    }
  }
  return fit;
}

} // namespace

TailFit fit_tail_exponent(std::span<const double> samples, TailMethod method,
                          const TailConfig& config) {
  if (samples.size() < config.min_samples)
    throw UsageError("tail fit needs at least " + std::to_string(config.min_samples) + " samples");
  std::vector<double> desc(samples.begin(), samples.end());
  std::sort(desc.begin(), desc.end(), std::greater<>());
  if (desc.front() == desc.back()) throw UsageError("constant sample: no exceedances");
  return method == TailMethod::Hill ? fit_hill(desc, config) : fit_loglog(desc, config);
}

double kolmogorov_q(double lambda) {
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += (j % 2 == 1 ? term : -term);
    if (term < 1e-17) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw UsageError("ks_two_sample needs non-empty samples");
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double n = static_cast<double>(x.size());
  const double m = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  const double ne = std::sqrt(n * m / (n + m));
  return {d, kolmogorov_q((ne + 0.12 + 0.11 / ne) * d)};
}

KsResult ks_standard_normal(std::span<const double> samples) {
  if (samples.empty()) throw UsageError("ks_standard_normal needs samples");
  std::vector<double> x(samples.begin(), samples.end());
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double cdf = 0.5 * std::erfc(-x[i] / std::numbers::sqrt2);
    d = std::max({d, static_cast<double>(i + 1) / n - cdf, cdf - static_cast<double>(i) / n});
  }
  const double sn = std::sqrt(n);
  return {d, kolmogorov_q((sn + 0.12 + 0.11 / sn) * d)};
}

ChiSquare chi_square_gof(std::span<const std::uint64_t> observed,
                         std::span<const double> expected_prob, double min_expected) {
  if (observed.size() != expected_prob.size() || observed.empty())
    throw UsageError("chi_square_gof: observed and expected cells must align");
  const double total = static_cast<double>(
      std::accumulate(observed.begin(), observed.end(), std::uint64_t{0}));
  std::vector<double> obs, expct;
  double o = 0.0, e = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    o += static_cast<double>(observed[i]);
    e += expected_prob[i] * total;
    if (e >= min_expected) {
      obs.push_back(o);
      expct.push_back(e);
      o = e = 0.0;
    }
  }
  if (!obs.empty()) {
    obs.back() += o;
    expct.back() += e;
  } else {
    obs.push_back(o);
    expct.push_back(e);
  }
  ChiSquare out;
  out.bins = obs.size();
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (expct[i] <= 0.0) {
      if (obs[i] > 0.0) out.statistic = std::numeric_limits<double>::infinity();
      continue;
    }
    out.statistic += (obs[i] - expct[i]) * (obs[i] - expct[i]) / expct[i];
  }
  out.dof = out.bins > 1 ? out.bins - 1 : 0;
  if (out.dof == 0)
    out.p_value = 1.0;
  else if (std::isinf(out.statistic))
    out.p_value = 0.0;
  else
    out.p_value = boost::math::gamma_q(0.5 * static_cast<double>(out.dof), 0.5 * out.statistic);
  return out;
}

double passage_time_scale(std::uint64_t n, double delta) {
  if (!(delta > 2.0))
    throw UsageError("passage-time normalization needs delta > 2 (ballistic regime)");
  const double nd = static_cast<double>(n);
  if (std::fabs(delta - 4.0) <= 1e-9) return std::sqrt(nd * std::log(nd));
  if (delta < 4.0) return std::pow(nd, 2.0 / delta);
  return std::sqrt(nd);
}

std::vector<double> normalize_passage_times(std::span<const double> T, std::uint64_t n, double v,
                                            double delta) {
  if (!(v > 0.0)) throw UsageError("passage-time normalization needs v > 0");
  const double scale = passage_time_scale(n, delta);
  const double center = static_cast<double>(n) / v;
  std::vector<double> out;
  out.reserve(T.size());
  for (double t : T) out.push_back((t - center) / scale);
  return out;
}

Summary summarize(std::span<const double> x) {
  Summary s;
  s.n = x.size();
  if (x.empty()) return s;
  s.mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : x) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(s.n - 1));
    s.stderr_ = s.sd / std::sqrt(static_cast<double>(s.n));
  }
  return s;
}

double quantile(std::span<const double> x, double q) {
  if (x.empty()) throw UsageError("quantile of empty sample");
  std::vector<double> v(x.begin(), x.end());
  std::sort(v.begin(), v.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(i);
  if (i + 1 >= v.size()) return v.back();
  return v[i] + frac * (v[i + 1] - v[i]);
}

double median(std::span<const double> x) { return quantile(x, 0.5); }

LineFit least_squares(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw UsageError("least_squares needs >= 2 points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw UsageError("least_squares: degenerate abscissae");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (x.size() > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = y[i] - f.intercept - f.slope * x[i];
      rss += r * r;
    }
    f.slope_stderr = std::sqrt(rss / (n - 2.0) / sxx);
  }
  return f;
}

} // namespace erw::stats
