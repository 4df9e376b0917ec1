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

#include "erw/limit_checks.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "erw/branching.hpp"
#include "erw/diffusion.hpp"
#include "erw/parallel.hpp"
#include "erw/walk.hpp"

namespace erw::stats {

std::pair<std::vector<double>, std::size_t>
passage_time_samples(const EnvironmentLaw& law, std::uint64_t n, std::size_t reps,
                     const rng::Streams& streams, PassageMethod method, std::uint64_t cap,
                     unsigned workers) {
  if (n == 0) throw UsageError("passage times need n >= 1");
  walk::StopRule stop;
  stop.level = static_cast<std::int64_t>(n);
  stop.horizon = cap;
  const auto draws = parallel_map(reps, workers, [&](std::size_t r) -> std::optional<std::uint64_t> {
    auto rng = streams.at(r);
    if (method == PassageMethod::Branching)
      return branching::passage_time_via_branching(law, n, rng, cap);
    const auto rec = walk::simulate_walk(law, stop, rng);
    return rec.passage_time;
  });
  std::pair<std::vector<double>, std::size_t> out{{}, 0};
  out.first.reserve(reps);
  for (const auto& d : draws) {
    if (d)
      out.first.push_back(static_cast<double>(*d));
    else
      ++out.second;
  }
  return out;
}

namespace {

double log_log_slope(std::span<const std::uint64_t> levels, std::span<const double> medians) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (!(medians[i] > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    lx.push_back(std::log(static_cast<double>(levels[i])));
    ly.push_back(std::log(medians[i]));
  }
  return least_squares(lx, ly).slope;
}

double median_of(std::vector<double>& scratch) {
  const std::size_t n = scratch.size();
  const std::size_t mid = n / 2;
  std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(mid), scratch.end());
  double m = scratch[mid];
  if (n % 2 == 0) {
    const double lower = *std::max_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(mid));
    m = 0.5 * (m + lower);
  }
  return m;
}

} // namespace

GrowthFit growth_exponent_subballistic(const EnvironmentLaw& law,
                                       std::span<const std::uint64_t> levels, std::size_t reps,
                                       const rng::Streams& streams, std::size_t bootstrap,
                                       unsigned workers) {
  if (levels.size() < 2) throw UsageError("growth exponent needs at least two levels");
  if (reps < 2) throw UsageError("growth exponent needs reps >= 2");
  walk::StopRule stop;
  stop.checkpoints.assign(levels.begin(), levels.end());
  std::sort(stop.checkpoints.begin(), stop.checkpoints.end());
  stop.horizon = stop.checkpoints.back();

  struct Obs {
    std::vector<std::int64_t> pos, max;
  };
  const auto obs = parallel_map(reps, workers, [&](std::size_t r) {
    auto rng = streams.at(r);
    const auto rec = walk::simulate_walk(law, stop, rng);
    return Obs{rec.checkpoint_position, rec.checkpoint_max};
  });

  GrowthFit fit;
  fit.levels = stop.checkpoints;
  const std::size_t L = fit.levels.size();
  std::vector<double> scratch(reps);
  auto medians_for = [&](const std::vector<std::size_t>* idx, bool use_max) {
    std::vector<double> med(L);
    for (std::size_t l = 0; l < L; ++l) {
      for (std::size_t i = 0; i < reps; ++i) {
        const Obs& o = obs[idx ? (*idx)[i] : i];
        scratch[i] = static_cast<double>(use_max ? o.max[l] : o.pos[l]);
      }
      med[l] = median_of(scratch);
    }
    return med;
  };
  fit.median_position = medians_for(nullptr, false);
  fit.median_max = medians_for(nullptr, true);
  fit.slope = log_log_slope(fit.levels, fit.median_position);
  fit.slope_max = log_log_slope(fit.levels, fit.median_max);

  if (bootstrap >= 2) {
    auto rng = streams.sub("bootstrap").at(0);
    std::vector<std::size_t> idx(reps);
    std::vector<double> s1, s2, diff;
    for (std::size_t b = 0; b < bootstrap; ++b) {
      for (auto& i : idx) i = static_cast<std::size_t>(rng() % reps);
      const double a = log_log_slope(fit.levels, medians_for(&idx, false));
      const double m = log_log_slope(fit.levels, medians_for(&idx, true));
      s1.push_back(a);
      s2.push_back(m);
      diff.push_back(m - a);
    }
    fit.slope_stderr = summarize(s1).sd;
    fit.slope_max_stderr = summarize(s2).sd;
    fit.difference_stderr = summarize(diff).sd;
  }
  return fit;
}

WeakconReport weakcon_check(const EnvironmentLaw& law, double epsilon, double y,
                            std::uint64_t n_scale, std::size_t reps, const rng::Streams& streams,
                            WeakconFunctional functional, unsigned workers) {
  if (!(epsilon > 0.0 && y > epsilon)) throw UsageError("weakcon_check needs y > epsilon > 0");
  if (n_scale == 0) throw UsageError("weakcon_check needs n_scale >= 1");
  const double delta = delta_of_law(law);
  if (!(delta > 1.0)) throw UsageError("weakcon_check needs delta > 1");
  const double n = static_cast<double>(n_scale);
  const auto v0 = static_cast<std::uint64_t>(std::floor(n * y));
  WeakconReport rep;

  if (functional == WeakconFunctional::InitialValue) {
    rep.branching.assign(reps, static_cast<double>(v0) / n);
    rep.diffusion.assign(reps, y);
  } else {
    const auto floor_level = static_cast<std::uint64_t>(std::floor(epsilon * n));
    const std::uint64_t cap = 10'000 * n_scale;
    const auto bstreams = streams.sub("branching");
    const auto bp = parallel_map(reps, workers, [&](std::size_t r) {
      auto rng = bstreams.at(r);
      std::uint64_t v = v0;
      for (std::uint64_t j = 1; j <= cap; ++j) {
        v = branching::step_V(v, law.sample(rng), rng);
        if (v <= floor_level) return static_cast<double>(j) / n;
      }
      return std::numeric_limits<double>::quiet_NaN();
    });
    for (double v : bp) {
      if (std::isnan(v))
        ++rep.censored_branching;
      else
        rep.branching.push_back(v);
    }

    auto config = diffusion::DiffusionConfig::defaults(delta, y);
    config.levels = {epsilon};
    config.stop_at_level = true;
    config.t_max = static_cast<double>(cap) / n;
    const auto dstreams = streams.sub("diffusion");
    const auto dp = parallel_map(reps, workers, [&](std::size_t r) {
      auto rng = dstreams.at(r);
      const auto res = diffusion::simulate_Y(config, rng);
      return res.level_hits[0].value_or(std::numeric_limits<double>::quiet_NaN());
    });
    for (double v : dp) {
      if (std::isnan(v))
        ++rep.censored_diffusion;
      else
        rep.diffusion.push_back(v);
    }
  }
  const auto ks = ks_two_sample(rep.branching, rep.diffusion);
  rep.ks_distance = ks.distance;
  rep.p_value = ks.p_value;
  return rep;
}

GaussianReport gaussian_regime_check(std::span<const double> positions, std::uint64_t n,
                                     double threshold) {
  const Summary s = summarize(positions);
  if (!(s.sd > 0.0)) throw UsageError("gaussian check needs a non-degenerate sample");
  std::vector<double> z;
  z.reserve(positions.size());
  for (double x : positions) z.push_back((x - s.mean) / s.sd);
  GaussianReport rep;
  rep.ks_distance = ks_standard_normal(z).distance;
  rep.speed = s.mean / static_cast<double>(n);
  rep.sd = s.sd;
  rep.gaussian = rep.ks_distance < threshold;
  return rep;
}

GaussianReport gaussian_regime_check(const EnvironmentLaw& law, std::uint64_t n, std::size_t reps,
                                     const rng::Streams& streams, double threshold,
                                     unsigned workers) {
  const auto stop = walk::StopRule::for_steps(n);
  const auto positions = parallel_map(reps, workers, [&](std::size_t r) {
    auto rng = streams.at(r);
    return static_cast<double>(walk::simulate_walk(law, stop, rng).final_position);
  });
  return gaussian_regime_check(positions, n, threshold);
}

} // namespace erw::stats
