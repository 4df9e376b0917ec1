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

#include "erw/branching.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <json.hpp>

#include "erw/parallel.hpp"
#include "erw/sample.hpp"
#include "erw/walk.hpp"

namespace erw::branching {

std::uint64_t sample_failures_before_successes(std::uint64_t m, const CookieStack& stack,
                                               rng::Rng& rng) {
  if (m == 0) return 0;
  std::uint64_t successes = 0;
  std::uint64_t failures = 0;
  for (double p : stack.probs()) {
    if (rng.uniform() < p) {
      if (++successes == m) return failures;
    } else {
      ++failures;
    }
  }
  return failures + sample::negative_binomial_half(rng, m - successes);
}

std::int64_t drift_functional(const CookieStack& stack, rng::Rng& rng) {
  const auto M = static_cast<std::int64_t>(stack.size());
  return static_cast<std::int64_t>(sample_failures_before_successes(stack.size(), stack, rng)) -
         M + 1;
}

BranchingRun run_to_extinction(const EnvironmentLaw& law, std::uint64_t v0,
                               const RunOptions& options, rng::Rng& rng) {
  if (options.caps.generations == 0 || options.caps.progeny == 0)
    throw UsageError("branching caps must be positive");
  BranchingRun run;
  run.v0 = v0;
  const auto& levels = options.overshoot_levels;
  std::size_t next_level = 0;
  std::uint64_t v = v0;
  std::uint64_t k = 0;
  if (options.log_path) run.path.push_back(v);
  for (;;) {
    run.progeny += v;
    v = step_V(v, law.sample(rng), rng);
    ++k;
    if (options.log_path) run.path.push_back(v);
    while (next_level < levels.size() && v >= levels[next_level]) {
      run.overshoots.push_back({levels[next_level], k, v - levels[next_level]});
      ++next_level;
    }
    if (v == 0) {
      run.sigma0 = k;
      break;
    }
    if (k >= options.caps.generations || run.progeny >= options.caps.progeny) {
      run.censored = true;
      break;
    }
  }
  run.generations = k;
  return run;
}

std::string to_jsonl(const BranchingRun& run, std::uint64_t rep) {
  nlohmann::json row;
  row["rep"] = rep;
  row["seed"] = run.seed;
  row["v0"] = run.v0;
  row["sigma0"] = run.sigma0 ? nlohmann::json(*run.sigma0) : nlohmann::json(nullptr);
  row["progeny"] = run.progeny;
  row["censored"] = run.censored;
  return row.dump();
}

std::vector<Cycle> renewal_cycles(const EnvironmentLaw& law, std::size_t count, const Caps& caps,
                                  const rng::Streams& streams, unsigned workers) {
  RunOptions options;
  options.caps = caps;
  return parallel_map(count, workers, [&](std::size_t r) {
    auto rng = streams.at(r);
    const auto run = run_to_extinction(law, 0, options, rng);
    return Cycle{run.sigma0.value_or(run.generations), run.progeny, run.censored};
  });
}

namespace {

struct CycleTotals {
  std::size_t used = 0;
  std::size_t censored = 0;
  double length = 0.0;
  double progeny = 0.0;

  void add(std::span<const Cycle> cycles) {
    for (const Cycle& c : cycles) {
      if (c.censored) {
        ++censored;
        continue;
      }
      ++used;
      length += static_cast<double>(c.length);
      progeny += static_cast<double>(c.progeny);
    }
  }

  RenewalEstimate finish() const {
    RenewalEstimate est;
    est.used = used;
    est.censored = censored;
    if (used == 0) return est;
    const double n = static_cast<double>(used);
    est.lambda = n / length;
    est.mean_progeny = progeny / n;
    est.speed = 1.0 / (1.0 + 2.0 * est.lambda * est.mean_progeny);
    return est;
  }
};

} // namespace

RenewalEstimate estimate_from_cycles(std::span<const Cycle> cycles) {
  CycleTotals totals;
  totals.add(cycles);
  return totals.finish();
}

RenewalEstimate renewal_estimate(const EnvironmentLaw& law, std::uint64_t count, const Caps& caps,
                                 const rng::Streams& streams, unsigned workers,
                                 std::uint64_t batch) {
  if (batch == 0) throw UsageError("renewal batch must be positive");
  RunOptions options;
  options.caps = caps;
  CycleTotals totals;
  for (std::uint64_t begin = 0; begin < count; begin += batch) {
    const std::uint64_t n = std::min(batch, count - begin);
    const auto cycles = parallel_map(n, workers, [&](std::size_t i) {
      auto rng = streams.at(begin + i);
      const auto run = run_to_extinction(law, 0, options, rng);
      return Cycle{run.sigma0.value_or(run.generations), run.progeny, run.censored};
    });
    totals.add(cycles);
  }
  return totals.finish();
}

namespace {

double nb_half_pmf(std::uint64_t r, std::uint64_t j) {
  // C(j + r - 1, j) 2^{-(j + r)}
  const double lp = sample::log_factorial(j + r - 1) - sample::log_factorial(j) -
                    sample::log_factorial(r - 1) -
                    static_cast<double>(j + r) * std::numbers::ln2;
  return std::exp(lp);
}

// P(NegBin(r, 1/2) > t) = P(Binomial(t + r, 1/2) < r).
double nb_half_survival(std::uint64_t r, std::uint64_t t) {
  const std::uint64_t n = t + r;
  double s = 0.0;
  for (std::uint64_t i = 0; i < r; ++i)
    s += std::exp(sample::log_factorial(n) - sample::log_factorial(i) -
                  sample::log_factorial(n - i) - static_cast<double>(n) * std::numbers::ln2);
  return s;
}

struct PmfEnumerator {
  const CookieStack& stack;
  std::uint64_t m;
  std::size_t K;
  ExactPmf& out;

  void descend(std::size_t toss, std::uint64_t successes, std::uint64_t failures, double prob) {
    if (prob == 0.0) return;
    if (successes == m) {
      if (failures <= K)
        out.pmf[failures] += prob;
      else
        out.tail += prob;
      return;
    }
    if (toss == stack.size()) {
      const std::uint64_t r = m - successes;
      for (std::uint64_t j = 0; failures + j <= K; ++j) out.pmf[failures + j] += prob * nb_half_pmf(r, j);
      if (failures > K)
        out.tail += prob;
      else
        out.tail += prob * nb_half_survival(r, K - failures);
      return;
    }
    const double p = stack.probs()[toss];
    descend(toss + 1, successes + 1, failures, prob * p);
    descend(toss + 1, successes, failures + 1, prob * (1.0 - p));
  }
};

} // namespace

ExactPmf exact_V1_pmf(const CookieStack& stack, std::uint64_t v0, std::size_t K) {
  if (v0 > kMaxExactV0)
    throw UsageError("exact_V1_pmf supports v0 <= " + std::to_string(kMaxExactV0));
  ExactPmf out;
  out.pmf.assign(K + 1, 0.0);
  PmfEnumerator{stack, v0 + 1, K, out}.descend(0, 0, 0, 1.0);
  return out;
}

ReversedSamples reversed_identity_samples(const EnvironmentLaw& law, std::int64_t n,
                                          std::span<const std::int64_t> ks, std::size_t reps,
                                          const rng::Streams& streams, std::uint64_t walk_cap,
                                          unsigned workers) {
  if (n < 1) throw UsageError("reversed identity needs n >= 1");
  for (std::int64_t k : ks)
    if (k < 0 || k > n) throw UsageError("k must lie in [0, n]");

  ReversedSamples out;
  out.k.assign(ks.begin(), ks.end());
  out.walk.resize(ks.size());
  out.chain.resize(ks.size());

  walk::StopRule stop;
  stop.level = n;
  stop.horizon = walk_cap;
  const auto walk_streams = streams.sub("walk");
  const auto walks = parallel_map(reps, workers, [&](std::size_t r) {
    auto rng = walk_streams.at(r);
    const auto rec = walk::simulate_walk(law, stop, rng);
    std::vector<double> d;
    if (rec.stop_reason == walk::StopReason::ReachedLevel)
      for (std::int64_t k : ks) d.push_back(static_cast<double>(rec.backtracks[static_cast<std::size_t>(k)]));
    return d;
  });
  for (const auto& d : walks) {
    if (d.empty() && !ks.empty()) {
      ++out.dropped;
      continue;
    }
    for (std::size_t i = 0; i < d.size(); ++i) out.walk[i].push_back(d[i]);
  }

  const auto chain_streams = streams.sub("chain");
  const auto chains = parallel_map(reps, workers, [&](std::size_t r) {
    auto rng = chain_streams.at(r);
    std::vector<std::uint64_t> v(static_cast<std::size_t>(n) + 1, 0);
    for (std::size_t j = 1; j < v.size(); ++j) v[j] = step_V(v[j - 1], law.sample(rng), rng);
    std::vector<double> picked;
    for (std::int64_t k : ks) picked.push_back(static_cast<double>(v[static_cast<std::size_t>(n - k)]));
    return picked;
  });
  for (const auto& c : chains)
    for (std::size_t i = 0; i < c.size(); ++i) out.chain[i].push_back(c[i]);
  return out;
}

std::optional<std::uint64_t> passage_time_via_branching(const EnvironmentLaw& law, std::uint64_t n,
                                                        rng::Rng& rng, std::uint64_t cap) {
  std::uint64_t v = 0;
  std::uint64_t total = 0;
  for (std::uint64_t j = 0; j < n; ++j) {
    v = step_V(v, law.sample(rng), rng);
    total += v;
  }
  // Below the origin there is no immigrant: the number of right jumps out of
  // site -j-1 equals the number of left jumps into it.
  std::uint64_t w = v;
  for (std::uint64_t j = 0; w != 0; ++j) {
    if (j >= cap) return std::nullopt;
    w = sample_failures_before_successes(w, law.sample(rng), rng);
    total += w;
  }
  return n + 2 * total;
}

} // namespace erw::branching
