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

#include "erw/env.hpp"
#include "erw/rng.hpp"

// The branching process with one immigrant per generation,
//   V_0 = v0,  V_{k+1} = F^{(k)}_{V_k + 1},
// where F^{(k)}_m counts failures before the m-th success in the coin
// sequence of site k, driven by an i.i.d. cookie stack per generation.
namespace erw::branching {

/// Failures before the m-th success when toss i succeeds with probability
/// stack.at(i). The first M tosses are drawn one by one; the fair remainder
/// is a single NegBin(r, 1/2) draw.
std::uint64_t sample_failures_before_successes(std::uint64_t m, const CookieStack& stack,
                                               rng::Rng& rng);

/// One generation: F_{v+1} for a fresh stack. O(M) expected time in v.
inline std::uint64_t step_V(std::uint64_t v, const CookieStack& stack, rng::Rng& rng) {
  return sample_failures_before_successes(v + 1, stack, rng);
}

/// Immigrant-block functional sum_{m<=M} zeta_m - M + 1 = F_M - M + 1.
/// Its mean is 1 - delta.
std::int64_t drift_functional(const CookieStack& stack, rng::Rng& rng);

struct Caps {
  std::uint64_t generations = 10'000'000ULL;
  std::uint64_t progeny = 10'000'000'000ULL;
};

struct Overshoot {
  std::uint64_t level = 0;
  std::uint64_t time = 0;   // tau_x = inf{j > 0 : V_j >= x}
  std::uint64_t excess = 0; // V_{tau_x} - x
};

struct BranchingRun {
  std::uint64_t v0 = 0;
  std::vector<std::uint64_t> path; // V_0..V_{sigma0} when logged
  std::optional<std::uint64_t> sigma0;
  std::uint64_t progeny = 0; // sum_{j < sigma0} V_j (partial when censored)
  std::uint64_t generations = 0;
  bool censored = false;
  std::vector<Overshoot> overshoots;
  std::uint64_t seed = 0;
};

struct RunOptions {
  Caps caps;
  std::vector<std::uint64_t> overshoot_levels; // ascending
  bool log_path = false;
};

/// Iterates step_V from v0 with a fresh stack per generation until the first
/// k >= 1 with V_k = 0, or until a cap (then censored).
BranchingRun run_to_extinction(const EnvironmentLaw& law, std::uint64_t v0,
                               const RunOptions& options, rng::Rng& rng);

/// {rep, seed, v0, sigma0, progeny, censored}
std::string to_jsonl(const BranchingRun& run, std::uint64_t rep);

struct Cycle {
  std::uint64_t length = 0;  // sigma_{0,i} - sigma_{0,i-1}
  std::uint64_t progeny = 0; // S_i
  bool censored = false;
};

/// `count` i.i.d. excursions of V from 0 back to 0.
std::vector<Cycle> renewal_cycles(const EnvironmentLaw& law, std::size_t count, const Caps& caps,
                                  const rng::Streams& streams, unsigned workers = 0);

struct RenewalEstimate {
  double lambda = 0.0;        // 1 / mean cycle length
  double mean_progeny = 0.0;  // mean S
  double speed = 0.0;         // v solving mean S = (1/v - 1) / (2 lambda)
  std::size_t used = 0;
  std::size_t censored = 0;
};

/// Invariant under permutations of the cycles.
RenewalEstimate estimate_from_cycles(std::span<const Cycle> cycles);

/// estimate_from_cycles over renewal_cycles(count), generated in batches of
/// `batch` cycles so that memory stays bounded. Cycle i uses streams.at(i).
RenewalEstimate renewal_estimate(const EnvironmentLaw& law, std::uint64_t count, const Caps& caps,
                                 const rng::Streams& streams, unsigned workers = 0,
                                 std::uint64_t batch = 1ULL << 22);

/// One-step law of V_1 given V_0 = v0 under a fixed stack, by enumerating
/// the first M tosses and summing the fair negative-binomial remainder.
struct ExactPmf {
  std::vector<double> pmf; // P(V_1 = k), 0 <= k <= K
  double tail = 0.0;       // P(V_1 > K)
};

inline constexpr std::uint64_t kMaxExactV0 = 8;

ExactPmf exact_V1_pmf(const CookieStack& stack, std::uint64_t v0, std::size_t K);

/// Paired samples for the reversed-process identity at level n:
/// walk[i][rep] = D_{n,k_i} and chain[i][rep] = V_{n-k_i} from V_0 = 0.
struct ReversedSamples {
  std::vector<std::int64_t> k;
  std::vector<std::vector<double>> walk;
  std::vector<std::vector<double>> chain;
  std::size_t dropped = 0; // walks that missed level n within the cap
};

ReversedSamples reversed_identity_samples(const EnvironmentLaw& law, std::int64_t n,
                                          std::span<const std::int64_t> ks, std::size_t reps,
                                          const rng::Streams& streams,
                                          std::uint64_t walk_cap = 10'000'000ULL,
                                          unsigned workers = 0);

/// A draw with the law of the walk's first-passage time T_n (transient case),
/// computed from the branching representation instead of stepping the walk:
///   T_n = n + 2 * (V_0 + ... + V_n) + 2 * (W_1 + W_2 + ...),
/// with V from 0 and W_0 = V_n, W_{j+1} = F_{W_j} (the excursions below 0).
/// Returns nullopt if the W chain exceeds `cap` generations.
std::optional<std::uint64_t> passage_time_via_branching(const EnvironmentLaw& law, std::uint64_t n,
                                                        rng::Rng& rng,
                                                        std::uint64_t cap = 10'000'000ULL);

} // namespace erw::branching
