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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "erw/env.hpp"
#include "erw/rng.hpp"

namespace erw::walk {

/// When to stop a trajectory. At least one of level/horizon/stop_on_return
/// must be set. A level and a horizon cannot fire on the same step: the
/// horizon is checked only after the level test fails.
struct StopRule {
  std::optional<std::int64_t> level;    // first passage to this site
  std::optional<std::uint64_t> horizon; // maximum number of steps
  bool stop_on_return = false;          // first return to the start site

  /// Keep walking after T_level until the horizon, tracking inf X.
  bool track_min_after = false;
  /// Times at which X_t and max_{i<=t} X_i are recorded (ascending).
  std::vector<std::uint64_t> checkpoints;
  /// Store T_k for every level k in [start, max reached].
  bool record_passage_times = false;
  /// Store the whole path and the negative-site backtrack array.
  bool log_path = false;

  static StopRule to_level(std::int64_t n) {
    StopRule r;
    r.level = n;
    return r;
  }
  static StopRule for_steps(std::uint64_t h) {
    StopRule r;
    r.horizon = h;
    return r;
  }
};

enum class StopReason { ReachedLevel, Horizon, ReturnedToOrigin };

std::string_view to_string(StopReason r);

/// Summary of one trajectory.
///
/// With start 0 and a reached level n: T_n = n + 2 * (sum of backtracks[k]
/// for 0 <= k <= n) + 2 * left_jumps_below_zero.
struct WalkRecord {
  std::int64_t start = 0;
  StopReason stop_reason = StopReason::Horizon;
  std::optional<std::int64_t> level;
  std::optional<std::uint64_t> passage_time; // T_level
  /// passage_times[j] = T_{start + j}, filled when requested.
  std::vector<std::uint64_t> passage_times;
  /// backtracks[k] = D_{n,k}, jumps k -> k-1 before T_n, for 0 <= k <= n.
  std::vector<std::uint64_t> backtracks;
  /// sum over k < 0 of D_{n,k}.
  std::uint64_t left_jumps_below_zero = 0;
  /// negative_backtracks[j] = D_{n,-1-j} (logged mode only).
  std::vector<std::uint64_t> negative_backtracks;
  std::uint64_t steps = 0;
  std::int64_t final_position = 0;
  std::int64_t max_position = 0;
  std::optional<std::int64_t> min_after;
  std::uint64_t steps_below_zero = 0;
  std::vector<std::int64_t> checkpoint_position;
  std::vector<std::int64_t> checkpoint_max;
  std::vector<std::int64_t> path;
  std::uint64_t seed = 0;

  friend bool operator==(const WalkRecord&, const WalkRecord&) = default;
};

/// Runs the excited walk from `start` under `law`: on the i-th visit to z the
/// walker steps right with probability omega_z(i) (1/2 for i > M).
WalkRecord simulate_walk(const EnvironmentLaw& law, const StopRule& stop, rng::Rng& rng,
                         std::int64_t start = 0);

/// Builds a record from an explicit nearest-neighbour path; used to check
/// the bookkeeping of simulate_walk against a trajectory log.
WalkRecord summarize_path(std::span<const std::int64_t> path, std::int64_t level);

/// T_n == (n - start) + 2 * (total leftward jumps before T_n), with the
/// parity and lower-bound conditions. Requires stop_reason ReachedLevel.
bool backtrack_identity_check(const WalkRecord& record);

/// One JSONL row: {rep, seed, stop_reason, n, T_n, X_final, steps_below_zero}.
std::string to_jsonl(const WalkRecord& record, std::uint64_t rep);

struct SpeedEstimate {
  double speed = 0.0;
  double stderr_ = 0.0;
  std::size_t reps = 0;
};

/// Mean and standard error of X_n / n over independent trajectories.
SpeedEstimate estimate_speed(const EnvironmentLaw& law, std::uint64_t n_steps,
                             std::size_t reps, const rng::Streams& streams,
                             unsigned workers = 0);

/// Exact finite-horizon law of the walk for a single deterministic stack,
/// by exhaustive recursion over (position, per-site visit counts).
struct ExactWalkLaw {
  std::uint64_t horizon = 0;
  std::map<std::int64_t, double> position; // P(X_h = x)
  /// passage[n][t] = P(T_n = t) for levels 1 <= n <= h and t <= h.
  std::map<std::int64_t, std::map<std::uint64_t, double>> passage;
};

inline constexpr std::uint64_t kMaxExactHorizon = 14;

ExactWalkLaw exact_finite_horizon_oracle(const EnvironmentLaw& law, std::uint64_t horizon);

struct MinAfterTail {
  std::vector<std::int64_t> k;
  std::vector<double> frequency;
  std::vector<double> stderr_;
  std::size_t used = 0;
  std::size_t excluded = 0; // did not reach n within the horizon
};

/// Frequency of {inf_{T_n <= i <= horizon} X_i < n - k} for each k; all k share
/// the same trajectories.
MinAfterTail min_after_Tn_tail(const EnvironmentLaw& law, std::int64_t n,
                               std::span<const std::int64_t> ks, std::uint64_t horizon,
                               std::size_t reps, const rng::Streams& streams,
                               unsigned workers = 0);

} // namespace erw::walk
