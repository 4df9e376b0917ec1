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

#include "erw/walk.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "erw/parallel.hpp"

namespace erw::walk {

std::string_view to_string(StopReason r) {
  switch (r) {
  case StopReason::ReachedLevel: return "reached_level";
  case StopReason::Horizon: return "horizon";
  case StopReason::ReturnedToOrigin: return "returned_to_origin";
  }
  return "unknown";
}

namespace {

void validate(const StopRule& stop, std::int64_t start) {
  if (!stop.level && !stop.horizon && !stop.stop_on_return)
    throw UsageError("stop rule needs a level, a horizon or stop_on_return");
  if (stop.level && *stop.level <= start)
    throw UsageError("first-passage level must lie strictly right of the start");
  if (stop.track_min_after && !(stop.level && stop.horizon))
    throw UsageError("track_min_after needs both a level and a horizon");
  if (!std::is_sorted(stop.checkpoints.begin(), stop.checkpoints.end()))
    throw UsageError("checkpoints must be ascending");
}

// Copies D_{n,k} out of the environment at time T_n.
void snapshot_backtracks(const Environment& env, std::int64_t level, bool log,
                         WalkRecord& rec) {
  rec.backtracks.assign(static_cast<std::size_t>(level + 1), 0);
  for (std::int64_t k = 0; k <= level; ++k)
    rec.backtracks[static_cast<std::size_t>(k)] = env.peek(k).left_jumps;
  rec.left_jumps_below_zero = 0;
  rec.negative_backtracks.clear();
  for (std::int64_t k = -1; k >= env.lowest(); --k) {
    const std::uint64_t d = env.peek(k).left_jumps;
    rec.left_jumps_below_zero += d;
    if (log) rec.negative_backtracks.push_back(d);
  }
  if (log) {
    while (!rec.negative_backtracks.empty() && rec.negative_backtracks.back() == 0)
      rec.negative_backtracks.pop_back();
  }
}

} // namespace

WalkRecord simulate_walk(const EnvironmentLaw& law, const StopRule& stop, rng::Rng& rng,
                         std::int64_t start) {
  validate(stop, start);
  WalkRecord rec;
  rec.start = start;
  rec.level = stop.level;

  Environment env(law, 256);
  const std::size_t M = law.cookies();
  const bool single = law.deterministic();
  const double* single_probs = law.stack(0).probs().data();

  std::int64_t x = start;
  std::int64_t max_x = start;
  std::uint64_t t = 0;
  std::uint64_t below = 0;
  bool reached = false;
  std::int64_t min_after = 0;
  std::size_t next_cp = 0;
  const auto& cps = stop.checkpoints;

  auto record_checkpoints = [&] {
    while (next_cp < cps.size() && cps[next_cp] == t) {
      rec.checkpoint_position.push_back(x);
      rec.checkpoint_max.push_back(max_x);
      ++next_cp;
    }
  };

  if (stop.record_passage_times) rec.passage_times.push_back(0);
  if (stop.log_path) rec.path.push_back(x);
  record_checkpoints();

  for (;;) {
    if (!reached && stop.level && x == *stop.level) {
      reached = true;
      rec.passage_time = t;
      snapshot_backtracks(env, *stop.level, stop.log_path, rec);
      rec.steps_below_zero = below;
      if (!stop.track_min_after) {
        rec.stop_reason = StopReason::ReachedLevel;
        break;
      }
      min_after = x;
    }
    if (stop.horizon && t >= *stop.horizon) {
      rec.stop_reason = reached ? StopReason::ReachedLevel : StopReason::Horizon;
      break;
    }
    if (stop.stop_on_return && t > 0 && x == start) {
      rec.stop_reason = StopReason::ReturnedToOrigin;
      break;
    }

    Environment::Site& site = env.site(x, rng);
    const std::uint32_t visit = ++site.visits;
    bool right;
    if (visit <= M) {
      const double p = single ? single_probs[visit - 1] : law.stack(site.atom).probs()[visit - 1];
      right = rng.uniform() < p;
    } else {
      right = rng.fair_bit();
    }
    if (x < 0 && !reached) ++below;
    if (right) {
      ++x;
    } else {
      ++site.left_jumps;
      --x;
    }
    ++t;
    if (x > max_x) {
      max_x = x;
      if (stop.record_passage_times) rec.passage_times.push_back(t);
    }
    if (reached) min_after = std::min(min_after, x);
    if (stop.log_path) rec.path.push_back(x);
    if (next_cp < cps.size()) record_checkpoints();
  }

  if (!reached) rec.steps_below_zero = below;
  if (reached && stop.track_min_after) rec.min_after = min_after;
  rec.steps = t;
  rec.final_position = x;
  rec.max_position = max_x;
  return rec;
}

WalkRecord summarize_path(std::span<const std::int64_t> path, std::int64_t level) {
  if (path.empty()) throw UsageError("empty path");
  WalkRecord rec;
  rec.start = path.front();
  rec.level = level;
  rec.max_position = path.front();
  std::map<std::int64_t, std::uint64_t> left;
  std::size_t t = 0;
  for (; t < path.size(); ++t) {
    const std::int64_t x = path[t];
    rec.max_position = std::max(rec.max_position, x);
    if (x == level) break;
    if (t + 1 == path.size()) break;
    const std::int64_t step = path[t + 1] - x;
    if (step != 1 && step != -1) throw UsageError("path is not nearest-neighbour");
    if (x < 0) ++rec.steps_below_zero;
    if (step == -1) ++left[x];
  }
  rec.steps = t;
  rec.final_position = path[t];
  rec.path.assign(path.begin(), path.begin() + static_cast<std::ptrdiff_t>(t + 1));
  if (path[t] == level) {
    rec.stop_reason = StopReason::ReachedLevel;
    rec.passage_time = t;
    rec.backtracks.assign(static_cast<std::size_t>(std::max<std::int64_t>(level + 1, 0)), 0);
    for (const auto& [k, d] : left) {
      if (k < 0)
        rec.left_jumps_below_zero += d;
      else if (k <= level)
        rec.backtracks[static_cast<std::size_t>(k)] = d;
    }
  } else {
    rec.stop_reason = StopReason::Horizon;
  }
  return rec;
}

bool backtrack_identity_check(const WalkRecord& record) {
  if (record.stop_reason != StopReason::ReachedLevel || !record.passage_time || !record.level)
    throw UsageError("identity check needs a record that reached its level");
  const std::uint64_t distance = static_cast<std::uint64_t>(*record.level - record.start);
  const std::uint64_t left = std::accumulate(record.backtracks.begin(), record.backtracks.end(),
                                             std::uint64_t{0}) +
                             record.left_jumps_below_zero;
  const std::uint64_t T = *record.passage_time;
  return T >= distance && (T - distance) % 2 == 0 && T == distance + 2 * left;
}

std::string to_jsonl(const WalkRecord& record, std::uint64_t rep) {
  nlohmann::json row;
  row["rep"] = rep;
  row["seed"] = record.seed;
  row["stop_reason"] = std::string(to_string(record.stop_reason));
  row["n"] = record.level ? nlohmann::json(*record.level) : nlohmann::json(nullptr);
  row["T_n"] = record.passage_time ? nlohmann::json(*record.passage_time) : nlohmann::json(nullptr);
  row["X_final"] = record.final_position;
  row["steps_below_zero"] = record.steps_below_zero;
  return row.dump();
}

SpeedEstimate estimate_speed(const EnvironmentLaw& law, std::uint64_t n_steps, std::size_t reps,
                             const rng::Streams& streams, unsigned workers) {
  if (reps < 2) throw UsageError("estimate_speed needs at least 2 reps");
  if (n_steps == 0) throw UsageError("estimate_speed needs n_steps > 0");
  const auto stop = StopRule::for_steps(n_steps);
  const auto ratios = parallel_map(reps, workers, [&](std::size_t r) {
    auto rng = streams.at(r);
    return static_cast<double>(simulate_walk(law, stop, rng).final_position) /
           static_cast<double>(n_steps);
  });
  const double n = static_cast<double>(reps);
  const double mean = std::accumulate(ratios.begin(), ratios.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : ratios) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n), reps};
}

namespace {

struct OracleState {
  const CookieStack* stack;
  std::uint64_t horizon;
  std::vector<std::uint32_t> visits; // index x + horizon
  ExactWalkLaw* out;

  void descend(std::int64_t x, std::int64_t max_x, std::uint64_t t, double prob) {
    if (t == horizon) {
      out->position[x] += prob;
      return;
    }
    auto& v = visits[static_cast<std::size_t>(x + static_cast<std::int64_t>(horizon))];
    ++v;
    const double p = stack->at(v);
    if (p > 0.0) {
      const std::int64_t nx = x + 1;
      std::int64_t nmax = max_x;
      if (nx > max_x) {
        nmax = nx;
        out->passage[nx][t + 1] += prob * p;
      }
      descend(nx, nmax, t + 1, prob * p);
    }
    if (p < 1.0) descend(x - 1, max_x, t + 1, prob * (1.0 - p));
    --v;
  }
};

} // namespace

ExactWalkLaw exact_finite_horizon_oracle(const EnvironmentLaw& law, std::uint64_t horizon) {
  if (!law.deterministic())
    throw UsageError("exact oracle requires a single-atom (deterministic) law");
  if (horizon > kMaxExactHorizon)
    throw UsageError("exact oracle horizon must be <= " + std::to_string(kMaxExactHorizon) +
                     " (recursion tree has up to 2^horizon branches)");
  ExactWalkLaw out;
  out.horizon = horizon;
  OracleState state{&law.stack(0), horizon,
                    std::vector<std::uint32_t>(2 * horizon + 1, 0), &out};
  state.descend(0, 0, 0, 1.0);
  return out;
}

MinAfterTail min_after_Tn_tail(const EnvironmentLaw& law, std::int64_t n,
                               std::span<const std::int64_t> ks, std::uint64_t horizon,
                               std::size_t reps, const rng::Streams& streams, unsigned workers) {
  StopRule stop;
  stop.level = n;
  stop.horizon = horizon;
  stop.track_min_after = true;
  const auto mins = parallel_map(reps, workers, [&](std::size_t r) {
    auto rng = streams.at(r);
    return simulate_walk(law, stop, rng).min_after;
  });
  MinAfterTail out;
  out.k.assign(ks.begin(), ks.end());
  for (const auto& m : mins) {
    if (m)
      ++out.used;
    else
      ++out.excluded;
  }
  for (std::int64_t k : ks) {
    std::size_t hits = 0;
    for (const auto& m : mins)
      if (m && *m < n - k) ++hits;
    const double used = static_cast<double>(std::max<std::size_t>(out.used, 1));
    const double f = static_cast<double>(hits) / used;
    out.frequency.push_back(f);
    out.stderr_.push_back(std::sqrt(f * (1.0 - f) / used));
  }
  return out;
}

} // namespace erw::walk
