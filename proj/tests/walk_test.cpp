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

#include <doctest.h>

#include <cmath>
#include <map>
#include <json.hpp>
#include <vector>

#include "erw/stats.hpp"
#include "erw/walk.hpp"
#include "generators.hpp"

using namespace erw;
using walk::StopReason;
using walk::StopRule;

TEST_SUITE("walk") {

TEST_CASE("all-ones stack marches right") {
  const auto law = EnvironmentLaw::single({1.0, 1.0, 1.0});
  auto stop = StopRule::to_level(50);
  stop.log_path = true;
  auto rng = rng::Streams(1, "walk.ones").at(0);
  const auto rec = walk::simulate_walk(law, stop, rng);
  REQUIRE(rec.stop_reason == StopReason::ReachedLevel);
  CHECK(*rec.passage_time == 50);
  for (std::size_t k = 0; k < rec.path.size(); ++k) CHECK(rec.path[k] == std::int64_t(k));
  for (auto d : rec.backtracks) CHECK(d == 0);
  CHECK(rec.steps_below_zero == 0);
}

TEST_CASE("all-zeros stack forces a left first step") {
  const auto law = EnvironmentLaw::single({0.0, 0.0});
  auto stop = StopRule::for_steps(40);
  stop.log_path = true;
  for (std::uint64_t r = 0; r < 200; ++r) {
    auto rng = rng::Streams(2, "walk.zeros").at(r);
    const auto rec = walk::simulate_walk(law, stop, rng);
    REQUIRE(rec.path.size() == 41);
    CHECK(rec.path[1] == -1);
    // New minima are entered through fresh sites, whose first cookie is 0.
    std::int64_t lo = 0;
    for (std::size_t t = 1; t < rec.path.size(); ++t) {
      if (rec.path[t] < lo) {
        CHECK(rec.path[t] == lo - 1);
        lo = rec.path[t];
      }
    }
  }
}

TEST_CASE("first step follows the first cookie") {
  const auto law = EnvironmentLaw::single({0.7});
  const auto stop = StopRule::for_steps(1);
  const rng::Streams streams(3, "walk.first");
  const int n = 1'000'000;
  int right = 0;
  for (int r = 0; r < n; ++r) {
    auto rng = streams.at(r);
    right += walk::simulate_walk(law, stop, rng).final_position == 1;
  }
  CHECK(std::abs(right / double(n) - 0.7) < 4 * std::sqrt(0.7 * 0.3 / n));
}

TEST_CASE("backtrack identity on hand paths") {
  const std::vector<std::int64_t> straight{0, 1, 2, 3};
  const auto a = walk::summarize_path(straight, 3);
  CHECK(*a.passage_time == 3);
  CHECK(walk::backtrack_identity_check(a));

  const std::vector<std::int64_t> wiggle{0, 1, 0, 1, 2};
  const auto b = walk::summarize_path(wiggle, 2);
  CHECK(*b.passage_time == 4);
  CHECK(b.backtracks == std::vector<std::uint64_t>{0, 1, 0});
  CHECK(walk::backtrack_identity_check(b));

  const std::vector<std::int64_t> below{0, -1, -2, -1, 0, 1};
  const auto c = walk::summarize_path(below, 1);
  CHECK(c.left_jumps_below_zero == 1);
  CHECK(c.backtracks == std::vector<std::uint64_t>{1, 0});
  CHECK(c.steps_below_zero == 3);
  CHECK(walk::backtrack_identity_check(c));

  auto broken = b;
  broken.backtracks[0] = 1;
  CHECK_FALSE(walk::backtrack_identity_check(broken));
  CHECK_THROWS_AS(walk::backtrack_identity_check(walk::summarize_path(straight, 9)), UsageError);
  const std::vector<std::int64_t> jump{0, 2};
  CHECK_THROWS_AS(walk::summarize_path(jump, 2), UsageError);
}

TEST_CASE("property: identity holds on random paths") {
  for (std::uint64_t c = 0; c < 300; ++c) {
    auto rng = testing::case_rng("walk.paths", c);
    const auto level = static_cast<std::int64_t>(1 + testing::below(rng, 30));
    const auto path = testing::path_to_level(rng, level);
    const auto rec = walk::summarize_path(path, level);
    CHECK(*rec.passage_time == path.size() - 1);
    CHECK(walk::backtrack_identity_check(rec));
  }
}

TEST_CASE("property: simulated records match their trajectory log") {
  for (std::uint64_t c = 0; c < 300; ++c) {
    auto rng = testing::case_rng("walk.log", c);
    const auto law = testing::nondegenerate_law(rng);
    const auto level = static_cast<std::int64_t>(1 + testing::below(rng, 40));
    StopRule stop;
    stop.level = level;
    stop.horizon = 20'000;
    stop.log_path = true;
    const auto rec = walk::simulate_walk(law, stop, rng);
    CAPTURE(law.to_json());
    CAPTURE(level);
    REQUIRE(rec.path.size() == rec.steps + 1);
    for (std::size_t t = 1; t < rec.path.size(); ++t)
      REQUIRE(std::abs(rec.path[t] - rec.path[t - 1]) == 1);
    const auto ref = walk::summarize_path(rec.path, level);
    CHECK(rec.stop_reason == ref.stop_reason);
    CHECK(rec.final_position == ref.final_position);
    CHECK(rec.max_position == ref.max_position);
    CHECK(rec.steps_below_zero == ref.steps_below_zero);
    if (rec.stop_reason == StopReason::ReachedLevel) {
      CHECK(rec.passage_time == ref.passage_time);
      CHECK(rec.backtracks == ref.backtracks);
      CHECK(rec.left_jumps_below_zero == ref.left_jumps_below_zero);
      std::uint64_t neg = 0;
      for (auto d : rec.negative_backtracks) neg += d;
      CHECK(neg == rec.left_jumps_below_zero);
      CHECK(walk::backtrack_identity_check(rec));
      CHECK(*rec.passage_time >= std::uint64_t(level));
      CHECK((*rec.passage_time - level) % 2 == 0);
    }
  }
}

TEST_CASE("property: identical seeds give identical records") {
  for (std::uint64_t c = 0; c < 50; ++c) {
    auto gen = testing::case_rng("walk.det", c);
    const auto law = testing::nondegenerate_law(gen);
    StopRule stop;
    stop.level = 25;
    stop.horizon = 5000;
    stop.log_path = true;
    stop.record_passage_times = true;
    auto a = rng::Streams(c, "walk.det").at(3);
    auto b = rng::Streams(c, "walk.det").at(3);
    CHECK(walk::simulate_walk(law, stop, a) == walk::simulate_walk(law, stop, b));
  }
}

TEST_CASE("exact oracle examples") {
  const double p = 0.7;
  const auto one = walk::exact_finite_horizon_oracle(EnvironmentLaw::single({p}), 3);
  CHECK(one.passage.at(1).at(1) == doctest::Approx(p).epsilon(1e-15));
  CHECK(one.passage.at(1).at(3) == doctest::Approx((1 - p) * p * 0.5).epsilon(1e-15));

  const auto two = walk::exact_finite_horizon_oracle(EnvironmentLaw::single({0.8, 0.6}), 2);
  CHECK(two.position.at(2) == doctest::Approx(0.64).epsilon(1e-15));

  CHECK_THROWS_AS(walk::exact_finite_horizon_oracle(EnvironmentLaw::single({p}),
                                                    walk::kMaxExactHorizon + 1),
                  UsageError);
  const EnvironmentLaw mixed({{CookieStack({0.2}), 0.5}, {CookieStack({0.8}), 0.5}});
  CHECK_THROWS_AS(walk::exact_finite_horizon_oracle(mixed, 4), UsageError);
}

TEST_CASE("property: oracle probabilities form a partition") {
  for (std::uint64_t c = 0; c < 40; ++c) {
    auto rng = testing::case_rng("walk.oracle", c);
    const auto M = testing::below(rng, 4);
    const auto law = testing::single_law(rng, M, 0.0, 1.0);
    const auto h = 1 + testing::below(rng, 12);
    const auto exact = walk::exact_finite_horizon_oracle(law, h);
    double total = 0.0;
    for (const auto& [x, pr] : exact.position) {
      total += pr;
      CHECK((x + std::int64_t(h)) % 2 == 0);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    for (const auto& [n, dist] : exact.passage) {
      double reached = 0.0;
      for (const auto& [t, pr] : dist) {
        CHECK(t >= std::uint64_t(n));
        reached += pr;
      }
      CHECK(reached <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("simulation agrees with the exact oracle") {
  const auto law = EnvironmentLaw::single({0.85, 0.3, 0.65});
  const std::uint64_t h = 12;
  const auto exact = walk::exact_finite_horizon_oracle(law, h);
  const rng::Streams streams(4, "walk.vs.oracle");
  const std::size_t reps = 400'000;

  std::map<std::int64_t, std::uint64_t> pos;
  std::map<std::uint64_t, std::uint64_t> t3;
  auto stop = StopRule::for_steps(h);
  stop.record_passage_times = true;
  for (std::size_t r = 0; r < reps; ++r) {
    auto rng = streams.at(r);
    const auto rec = walk::simulate_walk(law, stop, rng);
    ++pos[rec.final_position];
    if (rec.passage_times.size() > 3) ++t3[rec.passage_times[3]];
  }
  std::vector<std::uint64_t> observed;
  std::vector<double> expected;
  for (const auto& [x, pr] : exact.position) {
    observed.push_back(pos[x]);
    expected.push_back(pr);
  }
  CHECK(stats::chi_square_gof(observed, expected).p_value > 1e-3);

  observed.clear();
  expected.clear();
  double reached = 0.0;
  for (const auto& [t, pr] : exact.passage.at(3)) {
    observed.push_back(t3[t]);
    expected.push_back(pr);
    reached += pr;
  }
  std::uint64_t missed = reps;
  for (auto o : observed) missed -= o;
  observed.push_back(missed);
  expected.push_back(1.0 - reached);
  CHECK(stats::chi_square_gof(observed, expected).p_value > 1e-3);
}

TEST_CASE("speed estimates") {
  const auto ones = walk::estimate_speed(EnvironmentLaw::single({1.0}), 1000, 10,
                                         rng::Streams(5, "walk.speed"), 1);
  CHECK(ones.speed == 1.0);
  CHECK(ones.stderr_ == 0.0);

  const auto placebo = walk::estimate_speed(EnvironmentLaw::placebo(), 10'000, 2000,
                                            rng::Streams(5, "walk.speed.placebo"), 1);
  CHECK(std::abs(placebo.speed) < 4 * placebo.stderr_);
  CHECK_THROWS_AS(walk::estimate_speed(EnvironmentLaw::placebo(), 10, 1, rng::Streams(5, "x"), 1),
                  UsageError);
}

TEST_CASE("speed does not depend on the worker count") {
  const auto law = EnvironmentLaw::single({0.9, 0.9, 0.9});
  const rng::Streams streams(6, "walk.workers");
  const auto a = walk::estimate_speed(law, 2000, 300, streams, 1);
  const auto b = walk::estimate_speed(law, 2000, 300, streams, 3);
  CHECK(a.speed == b.speed);
  CHECK(a.stderr_ == b.stderr_);
}

TEST_CASE("infimum after the passage time") {
  const std::vector<std::int64_t> ks{1, 5, 10, 20, 50};
  const auto ones = walk::min_after_Tn_tail(EnvironmentLaw::single({1.0}), 20, ks, 200, 100,
                                            rng::Streams(7, "walk.inf.ones"), 1);
  for (double f : ones.frequency) CHECK(f == 0.0);

  const auto law = EnvironmentLaw::homogeneous(3.0, 4);
  const auto tail =
      walk::min_after_Tn_tail(law, 100, ks, 5000, 10'000, rng::Streams(7, "walk.inf"), 1);
  CHECK(tail.used + tail.excluded == 10'000);
  for (std::size_t i = 1; i < ks.size(); ++i) CHECK(tail.frequency[i] <= tail.frequency[i - 1]);
  CHECK(tail.frequency.back() < 0.01);
  CHECK(tail.frequency.front() > 0.0);
}

TEST_CASE("reflection symmetry of the position law") {
  const auto law = EnvironmentLaw::from_file(std::string(ERW_TEST_LAW_DIR) + "/mixed_M2.json");
  const auto mirror = reflect_law(law);
  const auto stop = StopRule::for_steps(100);
  const std::size_t reps = 100'000;
  std::vector<double> a(reps), b(reps);
  const rng::Streams sa(8, "walk.reflect.a"), sb(8, "walk.reflect.b");
  for (std::size_t r = 0; r < reps; ++r) {
    auto ra = sa.at(r);
    auto rb = sb.at(r);
    a[r] = double(walk::simulate_walk(mirror, stop, ra).final_position);
    b[r] = -double(walk::simulate_walk(law, stop, rb).final_position);
  }
  CHECK(stats::ks_two_sample(a, b).distance < 0.01);
}

TEST_CASE("time below zero is a vanishing fraction") {
  const auto law = EnvironmentLaw::from_file(std::string(ERW_TEST_LAW_DIR) + "/L1.5.json");
  auto stop = StopRule::to_level(1000);
  stop.horizon = 100'000'000ULL;
  const rng::Streams streams(9, "walk.below");
  double sum = 0.0;
  int used = 0;
  for (int r = 0; r < 500; ++r) {
    auto rng = streams.at(r);
    const auto rec = walk::simulate_walk(law, stop, rng);
    if (!rec.passage_time) continue;
    sum += double(rec.steps_below_zero) / double(*rec.passage_time);
    ++used;
  }
  REQUIRE(used > 450);
  CHECK(sum / used < 0.05);
}

TEST_CASE("jsonl rows carry the documented fields") {
  auto rng = rng::Streams(10, "walk.json").at(0);
  const auto rec = walk::simulate_walk(EnvironmentLaw::single({0.9, 0.9}), StopRule::to_level(5), rng);
  const auto row = nlohmann::json::parse(walk::to_jsonl(rec, 12));
  for (const char* key : {"rep", "seed", "stop_reason", "n", "T_n", "X_final", "steps_below_zero"})
    CHECK(row.contains(key));
  CHECK(row["rep"] == 12);
  CHECK(row["n"] == 5);
}

}
