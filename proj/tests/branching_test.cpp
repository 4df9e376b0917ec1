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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <vector>

#include "erw/branching.hpp"
#include "erw/stats.hpp"
#include "erw/walk.hpp"
#include "generators.hpp"

using namespace erw;
using branching::step_V;

namespace {

// P(F_m = k) for k <= K by dynamic programming over (successes, failures);
// toss s + f + 1 succeeds with probability stack.at(s + f + 1).
std::vector<double> failures_pmf(const CookieStack& stack, std::uint64_t m, std::size_t K) {
  std::vector<std::vector<double>> dp(m, std::vector<double>(K + 1, 0.0));
  std::vector<double> out(K + 1, 0.0);
  dp[0][0] = 1.0;
  for (std::size_t f = 0; f <= K; ++f) {
    for (std::uint64_t s = 0; s < m; ++s) {
      const double here = dp[s][f];
      if (here == 0.0) continue;
      const double p = stack.at(s + f + 1);
      if (s + 1 == m)
        out[f] += here * p;
      else
        dp[s + 1][f] += here * p;
      if (f + 1 <= K) dp[s][f + 1] += here * (1.0 - p);
    }
  }
  return out;
}

double chi_square_vs(const std::vector<double>& pmf, std::size_t draws, auto&& draw) {
  const std::size_t K = pmf.size() - 1;
  std::vector<std::uint64_t> observed(K + 2, 0);
  for (std::size_t i = 0; i < draws; ++i) ++observed[std::min<std::uint64_t>(draw(), K + 1)];
  std::vector<double> p(pmf);
  p.push_back(std::max(0.0, 1.0 - std::accumulate(pmf.begin(), pmf.end(), 0.0)));
  return stats::chi_square_gof(observed, p).p_value;
}

} // namespace

TEST_SUITE("branching") {

TEST_CASE("failures before successes: simple stacks") {
  auto rng = rng::Streams(1, "bp.fail").at(0);
  const CookieStack ones({1.0, 1.0, 1.0});
  for (std::uint64_t m : {1ULL, 2ULL, 3ULL, 10ULL, 1000ULL}) {
    // Past the stack the tosses are fair, so only m <= M guarantees zero.
    if (m <= 3) CHECK(branching::sample_failures_before_successes(m, ones, rng) == 0);
  }
  for (std::uint64_t v : {0ULL, 1ULL, 2ULL}) CHECK(step_V(v, ones, rng) == 0);

  const CookieStack placebo;
  const int n = 1'000'000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += double(branching::sample_failures_before_successes(1, placebo, rng));
  CHECK(std::abs(sum / n - 1.0) < 4 * std::sqrt(2.0 / n));

  const double p = 0.7;
  std::vector<double> pmf(40);
  pmf[0] = p;
  for (std::size_t k = 1; k < pmf.size(); ++k) pmf[k] = (1 - p) * std::ldexp(1.0, -int(k));
  CHECK(chi_square_vs(pmf, n, [&] {
          return branching::sample_failures_before_successes(1, CookieStack({p}), rng);
        }) > 1e-3);
}

TEST_CASE("one generation of an all-placebo stack") {
  auto rng = rng::Streams(2, "bp.placebo").at(0);
  const int n = 1'000'000;
  std::vector<double> x(n);
  for (auto& v : x) v = double(step_V(100, CookieStack(), rng));
  const auto s = stats::summarize(x);
  CHECK(std::abs(s.mean - 101) < 4 * s.stderr_);
  const double var_se = 202.0 * std::sqrt(2.0 / n) * 1.5;
  CHECK(std::abs(s.sd * s.sd - 202.0) < 4 * var_se);
}

TEST_CASE("drift of the immigrant block") {
  const CookieStack stack({0.9, 0.8, 0.7});
  auto rng = rng::Streams(3, "bp.drift").at(0);
  const int n = 1'000'000;
  std::vector<double> x(n), y(n);
  for (auto& v : x) v = double(branching::drift_functional(stack, rng));
  for (auto& v : y) v = double(step_V(5, stack, rng)) - 5.0;
  const auto sx = stats::summarize(x), sy = stats::summarize(y);
  CHECK(std::abs(sx.mean + 0.8) < 4 * sx.stderr_);
  CHECK(std::abs(sy.mean + 0.8) < 4 * sy.stderr_);
}

TEST_CASE("property: drift identity over random laws") {
  for (std::uint64_t c = 0; c < 20; ++c) {
    auto rng = testing::case_rng("bp.drift.prop", c);
    const auto law = testing::nondegenerate_law(rng);
    const int n = 200'000;
    std::vector<double> x(n);
    for (auto& v : x) v = double(branching::drift_functional(law.sample(rng), rng));
    const auto s = stats::summarize(x);
    CAPTURE(law.to_json());
    CHECK(std::abs(s.mean - (1.0 - delta_of_law(law))) <= 4 * s.stderr_ + 1e-12);
  }
}

TEST_CASE("exact one-step pmf examples") {
  const auto fair = branching::exact_V1_pmf(CookieStack(), 0, 30);
  for (std::size_t k = 0; k <= 30; ++k)
    CHECK(fair.pmf[k] == doctest::Approx(std::ldexp(1.0, -int(k) - 1)).epsilon(1e-14));
  CHECK(fair.tail == doctest::Approx(std::ldexp(1.0, -31)).epsilon(1e-10));

  const double p = 0.3;
  const auto one = branching::exact_V1_pmf(CookieStack({p}), 0, 20);
  CHECK(one.pmf[0] == doctest::Approx(p).epsilon(1e-15));
  for (std::size_t k = 1; k <= 20; ++k)
    CHECK(one.pmf[k] == doctest::Approx((1 - p) * std::ldexp(1.0, -int(k))).epsilon(1e-14));

  const auto sure = branching::exact_V1_pmf(CookieStack({1.0, 1.0}), 0, 5);
  CHECK(sure.pmf[0] == 1.0);
  CHECK(sure.tail == 0.0);

  CHECK_THROWS_AS(branching::exact_V1_pmf(CookieStack(), branching::kMaxExactV0 + 1, 10), UsageError);
  const auto small = branching::exact_V1_pmf(CookieStack(), 3, 2);
  CHECK(small.tail > 0.5);
}

TEST_CASE("property: exact pmf equals a dynamic-programming oracle") {
  for (std::uint64_t c = 0; c < 200; ++c) {
    auto rng = testing::case_rng("bp.pmf", c);
    const auto M = testing::below(rng, 5);
    const auto law = testing::single_law(rng, M, 0.0, 1.0);
    const auto v0 = testing::below(rng, branching::kMaxExactV0 + 1);
    const std::size_t K = 60;
    const auto exact = branching::exact_V1_pmf(law.stack(0), v0, K);
    const auto dp = failures_pmf(law.stack(0), v0 + 1, K);
    CAPTURE(law.to_json());
    CAPTURE(v0);
    double mass = exact.tail;
    for (std::size_t k = 0; k <= K; ++k) {
      CHECK(exact.pmf[k] == doctest::Approx(dp[k]).epsilon(1e-12).scale(1e-300));
      mass += exact.pmf[k];
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("property: sampler matches the exact pmf") {
  for (std::uint64_t c = 0; c < 12; ++c) {
    auto rng = testing::case_rng("bp.sampler", c);
    const auto M = testing::below(rng, 4);
    const auto law = testing::single_law(rng, M);
    const auto v0 = testing::below(rng, branching::kMaxExactV0 + 1);
    const auto exact = branching::exact_V1_pmf(law.stack(0), v0, 80);
    CAPTURE(law.to_json());
    CAPTURE(v0);
    CHECK(chi_square_vs(exact.pmf, 200'000, [&] { return step_V(v0, law.stack(0), rng); }) > 1e-3);
  }
}

TEST_CASE("step cost does not grow with the population") {
  const CookieStack stack({0.9, 0.8, 0.7});
  auto rng = rng::Streams(4, "bp.cost").at(0);
  auto time_at = [&](std::uint64_t v) {
    std::uint64_t sink = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < 200'000; ++i) sink += step_V(v, stack, rng);
    const auto t1 = std::chrono::steady_clock::now();
    CHECK(sink > 0);
    return std::chrono::duration<double>(t1 - t0).count();
  };
  time_at(10);
  const double small = time_at(10);
  const double large = time_at(1'000'000);
  CAPTURE(small);
  CAPTURE(large);
  CHECK(large < 10 * small);
}

TEST_CASE("runs to extinction") {
  auto rng = rng::Streams(5, "bp.run").at(0);
  // Every toss that can occur is a sure success while v0 + 1 <= M.
  const auto ones = EnvironmentLaw::single(std::vector<double>(10, 1.0));
  for (std::uint64_t v0 : {0ULL, 1ULL, 7ULL, 9ULL}) {
    const auto run = branching::run_to_extinction(ones, v0, {}, rng);
    CHECK(run.sigma0 == 1);
    CHECK(run.progeny == v0);
    CHECK_FALSE(run.censored);
  }

  branching::RunOptions capped;
  capped.caps.generations = 10;
  const auto stuck = branching::run_to_extinction(EnvironmentLaw::placebo(), 100'000, capped, rng);
  CHECK(stuck.censored);
  CHECK_FALSE(stuck.sigma0.has_value());

  branching::RunOptions little;
  little.caps.progeny = 1000;
  CHECK(branching::run_to_extinction(EnvironmentLaw::placebo(), 100'000, little, rng).censored);
}

TEST_CASE("property: logged runs are consistent") {
  for (std::uint64_t c = 0; c < 200; ++c) {
    auto rng = testing::case_rng("bp.logged", c);
    const auto law = testing::nondegenerate_law(rng);
    branching::RunOptions opt;
    opt.log_path = true;
    opt.caps.generations = 5000;
    opt.overshoot_levels = {5, 20};
    const auto v0 = testing::below(rng, 30);
    const auto run = branching::run_to_extinction(law, v0, opt, rng);
    CAPTURE(law.to_json());
    REQUIRE_FALSE(run.path.empty());
    CHECK(run.path.front() == v0);
    if (run.censored) continue;
    REQUIRE(run.sigma0.has_value());
    CHECK(*run.sigma0 >= 1);
    CHECK(run.path.size() == *run.sigma0 + 1);
    CHECK(run.path.back() == 0);
    for (std::size_t j = 1; j + 1 < run.path.size(); ++j) CHECK(run.path[j] > 0);
    CHECK(run.progeny == std::accumulate(run.path.begin(), run.path.end() - 1, std::uint64_t{0}));
    for (const auto& o : run.overshoots) {
      REQUIRE(o.time >= 1);
      REQUIRE(o.time < run.path.size());
      CHECK(run.path[o.time] == o.level + o.excess);
      for (std::size_t j = 1; j < o.time; ++j) CHECK(run.path[j] < o.level);
    }
  }
}

TEST_CASE("overshoot tail decays") {
  const auto law = EnvironmentLaw::from_file(std::string(ERW_TEST_LAW_DIR) + "/L1.5.json");
  const std::uint64_t x = 1000;
  const double r = std::sqrt(double(x));
  branching::RunOptions opt;
  opt.overshoot_levels = {x};
  const rng::Streams streams(6, "bp.overshoot");
  std::vector<double> excess;
  for (std::size_t i = 0; i < 60'000; ++i) {
    auto rng = streams.at(i);
    const auto run = branching::run_to_extinction(law, x / 2, opt, rng);
    if (!run.overshoots.empty()) excess.push_back(double(run.overshoots.front().excess));
  }
  REQUIRE(excess.size() > 5000);
  std::vector<double> ls;
  for (double y : {0.0, 2 * r, 4 * r, 6 * r}) {
    const auto above = std::count_if(excess.begin(), excess.end(), [&](double e) { return e > y; });
    ls.push_back(std::log(double(above) / double(excess.size())));
  }
  for (std::size_t i = 1; i < ls.size(); ++i) CHECK(ls[i] <= ls[i - 1]);
  const double first = ls[1] - ls[0];
  CHECK(first < 0.0);
  for (std::size_t i = 2; i < ls.size(); ++i) CHECK(ls[i] - ls[0] <= double(i) * first);
}

TEST_CASE("renewal cycles") {
  const auto ones = branching::renewal_cycles(EnvironmentLaw::single({1.0}), 50, {},
                                              rng::Streams(7, "bp.cycles"), 1);
  for (const auto& c : ones) {
    CHECK(c.length == 1);
    CHECK(c.progeny == 0);
  }
  const auto est = branching::estimate_from_cycles(ones);
  CHECK(est.lambda == 1.0);
  CHECK(est.speed == 1.0);

  const auto law = EnvironmentLaw::single({0.9, 0.9, 0.9});
  auto cycles = branching::renewal_cycles(law, 20'000, {}, rng::Streams(7, "bp.cycles.24"), 1);
  const auto a = branching::estimate_from_cycles(cycles);
  auto rng = rng::Streams(7, "bp.shuffle").at(0);
  std::shuffle(cycles.begin(), cycles.end(), rng);
  const auto b = branching::estimate_from_cycles(cycles);
  CHECK(a.speed == doctest::Approx(b.speed).epsilon(1e-12));
  CHECK(a.lambda == doctest::Approx(b.lambda).epsilon(1e-12));
  CHECK(a.speed > 0.0);
  CHECK(a.speed < 1.0);

  const auto streamed = branching::renewal_estimate(law, 20'000, {}, rng::Streams(7, "bp.cycles.24"),
                                                    1, 4096);
  CHECK(streamed.speed == doctest::Approx(a.speed).epsilon(1e-12));
  CHECK(streamed.used == a.used);

  branching::Caps tight;
  tight.generations = 3;
  const auto censored = branching::estimate_from_cycles(
      branching::renewal_cycles(law, 2000, tight, rng::Streams(7, "bp.cycles.cap"), 1));
  CHECK(censored.censored > 0);
  CHECK(censored.used + censored.censored == 2000);
}

TEST_CASE("reversed identity: trivial level and small-sample agreement") {
  const auto law = EnvironmentLaw::from_file(std::string(ERW_TEST_LAW_DIR) + "/L1.5.json");
  const std::vector<std::int64_t> ks{0, 10, 20};
  const auto s = branching::reversed_identity_samples(law, 20, ks, 20'000,
                                                      rng::Streams(8, "bp.reversed"), 10'000'000ULL, 1);
  REQUIRE(s.walk.size() == 3);
  for (double v : s.walk[2]) CHECK(v == 0.0);
  for (double v : s.chain[2]) CHECK(v == 0.0);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(stats::ks_two_sample(s.walk[i], s.chain[i]).p_value > 1e-3);
    const auto a = stats::summarize(s.walk[i]), b = stats::summarize(s.chain[i]);
    CHECK(std::abs(a.mean - b.mean) < 4 * std::hypot(a.stderr_, b.stderr_));
  }
}

TEST_CASE("passage time from the branching chain matches the walk") {
  const auto ones = EnvironmentLaw::single({1.0, 1.0});
  auto r0 = rng::Streams(9, "bp.passage.ones").at(0);
  CHECK(branching::passage_time_via_branching(ones, 40, r0) == 40);

  const auto law = EnvironmentLaw::from_file(std::string(ERW_TEST_LAW_DIR) + "/L2.4.json");
  const std::uint64_t n = 50;
  const std::size_t reps = 20'000;
  const rng::Streams sb(9, "bp.passage.chain"), sw(9, "bp.passage.walk");
  std::vector<double> chain, walked;
  for (std::size_t r = 0; r < reps; ++r) {
    auto a = sb.at(r);
    auto b = sw.at(r);
    const auto t = branching::passage_time_via_branching(law, n, a);
    REQUIRE(t.has_value());
    CHECK((*t - n) % 2 == 0);
    chain.push_back(double(*t));
    auto stop = walk::StopRule::to_level(std::int64_t(n));
    stop.horizon = 1'000'000'000ULL;
    walked.push_back(double(*walk::simulate_walk(law, stop, b).passage_time));
  }
  CHECK(stats::ks_two_sample(chain, walked).p_value > 1e-3);
}

TEST_CASE("jsonl rows carry the documented fields") {
  auto rng = rng::Streams(10, "bp.json").at(0);
  const auto run = branching::run_to_extinction(EnvironmentLaw::single({0.9, 0.9}), 3, {}, rng);
  const auto row = nlohmann::json::parse(branching::to_jsonl(run, 4));
  for (const char* key : {"rep", "seed", "v0", "sigma0", "progeny", "censored"}) CHECK(row.contains(key));
  CHECK(row["v0"] == 3);
}

}
