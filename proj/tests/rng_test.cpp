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
#include <set>
#include <vector>

#include "erw/rng.hpp"
#include "erw/sample.hpp"
#include "erw/stats.hpp"

using namespace erw;

namespace {

// Pearson test of `draws` samples against a pmf on {0, 1, ...} truncated at K.
template <typename Draw, typename Pmf>
double chi_square_p(Draw&& draw, Pmf&& pmf, std::size_t K, std::size_t draws) {
  std::vector<std::uint64_t> observed(K + 2, 0);
  for (std::size_t i = 0; i < draws; ++i) ++observed[std::min<std::uint64_t>(draw(), K + 1)];
  std::vector<double> p(K + 2);
  double mass = 0.0;
  for (std::size_t k = 0; k <= K; ++k) mass += (p[k] = pmf(k));
  p[K + 1] = std::max(0.0, 1.0 - mass);
  return stats::chi_square_gof(observed, p).p_value;
}

double negbin_half_pmf(std::uint64_t r, std::uint64_t k) {
  const double rr = static_cast<double>(r), kk = static_cast<double>(k);
  return std::exp(std::lgamma(kk + rr) - std::lgamma(rr) - std::lgamma(kk + 1) -
                  (kk + rr) * std::log(2.0));
}

} // namespace

TEST_SUITE("rng") {

TEST_CASE("philox4x32-10 known answers") {
  using A4 = std::array<std::uint32_t, 4>;
  using A2 = std::array<std::uint32_t, 2>;
  CHECK(rng::philox4x32_10(A4{0, 0, 0, 0}, A2{0, 0}) ==
        A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(rng::philox4x32_10(A4{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff},
                           A2{0xffffffff, 0xffffffff}) ==
        A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(rng::philox4x32_10(A4{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344},
                           A2{0xa4093822, 0x299f31d0}) ==
        A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("streams are pure functions of seed, tag and rep") {
  const rng::Streams s(42, "AC3");
  auto a = s.at(17), b = s.at(17);
  for (int i = 0; i < 100; ++i) CHECK(a() == b());
  CHECK(s.token(17) == rng::Streams(42, "AC3").token(17));
  CHECK(s.at(0)() != s.at(1)());
  CHECK(rng::Streams(43, "AC3").at(0)() != s.at(0)());
  CHECK(rng::Streams(42, "AC4").at(0)() != s.at(0)());
  CHECK(s.sub("x").at(0)() != s.at(0)());
  CHECK(s.sub("x").at(0)() != s.sub("y").at(0)());

  std::set<std::uint64_t> firsts;
  for (std::uint64_t r = 0; r < 10000; ++r) firsts.insert(s.at(r)());
  CHECK(firsts.size() == 10000);
}

TEST_CASE("uniforms stay in range") {
  auto rng = rng::Streams(1, "rng.uniform").at(0);
  double lo = 1.0, hi = 0.0, sum = 0.0;
  const int n = 1'000'000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform_pos();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
    const double v = rng.uniform();
    CHECK_UNARY(v >= 0.0);
    CHECK_UNARY(v < 1.0);
  }
  CHECK(lo > 0.0);
  CHECK(hi < 1.0);
  CHECK(std::abs(sum / n - 0.5) < 4 * std::sqrt(1.0 / 12 / n));
}

TEST_CASE("fair bits are balanced") {
  auto rng = rng::Streams(1, "rng.bits").at(0);
  const int n = 1'000'000;
  int ones = 0;
  for (int i = 0; i < n; ++i) ones += rng.fair_bit();
  CHECK(std::abs(ones - n / 2.0) < 4 * std::sqrt(n / 4.0));
}

}

TEST_SUITE("sample") {

TEST_CASE("geometric(1/2) matches its pmf") {
  auto rng = rng::Streams(2, "sample.geom").at(0);
  const double p = chi_square_p([&] { return sample::geometric_half(rng); },
                                [](std::size_t k) { return std::ldexp(1.0, -int(k) - 1); }, 30,
                                1'000'000);
  CHECK(p > 1e-3);
}

TEST_CASE("negative binomial matches its pmf on both code paths") {
  for (std::uint64_t r : {1ULL, 5ULL, 48ULL, 49ULL, 200ULL, 5000ULL}) {
    CAPTURE(r);
    auto rng = rng::Streams(3, "sample.negbin").at(r);
    const auto K = static_cast<std::size_t>(r + 12 * std::sqrt(2.0 * r) + 20);
    const double p = chi_square_p([&] { return sample::negative_binomial_half(rng, r); },
                                  [&](std::size_t k) { return negbin_half_pmf(r, k); }, K,
                                  300'000);
    CHECK(p > 1e-3);
  }
  auto rng = rng::Streams(3, "sample.negbin").at(0);
  CHECK(sample::negative_binomial_half(rng, 0) == 0);
}

TEST_CASE("negative binomial moments at huge r") {
  auto rng = rng::Streams(4, "sample.negbin.big").at(0);
  const std::uint64_t r = 1'000'000'000ULL;
  const int n = 100'000;
  std::vector<double> x(n);
  for (auto& v : x) v = static_cast<double>(sample::negative_binomial_half(rng, r));
  const auto s = stats::summarize(x);
  CHECK(std::abs(s.mean - double(r)) < 4 * std::sqrt(2.0 * r / n));
  CHECK(s.sd * s.sd / (2.0 * r) == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("poisson matches its pmf") {
  for (double mean : {0.3, 4.0, 9.9, 10.0, 37.5, 1e4}) {
    CAPTURE(mean);
    auto rng = rng::Streams(5, "sample.poisson").at(static_cast<std::uint64_t>(mean * 10));
    const auto K = static_cast<std::size_t>(mean + 12 * std::sqrt(mean) + 20);
    const double p = chi_square_p(
        [&] { return sample::poisson(rng, mean); },
        [&](std::size_t k) {
          return std::exp(k * std::log(mean) - mean - sample::log_factorial(k));
        },
        K, 300'000);
    CHECK(p > 1e-3);
  }
}

TEST_CASE("gamma, exponential and normal moments") {
  auto rng = rng::Streams(6, "sample.cont").at(0);
  const int n = 400'000;
  for (double shape : {0.3, 1.0, 1.5, 7.0}) {
    CAPTURE(shape);
    std::vector<double> x(n);
    for (auto& v : x) v = sample::gamma(rng, shape);
    const auto s = stats::summarize(x);
    CHECK(std::abs(s.mean - shape) < 4 * std::sqrt(shape / n));
    CHECK(s.sd * s.sd == doctest::Approx(shape).epsilon(0.03));
  }
  std::vector<double> e(n), z(n);
  for (auto& v : e) v = sample::exponential(rng);
  for (auto& v : z) v = sample::normal(rng);
  CHECK(std::abs(stats::summarize(e).mean - 1.0) < 4 / std::sqrt(double(n)));
  CHECK(stats::ks_standard_normal(z).p_value > 1e-3);
}

TEST_CASE("log factorial") {
  double acc = 0.0;
  for (std::uint64_t k = 1; k <= 400; ++k) {
    acc += std::log(static_cast<double>(k));
    CHECK(sample::log_factorial(k) == doctest::Approx(acc).epsilon(1e-12));
  }
  CHECK(sample::log_factorial(0) == 0.0);
  CHECK(sample::log_factorial(100000) == doctest::Approx(std::lgamma(100001.0)).epsilon(1e-13));
}

}
