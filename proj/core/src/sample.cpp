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

#include "erw/sample.hpp"

#include <array>
#include <cmath>
#include <numbers>

namespace erw::sample {

namespace {

struct ZigguratTables {
  std::array<std::int64_t, 128> kn{};
  std::array<double, 128> wn{};
  std::array<double, 128> fn{};

  ZigguratTables() {
    constexpr double m1 = 2147483648.0;
    constexpr double vn = 9.91256303526217e-3;
    double dn = 3.442619855899;
    double tn = dn;
    const double q = vn / std::exp(-0.5 * dn * dn);
    kn[0] = static_cast<std::int64_t>((dn / q) * m1);
    kn[1] = 0;
    wn[0] = q / m1;
    wn[127] = dn / m1;
    fn[0] = 1.0;
    fn[127] = std::exp(-0.5 * dn * dn);
    for (int i = 126; i >= 1; --i) {
      dn = std::sqrt(-2.0 * std::log(vn / dn + std::exp(-0.5 * dn * dn)));
      kn[i + 1] = static_cast<std::int64_t>((dn / tn) * m1);
      tn = dn;
      fn[i] = std::exp(-0.5 * dn * dn);
      wn[i] = dn / m1;
    }
  }
};

const ZigguratTables& zig() {
  static const ZigguratTables tables;
  return tables;
}

constexpr double kZigR = 3.442619855899;

// Rejection branch of the ziggurat; rare (about 2.5% of calls).
double normal_tail(rng::Rng& rng, std::int64_t hz, unsigned iz) {
  const auto& t = zig();
  for (;;) {
    const double x = static_cast<double>(hz) * t.wn[iz];
    if (iz == 0) {
      double xt, yt;
      do {
        xt = -std::log(rng.uniform_pos()) / kZigR;
        yt = -std::log(rng.uniform_pos());
      } while (yt + yt < xt * xt);
      return hz > 0 ? kZigR + xt : -kZigR - xt;
    }
    if (t.fn[iz] + rng.uniform() * (t.fn[iz - 1] - t.fn[iz]) < std::exp(-0.5 * x * x))
      return x;
    const std::uint64_t u = rng();
    iz = static_cast<unsigned>(u & 127U);
    hz = static_cast<std::int32_t>(u >> 32);
    if ((hz < 0 ? -hz : hz) < t.kn[iz]) return static_cast<double>(hz) * t.wn[iz];
  }
}

struct LogFactorialTable {
  std::array<double, 256> v{};
  LogFactorialTable() {
    v[0] = 0.0;
    for (std::size_t k = 1; k < v.size(); ++k)
      v[k] = v[k - 1] + std::log(static_cast<double>(k));
  }
};

std::uint64_t poisson_inversion(rng::Rng& rng, double mean) {
  const double p0 = std::exp(-mean);
  for (;;) {
    const double u = rng.uniform();
    double p = p0;
    double cdf = p0;
    std::uint64_t k = 0;
    while (u > cdf) {
      ++k;
      p *= mean / static_cast<double>(k);
      if (p == 0.0) break;
      cdf += p;
    }
    if (u <= cdf) return k;
    // u fell into the rounding gap above the accumulated cdf; redraw.
  }
}

// Transformed rejection with squeeze (Hormann 1993), mean >= 10.
std::uint64_t poisson_ptrs(rng::Rng& rng, double mean) {
  const double slam = std::sqrt(mean);
  const double loglam = std::log(mean);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double invalpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = rng.uniform() - 0.5;
    const double v = rng.uniform_pos();
    const double us = 0.5 - std::fabs(u);
    const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(k);
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    const auto ki = static_cast<std::uint64_t>(k);
    if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <=
        -mean + k * loglam - log_factorial(ki))
      return ki;
  }
}

} // namespace

double normal(rng::Rng& rng) {
  const auto& t = zig();
  const std::uint64_t u = rng();
  const auto iz = static_cast<unsigned>(u & 127U);
  const std::int64_t hz = static_cast<std::int32_t>(u >> 32);
  if ((hz < 0 ? -hz : hz) < t.kn[iz]) return static_cast<double>(hz) * t.wn[iz];
  return normal_tail(rng, hz, iz);
}

double exponential(rng::Rng& rng) { return -std::log(rng.uniform_pos()); }

double gamma(rng::Rng& rng, double shape) {
  if (shape < 1.0) {
    const double g = gamma(rng, shape + 1.0);
    return g * std::pow(rng.uniform_pos(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    const double x = normal(rng);
    const double w = c * x;
    if (w <= -1.0) continue;
    // v - 1 = (1 + w)^3 - 1, kept separate to avoid cancellation at large d
    const double vm1 = w * (3.0 + w * (3.0 + w));
    const double u = rng.uniform_pos();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * (1.0 + vm1);
    if (std::log(u) < 0.5 * x2 + d * (std::log1p(vm1) - vm1)) return d * (1.0 + vm1);
  }
}

std::uint64_t poisson(rng::Rng& rng, double mean) {
  if (mean <= 0.0) return 0;
  if (mean < 10.0) return poisson_inversion(rng, mean);
  return poisson_ptrs(rng, mean);
}

std::uint64_t negative_binomial_half(rng::Rng& rng, std::uint64_t r) {
  constexpr std::uint64_t kDirectLimit = 48;
  if (r <= kDirectLimit) {
    std::uint64_t total = 0;
    for (std::uint64_t i = 0; i < r; ++i) total += geometric_half(rng);
    return total;
  }
  // NegBin(r, p) = Poisson(Gamma(r, (1 - p) / p)); here the scale is 1.
  return poisson(rng, gamma(rng, static_cast<double>(r)));
}

double log_factorial(std::uint64_t k) {
  static const LogFactorialTable table;
  if (k < table.v.size()) return table.v[k];
  const double n = static_cast<double>(k);
  const double inv = 1.0 / n;
  const double inv2 = inv * inv;
  return n * std::log(n) - n + 0.5 * std::log(2.0 * std::numbers::pi * n) +
         inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0));
}

} // namespace erw::sample
