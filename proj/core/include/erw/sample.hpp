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

#include <bit>
#include <cstdint>

#include "erw/rng.hpp"

// Exact variate generators. None of these use a normal approximation of a
// discrete law; the distributional tests depend on that.
namespace erw::sample {

/// Number of failures before the first success of a fair coin,
/// i.e. Geom(1/2) on {0, 1, 2, ...}.
inline std::uint64_t geometric_half(rng::Rng& rng) {
  std::uint64_t failures = 0;
  for (;;) {
    const std::uint64_t word = rng();
    if (word != 0) return failures + static_cast<std::uint64_t>(std::countr_zero(word));
    failures += 64;
  }
}

/// Standard normal via the Marsaglia-Tsang ziggurat (128 layers). Layer
/// index and magnitude come from disjoint bits of one draw.
double normal(rng::Rng& rng);

/// Exponential with mean 1.
double exponential(rng::Rng& rng);

/// Gamma(shape, 1). Marsaglia-Tsang for shape >= 1, boosted for shape < 1.
double gamma(rng::Rng& rng, double shape);

/// Poisson(mean): inversion below mean 10, Hormann's PTRS above.
std::uint64_t poisson(rng::Rng& rng, double mean);

/// Failures before the r-th success of a fair coin: NegBin(r, 1/2).
/// Small r sums geometric draws; large r uses the exact gamma-Poisson
/// mixture, so the cost is O(1) in r.
std::uint64_t negative_binomial_half(rng::Rng& rng, std::uint64_t r);

/// log(k!) to double precision.
double log_factorial(std::uint64_t k);

} // namespace erw::sample
