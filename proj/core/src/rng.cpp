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

#include "erw/rng.hpp"

namespace erw::rng {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53U;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57U;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9U;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85U;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                    std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline std::uint64_t join(std::uint32_t lo, std::uint32_t hi) {
  return static_cast<std::uint64_t>(lo) | (static_cast<std::uint64_t>(hi) << 32);
}

} // namespace

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kPhiloxW0;
      key[1] += kPhiloxW1;
    }
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
    mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

Rng::Rng(const std::array<std::uint64_t, 4>& state) : s_(state) {
  // xoshiro must not start from the all-zero state.
  if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
}

Rng Streams::at(std::uint64_t rep) const {
  const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(master_),
                                            static_cast<std::uint32_t>(master_ >> 32)};
  const auto rep_lo = static_cast<std::uint32_t>(rep);
  const auto rep_hi = static_cast<std::uint32_t>(rep >> 32);
  const auto tag32 = static_cast<std::uint32_t>(tag_ ^ (tag_ >> 32));
  const auto a = philox4x32_10({0U, rep_lo, rep_hi, tag32}, key);
  const auto b = philox4x32_10({1U, rep_lo, rep_hi, tag32}, key);
  return Rng({join(a[0], a[1]), join(a[2], a[3]), join(b[0], b[1]), join(b[2], b[3])});
}

std::uint64_t Streams::token(std::uint64_t rep) const { return at(rep).state()[0]; }

} // namespace erw::rng
