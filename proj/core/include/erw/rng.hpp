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

#include <array>
#include <bit>
#include <cstdint>
#include <limits>
#include <string_view>

namespace erw::rng {

/// Philox4x32-10 block function (Salmon et al., SC'11).
///
/// A keyed bijection of a 128-bit counter; used only to derive stream
/// states, so that stream r of a run is a pure function of
/// (master seed, experiment tag, r) and never of scheduling order.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key);

/// 64-bit FNV-1a; maps experiment ids to stream tags.
constexpr std::uint64_t tag_of(std::string_view id) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : id) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// xoshiro256++ engine with a few sampling helpers used by the kernels.
/// Satisfies UniformRandomBitGenerator.
class Rng {
public:
  using result_type = std::uint64_t;

  explicit Rng(const std::array<std::uint64_t, 4>& state);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() {
    const std::uint64_t result = std::rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = std::rotl(s_[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1); safe under log().
  double uniform_pos() {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// One fair bit, drawn from a buffered 64-bit word.
  bool fair_bit() {
    if (bits_left_ == 0) {
      bitbuf_ = (*this)();
      bits_left_ = 64;
    }
    const bool b = bitbuf_ & 1U;
    bitbuf_ >>= 1;
    --bits_left_;
    return b;
  }

  const std::array<std::uint64_t, 4>& state() const { return s_; }

private:
  std::array<std::uint64_t, 4> s_;
  std::uint64_t bitbuf_ = 0;
  int bits_left_ = 0;
};

/// Family of independent streams for one experiment.
///
/// Stream r is seeded from two Philox blocks with key = master seed and
/// counter = (block, lo32(r), hi32(r), fold32(tag)), block in {0, 1}.
class Streams {
public:
  Streams(std::uint64_t master, std::uint64_t tag) : master_(master), tag_(tag) {}
  Streams(std::uint64_t master, std::string_view id)
      : Streams(master, tag_of(id)) {}

  Rng at(std::uint64_t rep) const;

  /// Reproducibility token reported alongside per-rep rows.
  std::uint64_t token(std::uint64_t rep) const;

  /// Independent family for a named sub-experiment.
  Streams sub(std::string_view name) const {
    return Streams(master_, tag_ ^ std::rotl(tag_of(name), 29));
  }

  std::uint64_t master() const { return master_; }
  std::uint64_t tag() const { return tag_; }

private:
  std::uint64_t master_;
  std::uint64_t tag_;
};

} // namespace erw::rng
