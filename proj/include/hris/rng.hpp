// Copyright 2026 The hris-sim Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>

#include "hris/common.hpp"

namespace hris {

// Stream purposes; combined with (seed, index) they key independent substreams
// so that results never depend on call order or worker scheduling.
enum class StreamPurpose : std::uint64_t {
  kGeometry = 1,
  kChannelH = 2,
  kChannelG = 3,
  kNoiseRc = 4,
  kNoiseBs = 5,
  kHrisInit = 6,
  kMisc = 7,
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace detail

// Splittable counter-keyed generator: xoshiro256++ seeded through splitmix64
// from (seed, purpose, index). Normal variates use Box-Muller so the byte
// stream is independent of the standard library implementation.
class RngStream {
 public:
  RngStream(std::uint64_t seed, StreamPurpose purpose, std::uint64_t index = 0,
            std::uint64_t subindex = 0) {
    std::uint64_t mix = seed;
    mix = detail::splitmix64(mix) ^ (static_cast<std::uint64_t>(purpose) * 0xd1342543de82ef95ULL);
    mix = detail::splitmix64(mix) ^ (index * 0xaf251af3b0f025b5ULL);
    mix = detail::splitmix64(mix) ^ (subindex * 0x9e3779b97f4a7c15ULL);
    for (auto& s : s_) s = detail::splitmix64(mix);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = detail::rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = detail::rotl(s_[3], 45);
    return result;
  }

  // Uniform on (0, 1]; never returns 0 so log() is always safe.
  double uniform01() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    spare_ = radius * std::sin(kTwoPi * u2);
    have_spare_ = true;
    return radius * std::cos(kTwoPi * u2);
  }

  // Circularly-symmetric complex Gaussian: (x + iy) * sqrt(variance / 2) with
  // x, y standard normal.
  cxd cnormal(double variance) {
    const double scale = std::sqrt(variance / 2.0);
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    return {scale * radius * std::cos(kTwoPi * u2), scale * radius * std::sin(kTwoPi * u2)};
  }

  CMat cnormal_matrix(Eigen::Index rows, Eigen::Index cols, double variance) {
    CMat out(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = cnormal(variance);
    return out;
  }

 private:
  std::uint64_t s_[4];
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace hris
