// Copyright 2026 The SAPALM Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Deterministic random number generation. Reproducibility across compilers
// and standard libraries matters more here than raw throughput, so the
// engine (xoshiro256++), the normal transform (Box-Muller) and the bounded
// integer mapping are all implemented locally instead of relying on
// <random> distributions, whose outputs are not specified bit-for-bit.

#pragma once

#include <cmath>
#include <cstdint>
#include <span>

namespace sapalm {

// SplitMix64 step. Used for seeding and for stateless hashing.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// One-shot stateless hash of (seed, a, b). Handy for schedules that must be
// pure functions of their arguments.
inline std::uint64_t hash_mix(std::uint64_t seed, std::uint64_t a,
                              std::uint64_t b = 0) {
  std::uint64_t s = seed;
  s ^= 0x9E3779B97F4A7C15ULL + (splitmix64(s) ^ a);
  s ^= 0xBF58476D1CE4E5B9ULL + (splitmix64(s) ^ b);
  return splitmix64(s);
}

// Fixed tags for deriving independent streams from one experiment seed.
// Worker streams use kWorkerBase + worker index.
namespace stream_tag {
inline constexpr std::uint64_t kData = 1;
inline constexpr std::uint64_t kInit = 2;
inline constexpr std::uint64_t kDelay = 3;
inline constexpr std::uint64_t kDiagnostics = 4;
inline constexpr std::uint64_t kWorkerBase = 0x100;
}  // namespace stream_tag

// xoshiro256++ with locally defined floating point helpers.
class Rng {
 public:
  Rng() : Rng(0x853C49E6748FEA9BULL) {}

  explicit Rng(std::uint64_t seed) { reseed(seed); }

  // Independent stream: mixes a tag into the seed so streams derived from
  // the same experiment seed do not overlap in practice.
  static Rng stream(std::uint64_t seed, std::uint64_t tag) {
    return Rng(seed ^ (0xD1B54A32D192ED03ULL * (tag + 1)));
  }

  void reseed(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64(sm);
    // All-zero state is the one forbidden configuration.
    if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
    have_spare_normal_ = false;
    spare_normal_ = 0.0;
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform double in [0, 1), 53 significant bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform double in (0, 1]; safe as a log() argument.
  double uniform_pos() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Uniform integer in [0, bound). Lemire multiply-shift; the modulo bias of
  // roughly bound / 2^64 is far below anything observable here.
  std::uint64_t bounded(std::uint64_t bound) {
    const unsigned __int128 m =
        static_cast<unsigned __int128>(next_u64()) * bound;
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Standard normal via Box-Muller, with the spare value cached.
  double normal() {
    if (have_spare_normal_) {
      have_spare_normal_ = false;
      return spare_normal_;
    }
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * kPi * u2;
    spare_normal_ = radius * std::sin(angle);
    have_spare_normal_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  void fill_normal(std::span<double> out, double mean = 0.0,
                   double stddev = 1.0) {
    for (auto& v : out) v = normal(mean, stddev);
  }

 private:
  static constexpr double kPi = 3.14159265358979323846;

  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4];
  bool have_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace sapalm
