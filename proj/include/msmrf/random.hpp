/* Copyright 2026 The msmrf Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstdint>
#include <random>

namespace msmrf {

// All randomness goes through explicitly seeded mt19937_64 engines. Each
// consumer draws from its own stream so that, e.g., changing the mask seed
// never perturbs the grid offsets.
using Rng = std::mt19937_64;

enum class RngStream : std::uint32_t {
  kMasks = 1,
  kGridOffsets = 2,
  kPhantom = 3,
  kNoise = 4,
};

inline Rng make_stream(std::uint64_t seed, RngStream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

// Uniform integer on {1, ..., n}.
inline int randi(Rng& rng, int n) {
  return std::uniform_int_distribution<int>(1, n)(rng);
}

}  // namespace msmrf
