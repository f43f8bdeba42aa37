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

#include <array>
#include <cstddef>
#include <string_view>
#include <vector>

#include "msmrf/bloch.hpp"

namespace msmrf {

// Channel order used everywhere: (rho, T1, T2, omega).
enum Channel : int { kRho = 0, kT1 = 1, kT2 = 2, kOmega = 3 };
inline constexpr int kChannels = 4;

std::string_view channel_name(int channel);  // "rho", "t1", "t2", "omega"
std::string_view channel_unit(int channel);  // "a.u.", "ms", "ms", "Hz"

// Four real maps over an image of rows x cols pixels, row-major
// (pixel index = row * cols + col). Rows are the phase-encode direction.
struct ParameterMaps {
  int rows = 0;
  int cols = 0;
  std::array<std::vector<double>, kChannels> ch;

  ParameterMaps() = default;
  ParameterMaps(int rows, int cols);

  std::size_t pixels() const { return static_cast<std::size_t>(rows) * cols; }
  std::vector<double>& operator[](int c) { return ch[c]; }
  const std::vector<double>& operator[](int c) const { return ch[c]; }

  TissueParams tissue(std::size_t p) const {
    return {ch[kRho][p], ch[kT1][p], ch[kT2][p], ch[kOmega][p]};
  }
  void set(std::size_t p, const TissueParams& u);

  // Every channel filled with one value.
  static ParameterMaps constant(int rows, int cols, const TissueParams& u);

  // Throws DataIntegrityError on inconsistent channel sizes.
  void validate() const;
  bool same_shape(const ParameterMaps& o) const { return rows == o.rows && cols == o.cols; }
  bool operator==(const ParameterMaps&) const = default;
};

}  // namespace msmrf
