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

#include "msmrf/maps.hpp"

#include <string>

#include "msmrf/error.hpp"

namespace msmrf {

std::string_view channel_name(int channel) {
  static constexpr std::string_view kNames[kChannels] = {"rho", "t1", "t2", "omega"};
  if (channel < 0 || channel >= kChannels) throw DomainError("bad channel index");
  return kNames[channel];
}

std::string_view channel_unit(int channel) {
  static constexpr std::string_view kUnits[kChannels] = {"a.u.", "ms", "ms", "Hz"};
  if (channel < 0 || channel >= kChannels) throw DomainError("bad channel index");
  return kUnits[channel];
}

ParameterMaps::ParameterMaps(int rows_, int cols_) : rows(rows_), cols(cols_) {
  if (rows_ < 1 || cols_ < 1) throw DomainError("map dimensions must be positive");
  for (auto& c : ch) c.assign(pixels(), 0.0);
}

void ParameterMaps::set(std::size_t p, const TissueParams& u) {
  ch[kRho][p] = u.rho;
  ch[kT1][p] = u.t1;
  ch[kT2][p] = u.t2;
  ch[kOmega][p] = u.omega;
}

ParameterMaps ParameterMaps::constant(int rows, int cols, const TissueParams& u) {
  ParameterMaps x(rows, cols);
  for (std::size_t p = 0; p < x.pixels(); ++p) x.set(p, u);
  return x;
}

void ParameterMaps::validate() const {
  if (rows < 1 || cols < 1) throw DataIntegrityError("map dimensions must be positive");
  for (int c = 0; c < kChannels; ++c)
    if (ch[c].size() != pixels())
      throw DataIntegrityError("channel " + std::string(channel_name(c)) +
                               " has the wrong number of pixels");
}

}  // namespace msmrf
