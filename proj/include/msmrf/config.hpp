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


// Run configuration. JSON keys carry their units (t1_ms, t1_s, omega_hz...);
// either time unit is accepted on input and values are held in ms.
// Serialization always writes the ms form, so parse -> serialize -> parse is
// the identity.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "msmrf/blip.hpp"
#include "msmrf/bloch.hpp"
#include "msmrf/experiment.hpp"
#include "msmrf/optimizer.hpp"

namespace msmrf {

enum class Method { kBlip, kFine, kC2F, kBlipFine, kBlipC2F };

Method parse_method(const std::string& s);  // "BLIP", "FINE", "C2F", "BLIP+FINE", "BLIP+C2F"
std::string to_string(Method m);
bool uses_blip(Method m);
bool uses_descent(Method m);

struct PhantomSpec {
  int size = 64;
  PhantomKind kind = PhantomKind::kEllipses;
  std::uint64_t seed = 1;
  bool operator==(const PhantomSpec&) const = default;
};

struct ScheduleSpec {
  std::size_t length = 500;
  double tr = 10.0;  // ms
  std::uint64_t seed = 1;
  // When set, angles come from this CSV instead of the synthetic generator.
  std::string csv;
  bool operator==(const ScheduleSpec&) const = default;
};

struct AcquisitionSpec {
  double rate = 0.125;
  double noise_sigma = 0.0;
  std::uint64_t mask_seed = 1;
  std::uint64_t noise_seed = 1;
  bool operator==(const AcquisitionSpec&) const = default;
};

struct OptimizerSpec {
  StepSizes tau0;
  BacktrackConfig backtrack;
  C2FSchedule schedule{{1}, {1000}};
  std::uint64_t seed = 1;
  TissueParams init{0.42, 2000.0, 200.0, 0.0};
  int true_every = 10;
  bool operator==(const OptimizerSpec&) const = default;
};

struct BlipSpec {
  DictionaryGrid grid = DictionaryGrid::coarse();
  BlipConfig config;
  bool operator==(const BlipSpec& o) const {
    return grid == o.grid && config.iterations == o.config.iterations &&
           config.step == o.config.step && config.match == o.config.match;
  }
};

struct RunConfig {
  std::string name;
  Method method = Method::kBlipC2F;
  PhantomSpec phantom;
  ScheduleSpec schedule;
  AcquisitionSpec acquisition;
  OptimizerSpec optimizer;
  BlipSpec blip;

  // Throws ConfigError naming the offending field.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

// Every seed must be present in the JSON; other fields default. Relative CSV
// paths are resolved against base_dir.
RunConfig parse_config(const nlohmann::json& j, const std::string& base_dir = "");
nlohmann::json to_json(const RunConfig& cfg);
RunConfig load_config(const std::string& path);

// Built-in presets: desk-* (64x64, L=500) and full-* (128x128, L=1000), one
// per method, rate 1/8, noiseless.
std::vector<std::string> preset_names();
RunConfig preset(const std::string& name);

}  // namespace msmrf
