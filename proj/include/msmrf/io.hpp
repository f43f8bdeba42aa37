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


// On-disk artifacts. Binary payloads are flat little-endian float64 (complex
// values as interleaved re, im) with a JSON sidecar describing the shape.
// Every file is written to a temporary name in the target directory and
// renamed into place.

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "msmrf/blip.hpp"
#include "msmrf/bloch.hpp"
#include "msmrf/maps.hpp"
#include "msmrf/mri_operator.hpp"

namespace msmrf {

namespace fs = std::filesystem;

// Throws ConfigError when the file cannot be written.
void atomic_write(const fs::path& path, std::string_view bytes);
// Throws DataIntegrityError when the file is missing or unreadable.
std::string read_file(const fs::path& path);
nlohmann::json read_json(const fs::path& path);
void write_json(const fs::path& path, const nlohmann::json& j);

std::string sha256_hex(std::string_view bytes);

// Shortest decimal that round-trips.
std::string format_double(double v);

// <stem>.bin holds the four channels one after another in (rho, T1, T2,
// omega) order; <stem>.json names them with units. With previews, a 16-bit
// PGM per channel is written to <stem>_<channel>.pgm. Returns the file names
// written, relative to dir.
std::vector<std::string> save_maps(const fs::path& dir, const std::string& stem,
                                   const ParameterMaps& maps, bool previews = false);
ParameterMaps load_maps(const fs::path& dir, const std::string& stem);

// 16-bit binary PGM, linearly scaled from [lo, hi] to [0, 65535].
std::string pgm16(const std::vector<double>& values, int rows, int cols, double lo, double hi);

// <stem>.csv with header alpha_deg, one angle in degrees per line; TR in
// <stem>.json.
std::vector<std::string> save_schedule(const fs::path& dir, const std::string& stem,
                                       const FlipSchedule& sched);
FlipSchedule load_schedule(const fs::path& dir, const std::string& stem);
// CSV alone (TR supplied by the caller).
FlipSchedule read_schedule_csv(const fs::path& path, double tr);

// kspace.bin (complex, frame-major), masks.bin (one byte per entry,
// frame-major) and acquisition.json. The schedule is stored separately.
std::vector<std::string> save_acquisition(const fs::path& dir, const AcquisitionData& data);
AcquisitionData load_acquisition(const fs::path& dir, const FlipSchedule& sched);

std::vector<std::string> save_dictionary(const fs::path& dir, const std::string& stem,
                                         const Dictionary& dict);
Dictionary load_dictionary(const fs::path& dir, const std::string& stem);

// manifest.json: {"files": {name: sha256}, ...extra}.
void write_manifest(const fs::path& dir, const std::vector<std::string>& files,
                    const nlohmann::json& extra = nlohmann::json::object());
// Recomputes every listed hash; throws DataIntegrityError on a missing file
// or a mismatch. Returns the manifest.
nlohmann::json verify_manifest(const fs::path& dir);

}  // namespace msmrf
