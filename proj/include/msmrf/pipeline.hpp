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


// Config-driven pipelines behind the command line: simulate, reconstruct,
// evaluate and benchmark.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "msmrf/blip.hpp"
#include "msmrf/config.hpp"
#include "msmrf/experiment.hpp"
#include "msmrf/optimizer.hpp"

namespace msmrf {

namespace fs = std::filesystem;

// Synthetic or CSV schedule. Synthetic angles are passed through their
// degree text form so that a schedule read back from disk is bit-identical.
FlipSchedule make_schedule(const ScheduleSpec& spec);

struct Simulation {
  Phantom phantom;
  AcquisitionData data;
};

Simulation simulate(const RunConfig& cfg);

struct Reconstruction {
  ParameterMaps maps;
  std::optional<BlipResult> blip;
  std::optional<IterationTrace> trace;
  StepSizes tau;
  double final_true = 0.0;  // F of the returned maps on S_1(1)
};

// Runs cfg.method on data. dict is built from data.schedule when absent and
// the method needs one.
Reconstruction reconstruct(const RunConfig& cfg, const AcquisitionData& data,
                           const Dictionary* dict = nullptr);

// Writes maps (truth), schedule, acquisition, config and manifest to dir.
void cmd_simulate(const RunConfig& cfg, const fs::path& dir);

// Verifies the data manifest, reconstructs, and writes maps, trace.csv,
// report.json, config.json and a manifest to out_dir.
Reconstruction cmd_recon(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out_dir);

nlohmann::json metrics_json(const MetricsReport& m);
// Rows PSNR and MAPE, columns (rho, T1, T2, omega).
std::string metrics_table(const MetricsReport& m);

// Compares the maps of recon_dir against those of truth_dir (foreground from
// the truth) and writes metrics.json and metrics.txt to out_dir.
MetricsReport cmd_eval(const fs::path& truth_dir, const fs::path& recon_dir, const fs::path& out_dir);

struct BenchConfig {
  std::size_t voxels = 1000;
  std::size_t length = 1000;
  std::vector<int> increments{1, 2, 4, 8, 16, 25};
  int repeats = 5;
  std::uint64_t seed = 1;
};

struct BenchRow {
  int increment = 1;
  std::size_t grid_points = 0;
  // Median seconds per voxel over the whole horizon.
  double values = 0.0;
  double derivatives = 0.0;
  // (max - min) / median over the repeats.
  double values_spread = 0.0;
  double derivatives_spread = 0.0;
};

struct BenchReport {
  BenchConfig config;
  double exact = 0.0;  // simulate_exact, seconds per voxel
  double exact_spread = 0.0;
  std::vector<BenchRow> rows;

  // Derivative cost at N=1 over derivative cost at N (same horizon).
  double speedup(std::size_t row) const;
  bool monotone_speedup() const;
};

// Single-threaded timings of the exact simulator and of the multiscale
// kernel (values only and with T1/T2 derivatives) for every increment,
// median of config.repeats after one warm-up pass.
BenchReport cmd_bench(const BenchConfig& cfg);
nlohmann::json bench_json(const BenchReport& r);
std::string bench_table(const BenchReport& r);

}  // namespace msmrf
