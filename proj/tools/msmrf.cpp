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


// msmrf command line. Talks to the library only through msmrf.h.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include "CLI11.hpp"
#include "msmrf/msmrf.h"

namespace {

struct Failure {
  msmrf_status status;
};

void check(msmrf_status s) {
  if (s != MSMRF_OK) throw Failure{s};
}

int exit_code(msmrf_status s) {
  switch (s) {
    case MSMRF_OK:
      return 0;
    case MSMRF_ERR_CONFIG:
    case MSMRF_ERR_ARGUMENT:
      return 2;
    case MSMRF_ERR_DATA:
      return 3;
    case MSMRF_ERR_NUMERICAL:
      return 4;
    default:
      return 1;
  }
}

using ConfigPtr = std::unique_ptr<msmrf_config, decltype(&msmrf_config_free)>;
using StringPtr = std::unique_ptr<char, decltype(&msmrf_free_string)>;

StringPtr own(char* s) { return StringPtr(s, &msmrf_free_string); }

ConfigPtr load_config(const std::string& path, const std::string& preset) {
  msmrf_config* cfg = nullptr;
  if (!path.empty())
    check(msmrf_config_load(path.c_str(), &cfg));
  else
    check(msmrf_config_preset(preset.c_str(), &cfg));
  return ConfigPtr(cfg, &msmrf_config_free);
}

void write_text(const std::string& path, const char* text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) {
    std::cerr << "msmrf: cannot write " << path << "\n";
    throw Failure{MSMRF_ERR_CONFIG};
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dictionary-free MRF reconstruction with temporal multiscale Bloch models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(msmrf_version()));
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: all cores)")
      ->check(CLI::NonNegativeNumber);

  std::string config_path, preset, data_dir, out_dir, truth_dir, recon_dir;
  auto add_config = [&](CLI::App* cmd) {
    auto* c = cmd->add_option("-c,--config", config_path, "Run config (JSON)")
                  ->check(CLI::ExistingFile);
    auto* p = cmd->add_option("-p,--preset", preset, "Built-in preset name");
    c->excludes(p);
    p->excludes(c);
  };

  auto* sim = app.add_subcommand("simulate", "Simulate a phantom acquisition");
  add_config(sim);
  sim->add_option("-o,--out", out_dir, "Output directory")->required();

  auto* rec = app.add_subcommand("recon", "Reconstruct parameter maps from simulated data");
  add_config(rec);
  rec->add_option("-d,--data", data_dir, "Directory written by simulate")->required();
  rec->add_option("-o,--out", out_dir, "Output directory")->required();

  auto* ev = app.add_subcommand("eval", "Compare reconstructed maps against the truth");
  ev->add_option("-t,--truth", truth_dir, "Directory holding the true maps")->required();
  ev->add_option("-r,--recon", recon_dir, "Directory holding the reconstructed maps")->required();
  ev->add_option("-o,--out", out_dir, "Output directory (default: the recon directory)");

  std::size_t voxels = 1000, length = 1000;
  int repeats = 5;
  std::string bench_json;
  auto* bench = app.add_subcommand("bench", "Time the exact and multiscale Bloch kernels");
  bench->add_option("--voxels", voxels, "Voxels per timing pass")->capture_default_str();
  bench->add_option("--length", length, "Schedule length")->capture_default_str();
  bench->add_option("--repeats", repeats, "Timed repeats (median)")->capture_default_str();
  bench->add_option("--json", bench_json, "Also write the report as JSON");

  std::string show, write_dir;
  auto* pre = app.add_subcommand("presets", "List, print or export built-in configs");
  pre->add_option("--show", show, "Print one preset as JSON");
  pre->add_option("--write", write_dir, "Write every preset to <dir>/<name>.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  for (auto* cmd : {sim, rec})
    if (cmd->parsed() && config_path.empty() && preset.empty()) {
      std::cerr << "msmrf " << cmd->get_name() << ": one of --config or --preset is required\n";
      return 2;
    }

  try {
    check(msmrf_set_threads(threads));
    if (sim->parsed()) {
      const ConfigPtr cfg = load_config(config_path, preset);
      check(msmrf_simulate(cfg.get(), out_dir.c_str()));
      std::cout << "wrote " << out_dir << "\n";
    } else if (rec->parsed()) {
      const ConfigPtr cfg = load_config(config_path, preset);
      const auto t0 = std::chrono::steady_clock::now();
      msmrf_recon_summary s{};
      check(msmrf_recon(cfg.get(), data_dir.c_str(), out_dir.c_str(), &s));
      std::printf("final F %.6e  cum_cost %.6g  iterations %zu  (%.1f s)\n", s.final_objective,
                  s.cum_cost, s.iterations, seconds_since(t0));
      std::cout << "wrote " << out_dir << "\n";
    } else if (ev->parsed()) {
      if (out_dir.empty()) out_dir = recon_dir;
      char* table = nullptr;
      check(msmrf_eval(truth_dir.c_str(), recon_dir.c_str(), out_dir.c_str(), nullptr, &table));
      std::cout << own(table).get();
    } else if (bench->parsed()) {
      int monotone = 0;
      char* json = nullptr;
      char* table = nullptr;
      check(msmrf_bench(voxels, length, repeats, &monotone, &json, &table));
      const StringPtr j = own(json), t = own(table);
      std::cout << t.get();
      if (!bench_json.empty()) write_text(bench_json, j.get());
      if (!monotone && voxels >= 1000) {
        std::cerr << "msmrf bench: speedup is not monotone in the increment\n";
        return 4;
      }
    } else if (pre->parsed()) {
      if (!show.empty()) {
        const ConfigPtr cfg = load_config("", show);
        char* json = nullptr;
        check(msmrf_config_to_json(cfg.get(), &json));
        std::cout << own(json).get();
      } else {
        for (std::size_t i = 0; i < msmrf_preset_count(); ++i) {
          const std::string name = msmrf_preset_name(i);
          std::cout << name << "\n";
          if (write_dir.empty()) continue;
          const ConfigPtr cfg = load_config("", name);
          char* json = nullptr;
          check(msmrf_config_to_json(cfg.get(), &json));
          write_text(write_dir + "/" + name + ".json", own(json).get());
        }
      }
    }
  } catch (const Failure& f) {
    const char* msg = msmrf_last_error();
    if (msg && *msg) std::cerr << "msmrf: " << msg << "\n";
    return exit_code(f.status);
  }
  return 0;
}
