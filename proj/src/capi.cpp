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


#include "msmrf/msmrf.h"

#include <omp.h>

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "msmrf/config.hpp"
#include "msmrf/error.hpp"
#include "msmrf/io.hpp"
#include "msmrf/pipeline.hpp"

struct msmrf_config {
  msmrf::RunConfig cfg;
};

struct msmrf_maps {
  msmrf::ParameterMaps maps;
};

namespace {

thread_local std::string g_last_error;
const int g_default_threads = omp_get_max_threads();

template <class F>
msmrf_status guard(F&& f) {
  try {
    f();
    g_last_error.clear();
    return MSMRF_OK;
  } catch (const msmrf::ConfigError& e) {
    g_last_error = e.what();
    return MSMRF_ERR_CONFIG;
  } catch (const msmrf::DataIntegrityError& e) {
    g_last_error = e.what();
    return MSMRF_ERR_DATA;
  } catch (const msmrf::NumericalError& e) {
    g_last_error = e.what();
    return MSMRF_ERR_NUMERICAL;
  } catch (const msmrf::DomainError& e) {
    g_last_error = e.what();
    return MSMRF_ERR_ARGUMENT;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MSMRF_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return MSMRF_ERR_INTERNAL;
  }
}

void require(const void* p, const char* name) {
  if (!p) throw msmrf::DomainError(std::string(name) + " is NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

const std::vector<std::string>& presets() {
  static const std::vector<std::string> names = msmrf::preset_names();
  return names;
}

}  // namespace

extern "C" {

const char* msmrf_version(void) { return "0.1.0"; }

const char* msmrf_last_error(void) { return g_last_error.c_str(); }

void msmrf_free_string(char* s) { std::free(s); }

msmrf_status msmrf_set_threads(int n) {
  return guard([&] { omp_set_num_threads(n > 0 ? n : g_default_threads); });
}

size_t msmrf_preset_count(void) { return presets().size(); }

const char* msmrf_preset_name(size_t i) {
  return i < presets().size() ? presets()[i].c_str() : nullptr;
}

msmrf_status msmrf_config_load(const char* path, msmrf_config** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new msmrf_config{msmrf::load_config(path)};
  });
}

msmrf_status msmrf_config_parse(const char* json, msmrf_config** out) {
  return guard([&] {
    require(json, "json");
    require(out, "out");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(json);
    } catch (const nlohmann::json::parse_error& e) {
      throw msmrf::ConfigError(e.what());
    }
    *out = new msmrf_config{msmrf::parse_config(j)};
  });
}

msmrf_status msmrf_config_preset(const char* name, msmrf_config** out) {
  return guard([&] {
    require(name, "name");
    require(out, "out");
    *out = new msmrf_config{msmrf::preset(name)};
  });
}

msmrf_status msmrf_config_to_json(const msmrf_config* cfg, char** out) {
  return guard([&] {
    require(cfg, "cfg");
    require(out, "out");
    *out = dup_string(msmrf::to_json(cfg->cfg).dump(2) + "\n");
  });
}

void msmrf_config_free(msmrf_config* cfg) { delete cfg; }

msmrf_status msmrf_simulate(const msmrf_config* cfg, const char* out_dir) {
  return guard([&] {
    require(cfg, "cfg");
    require(out_dir, "out_dir");
    msmrf::cmd_simulate(cfg->cfg, out_dir);
  });
}

msmrf_status msmrf_recon(const msmrf_config* cfg, const char* data_dir, const char* out_dir,
                         msmrf_recon_summary* summary) {
  return guard([&] {
    require(cfg, "cfg");
    require(data_dir, "data_dir");
    require(out_dir, "out_dir");
    const msmrf::Reconstruction rec = msmrf::cmd_recon(cfg->cfg, data_dir, out_dir);
    if (summary) {
      summary->final_objective = rec.final_true;
      summary->cum_cost = rec.trace ? rec.trace->cum_cost().to_double() : 0.0;
      summary->iterations = rec.trace ? rec.trace->iterations : 0;
    }
  });
}

msmrf_status msmrf_eval(const char* truth_dir, const char* recon_dir, const char* out_dir,
                        msmrf_metrics* metrics, char** table) {
  return guard([&] {
    require(truth_dir, "truth_dir");
    require(recon_dir, "recon_dir");
    require(out_dir, "out_dir");
    const msmrf::MetricsReport m = msmrf::cmd_eval(truth_dir, recon_dir, out_dir);
    if (metrics) {
      for (int c = 0; c < 4; ++c) {
        metrics->psnr_db[c] = m.psnr[c];
        metrics->psnr_all_pixels_db[c] = m.psnr_all[c];
      }
      for (int c = 0; c < 3; ++c) metrics->mape_percent[c] = m.mape[c];
      metrics->omega_period_hz = m.omega_period;
      metrics->foreground_pixels = m.foreground_pixels;
    }
    if (table) *table = dup_string(msmrf::metrics_table(m));
  });
}

msmrf_status msmrf_bench(size_t voxels, size_t length, int repeats, int* monotone, char** json,
                         char** table) {
  return guard([&] {
    msmrf::BenchConfig cfg;
    cfg.voxels = voxels;
    cfg.length = length;
    cfg.repeats = repeats;
    const msmrf::BenchReport r = msmrf::cmd_bench(cfg);
    if (monotone) *monotone = r.monotone_speedup() ? 1 : 0;
    if (json) *json = dup_string(msmrf::bench_json(r).dump(2) + "\n");
    if (table) *table = dup_string(msmrf::bench_table(r));
  });
}

msmrf_status msmrf_maps_load(const char* dir, const char* stem, msmrf_maps** out) {
  return guard([&] {
    require(dir, "dir");
    require(stem, "stem");
    require(out, "out");
    *out = new msmrf_maps{msmrf::load_maps(dir, stem)};
  });
}

msmrf_status msmrf_maps_shape(const msmrf_maps* maps, int* rows, int* cols) {
  return guard([&] {
    require(maps, "maps");
    if (rows) *rows = maps->maps.rows;
    if (cols) *cols = maps->maps.cols;
  });
}

msmrf_status msmrf_maps_channel(const msmrf_maps* maps, int channel, const double** data) {
  return guard([&] {
    require(maps, "maps");
    require(data, "data");
    if (channel < 0 || channel >= msmrf::kChannels) throw msmrf::DomainError("channel out of range");
    *data = maps->maps[channel].data();
  });
}

void msmrf_maps_free(msmrf_maps* maps) { delete maps; }

}  // extern "C"
