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


/* C interface to msmrf. Objects are opaque handles released with their
 * _free function; strings returned through char** are released with
 * msmrf_free_string. Every call returns an msmrf_status and, on failure,
 * leaves a message for msmrf_last_error() on the calling thread. */

#ifndef MSMRF_MSMRF_H_
#define MSMRF_MSMRF_H_

#include <stddef.h>

#if defined(_WIN32)
#define MSMRF_API __declspec(dllexport)
#else
#define MSMRF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Codes 2-4 double as command-line exit codes. */
typedef enum msmrf_status {
  MSMRF_OK = 0,
  MSMRF_ERR_INTERNAL = 1,
  MSMRF_ERR_CONFIG = 2,
  MSMRF_ERR_DATA = 3,
  MSMRF_ERR_NUMERICAL = 4,
  MSMRF_ERR_ARGUMENT = 5
} msmrf_status;

typedef struct msmrf_config msmrf_config;
typedef struct msmrf_maps msmrf_maps;

typedef struct msmrf_metrics {
  double psnr_db[4]; /* rho, T1, T2, omega; foreground; +inf when exact */
  double psnr_all_pixels_db[4];
  double mape_percent[3]; /* rho, T1, T2 */
  double omega_period_hz;
  size_t foreground_pixels;
} msmrf_metrics;

typedef struct msmrf_recon_summary {
  double final_objective; /* F on the fine grid */
  double cum_cost;        /* fine-equivalent gradients; 0 for BLIP */
  size_t iterations;
} msmrf_recon_summary;

MSMRF_API const char* msmrf_version(void);
MSMRF_API const char* msmrf_last_error(void);
MSMRF_API void msmrf_free_string(char* s);

/* Caps the worker threads; n <= 0 restores the default. */
MSMRF_API msmrf_status msmrf_set_threads(int n);

MSMRF_API size_t msmrf_preset_count(void);
MSMRF_API const char* msmrf_preset_name(size_t i);

MSMRF_API msmrf_status msmrf_config_load(const char* path, msmrf_config** out);
MSMRF_API msmrf_status msmrf_config_parse(const char* json, msmrf_config** out);
MSMRF_API msmrf_status msmrf_config_preset(const char* name, msmrf_config** out);
MSMRF_API msmrf_status msmrf_config_to_json(const msmrf_config* cfg, char** out);
MSMRF_API void msmrf_config_free(msmrf_config* cfg);

MSMRF_API msmrf_status msmrf_simulate(const msmrf_config* cfg, const char* out_dir);
/* summary may be NULL. */
MSMRF_API msmrf_status msmrf_recon(const msmrf_config* cfg, const char* data_dir,
                                   const char* out_dir, msmrf_recon_summary* summary);
/* metrics and table may be NULL. */
MSMRF_API msmrf_status msmrf_eval(const char* truth_dir, const char* recon_dir,
                                  const char* out_dir, msmrf_metrics* metrics, char** table);
/* monotone receives whether the derivative speedup rises with the
 * increment; monotone, json and table may be NULL. */
MSMRF_API msmrf_status msmrf_bench(size_t voxels, size_t length, int repeats, int* monotone,
                                   char** json, char** table);

MSMRF_API msmrf_status msmrf_maps_load(const char* dir, const char* stem, msmrf_maps** out);
MSMRF_API msmrf_status msmrf_maps_shape(const msmrf_maps* maps, int* rows, int* cols);
/* channel 0..3 = rho, T1 (ms), T2 (ms), omega (Hz); row-major. The pointer
 * stays valid until msmrf_maps_free. */
MSMRF_API msmrf_status msmrf_maps_channel(const msmrf_maps* maps, int channel,
                                          const double** data);
MSMRF_API void msmrf_maps_free(msmrf_maps* maps);

#ifdef __cplusplus
}
#endif

#endif /* MSMRF_MSMRF_H_ */
