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


/* Exercises the C interface from plain C, linked normally and through
 * dlopen. Usage: test_capi <libmsmrf.so> <tiny config> <scratch dir> */

#include <dlfcn.h>
#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "msmrf/msmrf.h"

static int failures = 0;

#define CHECK(cond)                                                   \
  do {                                                                \
    if (!(cond)) {                                                    \
      fprintf(stderr, "%s:%d: CHECK(%s) failed\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                     \
    }                                                                 \
  } while (0)

static void path_join(char* out, size_t n, const char* a, const char* b) {
  snprintf(out, n, "%s/%s", a, b);
}

static void test_dlopen(const char* lib) {
  void* h = dlopen(lib, RTLD_NOW | RTLD_LOCAL);
  CHECK(h != NULL);
  if (!h) return;
  const char* (*version)(void) = (const char* (*)(void))dlsym(h, "msmrf_version");
  CHECK(version != NULL);
  if (version) CHECK(strcmp(version(), msmrf_version()) == 0);
  /* The C++ core stays private. */
  CHECK(dlsym(h, "_ZN5msmrf11reconstructERKNS_9RunConfigERKNS_15AcquisitionDataEPKNS_10DictionaryE") ==
        NULL);
  dlclose(h);
}

static void test_errors(void) {
  msmrf_config* cfg = NULL;
  CHECK(msmrf_config_preset("no-such-preset", &cfg) == MSMRF_ERR_CONFIG);
  CHECK(cfg == NULL);
  CHECK(strlen(msmrf_last_error()) > 0);
  CHECK(msmrf_config_preset(NULL, &cfg) == MSMRF_ERR_ARGUMENT);
  CHECK(msmrf_config_parse("{not json", &cfg) == MSMRF_ERR_CONFIG);
  CHECK(msmrf_config_parse("{\"method\": \"FINE\"}", &cfg) == MSMRF_ERR_CONFIG);
  CHECK(msmrf_config_load("/nonexistent/config.json", &cfg) == MSMRF_ERR_CONFIG);
  CHECK(msmrf_maps_load("/nonexistent", "maps", NULL) == MSMRF_ERR_ARGUMENT);
  CHECK(msmrf_bench(10, 100, 0, NULL, NULL, NULL) == MSMRF_ERR_CONFIG);
  CHECK(msmrf_set_threads(1) == MSMRF_OK);
  CHECK(strlen(msmrf_last_error()) == 0);
  msmrf_config_free(NULL);
  msmrf_maps_free(NULL);
  msmrf_free_string(NULL);
}

static void test_presets(void) {
  CHECK(msmrf_preset_count() == 10);
  CHECK(msmrf_preset_name(msmrf_preset_count()) == NULL);
  for (size_t i = 0; i < msmrf_preset_count(); ++i) {
    msmrf_config* a = NULL;
    msmrf_config* b = NULL;
    char* ja = NULL;
    char* jb = NULL;
    CHECK(msmrf_config_preset(msmrf_preset_name(i), &a) == MSMRF_OK);
    CHECK(msmrf_config_to_json(a, &ja) == MSMRF_OK);
    CHECK(msmrf_config_parse(ja, &b) == MSMRF_OK);
    CHECK(msmrf_config_to_json(b, &jb) == MSMRF_OK);
    CHECK(ja && jb && strcmp(ja, jb) == 0);
    msmrf_free_string(ja);
    msmrf_free_string(jb);
    msmrf_config_free(a);
    msmrf_config_free(b);
  }
}

static void test_pipeline(const char* config, const char* scratch) {
  char data[1024], rec[1024], self[1024];
  path_join(data, sizeof data, scratch, "data");
  path_join(rec, sizeof rec, scratch, "rec");
  path_join(self, sizeof self, scratch, "self");

  msmrf_config* cfg = NULL;
  CHECK(msmrf_config_load(config, &cfg) == MSMRF_OK);
  CHECK(msmrf_simulate(cfg, data) == MSMRF_OK);
  msmrf_recon_summary s;
  memset(&s, 0, sizeof s);
  CHECK(msmrf_recon(cfg, data, rec, &s) == MSMRF_OK);
  CHECK(s.final_objective > 0.0 && isfinite(s.final_objective));
  CHECK(s.cum_cost == 16.0);
  CHECK(s.iterations == 26);

  msmrf_metrics m;
  char* table = NULL;
  CHECK(msmrf_eval(data, data, self, &m, &table) == MSMRF_OK);
  for (int c = 0; c < 4; ++c) CHECK(isinf(m.psnr_db[c]) && m.psnr_db[c] > 0);
  CHECK(m.omega_period_hz == 100.0);
  CHECK(m.foreground_pixels > 0);
  CHECK(table != NULL && strstr(table, "inf") != NULL);
  msmrf_free_string(table);

  CHECK(msmrf_eval(data, rec, rec, &m, NULL) == MSMRF_OK);
  for (int c = 0; c < 4; ++c) CHECK(isfinite(m.psnr_db[c]));

  msmrf_maps* maps = NULL;
  int rows = 0, cols = 0;
  const double* t1 = NULL;
  CHECK(msmrf_maps_load(rec, "maps", &maps) == MSMRF_OK);
  CHECK(msmrf_maps_shape(maps, &rows, &cols) == MSMRF_OK);
  CHECK(rows == 16 && cols == 16);
  CHECK(msmrf_maps_channel(maps, 1, &t1) == MSMRF_OK);
  CHECK(t1 != NULL && t1[0] >= 1.0);
  CHECK(msmrf_maps_channel(maps, 4, &t1) == MSMRF_ERR_ARGUMENT);
  msmrf_maps_free(maps);

  /* Corrupt one k-space byte: recon must refuse the data. */
  char kspace[1100];
  path_join(kspace, sizeof kspace, data, "kspace.bin");
  FILE* f = fopen(kspace, "r+b");
  CHECK(f != NULL);
  if (f) {
    int byte = fgetc(f);
    fseek(f, 0, SEEK_SET);
    fputc(byte ^ 1, f);
    fclose(f);
  }
  CHECK(msmrf_recon(cfg, data, rec, NULL) == MSMRF_ERR_DATA);
  CHECK(strstr(msmrf_last_error(), "kspace.bin") != NULL);
  msmrf_config_free(cfg);
}

int main(int argc, char** argv) {
  if (argc != 4) {
    fprintf(stderr, "usage: %s <libmsmrf.so> <config> <scratch dir>\n", argv[0]);
    return 2;
  }
  test_dlopen(argv[1]);
  test_errors();
  test_presets();
  test_pipeline(argv[2], argv[3]);
  if (failures) {
    fprintf(stderr, "%d check(s) failed\n", failures);
    return 1;
  }
  printf("capi: all checks passed\n");
  return 0;
}
