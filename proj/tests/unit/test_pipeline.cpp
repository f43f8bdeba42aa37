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


#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "msmrf/error.hpp"
#include "msmrf/io.hpp"
#include "msmrf/pipeline.hpp"

using namespace msmrf;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "msmrf_pipe_XXXXXX").string();
    REQUIRE(mkdtemp(tmpl.data()) != nullptr);
    path = tmpl;
  }
  ~TempDir() { fs::remove_all(path); }
};

RunConfig tiny(Method method) {
  RunConfig c;
  c.name = "tiny";
  c.method = method;
  c.phantom = {16, PhantomKind::kEllipses, 3};
  c.schedule.length = 60;
  c.schedule.seed = 3;
  c.acquisition = {0.25, 0.0, 3, 3};
  c.optimizer.seed = 3;
  c.optimizer.true_every = 2;
  if (method == Method::kC2F || method == Method::kBlipC2F)
    c.optimizer.schedule = {{4, 2, 1}, {8, 8, 10}};
  else
    c.optimizer.schedule = {{1}, {12}};
  c.blip.grid = {{500, 1000, 1500, 2000, 3000, 4000}, {50, 100, 200, 300, 400}, {-40, -20, 0, 20, 40}};
  c.blip.config.iterations = 10;
  c.validate();
  return c;
}

std::string trace_text(const IterationTrace& t) {
  std::ostringstream os;
  write_trace_csv(os, t);
  return os.str();
}

bool same_files(const fs::path& a, const fs::path& b) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    const fs::path other = b / e.path().filename();
    if (!fs::exists(other) || read_file(e.path()) != read_file(other)) return false;
    ++n;
  }
  std::size_t m = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(b)) ++m;
  return n == m;
}

}  // namespace

TEST_CASE("synthetic schedules survive the CSV round trip") {
  TempDir t;
  ScheduleSpec spec;
  spec.length = 300;
  spec.seed = 11;
  const FlipSchedule s = make_schedule(spec);
  save_schedule(t.path, "schedule", s);
  const FlipSchedule back = load_schedule(t.path, "schedule");
  CHECK(back.angles == s.angles);
  CHECK(back.tr == s.tr);

  ScheduleSpec from_csv;
  from_csv.csv = (t.path / "schedule.csv").string();
  from_csv.length = 300;
  CHECK(make_schedule(from_csv).angles == s.angles);
  from_csv.length = 299;
  CHECK_THROWS_AS(make_schedule(from_csv), ConfigError);
}

TEST_CASE("FINE equals C2F with N = (1)") {
  const RunConfig fine = tiny(Method::kFine);
  RunConfig c2f = fine;
  c2f.method = Method::kC2F;
  const Simulation sim = simulate(fine);
  const Reconstruction a = reconstruct(fine, sim.data);
  const Reconstruction b = reconstruct(c2f, sim.data);
  CHECK(a.maps == b.maps);
  CHECK(trace_text(*a.trace) == trace_text(*b.trace));
  CHECK(a.final_true == b.final_true);
}

TEST_CASE("cumulative cost ends at the nominal budget") {
  const RunConfig cfg = tiny(Method::kC2F);
  const Simulation sim = simulate(cfg);
  const Reconstruction r = reconstruct(cfg, sim.data);
  CHECK(r.trace->cum_cost() == cfg.optimizer.schedule.nominal_budget());
  CHECK(r.trace->cum_cost() == Rational(16));
  CHECK(r.trace->stage_starts == std::vector<int>{1, 9, 17});
  CHECK(std::isfinite(r.final_true));
}

TEST_CASE("BLIP+X starts from the BLIP maps") {
  const RunConfig cfg = tiny(Method::kBlipC2F);
  const Simulation sim = simulate(cfg);
  const Reconstruction r = reconstruct(cfg, sim.data);
  REQUIRE(r.blip.has_value());
  RunConfig blip_only = cfg;
  blip_only.method = Method::kBlip;
  const Reconstruction b = reconstruct(blip_only, sim.data);
  CHECK(b.maps == r.blip->maps);
  CHECK_FALSE(b.trace.has_value());
  // Descent does not increase the objective it started from.
  MriObjective f(sim.data);
  CHECK(r.final_true <= f.true_value(b.maps));
}

TEST_CASE("simulate is deterministic and seed-sensitive") {
  TempDir t;
  const RunConfig cfg = tiny(Method::kFine);
  cmd_simulate(cfg, t.path / "a");
  cmd_simulate(cfg, t.path / "b");
  CHECK(same_files(t.path / "a", t.path / "b"));
  RunConfig other = cfg;
  other.acquisition.mask_seed = 4;
  cmd_simulate(other, t.path / "c");
  CHECK(read_file(t.path / "a" / "manifest.json") != read_file(t.path / "c" / "manifest.json"));
  CHECK(read_file(t.path / "a" / "maps.bin") == read_file(t.path / "c" / "maps.bin"));
  CHECK(read_file(t.path / "a" / "masks.bin") != read_file(t.path / "c" / "masks.bin"));
}

TEST_CASE("full-scale simulation shape") {
  const RunConfig cfg = preset("full-c2f");
  const Simulation sim = simulate(cfg);
  CHECK(sim.data.rows == 128);
  CHECK(sim.data.cols == 128);
  CHECK(sim.data.length() == 1000);
  for (const auto& m : sim.data.masks) CHECK(m.count() == 128u * 128u / 8u);
}

TEST_CASE("recon, eval and the manifest check") {
  TempDir t;
  const RunConfig cfg = tiny(Method::kBlipC2F);
  cmd_simulate(cfg, t.path / "data");
  const Reconstruction r = cmd_recon(cfg, t.path / "data", t.path / "rec");
  CHECK_NOTHROW(verify_manifest(t.path / "rec"));
  CHECK(load_maps(t.path / "rec", "maps") == r.maps);
  CHECK(load_maps(t.path / "rec", "blip") == r.blip->maps);
  const auto report = read_json(t.path / "rec" / "report.json");
  CHECK(report["optimizer"]["cum_cost"] == "16");
  CHECK(report["method"] == "BLIP+C2F");

  const MetricsReport self = cmd_eval(t.path / "data", t.path / "data", t.path / "self");
  for (int c = 0; c < kChannels; ++c) CHECK(std::isinf(self.psnr[c]));
  CHECK(self.omega_period == 100.0);
  const std::string table = read_file(t.path / "self" / "metrics.txt");
  CHECK(table.find("rho") < table.find("T1"));
  CHECK(table.find("T1") < table.find("T2"));
  CHECK(table.find("T2") < table.find("omega"));
  const auto mj = read_json(t.path / "self" / "metrics.json");
  CHECK(mj["psnr_db"]["rho"] == "inf");

  const MetricsReport m = cmd_eval(t.path / "data", t.path / "rec", t.path / "rec");
  for (int c = 0; c < kChannels; ++c) CHECK(std::isfinite(m.psnr[c]));

  // Recon twice: byte-identical outputs.
  cmd_recon(cfg, t.path / "data", t.path / "rec2");
  cmd_eval(t.path / "data", t.path / "rec2", t.path / "rec2");
  CHECK(same_files(t.path / "rec", t.path / "rec2"));

  // Mixed provenance is refused before anything is written.
  {
    std::string k = read_file(t.path / "data" / "kspace.bin");
    k[5] ^= 1;
    atomic_write(t.path / "data" / "kspace.bin", k);
  }
  CHECK_THROWS_AS(cmd_recon(cfg, t.path / "data", t.path / "rec3"), DataIntegrityError);
  CHECK_FALSE(fs::exists(t.path / "rec3" / "maps.bin"));

  RunConfig big = cfg;
  big.phantom.size = 32;
  cmd_simulate(big, t.path / "big");
  CHECK_THROWS_AS(cmd_eval(t.path / "big", t.path / "rec", t.path / "e"), DataIntegrityError);
}

TEST_CASE("bench report") {
  BenchConfig bc;
  bc.voxels = 16;
  bc.length = 200;
  bc.repeats = 3;
  const BenchReport r = cmd_bench(bc);
  REQUIRE(r.rows.size() == 6);
  CHECK(r.rows[0].grid_points == 200);
  CHECK(r.rows[4].grid_points == 12);
  CHECK(r.rows[5].grid_points == 8);
  CHECK(r.speedup(0) == 1.0);
  for (const auto& row : r.rows) {
    CHECK(row.values > 0.0);
    CHECK(row.derivatives > 0.0);
  }
  CHECK(r.exact > 0.0);
  const auto j = bench_json(r);
  CHECK(j["rows"].size() == 6);
  CHECK(bench_table(r).find("16") != std::string::npos);
  bc.increments = {0};
  CHECK_THROWS_AS(cmd_bench(bc), ConfigError);
}
