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

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "msmrf/error.hpp"
#include "msmrf/experiment.hpp"
#include "msmrf/io.hpp"

using namespace msmrf;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "msmrf_io_XXXXXX").string();
    REQUIRE(mkdtemp(tmpl.data()) != nullptr);
    path = tmpl;
  }
  ~TempDir() { fs::remove_all(path); }
};

AcquisitionData small_acquisition(double noise) {
  const Phantom ph = make_phantom(16, PhantomKind::kEllipses, 2);
  const FlipSchedule s = synth_flip_schedule(12, 2);
  return simulate_acquisition(ph.truth, s, make_epi_masks(16, 16, 0.25, 12, 2), noise, 2);
}

void flip_byte(const fs::path& p, std::streamoff at) {
  std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
  f.seekg(at);
  const char c = static_cast<char>(f.get());
  f.seekp(at);
  f.put(static_cast<char>(c ^ 0x10));
}

}  // namespace

TEST_CASE("sha256 known answers") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("format_double round-trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6000.0, 1e-8, 0.42})
    CHECK(std::strtod(format_double(v).c_str(), nullptr) == v);
  CHECK(format_double(0.1) == "0.1");
}

TEST_CASE("atomic_write leaves no temporary files") {
  TempDir t;
  atomic_write(t.path / "a.txt", "first");
  atomic_write(t.path / "a.txt", "second");
  CHECK(read_file(t.path / "a.txt") == "second");
  int n = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(t.path)) ++n;
  CHECK(n == 1);
  CHECK_THROWS_AS(atomic_write(t.path / "missing" / "a.txt", "x"), ConfigError);
  CHECK_THROWS_AS(read_file(t.path / "nope"), DataIntegrityError);
}

TEST_CASE("maps round-trip") {
  TempDir t;
  const Phantom ph = make_phantom(24, PhantomKind::kBlocks, 4);
  const auto files = save_maps(t.path, "truth", ph.truth, true);
  CHECK(files.size() == 6);
  const ParameterMaps back = load_maps(t.path, "truth");
  CHECK(back == ph.truth);
  CHECK(fs::file_size(t.path / "truth.bin") == 4u * 24 * 24 * 8);

  const std::string pgm = read_file(t.path / "truth_t1.pgm");
  CHECK(pgm.rfind("P5\n24 24\n65535\n", 0) == 0);
  CHECK(pgm.size() == std::string("P5\n24 24\n65535\n").size() + 2u * 24 * 24);

  // Truncated payload.
  fs::resize_file(t.path / "truth.bin", 100);
  CHECK_THROWS_AS(load_maps(t.path, "truth"), DataIntegrityError);
}

TEST_CASE("schedule round-trip is bit-identical") {
  TempDir t;
  FlipSchedule s = synth_flip_schedule(40, 9, 12.5);
  // Angles that survive the degree text form exactly.
  for (double& a : s.angles) a = std::strtod(format_double(a * 180.0 / M_PI).c_str(), nullptr) * M_PI / 180.0;
  save_schedule(t.path, "schedule", s);
  const FlipSchedule back = load_schedule(t.path, "schedule");
  CHECK(back.tr == 12.5);
  REQUIRE(back.angles.size() == s.angles.size());
  for (std::size_t i = 0; i < s.angles.size(); ++i) CHECK(back.angles[i] == s.angles[i]);

  std::ofstream(t.path / "bad.csv") << "alpha_deg\n10\nabc\n";
  CHECK_THROWS_AS(read_schedule_csv(t.path / "bad.csv", 10.0), DataIntegrityError);
  std::ofstream(t.path / "nohead.csv") << "10\n20\n";
  CHECK_THROWS_AS(read_schedule_csv(t.path / "nohead.csv", 10.0), DataIntegrityError);
}

TEST_CASE("acquisition round-trip") {
  TempDir t;
  const AcquisitionData a = small_acquisition(0.01);
  save_acquisition(t.path, a);
  const AcquisitionData b = load_acquisition(t.path, a.schedule);
  CHECK(b.rows == a.rows);
  CHECK(b.cols == a.cols);
  REQUIRE(b.frames.size() == a.frames.size());
  for (std::size_t l = 0; l < a.frames.size(); ++l) {
    CHECK(b.masks[l].on == a.masks[l].on);
    CHECK(b.frames[l] == a.frames[l]);
  }
  // Only sampled entries are stored.
  CHECK(fs::file_size(t.path / "kspace.bin") == 12u * 4 * 16 * 16);

  FlipSchedule other = a.schedule;
  other.angles.pop_back();
  CHECK_THROWS_AS(load_acquisition(t.path, other), DataIntegrityError);
}

TEST_CASE("dictionary round-trip") {
  TempDir t;
  DictionaryGrid g{{800.0, 1600.0}, {60.0, 90.0, 120.0}, {-10.0, 0.0}};
  const Dictionary d = build_dictionary(g, synth_flip_schedule(30, 1));
  save_dictionary(t.path, "dict", d);
  const Dictionary e = load_dictionary(t.path, "dict");
  CHECK(e.grid == d.grid);
  CHECK(e.atoms == d.atoms);
  CHECK(e.norms == d.norms);
  CHECK(e.tr == d.tr);
}

TEST_CASE("manifest detects tampering") {
  TempDir t;
  const AcquisitionData a = small_acquisition(0.0);
  auto files = save_acquisition(t.path, a);
  write_manifest(t.path, files, {{"note", "x"}});
  const auto m = verify_manifest(t.path);
  CHECK(m["note"] == "x");
  CHECK(m["files"].size() == files.size());

  SUBCASE("payload byte") {
    flip_byte(t.path / "kspace.bin", 3);
    CHECK_THROWS_AS(verify_manifest(t.path), DataIntegrityError);
  }
  SUBCASE("missing file") {
    fs::remove(t.path / "masks.bin");
    CHECK_THROWS_AS(verify_manifest(t.path), DataIntegrityError);
  }
  SUBCASE("no manifest") {
    fs::remove(t.path / "manifest.json");
    CHECK_THROWS_AS(verify_manifest(t.path), DataIntegrityError);
  }
}
