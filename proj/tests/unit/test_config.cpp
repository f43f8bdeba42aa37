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


#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "msmrf/config.hpp"
#include "msmrf/error.hpp"

using namespace msmrf;
using nlohmann::json;

namespace {

json minimal(const std::string& method) {
  json j = {{"method", method},
            {"phantom", {{"seed", 1}}},
            {"schedule", {{"seed", 1}}},
            {"acquisition", {{"mask_seed", 1}, {"noise_seed", 1}}},
            {"optimizer", {{"seed", 1}}}};
  if (method == "C2F" || method == "BLIP+C2F")
    j["optimizer"].update({{"increments", {4, 1}}, {"iterations", {20, 10}}});
  return j;
}

void check_config_error(const json& j, const std::string& needle) {
  try {
    parse_config(j);
    FAIL("no ConfigError for " << j.dump());
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    INFO(msg);
    CHECK(msg.find(needle) != std::string::npos);
  }
}

}  // namespace

TEST_CASE("methods") {
  for (const char* m : {"BLIP", "FINE", "C2F", "BLIP+FINE", "BLIP+C2F"})
    CHECK(to_string(parse_method(m)) == m);
  CHECK_THROWS_AS(parse_method("fine"), ConfigError);
  CHECK(uses_blip(Method::kBlipFine));
  CHECK_FALSE(uses_blip(Method::kC2F));
  CHECK_FALSE(uses_descent(Method::kBlip));
}

TEST_CASE("defaults") {
  const RunConfig c = parse_config(minimal("FINE"));
  CHECK(c.phantom.size == 64);
  CHECK(c.schedule.length == 500);
  CHECK(c.schedule.tr == 10.0);
  CHECK(c.acquisition.rate == 0.125);
  CHECK(c.optimizer.schedule.increments == std::vector<int>{1});
  CHECK(c.optimizer.schedule.iterations == std::vector<int>{1000});
  CHECK(c.optimizer.init == TissueParams{0.42, 2000.0, 200.0, 0.0});
  CHECK(c.optimizer.tau0.tau == std::array<double, 4>{0.1, 1e6, 1e5, 1e-8});
  CHECK(c.blip.grid == DictionaryGrid::coarse());
}

TEST_CASE("round-trip is the identity") {
  for (const auto& name : preset_names()) {
    const RunConfig c = preset(name);
    const json j = to_json(c);
    const RunConfig d = parse_config(j);
    CHECK(d == c);
    CHECK(to_json(d) == j);
  }
  // Randomized optimizer and acquisition fields.
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    RunConfig c = preset("desk-blip-c2f");
    c.optimizer.tau0.tau = {u(rng), 1e6 * u(rng) + 1, 1e5 * u(rng) + 1, 1e-8 * (u(rng) + 0.1)};
    c.optimizer.init = {u(rng), 500 + 3000 * u(rng), 40 + 200 * u(rng), 20 * u(rng) - 10};
    c.optimizer.seed = rng();
    c.acquisition.noise_sigma = u(rng);
    c.acquisition.mask_seed = rng();
    c.schedule.tr = 5 + 10 * u(rng);
    c.blip.config.step = 0.5 + u(rng);
    const RunConfig d = parse_config(json::parse(to_json(c).dump()));
    CHECK(d == c);
  }
}

TEST_CASE("seconds convert to milliseconds") {
  json j = minimal("C2F");
  j["schedule"] = {{"seed", 1}, {"tr_s", 0.012}};
  j["optimizer"]["init"] = {{"rho", 0.42}, {"t1_s", 2.0}, {"t2_s", 0.2}, {"omega_hz", 0.0}};
  j["optimizer"]["tau0"] = {{"rho", 0.1}, {"t1_s", 1.0}, {"t2_s", 0.1}, {"omega_hz", 1e-8}};
  j["optimizer"]["floors"] = {{"rho", 0.0}, {"t1_s", 0.002}, {"t2_s", 0.001}, {"omega_hz", nullptr}};
  j["blip"] = {{"t1_s", {0.5, 1.0}}, {"t2_s", {0.05}}, {"omega_hz", {0.0}}};
  const RunConfig c = parse_config(j);
  CHECK(c.schedule.tr == doctest::Approx(12.0).epsilon(1e-15));
  CHECK(c.optimizer.init.t1 == 2000.0);
  CHECK(c.optimizer.init.t2 == doctest::Approx(200.0).epsilon(1e-15));
  CHECK(c.optimizer.tau0.tau[1] == 1e6);
  CHECK(c.optimizer.tau0.tau[2] == doctest::Approx(1e5).epsilon(1e-15));
  CHECK(c.optimizer.backtrack.floors[1] == 2.0);
  CHECK(c.optimizer.backtrack.floors[3] == -std::numeric_limits<double>::infinity());
  CHECK(c.blip.grid.t1 == std::vector<double>{500.0, 1000.0});
  CHECK(to_json(c)["schedule"].contains("tr_ms"));

  json both = minimal("FINE");
  both["schedule"] = {{"seed", 1}, {"tr_s", 0.01}, {"tr_ms", 10.0}};
  check_config_error(both, "tr");
}

TEST_CASE("every seed is explicit") {
  json j = minimal("FINE");
  j["phantom"].erase("seed");
  check_config_error(j, "phantom.seed");
  j = minimal("FINE");
  j["schedule"].erase("seed");
  check_config_error(j, "schedule.seed");
  j = minimal("FINE");
  j["acquisition"].erase("noise_seed");
  check_config_error(j, "acquisition.noise_seed");
  j = minimal("FINE");
  j["optimizer"].erase("seed");
  check_config_error(j, "optimizer.seed");
  // BLIP alone draws no grid offsets.
  j = minimal("BLIP");
  j["optimizer"].erase("seed");
  CHECK_NOTHROW(parse_config(j));
}

TEST_CASE("invalid configs are rejected with the field name") {
  json j = minimal("FINE");
  j["phantom"]["colour"] = "red";
  check_config_error(j, "colour");

  j = minimal("FINE");
  j["extra"] = 1;
  check_config_error(j, "extra");

  j = minimal("C2F");
  j["optimizer"].erase("increments");
  check_config_error(j, "increments");

  j = minimal("C2F");
  j["optimizer"]["increments"] = {1, 4};
  check_config_error(j, "increments");

  j = minimal("C2F");
  j["optimizer"]["iterations"] = {20};
  check_config_error(j, "iterations");

  j = minimal("FINE");
  j["optimizer"]["increments"] = {2};
  check_config_error(j, "FINE");

  j = minimal("FINE");
  j["acquisition"]["rate"] = 0.3;
  check_config_error(j, "acquisition.rate");

  j = minimal("FINE");
  j["phantom"]["size_px"] = "64";
  check_config_error(j, "phantom.size_px");

  j = minimal("BLIP");
  j["blip"] = {{"match", "phase"}};
  check_config_error(j, "match");

  j = minimal("FINE");
  j["method"] = "SGD";
  check_config_error(j, "SGD");
}

TEST_CASE("relative CSV paths resolve against the config") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "msmrf_config_csv";
  fs::create_directories(dir);
  json j = minimal("FINE");
  j["schedule"] = {{"csv", "angles.csv"}, {"length", 3}};
  std::ofstream(dir / "c.json") << j.dump();
  const RunConfig c = load_config((dir / "c.json").string());
  CHECK(c.schedule.csv == (dir / "angles.csv").string());
  fs::remove_all(dir);
  CHECK_THROWS_AS(load_config((dir / "c.json").string()), ConfigError);
}

TEST_CASE("presets") {
  CHECK(preset_names().size() == 10);
  const RunConfig p = preset("full-c2f");
  CHECK(p.phantom.size == 128);
  CHECK(p.schedule.length == 1000);
  CHECK(p.acquisition.rate == 0.125);
  CHECK(p.optimizer.schedule.increments == std::vector<int>{16, 8, 4, 2, 1});
  CHECK(p.optimizer.schedule.iterations == std::vector<int>{320, 320, 160, 100, 850});
  CHECK(preset("full-blip-c2f").optimizer.schedule.increments == std::vector<int>{8, 4, 2, 1});
  CHECK(preset("desk-fine").method == Method::kFine);
  CHECK_THROWS_AS(preset("desk"), ConfigError);
  CHECK_THROWS_AS(preset("huge-fine"), ConfigError);
}

TEST_CASE("shipped preset files match the built-ins") {
  for (const auto& name : preset_names()) {
    const std::string path = std::string(MSMRF_PRESETS_DIR) + "/" + name + ".json";
    CHECK_MESSAGE(load_config(path) == preset(name), path);
  }
}
