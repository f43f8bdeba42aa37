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


#include "msmrf/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <set>

#include "msmrf/error.hpp"

namespace msmrf {

using nlohmann::json;

namespace {

constexpr std::array<const char*, kChannels> kChannelKeys = {"rho", "t1", "t2", "omega"};

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
T get(const json& j, const std::string& where, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

std::uint64_t seed(const json& j, const std::string& where, const char* key) {
  if (!j.contains(key))
    throw ConfigError(where + "." + key + ": required (every seed must be explicit)");
  const json& v = j.at(key);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0)
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  throw ConfigError(where + "." + key + ": must be a non-negative integer");
}

// A time-like value stored as <base>_ms or <base>_s; s_to_ms converts the
// second form.
double time_value(const json& j, const std::string& where, const std::string& base,
                  double s_to_ms, double fallback) {
  const bool ms = j.contains(base + "_ms"), s = j.contains(base + "_s");
  if (ms && s) throw ConfigError(where + ": give either " + base + "_ms or " + base + "_s");
  if (ms) return get<double>(j, where, (base + "_ms").c_str(), 0.0);
  if (s) return get<double>(j, where, (base + "_s").c_str(), 0.0) * s_to_ms;
  return fallback;
}

std::vector<double> time_axis(const json& j, const std::string& where, const std::string& base,
                              const std::vector<double>& fallback) {
  const bool ms = j.contains(base + "_ms"), s = j.contains(base + "_s");
  if (ms && s) throw ConfigError(where + ": give either " + base + "_ms or " + base + "_s");
  if (!ms && !s) return fallback;
  auto v = get<std::vector<double>>(j, where, (base + (ms ? "_ms" : "_s")).c_str(), {});
  if (s)
    for (double& x : v) x *= 1e3;
  return v;
}

// (rho, T1, T2, omega) quadruple with unit-annotated keys.
std::array<double, kChannels> channels(const json& j, const std::string& where,
                                       std::array<double, kChannels> fallback, double s_to_ms,
                                       bool allow_null_omega) {
  check_keys(j, where, {"rho", "t1_ms", "t1_s", "t2_ms", "t2_s", "omega_hz"});
  std::array<double, kChannels> out = fallback;
  out[kRho] = get<double>(j, where, "rho", fallback[kRho]);
  out[kT1] = time_value(j, where, "t1", s_to_ms, fallback[kT1]);
  out[kT2] = time_value(j, where, "t2", s_to_ms, fallback[kT2]);
  if (j.contains("omega_hz") && j.at("omega_hz").is_null()) {
    if (!allow_null_omega) throw ConfigError(where + ".omega_hz: must be a number");
    out[kOmega] = kNoFloor;
  } else {
    out[kOmega] = get<double>(j, where, "omega_hz", fallback[kOmega]);
  }
  return out;
}

json channels_json(const std::array<double, kChannels>& v) {
  json j = {{"rho", v[kRho]}, {"t1_ms", v[kT1]}, {"t2_ms", v[kT2]}};
  j["omega_hz"] = std::isinf(v[kOmega]) && v[kOmega] < 0 ? json(nullptr) : json(v[kOmega]);
  return j;
}

}  // namespace

Method parse_method(const std::string& s) {
  if (s == "BLIP") return Method::kBlip;
  if (s == "FINE") return Method::kFine;
  if (s == "C2F") return Method::kC2F;
  if (s == "BLIP+FINE") return Method::kBlipFine;
  if (s == "BLIP+C2F") return Method::kBlipC2F;
  throw ConfigError("method: unknown '" + s + "' (BLIP, FINE, C2F, BLIP+FINE, BLIP+C2F)");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::kBlip: return "BLIP";
    case Method::kFine: return "FINE";
    case Method::kC2F: return "C2F";
    case Method::kBlipFine: return "BLIP+FINE";
    case Method::kBlipC2F: return "BLIP+C2F";
  }
  return "?";
}

bool uses_blip(Method m) { return m == Method::kBlip || m == Method::kBlipFine || m == Method::kBlipC2F; }
bool uses_descent(Method m) { return m != Method::kBlip; }

void RunConfig::validate() const {
  if (phantom.size < 16) throw ConfigError("phantom.size_px: must be >= 16");
  if (schedule.length < 1) throw ConfigError("schedule.length: must be >= 1");
  if (!(schedule.tr > 0.0) || !std::isfinite(schedule.tr)) throw ConfigError("schedule.tr_ms: must be positive");
  if (!(acquisition.noise_sigma >= 0.0) || !std::isfinite(acquisition.noise_sigma))
    throw ConfigError("acquisition.noise_sigma: must be >= 0");
  try {
    epi_spacing(phantom.size, acquisition.rate);
  } catch (const DomainError& e) {
    throw ConfigError(std::string("acquisition.rate: ") + e.what());
  }
  if (uses_descent(method)) {
    optimizer.tau0.validate();
    optimizer.backtrack.validate();
    try {
      optimizer.schedule.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("optimizer.increments/iterations: ") + e.what());
    }
    if (optimizer.schedule.increments.front() > static_cast<int>(schedule.length))
      throw ConfigError("optimizer.increments: N must not exceed the schedule length");
    if ((method == Method::kFine || method == Method::kBlipFine) &&
        optimizer.schedule.increments != std::vector<int>{1})
      throw ConfigError("optimizer.increments: FINE runs use N = (1)");
    if (optimizer.true_every < 0) throw ConfigError("optimizer.true_every: must be >= 0");
    try {
      optimizer.init.validate();
    } catch (const DomainError& e) {
      throw ConfigError(std::string("optimizer.init: ") + e.what());
    }
  }
  if (uses_blip(method)) {
    blip.config.validate();
    try {
      blip.grid.validate();
    } catch (const DomainError& e) {
      throw ConfigError(std::string("blip: ") + e.what());
    }
  }
}

RunConfig parse_config(const json& j, const std::string& base_dir) {
  check_keys(j, "config", {"name", "method", "phantom", "schedule", "acquisition", "optimizer", "blip"});
  RunConfig c;
  c.name = get<std::string>(j, "config", "name", "");
  if (!j.contains("method")) throw ConfigError("method: required");
  c.method = parse_method(get<std::string>(j, "config", "method", ""));

  const json ph = j.value("phantom", json::object());
  check_keys(ph, "phantom", {"size_px", "kind", "seed"});
  c.phantom.size = get<int>(ph, "phantom", "size_px", c.phantom.size);
  try {
    c.phantom.kind = parse_phantom_kind(get<std::string>(ph, "phantom", "kind", "ellipses"));
  } catch (const DomainError& e) {
    throw ConfigError(std::string("phantom.kind: ") + e.what());
  }
  c.phantom.seed = seed(ph, "phantom", "seed");

  const json sc = j.value("schedule", json::object());
  check_keys(sc, "schedule", {"length", "tr_ms", "tr_s", "seed", "csv"});
  c.schedule.length = get<std::size_t>(sc, "schedule", "length", c.schedule.length);
  c.schedule.tr = time_value(sc, "schedule", "tr", 1e3, c.schedule.tr);
  c.schedule.csv = get<std::string>(sc, "schedule", "csv", "");
  if (c.schedule.csv.empty()) {
    c.schedule.seed = seed(sc, "schedule", "seed");
  } else {
    if (sc.contains("seed")) c.schedule.seed = seed(sc, "schedule", "seed");
    std::filesystem::path p(c.schedule.csv);
    if (p.is_relative() && !base_dir.empty()) c.schedule.csv = (std::filesystem::path(base_dir) / p).string();
  }

  const json aq = j.value("acquisition", json::object());
  check_keys(aq, "acquisition", {"rate", "noise_sigma", "mask_seed", "noise_seed"});
  c.acquisition.rate = get<double>(aq, "acquisition", "rate", c.acquisition.rate);
  c.acquisition.noise_sigma = get<double>(aq, "acquisition", "noise_sigma", 0.0);
  c.acquisition.mask_seed = seed(aq, "acquisition", "mask_seed");
  c.acquisition.noise_seed = seed(aq, "acquisition", "noise_seed");

  const json op = j.value("optimizer", json::object());
  check_keys(op, "optimizer", {"tau0", "floors", "max_trials", "grow", "shrink", "accept_last_trial",
                               "increments", "iterations", "seed", "init", "true_every"});
  OptimizerSpec& o = c.optimizer;
  if (op.contains("tau0"))
    o.tau0.tau = channels(op["tau0"], "optimizer.tau0", o.tau0.tau, 1e6, false);
  if (op.contains("floors"))
    o.backtrack.floors = channels(op["floors"], "optimizer.floors", o.backtrack.floors, 1e3, true);
  o.backtrack.max_trials = get<int>(op, "optimizer", "max_trials", o.backtrack.max_trials);
  o.backtrack.grow = get<double>(op, "optimizer", "grow", o.backtrack.grow);
  o.backtrack.shrink = get<double>(op, "optimizer", "shrink", o.backtrack.shrink);
  o.backtrack.accept_last_trial = get<bool>(op, "optimizer", "accept_last_trial", false);
  const bool fine = c.method == Method::kFine || c.method == Method::kBlipFine;
  if (uses_descent(c.method) && !fine && !op.contains("increments"))
    throw ConfigError("optimizer.increments: required for " + to_string(c.method));
  o.schedule.increments = get<std::vector<int>>(op, "optimizer", "increments", {1});
  o.schedule.iterations = get<std::vector<int>>(op, "optimizer", "iterations", {1000});
  if (uses_descent(c.method)) o.seed = seed(op, "optimizer", "seed");
  else if (op.contains("seed")) o.seed = seed(op, "optimizer", "seed");
  if (op.contains("init")) {
    const auto v = channels(op["init"], "optimizer.init",
                            {o.init.rho, o.init.t1, o.init.t2, o.init.omega}, 1e3, false);
    o.init = {v[kRho], v[kT1], v[kT2], v[kOmega]};
  }
  o.true_every = get<int>(op, "optimizer", "true_every", o.true_every);

  const json bl = j.value("blip", json::object());
  check_keys(bl, "blip", {"iterations", "step", "match", "t1_ms", "t1_s", "t2_ms", "t2_s", "omega_hz"});
  c.blip.config.iterations = get<int>(bl, "blip", "iterations", c.blip.config.iterations);
  c.blip.config.step = get<double>(bl, "blip", "step", c.blip.config.step);
  c.blip.config.match = parse_match_mode(get<std::string>(bl, "blip", "match", "real"));
  c.blip.grid.t1 = time_axis(bl, "blip", "t1", c.blip.grid.t1);
  c.blip.grid.t2 = time_axis(bl, "blip", "t2", c.blip.grid.t2);
  c.blip.grid.omega = get<std::vector<double>>(bl, "blip", "omega_hz", c.blip.grid.omega);

  c.validate();
  return c;
}

json to_json(const RunConfig& c) {
  json sched = {{"length", c.schedule.length}, {"tr_ms", c.schedule.tr}, {"seed", c.schedule.seed}};
  if (!c.schedule.csv.empty()) sched["csv"] = c.schedule.csv;
  const OptimizerSpec& o = c.optimizer;
  return {
      {"name", c.name},
      {"method", to_string(c.method)},
      {"phantom", {{"size_px", c.phantom.size}, {"kind", to_string(c.phantom.kind)}, {"seed", c.phantom.seed}}},
      {"schedule", sched},
      {"acquisition",
       {{"rate", c.acquisition.rate}, {"noise_sigma", c.acquisition.noise_sigma},
        {"mask_seed", c.acquisition.mask_seed}, {"noise_seed", c.acquisition.noise_seed}}},
      {"optimizer",
       {{"tau0", channels_json(o.tau0.tau)},
        {"floors", channels_json(o.backtrack.floors)},
        {"max_trials", o.backtrack.max_trials},
        {"grow", o.backtrack.grow},
        {"shrink", o.backtrack.shrink},
        {"accept_last_trial", o.backtrack.accept_last_trial},
        {"increments", o.schedule.increments},
        {"iterations", o.schedule.iterations},
        {"seed", o.seed},
        {"init", channels_json({o.init.rho, o.init.t1, o.init.t2, o.init.omega})},
        {"true_every", o.true_every}}},
      {"blip",
       {{"iterations", c.blip.config.iterations}, {"step", c.blip.config.step},
        {"match", to_string(c.blip.config.match)}, {"t1_ms", c.blip.grid.t1},
        {"t2_ms", c.blip.grid.t2}, {"omega_hz", c.blip.grid.omega}}},
  };
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_config(j, std::filesystem::path(path).parent_path().string());
}

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const char* scale : {"desk", "full"})
    for (const char* m : {"blip", "fine", "c2f", "blip-fine", "blip-c2f"})
      out.push_back(std::string(scale) + "-" + m);
  return out;
}

RunConfig preset(const std::string& name) {
  const auto dash = name.find('-');
  const std::string scale = name.substr(0, dash);
  const std::string method = dash == std::string::npos ? "" : name.substr(dash + 1);
  RunConfig c;
  c.name = name;
  if (scale == "desk") {
    c.phantom.size = 64;
    c.schedule.length = 500;
  } else if (scale == "full") {
    c.phantom.size = 128;
    c.schedule.length = 1000;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  C2FSchedule& s = c.optimizer.schedule;
  if (method == "blip") {
    c.method = Method::kBlip;
  } else if (method == "fine" || method == "blip-fine") {
    c.method = method == "fine" ? Method::kFine : Method::kBlipFine;
    s = {{1}, {1000}};
  } else if (method == "c2f") {
    c.method = Method::kC2F;
    s = {{16, 8, 4, 2, 1}, {320, 320, 160, 100, 850}};
  } else if (method == "blip-c2f") {
    c.method = Method::kBlipC2F;
    s = {{8, 4, 2, 1}, {80, 400, 300, 740}};
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  c.validate();
  return c;
}

}  // namespace msmrf
