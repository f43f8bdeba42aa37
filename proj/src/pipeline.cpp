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


#include "msmrf/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>

#include "msmrf/error.hpp"
#include "msmrf/io.hpp"
#include "msmrf/multiscale.hpp"

namespace msmrf {

using nlohmann::json;

namespace {

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create directory " + dir.string());
}

json finite_or_string(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

json channel_object(const std::array<double, kChannels>& v) {
  json j = json::object();
  for (int c = 0; c < kChannels; ++c) j[std::string(channel_name(c))] = finite_or_string(v[c]);
  return j;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double spread(const std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return (*hi - *lo) / median(v);
}

template <class F>
std::vector<double> time_repeats(int repeats, std::size_t voxels, F&& body) {
  body();  // warm-up
  std::vector<double> out;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    body();
    const auto t1 = std::chrono::steady_clock::now();
    out.push_back(std::chrono::duration<double>(t1 - t0).count() / static_cast<double>(voxels));
  }
  return out;
}

double omega_period_for(const fs::path& truth_dir, const fs::path& recon_dir) {
  if (fs::exists(truth_dir / "schedule.json"))
    return omega_period(read_json(truth_dir / "schedule.json").at("tr_ms").get<double>());
  if (fs::exists(recon_dir / "config.json"))
    return omega_period(read_json(recon_dir / "config.json").at("schedule").at("tr_ms").get<double>());
  return omega_period(ScheduleSpec{}.tr);
}

}  // namespace

FlipSchedule make_schedule(const ScheduleSpec& spec) {
  if (!spec.csv.empty()) {
    FlipSchedule s = read_schedule_csv(spec.csv, spec.tr);
    if (s.length() != spec.length)
      throw ConfigError("schedule.length: " + std::to_string(spec.length) + " but " + spec.csv +
                        " has " + std::to_string(s.length()) + " angles");
    return s;
  }
  FlipSchedule s = synth_flip_schedule(spec.length, spec.seed, spec.tr);
  for (double& a : s.angles) {
    const double deg = a * 180.0 / std::numbers::pi;
    a = deg * std::numbers::pi / 180.0;
  }
  return s;
}

Simulation simulate(const RunConfig& cfg) {
  cfg.validate();
  Simulation sim;
  sim.phantom = make_phantom(cfg.phantom.size, cfg.phantom.kind, cfg.phantom.seed);
  const int n = cfg.phantom.size;
  const FlipSchedule sched = make_schedule(cfg.schedule);
  sim.data = simulate_acquisition(
      sim.phantom.truth, sched,
      make_epi_masks(n, n, cfg.acquisition.rate, sched.length(), cfg.acquisition.mask_seed),
      cfg.acquisition.noise_sigma, cfg.acquisition.noise_seed);
  return sim;
}

Reconstruction reconstruct(const RunConfig& cfg, const AcquisitionData& data, const Dictionary* dict) {
  cfg.validate();
  data.validate();
  Reconstruction out;
  ParameterMaps x0;
  std::optional<Dictionary> built;
  if (uses_blip(cfg.method)) {
    if (!dict) {
      built = build_dictionary(cfg.blip.grid, data.schedule);
      dict = &*built;
    }
    out.blip = blip_reconstruct(data, *dict, cfg.blip.config);
    x0 = out.blip->maps;
  } else {
    x0 = ParameterMaps::constant(data.rows, data.cols, cfg.optimizer.init);
  }

  MriObjective f(data);
  if (!uses_descent(cfg.method)) {
    out.maps = std::move(x0);
    out.final_true = f.true_value(out.maps);
    return out;
  }
  const OptimizerSpec& o = cfg.optimizer;
  Rng rng = make_stream(o.seed, RngStream::kGridOffsets);
  OptimizeResult res = c2f(f, x0, o.tau0, o.schedule, o.backtrack, rng, {o.true_every});
  out.maps = std::move(res.x);
  out.tau = res.tau;
  out.final_true = res.trace.final_true();
  out.trace = std::move(res.trace);
  return out;
}

void cmd_simulate(const RunConfig& cfg, const fs::path& dir) {
  const Simulation sim = simulate(cfg);
  make_dir(dir);
  std::vector<std::string> files = save_maps(dir, "maps", sim.phantom.truth, true);
  for (const auto& f : save_schedule(dir, "schedule", sim.data.schedule)) files.push_back(f);
  for (const auto& f : save_acquisition(dir, sim.data)) files.push_back(f);
  write_json(dir / "config.json", to_json(cfg));
  files.push_back("config.json");
  write_manifest(dir, files, {{"kind", "acquisition"}, {"foreground_pixels", sim.phantom.foreground_count()}});
}

Reconstruction cmd_recon(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out_dir) {
  verify_manifest(data_dir);
  const std::string data_manifest = sha256_hex(read_file(data_dir / "manifest.json"));
  const FlipSchedule sched = load_schedule(data_dir, "schedule");
  const AcquisitionData data = load_acquisition(data_dir, sched);
  make_dir(out_dir);

  Reconstruction rec;
  try {
    rec = reconstruct(cfg, data);
  } catch (const OptimizationAborted& e) {
    std::ostringstream os;
    write_trace_csv(os, e.trace);
    atomic_write(out_dir / "trace.partial.csv", os.str());
    throw;
  }

  std::vector<std::string> files = save_maps(out_dir, "maps", rec.maps, true);
  json report = {{"name", cfg.name},
                 {"method", to_string(cfg.method)},
                 {"data_manifest_sha256", data_manifest},
                 {"final_true_objective", finite_or_string(rec.final_true)}};
  if (rec.blip) {
    if (uses_descent(cfg.method))
      for (const auto& f : save_maps(out_dir, "blip", rec.blip->maps)) files.push_back(f);
    report["blip"] = {{"iterations", cfg.blip.config.iterations},
                      {"step", cfg.blip.config.step},
                      {"match", to_string(cfg.blip.config.match)},
                      {"atoms", cfg.blip.grid.size()},
                      {"residuals", rec.blip->residuals}};
  }
  if (rec.trace) {
    std::ostringstream os;
    write_trace_csv(os, *rec.trace);
    atomic_write(out_dir / "trace.csv", os.str());
    files.push_back("trace.csv");
    const IterationTrace& t = *rec.trace;
    report["optimizer"] = {
        {"increments", cfg.optimizer.schedule.increments},
        {"iterations", cfg.optimizer.schedule.iterations},
        {"stage_starts", t.stage_starts},
        {"cum_cost", t.cum_cost().to_string()},
        {"grid_cost", t.grid_cost.to_string()},
        {"trial_cost", t.trial_cost.to_string()},
        {"trial_evaluations", t.trial_evaluations},
        {"final_f_s", finite_or_string(t.rows.empty() ? NAN : t.rows.back().f_s)},
        {"final_tau", channel_object(rec.tau.tau)},
        {"floors", channel_object(cfg.optimizer.backtrack.floors)},
        {"units", "rho a.u., t1 ms, t2 ms, omega Hz"}};
  }
  write_json(out_dir / "report.json", report);
  write_json(out_dir / "config.json", to_json(cfg));
  files.push_back("report.json");
  files.push_back("config.json");
  write_manifest(out_dir, files, {{"kind", "reconstruction"}});
  return rec;
}

json metrics_json(const MetricsReport& m) {
  json mape = json::object();
  for (int c = 0; c < 3; ++c) mape[std::string(channel_name(c))] = finite_or_string(m.mape[c]);
  return {{"psnr_db", channel_object(m.psnr)},
          {"psnr_all_pixels_db", channel_object(m.psnr_all)},
          {"mape_percent", mape},
          {"peak", channel_object(m.peak)},
          {"foreground_pixels", m.foreground_pixels},
          {"omega_period_hz", m.omega_period},
          {"conventions",
           "PSNR peak = max |truth| over the foreground; psnr_db and MAPE over the foreground "
           "(truth rho > 0); psnr_all_pixels_db over every pixel; omega error wrapped to the "
           "period"}};
}

std::string metrics_table(const MetricsReport& m) {
  auto cell = [](double v) {
    char buf[32];
    if (std::isinf(v)) return std::string(v > 0 ? "inf" : "-inf");
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  auto row = [](const std::string& label, const std::array<std::string, kChannels>& cells) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-12s %10s %10s %10s %10s\n", label.c_str(), cells[0].c_str(),
                  cells[1].c_str(), cells[2].c_str(), cells[3].c_str());
    return std::string(buf);
  };
  std::string out = row("", {"rho", "T1", "T2", "omega"});
  out += row("PSNR (dB)", {cell(m.psnr[0]), cell(m.psnr[1]), cell(m.psnr[2]), cell(m.psnr[3])});
  out += row("MAPE (%)", {cell(m.mape[0]), cell(m.mape[1]), cell(m.mape[2]), "-"});
  out += "foreground pixels: " + std::to_string(m.foreground_pixels) +
         ", omega wrapped with period " + format_double(m.omega_period) +
         " Hz, PSNR peak = max |truth| over the foreground\n";
  return out;
}

MetricsReport cmd_eval(const fs::path& truth_dir, const fs::path& recon_dir, const fs::path& out_dir) {
  const ParameterMaps truth = load_maps(truth_dir, "maps");
  const ParameterMaps recon = load_maps(recon_dir, "maps");
  if (!truth.same_shape(recon))
    throw DataIntegrityError("eval: truth is " + std::to_string(truth.rows) + "x" +
                             std::to_string(truth.cols) + ", reconstruction is " +
                             std::to_string(recon.rows) + "x" + std::to_string(recon.cols));
  const MetricsReport m = evaluate(recon, truth, omega_period_for(truth_dir, recon_dir));
  make_dir(out_dir);
  write_json(out_dir / "metrics.json", metrics_json(m));
  atomic_write(out_dir / "metrics.txt", metrics_table(m));
  return m;
}

double BenchReport::speedup(std::size_t row) const {
  std::size_t base = 0;
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i].increment == 1) base = i;
  return rows[base].derivatives / rows[row].derivatives;
}

bool BenchReport::monotone_speedup() const {
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].increment > rows[i - 1].increment && speedup(i) < speedup(i - 1)) return false;
  return true;
}

BenchReport cmd_bench(const BenchConfig& cfg) {
  if (cfg.voxels < 1 || cfg.length < 1 || cfg.repeats < 1 || cfg.increments.empty())
    throw ConfigError("bench: voxels, length, repeats and increments must be positive");
  for (int n : cfg.increments)
    if (n < 1 || n > static_cast<int>(cfg.length)) throw ConfigError("bench: increment out of range");

  BenchReport rep;
  rep.config = cfg;
  const FlipSchedule sched = synth_flip_schedule(cfg.length, cfg.seed);
  Rng rng = make_stream(cfg.seed, RngStream::kPhantom);
  std::uniform_real_distribution<double> t1(300.0, 5000.0), frac(0.05, 0.5), w(-50.0, 50.0);
  std::vector<TissueParams> vox(cfg.voxels);
  for (auto& u : vox) {
    u.t1 = t1(rng);
    u.t2 = std::clamp(frac(rng) * u.t1, 30.0, 600.0);
    u.omega = w(rng);
  }

  double sink = 0.0;
  const auto exact = time_repeats(cfg.repeats, cfg.voxels, [&] {
    for (const auto& u : vox) sink += simulate_exact(u, sched).back().x();
  });
  rep.exact = median(exact);
  rep.exact_spread = spread(exact);

  for (int n : cfg.increments) {
    const PrecessionKernel kernel(sched, TemporalGrid::make(n, 1, cfg.length));
    std::vector<double> y(kernel.size()), d1(kernel.size()), d2(kernel.size());
    BenchRow row;
    row.increment = n;
    row.grid_points = kernel.size();
    const auto values = time_repeats(cfg.repeats, cfg.voxels, [&] {
      for (const auto& u : vox) {
        kernel.transverse(u.t1, u.t2, y.data(), nullptr, nullptr, 1);
        sink += y.back();
      }
    });
    const auto derivs = time_repeats(cfg.repeats, cfg.voxels, [&] {
      for (const auto& u : vox) {
        kernel.transverse(u.t1, u.t2, y.data(), d1.data(), d2.data(), 1);
        sink += d1.back();
      }
    });
    row.values = median(values);
    row.values_spread = spread(values);
    row.derivatives = median(derivs);
    row.derivatives_spread = spread(derivs);
    rep.rows.push_back(row);
  }
  if (!std::isfinite(sink)) throw NumericalError("bench: non-finite responses");
  return rep;
}

json bench_json(const BenchReport& r) {
  json rows = json::array();
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const BenchRow& b = r.rows[i];
    rows.push_back({{"N", b.increment},
                    {"grid_points", b.grid_points},
                    {"values_s_per_voxel", b.values},
                    {"derivatives_s_per_voxel", b.derivatives},
                    {"derivatives_s_per_grid_point", b.derivatives / static_cast<double>(b.grid_points)},
                    {"derivatives_s_per_pulse", b.derivatives / static_cast<double>(r.config.length)},
                    {"values_spread", b.values_spread},
                    {"derivatives_spread", b.derivatives_spread},
                    {"speedup_vs_exact_values", r.exact / b.values},
                    {"speedup_derivatives_vs_n1", r.speedup(i)}});
  }
  return {{"voxels", r.config.voxels},
          {"length", r.config.length},
          {"repeats", r.config.repeats},
          {"statistic", "median after one warm-up pass, single thread"},
          {"exact_s_per_voxel", r.exact},
          {"exact_spread", r.exact_spread},
          {"rows", rows},
          {"monotone_speedup", r.monotone_speedup()}};
}

std::string bench_table(const BenchReport& r) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "exact simulator: %.3f us/voxel (L = %zu, %zu voxels)\n",
                r.exact * 1e6, r.config.length, r.config.voxels);
  std::string out = buf;
  std::snprintf(buf, sizeof buf, "%4s %8s %14s %14s %16s %12s %12s\n", "N", "points", "values us/vox",
                "deriv us/vox", "deriv ns/point", "vs exact", "deriv vs N=1");
  out += buf;
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const BenchRow& b = r.rows[i];
    std::snprintf(buf, sizeof buf, "%4d %8zu %14.3f %14.3f %16.2f %11.2fx %11.2fx\n", b.increment,
                  b.grid_points, b.values * 1e6, b.derivatives * 1e6,
                  b.derivatives / static_cast<double>(b.grid_points) * 1e9, r.exact / b.values,
                  r.speedup(i));
    out += buf;
  }
  out += std::string("speedup monotone in N: ") + (r.monotone_speedup() ? "yes" : "no") + "\n";
  return out;
}

}  // namespace msmrf
