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


// Acceptance run: one PASS/FAIL line per criterion with the measured value,
// its pinned tolerance and the wall time against its limit.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "CLI11.hpp"
#include "msmrf/blip.hpp"
#include "msmrf/bloch.hpp"
#include "msmrf/config.hpp"
#include "msmrf/experiment.hpp"
#include "msmrf/io.hpp"
#include "msmrf/mri_operator.hpp"
#include "msmrf/multiscale.hpp"
#include "msmrf/optimizer.hpp"
#include "msmrf/pipeline.hpp"
#include "msmrf/random.hpp"

using namespace msmrf;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* title;
  double limit_s;  // 0: no runtime limit of its own
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

TissueParams random_tissue(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> t1(300.0, 5000.0), frac(0.05, 0.9), w(-50.0, 50.0),
      rho(0.5, 1.2);
  TissueParams u;
  u.rho = rho(rng);
  u.t1 = t1(rng);
  u.t2 = std::max(20.0, frac(rng) * std::min(u.t1, 2000.0));
  u.omega = w(rng);
  return u;
}

double max_state_diff(const MagState& a, const MagState& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

// 1. sum_i lambda_i^k U_i against repeated multiplication.
Outcome eigen_power_oracle() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> angle(0.05, 3.05), tr(3.0, 20.0);
  double worst = 0.0;
  int draws = 0;
  while (draws < 100) {
    const TissueParams u = random_tissue(rng);
    const CoarseStepOperator op = eigen_decompose(angle(rng), u, tr(rng));
    if (op.degenerate) continue;
    ++draws;
    for (int k : {0, 1, 2, 5, 17}) {
      Eigen::Matrix3d direct = Eigen::Matrix3d::Identity();
      for (int i = 0; i < k; ++i) direct = op.a * direct;
      worst = std::max(worst, (spectral_power(op, k) - direct).cwiseAbs().maxCoeff());
    }
  }
  return {worst < 1e-9, fmt("max |err| %.2e over 100 draws x k in {0,1,2,5,17} (tol 1e-9)", worst)};
}

// 2. The multiscale map on S_1(1) is the exact recursion.
Outcome multiscale_collapse() {
  std::mt19937_64 rng(102);
  const FlipSchedule s = synth_flip_schedule(200, 102);
  double worst = 0.0;
  for (int v = 0; v < 20; ++v) {
    const TissueParams u = random_tissue(rng);
    const auto exact = simulate_exact(u, s);
    const auto ms = simulate_multiscale(u, s, TemporalGrid::fine(200));
    for (std::size_t l = 0; l < exact.size(); ++l)
      worst = std::max(worst, max_state_diff(exact[l], ms[l]));
  }
  return {worst < 1e-12, fmt("max |err| %.2e over 20 voxels, L = 200 (tol 1e-12)", worst)};
}

// 3. Constant flip angle: coarse stepping is exact at the grid points.
Outcome constant_schedule() {
  std::mt19937_64 rng(103);
  std::uniform_real_distribution<double> angle(0.05, 3.05);
  const std::size_t L = 200;
  double worst = 0.0, worst_general = 0.0;
  for (int v = 0; v < 10; ++v) {
    const TissueParams u = random_tissue(rng);
    FlipSchedule s;
    s.angles.assign(L, angle(rng));
    const auto exact = simulate_exact(u, s);
    for (int n : {1, 2, 3, 4, 5, 7, 8, 10, 16, 25, 50, 200}) {
      const TemporalGrid g = TemporalGrid::make(n, randi(rng, n), L);
      const auto ms = simulate_multiscale(u, s, g);
      const auto gen = simulate_multiscale_general(u, s, g);
      for (std::size_t j = 0; j < g.size(); ++j) {
        const auto& ref = exact[static_cast<std::size_t>(g.index(j)) - 1];
        worst = std::max(worst, max_state_diff(ms[j], ref));
        worst_general = std::max(worst_general, max_state_diff(gen[j].m, ref));
      }
    }
  }
  const double w = std::max(worst, worst_general);
  return {w < 1e-9, fmt("max |err| %.2e (kernel %.2e, spectral route %.2e), N in {1..200} (tol 1e-9)",
                        w, worst, worst_general)};
}

struct SmallInstance {
  ParameterMaps x;
  AcquisitionData data;
};

SmallInstance small_instance(int size, std::size_t L, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParameterMaps truth(size, size), x(size, size);
  std::normal_distribution<double> g;
  for (std::size_t p = 0; p < truth.pixels(); ++p) {
    const TissueParams u = random_tissue(rng);
    truth.set(p, u);
    x.set(p, {u.rho * (1 + 0.1 * g(rng)), u.t1 * (1 + 0.1 * g(rng)), u.t2 * (1 + 0.1 * g(rng)),
              u.omega + 3 * g(rng)});
  }
  std::bernoulli_distribution on(0.4);
  std::vector<SamplingMask> masks(L);
  for (auto& m : masks) {
    m.rows = m.cols = size;
    m.on.resize(static_cast<std::size_t>(size) * size);
    for (auto& b : m.on) b = on(rng);
  }
  return {x, simulate_acquisition(truth, synth_flip_schedule(L, seed), std::move(masks), 0.01, seed)};
}

// 4. Analytic gradient of F_S against central differences.
Outcome gradient_check() {
  const SmallInstance in = small_instance(4, 16, 104);
  const MriOperator op(in.data);
  double worst = 0.0;
  for (const TemporalGrid& g : {TemporalGrid::fine(16), TemporalGrid::make(4, 2, 16)}) {
    const ObjectiveReport rep = op.gradient(in.x, g);
    for (int c = 0; c < kChannels; ++c) {
      double num = 0.0, den = 0.0;
      for (std::size_t p = 0; p < in.x.pixels(); ++p) {
        const double h = c == kOmega ? 1e-5 : 1e-6 * std::max(1.0, std::abs(in.x[c][p]));
        ParameterMaps xp = in.x, xm = in.x;
        xp[c][p] += h;
        xm[c][p] -= h;
        const double fd = (op.objective(xp, g) - op.objective(xm, g)) / (2.0 * h);
        num += std::pow((*rep.gradient)[c][p] - fd, 2);
        den += fd * fd;
      }
      worst = std::max(worst, std::sqrt(num / den));
    }
  }
  return {worst < 1e-5,
          fmt("max relative error %.2e per channel, 4x4, L = 16, S_1(1) and S_4(2) (tol 1e-5)", worst)};
}

// 5. <J h, w> = <h, J* w>.
Outcome adjoint_pairing() {
  const SmallInstance in = small_instance(4, 12, 105);
  const MriOperator op(in.data);
  std::mt19937_64 rng(105);
  std::normal_distribution<double> g;
  double worst = 0.0;
  for (const TemporalGrid& grid : {TemporalGrid::fine(12), TemporalGrid::make(3, 2, 12)})
    for (int l : grid.indices()) {
      ParameterMaps h(4, 4);
      for (int c = 0; c < kChannels; ++c)
        for (double& v : h[c]) v = g(rng) * (c == kT1 ? 100.0 : c == kT2 ? 10.0 : 1.0);
      std::vector<cplx> w(16);
      for (auto& v : w) v = {g(rng), g(rng)};
      const auto jh = op.jacobian_apply(in.x, grid, l, h);
      const ParameterMaps jw = op.jacobian_adjoint(in.x, grid, l, w);
      double lhs = 0.0, rhs = 0.0;
      for (std::size_t i = 0; i < 16; ++i) lhs += (std::conj(jh[i]) * w[i]).real();
      for (int c = 0; c < kChannels; ++c)
        for (std::size_t p = 0; p < 16; ++p) rhs += h[c][p] * jw[c][p];
      worst = std::max(worst, std::abs(lhs - rhs) / std::abs(lhs));
    }
  return {worst < 1e-10, fmt("max relative mismatch %.2e over every frame of S_1(1), S_3(2) (tol 1e-10)", worst)};
}

// 6. PCDB at N = 1 never increases F.
Outcome monotone_descent() {
  const Phantom ph = make_phantom(16, PhantomKind::kEllipses, 106);
  const FlipSchedule s = synth_flip_schedule(200, 106);
  const AcquisitionData data =
      simulate_acquisition(ph.truth, s, make_epi_masks(16, 16, 0.125, 200, 106), 0.0, 106);
  MriObjective f(data);
  const ParameterMaps x0 = ParameterMaps::constant(16, 16, {0.42, 2000.0, 200.0, 0.0});
  Rng rng = make_stream(106, RngStream::kGridOffsets);
  TraceOptions opts;
  opts.true_every = 0;
  const OptimizeResult r = pcdb(f, x0, StepSizes{}, 1, 200, BacktrackConfig{}, rng, opts);
  double prev = f.true_value(x0);
  const double first = prev;
  std::size_t violations = 0;
  double worst_rise = 0.0;
  for (const TraceRow& row : r.trace.rows) {
    if (row.f_s > prev) {
      ++violations;
      worst_rise = std::max(worst_rise, row.f_s - prev);
    }
    prev = row.f_s;
  }
  const double final_true = f.true_value(r.x);
  const bool ok = violations == 0 && r.trace.iterations == 200 && final_true == prev;
  return {ok, fmt("%zu increases over %zu channel updates (worst %.2e); F %.4e -> %.4e", violations,
                  r.trace.rows.size(), worst_rise, first, final_true)};
}

// 7. Nominal budgets in exact arithmetic.
Outcome budget_identity() {
  const C2FSchedule a{{16, 8, 4, 2, 1}, {320, 320, 160, 100, 850}};
  const C2FSchedule b{{8, 4, 2, 1}, {80, 400, 300, 740}};
  const Rational ba = a.nominal_budget(), bb = b.nominal_budget();
  const bool presets_ok = preset("full-c2f").optimizer.schedule == a &&
                          preset("full-blip-c2f").optimizer.schedule == b;
  return {ba == Rational(1000) && bb == Rational(1000) && presets_ok,
          fmt("sum K_j/N_j = %s and %s (want 1000 exactly)%s", ba.to_string().c_str(),
              bb.to_string().c_str(), presets_ok ? "" : "; preset schedules differ")};
}

// 8 and 9 share one set of desk-scale runs.
struct DeskRuns {
  bool done = false;
  Phantom phantom;
  double period = 100.0;
  std::vector<std::string> names;
  std::vector<Reconstruction> recs;
  double seconds = 0.0;

  const Reconstruction& get(const std::string& n) const {
    return recs[static_cast<std::size_t>(std::find(names.begin(), names.end(), n) - names.begin())];
  }
};

DeskRuns& desk_runs() {
  static DeskRuns runs;
  if (runs.done) return runs;
  const auto t0 = std::chrono::steady_clock::now();
  const Simulation sim = simulate(preset("desk-blip"));
  runs.phantom = sim.phantom;
  runs.period = 1000.0 / sim.data.schedule.tr;
  const Dictionary dict = build_dictionary(DictionaryGrid::coarse(), sim.data.schedule);
  for (const char* name : {"desk-blip", "desk-fine", "desk-c2f", "desk-blip-fine", "desk-blip-c2f"}) {
    RunConfig cfg = preset(name);
    cfg.optimizer.true_every = 0;
    const auto t = std::chrono::steady_clock::now();
    runs.names.push_back(name);
    runs.recs.push_back(reconstruct(cfg, sim.data, &dict));
    std::printf("      %-15s F = %.6e  (%.0f s)\n", name, runs.recs.back().final_true,
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count());
    std::fflush(stdout);
  }
  runs.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  runs.done = true;
  return runs;
}

Outcome fig2_trend() {
  const DeskRuns& r = desk_runs();
  const double fine = r.get("desk-fine").final_true, c2f = r.get("desk-c2f").final_true;
  const double bfine = r.get("desk-blip-fine").final_true, bc2f = r.get("desk-blip-c2f").final_true;
  bool budgets = true;
  for (const char* n : {"desk-fine", "desk-c2f", "desk-blip-fine", "desk-blip-c2f"})
    budgets = budgets && r.get(n).trace->cum_cost() == Rational(1000);
  const bool ok = c2f <= fine && bc2f <= bfine && budgets && r.seconds < 1800.0;
  return {ok, fmt("F: C2F %.4e <= FINE %.4e; BLIP+C2F %.4e <= BLIP+FINE %.4e; budgets %s; %.0f s "
                  "for all desk runs (limit 1800 s)",
                  c2f, fine, bc2f, bfine, budgets ? "1000" : "WRONG", r.seconds)};
}

Outcome table_trend() {
  const DeskRuns& r = desk_runs();
  const MetricsReport b = evaluate(r.get("desk-blip").maps, r.phantom.truth, r.period);
  const MetricsReport bc = evaluate(r.get("desk-blip-c2f").maps, r.phantom.truth, r.period);
  bool ok = true;
  for (int c = 0; c < kChannels; ++c) ok = ok && bc.psnr[c] >= b.psnr[c];
  for (int c = 0; c < 3; ++c) ok = ok && bc.mape[c] <= b.mape[c];
  return {ok, fmt("PSNR dB (rho,T1,T2,omega) BLIP+C2F %.1f %.1f %.1f %.1f vs BLIP %.1f %.1f %.1f %.1f; "
                  "MAPE %% %.3g %.3g %.3g vs %.3g %.3g %.3g",
                  bc.psnr[0], bc.psnr[1], bc.psnr[2], bc.psnr[3], b.psnr[0], b.psnr[1], b.psnr[2],
                  b.psnr[3], bc.mape[0], bc.mape[1], bc.mape[2], b.mape[0], b.mape[1], b.mape[2])};
}

// 10. omega and omega + 1/TR give the same responses.
Outcome periodicity() {
  std::mt19937_64 rng(110);
  const FlipSchedule s = synth_flip_schedule(1000, 110);
  const double period = 1000.0 / s.tr;
  double worst = 0.0;
  for (int v = 0; v < 20; ++v) {
    TissueParams u = random_tissue(rng);
    TissueParams w = u;
    w.omega += period;
    const auto a = simulate_exact(u, s), b = simulate_exact(w, s);
    for (std::size_t l = 0; l < a.size(); ++l) worst = std::max(worst, max_state_diff(a[l], b[l]));
    const TemporalGrid g = TemporalGrid::make(8, 3, 1000);
    const auto ma = simulate_multiscale(u, s, g), mb = simulate_multiscale(w, s, g);
    for (std::size_t j = 0; j < ma.size(); ++j) worst = std::max(worst, max_state_diff(ma[j], mb[j]));
  }
  return {worst < 1e-10,
          fmt("max |m(omega) - m(omega + %.0f Hz)| = %.2e, exact and S_8(3), L = 1000 (tol 1e-10)",
              period, worst)};
}

// 11. Cost with derivatives over the full horizon, N = 16 against N = 1.
Outcome kernel_speedup() {
  BenchConfig bc;
  bc.voxels = 1000;
  bc.length = 1000;
  bc.repeats = 5;
  const BenchReport r = cmd_bench(bc);
  const BenchRow* n1 = nullptr;
  const BenchRow* n16 = nullptr;
  for (const auto& row : r.rows) {
    if (row.increment == 1) n1 = &row;
    if (row.increment == 16) n16 = &row;
  }
  const double L = static_cast<double>(bc.length);
  const double per_pulse_1 = n1->derivatives / L * 1e9, per_pulse_16 = n16->derivatives / L * 1e9;
  const double per_point_1 = n1->derivatives / n1->grid_points * 1e9;
  const double per_point_16 = n16->derivatives / n16->grid_points * 1e9;
  return {per_pulse_16 < per_pulse_1,
          fmt("ns per pulse of the horizon: N=16 %.2f < N=1 %.2f (%.1fx); per computed grid point "
              "%.1f vs %.1f; spread %.0f%%/%.0f%%; monotone %s; 1000 voxels, median of 5",
              per_pulse_16, per_pulse_1, per_pulse_1 / per_pulse_16, per_point_16, per_point_1,
              100 * n16->derivatives_spread, 100 * n1->derivatives_spread,
              r.monotone_speedup() ? "yes" : "no")};
}

// 12. simulate -> recon -> eval twice.
Outcome determinism() {
  std::string tmpl = (std::filesystem::temp_directory_path() / "msmrf_accept_XXXXXX").string();
  if (!mkdtemp(tmpl.data())) return {false, "cannot create a scratch directory"};
  const fs::path root = tmpl;
  RunConfig cfg = preset("desk-blip-c2f");
  cfg.phantom.size = 32;
  cfg.schedule.length = 200;
  cfg.optimizer.schedule = {{8, 4, 2, 1}, {8, 40, 30, 74}};
  cfg.optimizer.true_every = 10;
  for (const char* run : {"a", "b"}) {
    cmd_simulate(cfg, root / run / "data");
    cmd_recon(cfg, root / run / "data", root / run / "rec");
    cmd_eval(root / run / "data", root / run / "rec", root / run / "rec");
  }
  std::size_t files = 0, differ = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    const fs::path other = root / "b" / fs::relative(e.path(), root / "a");
    if (!fs::exists(other) || read_file(e.path()) != read_file(other)) ++differ;
  }
  const bool has_trace = fs::exists(root / "a" / "rec" / "trace.csv");
  fs::remove_all(root);
  return {differ == 0 && files > 10 && has_trace,
          fmt("%zu of %zu artifacts differ (maps, trace.csv, report, metrics); BLIP+C2F 32x32, L = 200",
              differ, files)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"msmrf acceptance checks"};
  std::vector<int> only;
  std::string report_path;
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  app.add_option("--report", report_path, "Also write the result lines to this file");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> all = {
      {1, "eigen-power oracle", 1.0, eigen_power_oracle},
      {2, "multiscale collapse on S_1(1)", 1.0, multiscale_collapse},
      {3, "constant-schedule exactness", 1.0, constant_schedule},
      {4, "gradient vs central differences", 30.0, gradient_check},
      {5, "Jacobian adjoint pairing", 5.0, adjoint_pairing},
      {6, "monotone descent at N = 1", 300.0, monotone_descent},
      {7, "budget identity", 0.0, budget_identity},
      {8, "desk-scale objective trend", 0.0, fig2_trend},
      {9, "desk-scale metric trend", 0.0, table_trend},
      {10, "off-resonance periodicity", 0.0, periodicity},
      {11, "kernel speedup with derivatives", 0.0, kernel_speedup},
      {12, "pipeline determinism", 0.0, determinism},
  };
  const std::set<int> selected(only.begin(), only.end());
  std::FILE* report = report_path.empty() ? nullptr : std::fopen(report_path.c_str(), "w");
  int failed = 0, ran = 0;
  for (const Criterion& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string timing = fmt("%.2f s", sec);
    if (c.limit_s > 0.0) {
      timing += fmt(" (limit %.0f s)", c.limit_s);
      if (sec >= c.limit_s) {
        o.pass = false;
        timing += " OVER";
      }
    }
    if (!o.pass) ++failed;
    const std::string line = fmt("[%s] %2d %-34s ", o.pass ? "PASS" : "FAIL", c.id, c.title) +
                             o.detail + " | " + timing + "\n";
    std::fputs(line.c_str(), stdout);
    std::fflush(stdout);
    if (report) std::fputs(line.c_str(), report);
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  if (report) std::fclose(report);
  return failed == 0 ? 0 : 1;
}
