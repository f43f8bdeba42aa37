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

#include "msmrf/optimizer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <ostream>
#include <utility>

namespace msmrf {

namespace {

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

bool finite_all(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double a) { return std::isfinite(a); });
}

}  // namespace

// ---------------------------------------------------------------------------
// Rational

Rational::Rational(std::int64_t num, std::int64_t den) {
  if (den <= 0 || num < 0) throw DomainError("Rational: need num >= 0 and den > 0");
  const std::int64_t g = std::gcd(num, den);
  num_ = num / g;
  den_ = den / g;
}

Rational& Rational::operator+=(const Rational& o) {
  const std::int64_t g = std::gcd(den_, o.den_);
  const __int128 den = static_cast<__int128>(den_ / g) * o.den_;
  const __int128 num = static_cast<__int128>(num_) * (o.den_ / g) + static_cast<__int128>(o.num_) * (den_ / g);
  const __int128 lim = std::numeric_limits<std::int64_t>::max();
  __int128 a = num, b = den;
  while (b != 0) {
    const __int128 t = a % b;
    a = b;
    b = t;
  }
  const __int128 n = num / a, d = den / a;
  if (n > lim || d > lim) throw NumericalError("Rational: overflow");
  num_ = static_cast<std::int64_t>(n);
  den_ = static_cast<std::int64_t>(d);
  return *this;
}

Rational operator*(const Rational& a, std::int64_t k) {
  if (k < 0) throw DomainError("Rational: negative factor");
  const __int128 num = static_cast<__int128>(a.num_) * k;
  if (num > std::numeric_limits<std::int64_t>::max()) throw NumericalError("Rational: overflow");
  return Rational(static_cast<std::int64_t>(num), a.den_);
}

std::string Rational::to_string() const {
  if (den_ == 1) return std::to_string(num_);
  return std::to_string(num_) + "/" + std::to_string(den_);
}

// ---------------------------------------------------------------------------
// Configuration

void StepSizes::validate() const {
  for (int c = 0; c < kChannels; ++c)
    if (!std::isfinite(tau[c]) || !(tau[c] > 0.0))
      throw ConfigError("step size for " + std::string(channel_name(c)) + " must be positive");
}

void BacktrackConfig::validate() const {
  if (max_trials < 1) throw ConfigError("backtracking needs at least one trial");
  if (!(grow > 1.0) || !std::isfinite(grow)) throw ConfigError("step growth factor must exceed 1");
  if (!(shrink > 0.0 && shrink < 1.0)) throw ConfigError("step shrink factor must lie in (0, 1)");
  for (double f : floors)
    if (std::isnan(f) || f == std::numeric_limits<double>::infinity())
      throw ConfigError("channel floors must be finite or -inf");
}

void C2FSchedule::validate() const {
  if (increments.empty()) throw ConfigError("coarse-to-fine schedule is empty");
  if (increments.size() != iterations.size())
    throw ConfigError("schedule needs one iteration count per increment");
  for (std::size_t j = 0; j < increments.size(); ++j) {
    if (increments[j] < 1 || iterations[j] < 1)
      throw ConfigError("schedule entries must be positive");
    if (j > 0 && increments[j] >= increments[j - 1])
      throw ConfigError("schedule increments must be strictly decreasing");
  }
}

Rational C2FSchedule::nominal_budget() const {
  validate();
  Rational total;
  for (std::size_t j = 0; j < increments.size(); ++j) total += Rational(iterations[j], increments[j]);
  return total;
}

Rational C2FSchedule::grid_budget(std::size_t length) const {
  validate();
  Rational total;
  const auto L = static_cast<std::int64_t>(length);
  for (std::size_t j = 0; j < increments.size(); ++j)
    total += Rational(static_cast<std::int64_t>(iterations[j]) * (L / increments[j]), L);
  return total;
}

bool backtrack_condition(double f_new, double f_old, std::span<const double> grad,
                         std::span<const double> delta, double tau) {
  if (!(tau > 0.0)) throw DomainError("backtrack_condition: tau must be positive");
  if (grad.size() != delta.size()) throw DomainError("backtrack_condition: size mismatch");
  double inner = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    inner += grad[i] * delta[i];
    sq += delta[i] * delta[i];
  }
  return f_new <= f_old + inner + sq / (2.0 * tau);
}

void project_channel(std::span<double> values, double floor) {
  if (floor == kNoFloor) return;
  for (double& v : values) v = std::max(v, floor);
}

// ---------------------------------------------------------------------------
// MriObjective

struct MriObjective::State {
  ParameterMaps x;
  std::shared_ptr<Responses> r;
  std::shared_ptr<const std::vector<cplx>> q;
  CplxBuffer residual;
  double f = 0.0;
};

MriObjective::MriObjective(const AcquisitionData& data)
    : data_(data), op_(data), cur_(std::make_unique<State>()), trial_(std::make_unique<State>()) {}

MriObjective::~MriObjective() = default;

std::size_t MriObjective::length() const { return data_.length(); }

std::size_t MriObjective::simulations() const { return simulations_; }

void MriObjective::recycle(std::shared_ptr<Responses>& r) {
  if (r && r != cur_->r && r != trial_->r) spare_ = std::move(r);
  r.reset();
}

std::shared_ptr<Responses> MriObjective::simulate(const ParameterMaps& x) {
  std::shared_ptr<Responses> buf = spare_ ? std::move(spare_) : std::make_shared<Responses>();
  spare_.reset();
  simulate_responses(x, *kernel_, true, *buf);
  ++simulations_;
  return buf;
}

void MriObjective::reset(const TemporalGrid& grid, const ParameterMaps& x) {
  op_.check_grid(grid);
  const bool same_grid = kernel_ && kernel_->grid() == grid;
  if (same_grid && cur_->r && cur_->x == x) return;
  if (!same_grid) kernel_ = std::make_unique<PrecessionKernel>(data_.schedule, grid);
  x.validate();
  if (!x.same_shape(ParameterMaps(data_.rows, data_.cols)))
    throw DomainError("parameter maps do not match the acquisition size");
  std::shared_ptr<Responses> old = std::move(cur_->r);
  cur_->r.reset();
  if (trial_->r == old) trial_->r.reset();
  recycle(trial_->r);
  recycle(old);
  cur_->x = x;
  cur_->r = simulate(x);
  cur_->q = std::make_shared<const std::vector<cplx>>(transverse_phase(x, data_.schedule.tr));
  cur_->f = op_.residual(x, *cur_->r, *cur_->q, grid, cur_->residual);
  grad_.reset();
  trial_channel_ = -1;
}

const ParameterMaps& MriObjective::point() const { return cur_->x; }

double MriObjective::value() const {
  if (!cur_->r) throw DomainError("objective used before reset");
  return cur_->f;
}

void MriObjective::gradient(int channel, std::vector<double>& out) {
  if (!cur_->r) throw DomainError("objective used before reset");
  if (!grad_) {
    grad_.emplace();
    op_.backproject(cur_->x, *cur_->r, *cur_->q, kernel_->grid(), cur_->residual, *grad_);
  }
  out = (*grad_)[channel];
}

double MriObjective::try_channel(int channel, std::span<const double> values) {
  if (!cur_->r) throw DomainError("objective used before reset");
  if (channel < 0 || channel >= kChannels || values.size() != cur_->x.pixels())
    throw DomainError("try_channel: bad channel or size");
  trial_channel_ = -1;
  if (!finite_all(values)) return std::numeric_limits<double>::infinity();
  if (channel == kT1 || channel == kT2)
    for (double v : values)
      if (!(v > 0.0)) return std::numeric_limits<double>::infinity();
  if (channel == kRho)
    for (double v : values)
      if (v < 0.0) return std::numeric_limits<double>::infinity();

  State& t = *trial_;
  std::shared_ptr<Responses> prev = std::move(t.r);
  t.r.reset();
  recycle(prev);
  t.x = cur_->x;
  std::copy(values.begin(), values.end(), t.x[channel].begin());
  t.q = cur_->q;
  if (channel == kT1 || channel == kT2) {
    t.r = simulate(t.x);
  } else {
    t.r = cur_->r;
  }
  if (channel == kOmega) {
    t.q = std::make_shared<const std::vector<cplx>>(transverse_phase(t.x, data_.schedule.tr));
  }
  t.f = op_.residual(t.x, *t.r, *t.q, kernel_->grid(), t.residual);
  trial_channel_ = channel;
  return t.f;
}

void MriObjective::accept() {
  if (trial_channel_ < 0) throw DomainError("accept without a valid trial");
  std::swap(cur_, trial_);
  std::shared_ptr<Responses> prev = std::move(trial_->r);
  trial_->r.reset();
  recycle(prev);
  trial_->q.reset();
  grad_.reset();
  trial_channel_ = -1;
}

double MriObjective::true_value(const ParameterMaps& x) {
  ++simulations_;
  return op_.true_objective(x);
}

// ---------------------------------------------------------------------------
// Trace

double IterationTrace::final_true() const {
  for (auto it = rows.rbegin(); it != rows.rend(); ++it)
    if (!std::isnan(it->f_true)) return it->f_true;
  return std::numeric_limits<double>::quiet_NaN();
}

void write_trace_csv(std::ostream& os, const IterationTrace& trace) {
  os << "iter,stage_j,N,delta,channel,trials,accepted,tau_rho,tau_t1,tau_t2,tau_omega,f_S,f_true,"
        "cum_cost\n";
  for (const TraceRow& r : trace.rows) {
    os << r.iter << ',' << r.stage << ',' << r.increment << ',' << r.offset << ','
       << channel_name(r.channel) << ',' << r.trials << ',' << (r.accepted ? 1 : 0);
    for (double t : r.tau) os << ',' << format_double(t);
    os << ',' << format_double(r.f_s) << ',';
    if (!std::isnan(r.f_true)) os << format_double(r.f_true);
    os << ',' << format_double(r.cum_cost.to_double()) << '\n';
  }
}

// ---------------------------------------------------------------------------
// PCDB / C2F

namespace {

struct StageSpec {
  int stage;
  int increment;
  int iterations;
  bool last;
};

void run_stage(Objective& f, ParameterMaps& x, StepSizes& tau, const StageSpec& spec,
               const BacktrackConfig& cfg, Rng& rng, const TraceOptions& opts,
               IterationTrace& trace) {
  const std::size_t L = f.length();
  const auto Ls = static_cast<std::int64_t>(L);
  const std::size_t n = x.pixels();
  std::vector<double> g, trial(n), delta(n);
  trace.stage_starts.push_back(static_cast<int>(trace.iterations) + 1);

  for (int k = 1; k <= spec.iterations; ++k) {
    const int offset = randi(rng, spec.increment);
    const TemporalGrid grid = TemporalGrid::make(spec.increment, offset, L);
    const Rational eval_cost(static_cast<std::int64_t>(grid.size()), Ls);
    f.reset(grid, x);
    double f_old = f.value();
    const int iter = static_cast<int>(++trace.iterations);
    if (!std::isfinite(f_old))
      throw OptimizationAborted("objective is not finite at iteration " + std::to_string(iter),
                                trace);
    const Rational cum = trace.cum_cost() + Rational(1, spec.increment);
    trace.grid_cost += eval_cost;

    for (int c = 0; c < kChannels; ++c) {
      f.gradient(c, g);
      const double tau_start = tau.tau[c];
      auto& xc = x[c];
      int trials = 0;
      bool accepted = false;
      double f_last = std::numeric_limits<double>::quiet_NaN();
      for (int t = 0; t < cfg.max_trials; ++t) {
        for (std::size_t p = 0; p < n; ++p) trial[p] = xc[p] - tau.tau[c] * g[p];
        project_channel(trial, cfg.floors[c]);
        for (std::size_t p = 0; p < n; ++p) delta[p] = trial[p] - xc[p];
        f_last = f.try_channel(c, trial);
        ++trials;
        ++trace.trial_evaluations;
        trace.trial_cost += eval_cost;
        if (backtrack_condition(f_last, f_old, g, delta, tau.tau[c])) {
          f.accept();
          xc = trial;
          f_old = f_last;
          tau.tau[c] *= cfg.grow;
          accepted = true;
          break;
        }
        tau.tau[c] *= cfg.shrink;
      }
      if (!accepted) {
        tau.tau[c] = tau_start;
        if (cfg.accept_last_trial && std::isfinite(f_last)) {
          f.accept();
          xc = trial;
          f_old = f_last;
        }
      }
      TraceRow row;
      row.iter = iter;
      row.stage = spec.stage;
      row.increment = spec.increment;
      row.offset = offset;
      row.channel = c;
      row.trials = trials;
      row.accepted = accepted;
      row.tau = tau.tau;
      row.f_s = f_old;
      row.cum_cost = cum;
      trace.rows.push_back(row);
    }
    if (!std::isfinite(f_old))
      throw OptimizationAborted("objective is not finite at iteration " + std::to_string(iter),
                                trace);
    const bool final_iter = spec.last && k == spec.iterations;
    if (final_iter || (opts.true_every > 0 && iter % opts.true_every == 0)) {
      const double ft = f.true_value(x);
      if (!std::isfinite(ft))
        throw OptimizationAborted("true objective is not finite at iteration " +
                                      std::to_string(iter),
                                  trace);
      trace.rows.back().f_true = ft;
    }
  }
}

void prepare(const ParameterMaps& x0, const StepSizes& tau0, const BacktrackConfig& cfg,
             ParameterMaps& x) {
  tau0.validate();
  cfg.validate();
  x0.validate();
  x = x0;
  for (int c = 0; c < kChannels; ++c) project_channel(x[c], cfg.floors[c]);
}

}  // namespace

OptimizeResult pcdb(Objective& f, const ParameterMaps& x0, const StepSizes& tau0, int increment,
                    int iterations, const BacktrackConfig& cfg, Rng& rng,
                    const TraceOptions& opts) {
  if (iterations < 1) throw ConfigError("pcdb needs at least one iteration");
  if (increment < 1 || static_cast<std::size_t>(increment) > f.length())
    throw ConfigError("grid increment must lie in [1, L]");
  OptimizeResult res;
  prepare(x0, tau0, cfg, res.x);
  res.tau = tau0;
  run_stage(f, res.x, res.tau, {1, increment, iterations, true}, cfg, rng, opts, res.trace);
  return res;
}

OptimizeResult c2f(Objective& f, const ParameterMaps& x0, const StepSizes& tau0,
                   const C2FSchedule& sched, const BacktrackConfig& cfg, Rng& rng,
                   const TraceOptions& opts) {
  sched.validate();
  if (static_cast<std::size_t>(sched.increments.front()) > f.length())
    throw ConfigError("grid increment must lie in [1, L]");
  OptimizeResult res;
  prepare(x0, tau0, cfg, res.x);
  res.tau = tau0;
  const int J = static_cast<int>(sched.increments.size());
  for (int j = 0; j < J; ++j)
    run_stage(f, res.x, res.tau, {j + 1, sched.increments[j], sched.iterations[j], j + 1 == J},
              cfg, rng, opts, res.trace);
  return res;
}

}  // namespace msmrf
