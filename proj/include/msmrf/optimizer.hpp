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

// Projected coordinate descent with per-channel backtracking (PCDB) on a
// multiscale objective F_{S_N(delta)}, and its coarse-to-fine driver (C2F).
//
// One PCDB iteration draws delta uniformly from {1..N} and then updates the
// channels (rho, T1, T2, omega) in turn, each at the point left by the
// previous channel. A channel step
//
//   x_i' = max(x_i - tau_i g_i, theta_i)
//
// is accepted when
//
//   F_S(x') <= F_S(x) + <g_i, x_i' - x_i> + ||x_i' - x_i||^2 / (2 tau_i),
//
// growing tau_i; otherwise tau_i shrinks and the step is retried.

#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msmrf/error.hpp"
#include "msmrf/maps.hpp"
#include "msmrf/mri_operator.hpp"
#include "msmrf/multiscale.hpp"
#include "msmrf/random.hpp"

namespace msmrf {

// Exact non-negative rational for cost accounting.
class Rational {
 public:
  Rational() = default;
  Rational(std::int64_t num, std::int64_t den = 1);

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }
  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }
  std::string to_string() const;  // "a/b", or "a" when b == 1

  Rational& operator+=(const Rational& o);
  friend Rational operator+(Rational a, const Rational& b) { return a += b; }
  friend Rational operator*(const Rational& a, std::int64_t k);
  bool operator==(const Rational& o) const = default;

 private:
  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

struct StepSizes {
  std::array<double, kChannels> tau{0.1, 1e6, 1e5, 1e-8};

  // Throws ConfigError unless every entry is finite and positive.
  void validate() const;
  bool operator==(const StepSizes&) const = default;
};

inline constexpr double kNoFloor = -std::numeric_limits<double>::infinity();

struct BacktrackConfig {
  int max_trials = 50;
  double grow = 1.2;
  double shrink = 0.75;
  std::array<double, kChannels> floors{0.0, 1.0, 1.0, kNoFloor};
  // On exhaustion keep the last trial instead of reverting the channel.
  bool accept_last_trial = false;

  void validate() const;
  bool operator==(const BacktrackConfig&) const = default;
};

struct C2FSchedule {
  std::vector<int> increments;  // strictly decreasing
  std::vector<int> iterations;

  // Throws ConfigError on length mismatch, non-positive entries or
  // non-decreasing increments.
  void validate() const;
  // sum_j K_j / N_j.
  Rational nominal_budget() const;
  // sum_j K_j floor(L/N_j) / L.
  Rational grid_budget(std::size_t length) const;
  bool operator==(const C2FSchedule&) const = default;
};

bool backtrack_condition(double f_new, double f_old, std::span<const double> grad,
                         std::span<const double> delta, double tau);

void project_channel(std::span<double> values, double floor);

// ---------------------------------------------------------------------------

// The optimizer talks to the objective only through this interface. The
// objective owns the current point and keeps whatever it caches consistent
// with it.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual std::size_t length() const = 0;
  // Moves to grid and point x.
  virtual void reset(const TemporalGrid& grid, const ParameterMaps& x) = 0;
  virtual const ParameterMaps& point() const = 0;
  virtual double value() const = 0;
  // Partial gradient of F_S in one channel at the current point.
  virtual void gradient(int channel, std::vector<double>& out) = 0;
  // F_S at the current point with one channel replaced. Returns +inf for
  // points outside the model domain.
  virtual double try_channel(int channel, std::span<const double> values) = 0;
  // Makes the last trial the current point.
  virtual void accept() = 0;
  // F on the fine grid S_1(1).
  virtual double true_value(const ParameterMaps& x) = 0;
};

// F_S of the imaging model. Responses, phases and k-space residuals of the
// current point are cached: rho and omega trials need no Bloch simulation and
// a gradient after an accepted trial only back-projects stored residuals.
class MriObjective final : public Objective {
 public:
  explicit MriObjective(const AcquisitionData& data);
  ~MriObjective() override;

  std::size_t length() const override;
  void reset(const TemporalGrid& grid, const ParameterMaps& x) override;
  const ParameterMaps& point() const override;
  double value() const override;
  void gradient(int channel, std::vector<double>& out) override;
  double try_channel(int channel, std::span<const double> values) override;
  void accept() override;
  double true_value(const ParameterMaps& x) override;

  // Bloch simulations run so far (diagnostic).
  std::size_t simulations() const;

 private:
  struct State;
  // Response buffers are recycled so repeated simulations reuse memory.
  void recycle(std::shared_ptr<Responses>& r);
  std::shared_ptr<Responses> simulate(const ParameterMaps& x);

  const AcquisitionData& data_;
  MriOperator op_;
  std::unique_ptr<State> cur_, trial_;
  std::unique_ptr<PrecessionKernel> kernel_;
  std::shared_ptr<Responses> spare_;
  std::optional<ParameterMaps> grad_;
  std::size_t simulations_ = 0;
  int trial_channel_ = -1;
};

// ---------------------------------------------------------------------------

struct TraceRow {
  int iter = 0;   // 1-based over the whole run
  int stage = 0;  // 1-based refinement index
  int increment = 1;
  int offset = 1;
  int channel = 0;
  int trials = 0;
  bool accepted = false;
  std::array<double, kChannels> tau{};
  double f_s = 0.0;
  double f_true = std::numeric_limits<double>::quiet_NaN();  // NaN when not evaluated
  Rational cum_cost;  // nominal, 1/N per iteration
};

struct IterationTrace {
  std::vector<TraceRow> rows;
  std::vector<int> stage_starts;  // first iteration of every stage
  Rational grid_cost;             // |S|/L per iteration
  Rational trial_cost;            // |S|/L per backtracking evaluation
  std::size_t trial_evaluations = 0;
  std::size_t iterations = 0;

  Rational cum_cost() const { return rows.empty() ? Rational() : rows.back().cum_cost; }
  double final_true() const;  // last evaluated f_true, NaN if none
};

// One row per (iteration, channel); NaN f_true is written as an empty field.
void write_trace_csv(std::ostream& os, const IterationTrace& trace);

struct TraceOptions {
  // Evaluate F on S_1(1) every this many iterations and at the end of the
  // run; 0 evaluates only at the end.
  int true_every = 1;
};

struct OptimizeResult {
  ParameterMaps x;
  StepSizes tau;
  IterationTrace trace;
};

// Thrown when a committed objective value is not finite. Carries the trace
// up to the failure.
class OptimizationAborted : public NumericalError {
 public:
  OptimizationAborted(const std::string& what, IterationTrace trace)
      : NumericalError(what), trace(std::move(trace)) {}
  IterationTrace trace;
};

OptimizeResult pcdb(Objective& f, const ParameterMaps& x0, const StepSizes& tau0, int increment,
                    int iterations, const BacktrackConfig& cfg, Rng& rng,
                    const TraceOptions& opts = {});

OptimizeResult c2f(Objective& f, const ParameterMaps& x0, const StepSizes& tau0,
                   const C2FSchedule& sched, const BacktrackConfig& cfg, Rng& rng,
                   const TraceOptions& opts = {});

}  // namespace msmrf
