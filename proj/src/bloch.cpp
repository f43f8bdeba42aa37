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

#include "msmrf/bloch.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "msmrf/error.hpp"
#include "msmrf/random.hpp"

namespace msmrf {

void TissueParams::validate() const {
  if (!std::isfinite(rho) || !std::isfinite(t1) || !std::isfinite(t2) ||
      !std::isfinite(omega))
    throw DomainError("tissue parameters must be finite");
  if (t1 <= 0.0 || t2 <= 0.0)
    throw DomainError("T1 and T2 must be positive");
  if (rho < 0.0) throw DomainError("rho must be non-negative");
}

void FlipSchedule::validate() const {
  if (angles.empty()) throw DomainError("flip schedule is empty");
  if (!(tr > 0.0) || !std::isfinite(tr))
    throw DomainError("TR must be positive");
  for (double a : angles)
    if (!std::isfinite(a)) throw DomainError("flip angle is not finite");
}

RelaxationFactors relaxation_factors(double t1, double t2, double tr) {
  if (!(t1 > 0.0) || !(t2 > 0.0) || !(tr > 0.0))
    throw DomainError("relaxation_factors: T1, T2 and TR must be positive");
  return {std::exp(-tr / t2), std::exp(-tr / t1)};
}

double precession_angle(double omega, double tr) {
  return 2.0 * std::numbers::pi * omega * tr * 1e-3;
}

double omega_period(double tr) { return 1e3 / tr; }

Eigen::Matrix3d flip_rotation(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Eigen::Matrix3d r;
  r << 1, 0, 0,
       0, c, s,
       0, -s, c;
  return r;
}

Eigen::Matrix3d precession_rotation(double omega, double tr) {
  const double phi = precession_angle(omega, tr);
  const double c = std::cos(phi), s = std::sin(phi);
  Eigen::Matrix3d v;
  v << c, -s, 0,
       s, c, 0,
       0, 0, 1;
  return v;
}

Transition transition_matrix(double angle, double omega, double t1, double t2,
                             double tr) {
  const auto [e1, e2] = relaxation_factors(t1, t2, tr);
  const Eigen::Matrix3d v = precession_rotation(omega, tr);
  const Eigen::Vector3d e(e1, e1, e2);
  Transition t;
  t.a = e.asDiagonal() * v * flip_rotation(angle) * v.transpose();
  t.b = Eigen::Vector3d(0.0, 0.0, 1.0 - e2);
  return t;
}

std::vector<MagState> simulate_exact(const TissueParams& u,
                                     const FlipSchedule& sched) {
  u.validate();
  sched.validate();
  std::vector<MagState> out;
  out.reserve(sched.length());
  MagState m = kInitialState;
  for (double alpha : sched.angles) {
    const Transition t = transition_matrix(alpha, u.omega, u.t1, u.t2, sched.tr);
    m = bloch_step(m, t.a, t.b);
    out.push_back(m);
  }
  return out;
}

FlipSchedule synth_flip_schedule(std::size_t length, std::uint64_t seed,
                                 double tr) {
  if (length == 0) throw DomainError("synth_flip_schedule: length must be >= 1");
  constexpr double kDeg = std::numbers::pi / 180.0;
  constexpr int kModes = 3;

  // Amplitudes sum to at most 5 deg, frequencies stay well below the lobe rate.
  Rng rng = make_stream(seed, RngStream::kPhantom);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double amp[kModes], freq[kModes], phase[kModes];
  double total = 0.0;
  for (int k = 0; k < kModes; ++k) {
    amp[k] = unit(rng);
    total += amp[k];
    freq[k] = 0.5 + 2.5 * unit(rng);  // cycles per 1000 pulses
    phase[k] = 2.0 * std::numbers::pi * unit(rng);
  }
  for (int k = 0; k < kModes; ++k) amp[k] *= 5.0 / total;

  FlipSchedule sched;
  sched.tr = tr;
  sched.angles.resize(length);
  for (std::size_t i = 0; i < length; ++i) {
    const double l = static_cast<double>(i + 1);
    double deg = 10.0 + 50.0 * std::abs(std::sin(std::numbers::pi * l / 250.0));
    for (int k = 0; k < kModes; ++k)
      deg += amp[k] * std::sin(2.0 * std::numbers::pi * freq[k] * l / 1000.0 + phase[k]);
    sched.angles[i] = deg * kDeg;
  }
  return sched;
}

}  // namespace msmrf
