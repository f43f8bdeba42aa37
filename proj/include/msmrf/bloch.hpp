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

// Fine-scale IR-bSSFP Bloch recursion.
//
// Conventions (shared by simulation and reconstruction):
//   R_alpha : rotation about x,  [[1,0,0],[0,c,s],[0,-s,c]]
//   V_omega : rotation about z by phi = 2*pi*omega*TR (TR in seconds)
//   E       : diag(e1, e1, e2), e1 = exp(-TR/T2), e2 = exp(-TR/T1)
//   A_l     = E V R_{alpha_l} V^T,   b = (1 - e2) (0,0,1)
//   m_0     = (0,0,-1)
// Units: T1, T2, TR in milliseconds; omega in Hz.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace msmrf {

using MagState = Eigen::Vector3d;

struct TissueParams {
  double rho = 1.0;
  double t1 = 1000.0;    // ms
  double t2 = 100.0;     // ms
  double omega = 0.0;    // Hz

  // Throws DomainError unless t1 > 0, t2 > 0, rho >= 0 and all finite.
  void validate() const;
  bool operator==(const TissueParams&) const = default;
};

struct FlipSchedule {
  std::vector<double> angles;  // radians, one per excitation
  double tr = 10.0;            // ms

  std::size_t length() const { return angles.size(); }
  void validate() const;
};

struct RelaxationFactors {
  double e1;  // transverse, exp(-TR/T2)
  double e2;  // longitudinal, exp(-TR/T1)
};

struct Transition {
  Eigen::Matrix3d a;
  Eigen::Vector3d b;
};

inline const MagState kInitialState{0.0, 0.0, -1.0};

RelaxationFactors relaxation_factors(double t1, double t2, double tr);

// phi = 2*pi*omega*TR with TR converted to seconds.
double precession_angle(double omega, double tr);

// Off-resonance period 1/TR in Hz (100 Hz for TR = 10 ms).
double omega_period(double tr);

Eigen::Matrix3d flip_rotation(double angle);
Eigen::Matrix3d precession_rotation(double omega, double tr);

Transition transition_matrix(double angle, double omega, double t1, double t2,
                             double tr);

inline MagState bloch_step(const MagState& m, const Eigen::Matrix3d& a,
                           const Eigen::Vector3d& b) {
  return a * m + b;
}

// Returns (m_1, ..., m_L).
std::vector<MagState> simulate_exact(const TissueParams& u,
                                     const FlipSchedule& sched);

// Smooth synthetic MRF-style schedule: 10 deg + 50 deg |sin(pi l / 250)|
// plus a seeded low-frequency perturbation bounded by 5 deg.
FlipSchedule synth_flip_schedule(std::size_t length, std::uint64_t seed,
                                 double tr = 10.0);

}  // namespace msmrf
