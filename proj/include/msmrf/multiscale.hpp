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

// Temporal multiscale Bloch mapping.
//
// Over an interval of N pulses the flip angle is replaced by its mean, so the
// transition matrix A is constant and
//
//   m_{l+N} = A^N m_l + sum_{k<N} A^k b,   A^k = sum_i lambda_i^k U_i,
//
// with U_i = Z G_i Z^-1 the spectral projectors of A. Because
// A = V_omega (E R) V_omega^T, the eigenvalues come from the omega-free
// matrix B = E R and the eigenvectors are Z = V_omega W.
//
// Two routes are provided:
//  * the general 3x3 route (eigen_decompose, coarse_step,
//    coarse_step_derivatives, simulate_multiscale_general) which follows the
//    construction literally in the lab frame;
//  * PrecessionKernel, the production path. It propagates in the frame
//    rotated by V_omega, where the dynamics reduce to the (y, z) block of B
//    (x is an exact eigen-direction and stays zero), and rotates out at the
//    end. Its omega derivative is M m with M = (dV/domega) V^T.

#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "msmrf/bloch.hpp"

namespace msmrf {

using cplx = std::complex<double>;

// Parameter index for derivative columns, in the order (T1, T2, omega).
enum Param : int { kDT1 = 0, kDT2 = 1, kDOmega = 2 };

// Relative eigenvalue gap below which a decomposition is treated as
// degenerate and the caller falls back to repeated squaring + finite
// differences.
inline constexpr double kDegenerateGap = 1e-9;

// S_N(delta) = {delta, delta+N, ..., delta+(floor(L/N)-1)N}, 1-based.
struct TemporalGrid {
  int increment = 1;
  int offset = 1;
  std::size_t length = 0;

  // Validates 1 <= delta <= N <= L.
  static TemporalGrid make(int increment, int offset, std::size_t length);
  static TemporalGrid fine(std::size_t length) { return make(1, 1, length); }

  std::size_t size() const { return length / static_cast<std::size_t>(increment); }
  // 1-based pulse index of the j-th grid point.
  int index(std::size_t j) const {
    return offset + static_cast<int>(j) * increment;
  }
  std::vector<int> indices() const;
  bool contains(int l) const;
  // Position j of pulse index l in the grid; throws DomainError if absent.
  std::size_t position(int l) const;
  void validate() const;

  bool operator==(const TemporalGrid&) const = default;
};

// One coarse interval: pulses begin+1 .. begin+width (1-based), i.e. the
// 0-based range [begin, begin + width).
struct Interval {
  std::size_t begin;
  int width;
  double mean_angle;
};

// Mean of alpha_{begin+1} .. alpha_{begin+width}.
double mean_angle(const FlipSchedule& sched, std::size_t begin, std::size_t width);

// First interval has width delta (reaching the first grid point), the rest
// width N.
std::vector<Interval> grid_intervals(const FlipSchedule& sched,
                                     const TemporalGrid& grid);

// ---------------------------------------------------------------------------
// General 3x3 route.

struct RealEigen3 {
  // Conjugate pair first (positive imaginary part leading), real root last.
  // Three real roots are sorted in decreasing order.
  std::array<cplx, 3> values;
  Eigen::Matrix3cd vectors;  // unit columns
  double min_relative_gap;
};

// Closed-form characteristic cubic with Newton polishing; eigenvectors from
// the largest cross product of two rows of (M - lambda I).
RealEigen3 eigen_decompose_real3(const Eigen::Matrix3d& m);

struct CoarseStepOperator {
  std::array<cplx, 3> eigenvalues;
  std::array<Eigen::Matrix3cd, 3> projectors;  // U_i, zero when degenerate
  Eigen::Matrix3cd z;                          // V_omega W
  Eigen::Matrix3cd z_inv;
  Eigen::Matrix3d a;  // the mean-angle transition matrix
  Eigen::Vector3d b;
  double interval_mean_angle = 0.0;
  int step_count = 1;
  bool degenerate = false;
  double min_relative_gap = 0.0;
};

struct CoarseStepDerivatives {
  std::array<std::array<cplx, 3>, 3> dlambda;             // [param][i]
  std::array<std::array<Eigen::Matrix3cd, 3>, 3> dprojectors;  // [param][i]
  std::array<Eigen::Vector3d, 3> db;                      // [param]
};

CoarseStepOperator eigen_decompose(double angle, const TissueParams& u,
                                   double tr, int step_count = 1);

// sum_{k=0}^{n-1} lambda^k.
cplx geometric_sum(cplx lambda, int n);
// sum_{k=0}^{n-1} k lambda^{k-1}.
cplx geometric_sum_derivative(cplx lambda, int n);

// Integer power by repeated squaring.
cplx ipow(cplx z, int n);

// The affine coarse map m -> A^N m + sum_{k<N} A^k b. Uses repeated squaring
// when the operator is degenerate. Throws NumericalError if the imaginary
// residue of the spectral evaluation exceeds 1e-6.
MagState coarse_step(const CoarseStepOperator& op, const MagState& m);

// sum_i lambda_i^k U_i (real part).
Eigen::Matrix3d spectral_power(const CoarseStepOperator& op, int k);

// Derivatives of lambda_i, U_i and b with respect to (T1, T2, omega).
// Throws DomainError for a degenerate operator.
CoarseStepDerivatives coarse_step_derivatives(const CoarseStepOperator& op,
                                              const TissueParams& u, double tr);

// d/dchi (A^N), assembled from the spectral derivatives.
Eigen::Matrix3d spectral_power_derivative(const CoarseStepOperator& op,
                                          const CoarseStepDerivatives& d,
                                          Param chi, int k);

// A^n and sum_{k<n} A^k by binary doubling.
template <class Matrix>
std::pair<Matrix, Matrix> power_and_sum(const Matrix& a, int n) {
  if (n == 0) {
    return {Matrix::Identity(a.rows(), a.cols()), Matrix::Zero(a.rows(), a.cols())};
  }
  if (n % 2 == 1) {
    auto [p, s] = power_and_sum(a, n - 1);
    Matrix sum = s + p;
    return {p * a, sum};
  }
  auto [p, s] = power_and_sum(a, n / 2);
  Matrix sum = s + p * s;
  return {p * p, sum};
}

struct StateWithJacobian {
  MagState m;
  Eigen::Matrix3d jacobian;  // columns d/dT1, d/dT2, d/domega
};

// Lab-frame propagation with eigen_decompose / coarse_step_derivatives for
// every interval (including width 1). Reference route for cross-checks.
std::vector<StateWithJacobian> simulate_multiscale_general(
    const TissueParams& u, const FlipSchedule& sched, const TemporalGrid& grid);

// ---------------------------------------------------------------------------
// Production route.

// Magnetisation in the precession frame (x == 0) with its T1/T2 derivatives.
struct PrecessionState {
  double y = 0.0;
  double z = -1.0;
  double dy_t1 = 0.0, dz_t1 = 0.0;
  double dy_t2 = 0.0, dz_t2 = 0.0;
};

// Intervals narrower than this are advanced by repeated single steps with
// the mean angle instead of the spectral formula; both give the same map, and
// below this width the single steps are faster.
inline constexpr int kSpectralMinWidth = 10;

class PrecessionKernel {
 public:
  PrecessionKernel(const FlipSchedule& sched, const TemporalGrid& grid,
                   int spectral_min_width = kSpectralMinWidth);

  const TemporalGrid& grid() const { return grid_; }
  double tr() const { return tr_; }
  std::size_t size() const { return grid_.size(); }

  // Writes the precession-frame transverse component y at every grid point
  // to y[j * stride]; derivative outputs are skipped when null.
  void transverse(double t1, double t2, double* y, double* dy_t1, double* dy_t2,
                  std::ptrdiff_t stride) const;

  void states(double t1, double t2, bool derivatives,
              std::span<PrecessionState> out) const;

  // transverse() for count voxels advanced together; voxel i at grid point j
  // goes to y[j * stride + i]. Short intervals are stepped for all voxels in
  // lockstep.
  void transverse_batch(const double* t1, const double* t2, std::size_t count, double* y,
                        double* dy_t1, double* dy_t2, std::ptrdiff_t stride) const;

  // Running count of intervals on this thread where a decomposition was
  // degenerate (diagnostic only).
  static std::size_t fallback_count();

 private:
  struct Step {
    int width;
    double c, s;  // cos / sin of the interval mean angle
  };
  static constexpr std::size_t kBatchLanes = 32;

  template <bool Deriv, class Sink>
  void propagate(double t1, double t2, Sink&& sink) const;
  template <bool Deriv>
  void propagate_batch(const double* t1, const double* t2, std::size_t count, double* y,
                       double* dy_t1, double* dy_t2, std::ptrdiff_t stride) const;

  TemporalGrid grid_;
  double tr_;
  int spectral_min_width_;
  std::vector<Step> steps_;
};

// Lab-frame multiscale responses at the grid points.
std::vector<MagState> simulate_multiscale(const TissueParams& u,
                                          const FlipSchedule& sched,
                                          const TemporalGrid& grid);

std::vector<StateWithJacobian> simulate_multiscale_with_derivatives(
    const TissueParams& u, const FlipSchedule& sched, const TemporalGrid& grid);

// Rotates a precession-frame state into the lab frame (Jacobian included).
StateWithJacobian to_lab_frame(const PrecessionState& s, double omega, double tr);

}  // namespace msmrf
