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

#include "msmrf/multiscale.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <type_traits>

#include <Eigen/Dense>

#include "msmrf/error.hpp"

namespace msmrf {

namespace {

// Below this distance from 1 the closed-form geometric sums lose too many
// digits to cancellation; they are summed directly instead.
constexpr double kNearUnit = 1e-4;

constexpr double kFdRelStep = 1e-6;

thread_local std::size_t t_fallbacks = 0;

double dphi_domega(double tr) { return 2.0 * std::numbers::pi * tr * 1e-3; }

Eigen::Matrix3d precession_generator(double tr) {
  Eigen::Matrix3d g = Eigen::Matrix3d::Zero();
  g(0, 1) = -1.0;
  g(1, 0) = 1.0;
  return dphi_domega(tr) * g;
}

Eigen::Vector3cd cross(const Eigen::Vector3cd& a, const Eigen::Vector3cd& b) {
  return {a(1) * b(2) - a(2) * b(1), a(2) * b(0) - a(0) * b(2),
          a(0) * b(1) - a(1) * b(0)};
}

// Null vector of (m - lambda I) from the best-conditioned pair of rows.
Eigen::Vector3cd null_vector(const Eigen::Matrix3d& m, cplx lambda) {
  Eigen::Matrix3cd s = m.cast<cplx>();
  s.diagonal().array() -= lambda;
  const Eigen::Vector3cd r0 = s.row(0).transpose(), r1 = s.row(1).transpose(),
                         r2 = s.row(2).transpose();
  const std::array<Eigen::Vector3cd, 3> c{cross(r0, r1), cross(r0, r2), cross(r1, r2)};
  std::size_t best = 0;
  for (std::size_t k = 1; k < 3; ++k)
    if (c[k].squaredNorm() > c[best].squaredNorm()) best = k;
  const double norm = c[best].norm();
  if (!(norm > 0.0)) return Eigen::Vector3cd::Zero();
  return c[best] / norm;
}

}  // namespace

// ---------------------------------------------------------------------------
// Grids.

TemporalGrid TemporalGrid::make(int increment, int offset, std::size_t length) {
  TemporalGrid g{increment, offset, length};
  g.validate();
  return g;
}

void TemporalGrid::validate() const {
  if (increment < 1) throw DomainError("grid increment must be >= 1");
  if (offset < 1 || offset > increment)
    throw DomainError("grid offset must lie in {1..N}, got " + std::to_string(offset));
  if (static_cast<std::size_t>(increment) > length)
    throw DomainError("grid increment " + std::to_string(increment) +
                      " exceeds sequence length " + std::to_string(length));
}

std::vector<int> TemporalGrid::indices() const {
  std::vector<int> out(size());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = index(j);
  return out;
}

bool TemporalGrid::contains(int l) const {
  if (l < offset) return false;
  const int d = l - offset;
  return d % increment == 0 && static_cast<std::size_t>(d / increment) < size();
}

std::size_t TemporalGrid::position(int l) const {
  if (!contains(l))
    throw DomainError("frame " + std::to_string(l) + " is not on the temporal grid");
  return static_cast<std::size_t>((l - offset) / increment);
}

double mean_angle(const FlipSchedule& sched, std::size_t begin, std::size_t width) {
  if (width == 0) throw DomainError("mean_angle: empty interval");
  if (begin + width > sched.length())
    throw DomainError("mean_angle: interval exceeds the schedule");
  double sum = 0.0;
  for (std::size_t i = begin; i < begin + width; ++i) sum += sched.angles[i];
  return sum / static_cast<double>(width);
}

std::vector<Interval> grid_intervals(const FlipSchedule& sched,
                                     const TemporalGrid& grid) {
  grid.validate();
  if (grid.length != sched.length())
    throw DomainError("grid length does not match the schedule length");
  std::vector<Interval> out;
  out.reserve(grid.size());
  std::size_t begin = 0;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const int width = j == 0 ? grid.offset : grid.increment;
    out.push_back({begin, width, mean_angle(sched, begin, width)});
    begin += static_cast<std::size_t>(width);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scalar helpers.

cplx ipow(cplx z, int n) {
  cplx result(1.0, 0.0);
  while (n > 0) {
    if (n & 1) result *= z;
    z *= z;
    n >>= 1;
  }
  return result;
}

cplx geometric_sum(cplx lambda, int n) {
  if (n < 1) throw DomainError("geometric_sum: n must be >= 1");
  const cplx d = 1.0 - lambda;
  if (std::abs(d) > kNearUnit) return (1.0 - ipow(lambda, n)) / d;
  cplx sum = 0.0, p = 1.0;
  for (int k = 0; k < n; ++k) {
    sum += p;
    p *= lambda;
  }
  return sum;
}

cplx geometric_sum_derivative(cplx lambda, int n) {
  if (n < 1) throw DomainError("geometric_sum_derivative: n must be >= 1");
  const cplx d = 1.0 - lambda;
  if (std::abs(d) > kNearUnit) {
    const cplx pn1 = ipow(lambda, n - 1);
    const double nn = n;
    return ((nn - 1.0) * pn1 * lambda - nn * pn1 + 1.0) / (d * d);
  }
  cplx sum = 0.0, p = 1.0;
  for (int k = 1; k < n; ++k) {
    sum += static_cast<double>(k) * p;
    p *= lambda;
  }
  return sum;
}

// ---------------------------------------------------------------------------
// General 3x3 route.

RealEigen3 eigen_decompose_real3(const Eigen::Matrix3d& m) {
  const double trace = m.trace();
  const double minors = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0) +
                        m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0) +
                        m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1);
  const double det = m.determinant();

  // lambda^3 + c2 lambda^2 + c1 lambda + c0, depressed via lambda = t - c2/3.
  const double c2 = -trace, c1 = minors, c0 = -det;
  const double p = c1 - c2 * c2 / 3.0;
  const double q = 2.0 * c2 * c2 * c2 / 27.0 - c2 * c1 / 3.0 + c0;
  const double disc = q * q / 4.0 + p * p * p / 27.0;
  const double shift = -c2 / 3.0;

  auto poly = [&](cplx x) { return ((x + c2) * x + c1) * x + c0; };
  auto dpoly = [&](cplx x) { return (3.0 * x + 2.0 * c2) * x + c1; };
  auto polish = [&](cplx x) {
    for (int it = 0; it < 3; ++it) {
      const cplx dp = dpoly(x);
      if (std::abs(dp) < 1e-300) break;
      x -= poly(x) / dp;
    }
    return x;
  };

  RealEigen3 out;
  bool pair = false;
  if (disc > 0.0) {
    const double sq = std::sqrt(disc);
    const double a = -std::copysign(std::cbrt(std::abs(q) / 2.0 + sq), q);
    const double b = a != 0.0 ? -p / (3.0 * a) : 0.0;
    const cplx upper(-(a + b) / 2.0 + shift, std::sqrt(3.0) / 2.0 * std::abs(a - b));
    const cplx lam = polish(upper);
    out.values = {cplx(lam.real(), std::abs(lam.imag())),
                  cplx(lam.real(), -std::abs(lam.imag())),
                  cplx(polish(cplx(a + b + shift, 0.0)).real(), 0.0)};
    pair = out.values[0].imag() != 0.0;
  } else {
    std::array<double, 3> t{0.0, 0.0, 0.0};
    if (p < 0.0) {
      const double r = 2.0 * std::sqrt(-p / 3.0);
      const double arg = std::clamp(3.0 * q / (2.0 * p) * std::sqrt(-3.0 / p), -1.0, 1.0);
      const double theta = std::acos(arg) / 3.0;
      for (int k = 0; k < 3; ++k)
        t[k] = r * std::cos(theta - 2.0 * std::numbers::pi * k / 3.0);
    }
    for (int k = 0; k < 3; ++k) t[k] = polish(cplx(t[k] + shift, 0.0)).real();
    std::sort(t.begin(), t.end(), std::greater<>());
    out.values = {cplx(t[0]), cplx(t[1]), cplx(t[2])};
  }

  double scale = 0.0;
  for (const cplx& v : out.values) scale = std::max(scale, std::abs(v));
  double gap = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j)
      gap = std::min(gap, std::abs(out.values[i] - out.values[j]));
  out.min_relative_gap = scale > 0.0 ? gap / scale : 0.0;

  for (int i = 0; i < 3; ++i) {
    if (pair && i == 1) {
      out.vectors.col(1) = out.vectors.col(0).conjugate();
      continue;
    }
    Eigen::Vector3cd v = null_vector(m, out.values[i]);
    if (!(out.values[i].imag() != 0.0)) v = v.real().cast<cplx>().normalized();
    out.vectors.col(i) = v;
  }
  return out;
}

CoarseStepOperator eigen_decompose(double angle, const TissueParams& u, double tr,
                                   int step_count) {
  u.validate();
  if (step_count < 1) throw DomainError("eigen_decompose: step_count must be >= 1");
  const auto [e1, e2] = relaxation_factors(u.t1, u.t2, tr);
  const Eigen::Matrix3d b_mat = Eigen::Vector3d(e1, e1, e2).asDiagonal() * flip_rotation(angle);
  const Eigen::Matrix3d v = precession_rotation(u.omega, tr);

  const RealEigen3 eig = eigen_decompose_real3(b_mat);
  CoarseStepOperator op;
  op.eigenvalues = eig.values;
  op.z = v.cast<cplx>() * eig.vectors;
  op.a = v * b_mat * v.transpose();
  op.b = Eigen::Vector3d(0.0, 0.0, 1.0 - e2);
  op.interval_mean_angle = angle;
  op.step_count = step_count;
  op.min_relative_gap = eig.min_relative_gap;
  // A double root of the cubic is only resolved to about sqrt(eps), so a
  // rank-deficient eigenvector matrix is also treated as degenerate.
  const double volume = std::abs(eig.vectors.determinant());
  op.degenerate = !(eig.min_relative_gap >= kDegenerateGap) || !(volume >= 1e-6);
  if (op.degenerate) {
    op.z_inv.setConstant(cplx(std::nan(""), 0.0));
    for (auto& p : op.projectors) p.setZero();
    return op;
  }
  op.z_inv = op.z.inverse();
  for (int i = 0; i < 3; ++i) op.projectors[i] = op.z.col(i) * op.z_inv.row(i);
  return op;
}

Eigen::Matrix3d spectral_power(const CoarseStepOperator& op, int k) {
  if (op.degenerate) return power_and_sum(op.a, k).first;
  Eigen::Matrix3cd sum = Eigen::Matrix3cd::Zero();
  for (int i = 0; i < 3; ++i) sum += ipow(op.eigenvalues[i], k) * op.projectors[i];
  return sum.real();
}

MagState coarse_step(const CoarseStepOperator& op, const MagState& m) {
  const int n = op.step_count;
  if (op.degenerate) {
    ++t_fallbacks;
    const auto [p, s] = power_and_sum(op.a, n);
    return p * m + s * op.b;
  }
  const Eigen::Vector3cd mc = m.cast<cplx>(), bc = op.b.cast<cplx>();
  Eigen::Vector3cd out = Eigen::Vector3cd::Zero();
  for (int i = 0; i < 3; ++i) {
    const cplx lam = op.eigenvalues[i];
    out += op.projectors[i] * (ipow(lam, n) * mc + geometric_sum(lam, n) * bc);
  }
  const double residue = out.imag().cwiseAbs().maxCoeff();
  if (residue > 1e-6)
    throw NumericalError("coarse_step: imaginary residue " + std::to_string(residue));
  return out.real();
}

CoarseStepDerivatives coarse_step_derivatives(const CoarseStepOperator& op,
                                              const TissueParams& u, double tr) {
  if (op.degenerate)
    throw DomainError("coarse_step_derivatives: degenerate eigen-decomposition");
  const auto [e1, e2] = relaxation_factors(u.t1, u.t2, tr);
  const double de1 = e1 * tr / (u.t2 * u.t2);  // d e1 / d T2
  const double de2 = e2 * tr / (u.t1 * u.t1);  // d e2 / d T1
  const Eigen::Matrix3d r = flip_rotation(op.interval_mean_angle);
  const Eigen::Matrix3d v = precession_rotation(u.omega, tr);

  CoarseStepDerivatives d;
  const std::array<Eigen::Matrix3d, 2> db_mat{
      Eigen::Vector3d(0.0, 0.0, de2).asDiagonal() * r,
      Eigen::Vector3d(de1, de1, 0.0).asDiagonal() * r};

  for (int chi = 0; chi < 2; ++chi) {
    const Eigen::Matrix3d da = v * db_mat[chi] * v.transpose();
    const Eigen::Matrix3cd c = op.z_inv * da.cast<cplx>() * op.z;
    // dZ = Z D with D_kj = C_kj / (lambda_j - lambda_k): the eigenbasis
    // expansion of dv_j.
    Eigen::Matrix3cd dmix = Eigen::Matrix3cd::Zero();
    for (int k = 0; k < 3; ++k)
      for (int j = 0; j < 3; ++j)
        if (k != j) dmix(k, j) = c(k, j) / (op.eigenvalues[j] - op.eigenvalues[k]);
    const Eigen::Matrix3cd dz = op.z * dmix;
    for (int i = 0; i < 3; ++i) {
      d.dlambda[chi][i] = c(i, i);
      Eigen::Matrix3cd dz_gi = Eigen::Matrix3cd::Zero();
      dz_gi.col(i) = dz.col(i);
      d.dprojectors[chi][i] = (dz_gi - op.projectors[i] * dz) * op.z_inv;
    }
  }

  // Only Z = V W depends on omega, and dV = M V.
  const Eigen::Matrix3cd gen = precession_generator(tr).cast<cplx>();
  for (int i = 0; i < 3; ++i) {
    d.dlambda[kDOmega][i] = 0.0;
    d.dprojectors[kDOmega][i] = gen * op.projectors[i] - op.projectors[i] * gen;
  }

  d.db[kDT1] = Eigen::Vector3d(0.0, 0.0, -de2);
  d.db[kDT2] = Eigen::Vector3d::Zero();
  d.db[kDOmega] = Eigen::Vector3d::Zero();
  return d;
}

Eigen::Matrix3d spectral_power_derivative(const CoarseStepOperator& op,
                                          const CoarseStepDerivatives& d,
                                          Param chi, int k) {
  Eigen::Matrix3cd sum = Eigen::Matrix3cd::Zero();
  for (int i = 0; i < 3; ++i) {
    const cplx lam = op.eigenvalues[i];
    const cplx pk1 = k >= 1 ? ipow(lam, k - 1) : cplx(0.0);
    sum += static_cast<double>(k) * pk1 * d.dlambda[chi][i] * op.projectors[i] +
           ipow(lam, k) * d.dprojectors[chi][i];
  }
  return sum.real();
}

namespace {

// Lab-frame coarse map with m held fixed, for finite differences.
MagState lab_coarse_map(double angle, const TissueParams& u, double tr, int n,
                        const MagState& m) {
  const Transition t = transition_matrix(angle, u.omega, u.t1, u.t2, tr);
  const auto [p, s] = power_and_sum(t.a, n);
  return p * m + s * t.b;
}

}  // namespace

std::vector<StateWithJacobian> simulate_multiscale_general(
    const TissueParams& u, const FlipSchedule& sched, const TemporalGrid& grid) {
  u.validate();
  const std::vector<Interval> intervals = grid_intervals(sched, grid);
  std::vector<StateWithJacobian> out;
  out.reserve(intervals.size());

  MagState m = kInitialState;
  Eigen::Matrix3d jac = Eigen::Matrix3d::Zero();
  for (const Interval& iv : intervals) {
    const int n = iv.width;
    const CoarseStepOperator op = eigen_decompose(iv.mean_angle, u, sched.tr, n);
    MagState m_next;
    Eigen::Matrix3d jac_next;
    if (!op.degenerate) {
      const CoarseStepDerivatives d = coarse_step_derivatives(op, u, sched.tr);
      m_next = coarse_step(op, m);
      const Eigen::Matrix3d an = spectral_power(op, n);
      Eigen::Matrix3cd sn = Eigen::Matrix3cd::Zero();
      for (int i = 0; i < 3; ++i) sn += geometric_sum(op.eigenvalues[i], n) * op.projectors[i];
      const Eigen::Vector3cd mc = m.cast<cplx>(), bc = op.b.cast<cplx>();
      for (int chi = 0; chi < 3; ++chi) {
        Eigen::Vector3cd col = Eigen::Vector3cd::Zero();
        for (int i = 0; i < 3; ++i) {
          const cplx lam = op.eigenvalues[i];
          const cplx dl = d.dlambda[chi][i];
          const Eigen::Matrix3cd& ui = op.projectors[i];
          const Eigen::Matrix3cd& dui = d.dprojectors[chi][i];
          col += static_cast<double>(n) * ipow(lam, n - 1) * dl * (ui * mc) +
                 ipow(lam, n) * (dui * mc) +
                 geometric_sum_derivative(lam, n) * dl * (ui * bc) +
                 geometric_sum(lam, n) * (dui * bc);
        }
        jac_next.col(chi) = col.real() + an * jac.col(chi) + sn.real() * d.db[chi];
      }
    } else {
      m_next = coarse_step(op, m);
      const Eigen::Matrix3d an = power_and_sum(op.a, n).first;
      for (int chi = 0; chi < 3; ++chi) {
        TissueParams up = u, um = u;
        double h;
        if (chi == kDT1) {
          h = kFdRelStep * u.t1;
          up.t1 += h;
          um.t1 -= h;
        } else if (chi == kDT2) {
          h = kFdRelStep * u.t2;
          up.t2 += h;
          um.t2 -= h;
        } else {
          h = kFdRelStep * std::max(1.0, std::abs(u.omega));
          up.omega += h;
          um.omega -= h;
        }
        const MagState dm = (lab_coarse_map(iv.mean_angle, up, sched.tr, n, m) -
                             lab_coarse_map(iv.mean_angle, um, sched.tr, n, m)) /
                            (2.0 * h);
        jac_next.col(chi) = dm + an * jac.col(chi);
      }
    }
    m = m_next;
    jac = jac_next;
    out.push_back({m, jac});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Production route.

PrecessionKernel::PrecessionKernel(const FlipSchedule& sched, const TemporalGrid& grid,
                                   int spectral_min_width)
    : grid_(grid), tr_(sched.tr), spectral_min_width_(std::max(2, spectral_min_width)) {
  sched.validate();
  const std::vector<Interval> intervals = grid_intervals(sched, grid);
  steps_.reserve(intervals.size());
  for (const Interval& iv : intervals)
    steps_.push_back({iv.width, std::cos(iv.mean_angle), std::sin(iv.mean_angle)});
}

std::size_t PrecessionKernel::fallback_count() { return t_fallbacks; }

namespace {

// (y, z) block of E R for one interval plus its parameter derivatives.
struct Block {
  double b00, b01, b10, b11;
  double c, s;
  double de1, de2;  // d e1 / d T2, d e2 / d T1
  double recharge;  // 1 - e2
};

inline double conj_of(double x) { return x; }
inline cplx conj_of(cplx x) { return std::conj(x); }
inline double re(double x) { return x; }
inline double re(cplx x) { return x.real(); }
inline double abs2(double x) { return x * x; }
inline double abs2(cplx x) { return std::norm(x); }

template <class T>
T ipow_t(T z, int n) {
  T result(1.0);
  while (n > 0) {
    if (n & 1) result *= z;
    z *= z;
    n >>= 1;
  }
  return result;
}

template <class T>
T geometric_sum_t(T lam, int n) {
  if constexpr (std::is_same_v<T, double>)
    return geometric_sum(cplx(lam), n).real();
  else
    return geometric_sum(lam, n);
}

template <class T>
T geometric_sum_derivative_t(T lam, int n) {
  if constexpr (std::is_same_v<T, double>)
    return geometric_sum_derivative(cplx(lam), n).real();
  else
    return geometric_sum_derivative(lam, n);
}

// Right eigenvector v and left eigenvector wl of the block, wl^T v = 1,
// each taken from the better-conditioned row / column of (B - lam I).
template <class T>
void block_eigvecs(const Block& k, T lam, T v[2], T wl[2]) {
  const T a00 = k.b00 - lam, a11 = k.b11 - lam;
  if (abs2(a00) + k.b01 * k.b01 >= k.b10 * k.b10 + abs2(a11)) {
    v[0] = -k.b01;
    v[1] = a00;
  } else {
    v[0] = -a11;
    v[1] = k.b10;
  }
  if (abs2(a00) + k.b10 * k.b10 >= k.b01 * k.b01 + abs2(a11)) {
    wl[0] = -k.b10;
    wl[1] = a00;
  } else {
    wl[0] = -a11;
    wl[1] = k.b01;
  }
  const T inv = T(1.0) / (wl[0] * v[0] + wl[1] * v[1]);
  wl[0] *= inv;
  wl[1] *= inv;
}

// One coarse step of width w through the eigenbasis of the block. With
// Pair the eigenvalues are a conjugate pair: only the first is evaluated
// and the real result is twice the real part of its term.
template <class T, bool Pair, bool Deriv>
void spectral_step(const Block& k, const T lam[2], int w, PrecessionState& st) {
  constexpr int kEval = Pair ? 1 : 2;
  T v[2][2], wl[2][2];
  T pw1[2], pw[2], g0[2], g1[2], coord[2], beta[2], mu[2];
  for (int i = 0; i < kEval; ++i) {
    block_eigvecs(k, lam[i], v[i], wl[i]);
    pw1[i] = ipow_t(lam[i], w - 1);
    pw[i] = pw1[i] * lam[i];
    const T d = T(1.0) - lam[i];
    if (abs2(d) > kNearUnit * kNearUnit) {
      const T inv = T(1.0) / d;
      g0[i] = (T(1.0) - pw[i]) * inv;
      if constexpr (Deriv)
        g1[i] = ((w - 1.0) * pw[i] - static_cast<double>(w) * pw1[i] + T(1.0)) * (inv * inv);
    } else {
      g0[i] = geometric_sum_t(lam[i], w);
      if constexpr (Deriv) g1[i] = geometric_sum_derivative_t(lam[i], w);
    }
    coord[i] = wl[i][0] * st.y + wl[i][1] * st.z;
    beta[i] = wl[i][1] * k.recharge;
    mu[i] = pw[i] * coord[i] + g0[i] * beta[i];
  }
  if constexpr (Pair) {
    for (int r = 0; r < 2; ++r) {
      v[1][r] = conj_of(v[0][r]);
      wl[1][r] = conj_of(wl[0][r]);
    }
    pw1[1] = conj_of(pw1[0]);
    pw[1] = conj_of(pw[0]);
    g0[1] = conj_of(g0[0]);
    if constexpr (Deriv) g1[1] = conj_of(g1[0]);
    coord[1] = conj_of(coord[0]);
    beta[1] = conj_of(beta[0]);
    mu[1] = conj_of(mu[0]);
  }

  if constexpr (Deriv) {
    // dB v_j: T1 touches only the z row, T2 only the y row.
    T gz[2], gy[2];
    for (int j = 0; j < 2; ++j) {
      gz[j] = k.de2 * (-k.s * v[j][0] + k.c * v[j][1]);
      gy[j] = k.de1 * (k.c * v[j][0] + k.s * v[j][1]);
    }
    T inv_gap;
    if constexpr (Pair)
      inv_gap = T(0.0, 0.5 / lam[0].imag());  // 1 / (-2i Im lambda_0)
    else
      inv_gap = 1.0 / (lam[1] - lam[0]);

    // Eigen-coordinates of the new derivative column; C = Z^-1 dB Z and
    // D_kj = C_kj / (lambda_j - lambda_k).
    auto column = [&](bool t1, double dy, double dz, double dbz, T res[2]) {
      for (int i = 0; i < kEval; ++i) {
        const int o = 1 - i;
        const T cii = t1 ? wl[i][1] * gz[i] : wl[i][0] * gy[i];
        const T cio = t1 ? wl[i][1] * gz[o] : wl[i][0] * gy[o];
        const T dmix = i == 0 ? cio * inv_gap : -cio * inv_gap;
        const T cd = wl[i][0] * dy + wl[i][1] * dz;
        const T bd = wl[i][1] * dbz;
        res[i] = pw[i] * cd + g0[i] * bd +
                 cii * (static_cast<double>(w) * pw1[i] * coord[i] + g1[i] * beta[i]) +
                 dmix * (mu[o] - pw[i] * coord[o] - g0[i] * beta[o]);
      }
    };
    T r1[2], r2[2];
    column(true, st.dy_t1, st.dz_t1, -k.de2, r1);
    column(false, st.dy_t2, st.dz_t2, 0.0, r2);
    if constexpr (Pair) {
      st.dy_t1 = 2.0 * re(v[0][0] * r1[0]);
      st.dz_t1 = 2.0 * re(v[0][1] * r1[0]);
      st.dy_t2 = 2.0 * re(v[0][0] * r2[0]);
      st.dz_t2 = 2.0 * re(v[0][1] * r2[0]);
    } else {
      st.dy_t1 = re(v[0][0] * r1[0] + v[1][0] * r1[1]);
      st.dz_t1 = re(v[0][1] * r1[0] + v[1][1] * r1[1]);
      st.dy_t2 = re(v[0][0] * r2[0] + v[1][0] * r2[1]);
      st.dz_t2 = re(v[0][1] * r2[0] + v[1][1] * r2[1]);
    }
  }
  if constexpr (Pair) {
    st.y = 2.0 * re(v[0][0] * mu[0]);
    st.z = 2.0 * re(v[0][1] * mu[0]);
  } else {
    st.y = re(v[0][0] * mu[0] + v[1][0] * mu[1]);
    st.z = re(v[0][1] * mu[0] + v[1][1] * mu[1]);
  }
}

// Repeated eigenvalue: exact powers, finite-difference derivatives.
template <bool Deriv>
void fallback_step(const Block& k, double t1, double t2, double tr, int w,
                   PrecessionState& st) {
  ++t_fallbacks;
  const Eigen::Vector2d m(st.y, st.z);
  auto block_map = [&](double f1, double f2) -> Eigen::Vector2d {
    Eigen::Matrix2d bm;
    bm << f1 * k.c, f1 * k.s, -f2 * k.s, f2 * k.c;
    const auto [p, sum] = power_and_sum(bm, w);
    return p * m + sum * Eigen::Vector2d(0.0, 1.0 - f2);
  };
  const auto [e1, e2] = relaxation_factors(t1, t2, tr);
  const Eigen::Vector2d next = block_map(e1, e2);
  if constexpr (Deriv) {
    Eigen::Matrix2d bm;
    bm << k.b00, k.b01, k.b10, k.b11;
    const Eigen::Matrix2d p = power_and_sum(bm, w).first;
    const double h1 = kFdRelStep * t1, h2 = kFdRelStep * t2;
    const Eigen::Vector2d g1 =
        (block_map(e1, std::exp(-tr / (t1 + h1))) - block_map(e1, std::exp(-tr / (t1 - h1)))) /
            (2.0 * h1) + p * Eigen::Vector2d(st.dy_t1, st.dz_t1);
    const Eigen::Vector2d g2 =
        (block_map(std::exp(-tr / (t2 + h2)), e2) - block_map(std::exp(-tr / (t2 - h2)), e2)) /
            (2.0 * h2) + p * Eigen::Vector2d(st.dy_t2, st.dz_t2);
    st.dy_t1 = g1(0);
    st.dz_t1 = g1(1);
    st.dy_t2 = g2(0);
    st.dz_t2 = g2(1);
  }
  st.y = next(0);
  st.z = next(1);
}

}  // namespace

namespace {

// One interval of width >= 2 through the spectral formula, or the fallback
// when the block is degenerate.
template <bool Deriv>
void coarse_interval(const Block& k, double t1, double t2, double tr, int width,
                     PrecessionState& st) {
  const double trace = k.b00 + k.b11;
  const double det = k.b00 * k.b11 - k.b01 * k.b10;
  const double disc = trace * trace - 4.0 * det;
  const double gap = std::sqrt(std::abs(disc));  // |lambda_0 - lambda_1|
  if (disc < 0.0) {
    const double scale = std::sqrt(det);
    if (gap >= kDegenerateGap * scale) {
      const cplx lam0(0.5 * trace, 0.5 * gap);
      const cplx lam[2] = {lam0, std::conj(lam0)};
      spectral_step<cplx, true, Deriv>(k, lam, width, st);
    } else {
      fallback_step<Deriv>(k, t1, t2, tr, width, st);
    }
  } else {
    const double big = 0.5 * (trace + std::copysign(gap, trace));
    const double scale = std::abs(big);
    if (gap >= kDegenerateGap * scale && big != 0.0) {
      const double lam[2] = {big, det / big};
      spectral_step<double, false, Deriv>(k, lam, width, st);
    } else {
      fallback_step<Deriv>(k, t1, t2, tr, width, st);
    }
  }
}

struct Relaxation {
  double e1, e2, de1, de2, recharge;
};

Relaxation relaxation(double t1, double t2, double tr) {
  const auto [e1, e2] = relaxation_factors(t1, t2, tr);
  return {e1, e2, e1 * tr / (t2 * t2), e2 * tr / (t1 * t1), 1.0 - e2};
}

Block make_block(const Relaxation& f, double c, double s) {
  return {f.e1 * c, f.e1 * s, -f.e2 * s, f.e2 * c, c, s, f.de1, f.de2, f.recharge};
}

}  // namespace

template <bool Deriv, class Sink>
void PrecessionKernel::propagate(double t1, double t2, Sink&& sink) const {
  const Relaxation f = relaxation(t1, t2, tr_);
  PrecessionState st;
  for (std::size_t j = 0; j < steps_.size(); ++j) {
    const Step& step = steps_[j];
    const double c = step.c, s = step.s;
    const Block k = make_block(f, c, s);

    if (step.width < spectral_min_width_) {
      // Short intervals: stepping with the mean angle is the same map as the
      // spectral formula and cheaper.
      for (int r = 0; r < step.width; ++r) {
        const double ry = c * st.y + s * st.z;   // (R m)_y
        const double rz = -s * st.y + c * st.z;  // (R m)_z
        if constexpr (Deriv) {
          const double y1 = k.b00 * st.dy_t1 + k.b01 * st.dz_t1;
          const double z1 = k.b10 * st.dy_t1 + k.b11 * st.dz_t1 + f.de2 * rz - f.de2;
          const double y2 = k.b00 * st.dy_t2 + k.b01 * st.dz_t2 + f.de1 * ry;
          const double z2 = k.b10 * st.dy_t2 + k.b11 * st.dz_t2;
          st.dy_t1 = y1;
          st.dz_t1 = z1;
          st.dy_t2 = y2;
          st.dz_t2 = z2;
        }
        st.y = f.e1 * ry;
        st.z = f.e2 * rz + f.recharge;
      }
    } else {
      coarse_interval<Deriv>(k, t1, t2, tr_, step.width, st);
    }
    sink(j, st);
  }
}

template <bool Deriv>
void PrecessionKernel::propagate_batch(const double* t1, const double* t2, std::size_t count,
                                       double* y, double* dy_t1, double* dy_t2,
                                       std::ptrdiff_t stride) const {
  constexpr std::size_t L = kBatchLanes;
  // Unused lanes run on harmless values and are never written out.
  alignas(64) double e1[L], e2[L], de1[L], de2[L], rc[L];
  alignas(64) double Y[L], Z[L], Y1[L], Z1[L], Y2[L], Z2[L];
  Relaxation lane[L];
  for (std::size_t i = 0; i < L; ++i) {
    lane[i] = relaxation(i < count ? t1[i] : 1000.0, i < count ? t2[i] : 100.0, tr_);
    e1[i] = lane[i].e1;
    e2[i] = lane[i].e2;
    de1[i] = lane[i].de1;
    de2[i] = lane[i].de2;
    rc[i] = lane[i].recharge;
    Y[i] = 0.0;
    Z[i] = -1.0;
    Y1[i] = Z1[i] = Y2[i] = Z2[i] = 0.0;
  }

  for (std::size_t j = 0; j < steps_.size(); ++j) {
    const Step& step = steps_[j];
    const double c = step.c, s = step.s;
    if (step.width < spectral_min_width_) {
      for (int r = 0; r < step.width; ++r) {
#pragma omp simd
        for (std::size_t i = 0; i < L; ++i) {
          const double ry = c * Y[i] + s * Z[i];
          const double rz = -s * Y[i] + c * Z[i];
          if constexpr (Deriv) {
            const double b00 = e1[i] * c, b01 = e1[i] * s, b10 = -e2[i] * s, b11 = e2[i] * c;
            const double y1 = b00 * Y1[i] + b01 * Z1[i];
            const double z1 = b10 * Y1[i] + b11 * Z1[i] + de2[i] * rz - de2[i];
            const double y2 = b00 * Y2[i] + b01 * Z2[i] + de1[i] * ry;
            const double z2 = b10 * Y2[i] + b11 * Z2[i];
            Y1[i] = y1;
            Z1[i] = z1;
            Y2[i] = y2;
            Z2[i] = z2;
          }
          Y[i] = e1[i] * ry;
          Z[i] = e2[i] * rz + rc[i];
        }
      }
    } else {
      for (std::size_t i = 0; i < count; ++i) {
        PrecessionState st{Y[i], Z[i], Y1[i], Z1[i], Y2[i], Z2[i]};
        coarse_interval<Deriv>(make_block(lane[i], c, s), t1[i], t2[i], tr_, step.width, st);
        Y[i] = st.y;
        Z[i] = st.z;
        Y1[i] = st.dy_t1;
        Z1[i] = st.dz_t1;
        Y2[i] = st.dy_t2;
        Z2[i] = st.dz_t2;
      }
    }
    double* oy = y + static_cast<std::ptrdiff_t>(j) * stride;
    for (std::size_t i = 0; i < count; ++i) oy[i] = Y[i];
    if constexpr (Deriv) {
      double* o1 = dy_t1 + static_cast<std::ptrdiff_t>(j) * stride;
      double* o2 = dy_t2 + static_cast<std::ptrdiff_t>(j) * stride;
      for (std::size_t i = 0; i < count; ++i) {
        o1[i] = Y1[i];
        o2[i] = Y2[i];
      }
    }
  }
}

void PrecessionKernel::transverse_batch(const double* t1, const double* t2, std::size_t count,
                                        double* y, double* dy_t1, double* dy_t2,
                                        std::ptrdiff_t stride) const {
  if ((dy_t1 == nullptr) != (dy_t2 == nullptr))
    throw DomainError("transverse_batch: request both derivatives or neither");
  for (std::size_t i0 = 0; i0 < count; i0 += kBatchLanes) {
    const std::size_t n = std::min(kBatchLanes, count - i0);
    if (dy_t1)
      propagate_batch<true>(t1 + i0, t2 + i0, n, y + i0, dy_t1 + i0, dy_t2 + i0, stride);
    else
      propagate_batch<false>(t1 + i0, t2 + i0, n, y + i0, nullptr, nullptr, stride);
  }
}

void PrecessionKernel::transverse(double t1, double t2, double* y, double* dy_t1,
                                  double* dy_t2, std::ptrdiff_t stride) const {
  if (dy_t1 || dy_t2) {
    propagate<true>(t1, t2, [&](std::size_t j, const PrecessionState& st) {
      const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j) * stride;
      y[off] = st.y;
      if (dy_t1) dy_t1[off] = st.dy_t1;
      if (dy_t2) dy_t2[off] = st.dy_t2;
    });
  } else {
    propagate<false>(t1, t2, [&](std::size_t j, const PrecessionState& st) {
      y[static_cast<std::ptrdiff_t>(j) * stride] = st.y;
    });
  }
}

void PrecessionKernel::states(double t1, double t2, bool derivatives,
                              std::span<PrecessionState> out) const {
  if (out.size() < size()) throw DomainError("PrecessionKernel::states: output too small");
  auto sink = [&](std::size_t j, const PrecessionState& st) { out[j] = st; };
  if (derivatives)
    propagate<true>(t1, t2, sink);
  else
    propagate<false>(t1, t2, sink);
}

StateWithJacobian to_lab_frame(const PrecessionState& s, double omega, double tr) {
  const double phi = precession_angle(omega, tr);
  const double cp = std::cos(phi), sp = std::sin(phi);
  StateWithJacobian out;
  out.m = MagState(-sp * s.y, cp * s.y, s.z);
  out.jacobian.col(kDT1) = Eigen::Vector3d(-sp * s.dy_t1, cp * s.dy_t1, s.dz_t1);
  out.jacobian.col(kDT2) = Eigen::Vector3d(-sp * s.dy_t2, cp * s.dy_t2, s.dz_t2);
  const double k = dphi_domega(tr);
  out.jacobian.col(kDOmega) = Eigen::Vector3d(-k * out.m(1), k * out.m(0), 0.0);
  return out;
}

std::vector<MagState> simulate_multiscale(const TissueParams& u,
                                          const FlipSchedule& sched,
                                          const TemporalGrid& grid) {
  u.validate();
  const PrecessionKernel kernel(sched, grid);
  std::vector<PrecessionState> st(kernel.size());
  kernel.states(u.t1, u.t2, false, st);
  std::vector<MagState> out;
  out.reserve(st.size());
  for (const auto& s : st) out.push_back(to_lab_frame(s, u.omega, sched.tr).m);
  return out;
}

std::vector<StateWithJacobian> simulate_multiscale_with_derivatives(
    const TissueParams& u, const FlipSchedule& sched, const TemporalGrid& grid) {
  u.validate();
  const PrecessionKernel kernel(sched, grid);
  std::vector<PrecessionState> st(kernel.size());
  kernel.states(u.t1, u.t2, true, st);
  std::vector<StateWithJacobian> out;
  out.reserve(st.size());
  for (const auto& s : st) out.push_back(to_lab_frame(s, u.omega, sched.tr));
  return out;
}

}  // namespace msmrf
