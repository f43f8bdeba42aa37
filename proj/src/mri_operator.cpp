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

#include "msmrf/mri_operator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "msmrf/error.hpp"

namespace msmrf {

namespace {

constexpr std::size_t kPixelBlock = 32;
constexpr std::size_t kFrameChunk = 8;

double dphi_domega(double tr) { return 2.0 * std::numbers::pi * tr * 1e-3; }

}  // namespace

std::size_t SamplingMask::count() const {
  std::size_t n = 0;
  for (auto v : on) n += v != 0;
  return n;
}

double SamplingMask::fraction() const {
  return on.empty() ? 0.0 : static_cast<double>(count()) / static_cast<double>(on.size());
}

void AcquisitionData::validate() const {
  if (rows < 1 || cols < 1) throw DataIntegrityError("acquisition has empty dimensions");
  if (frames.size() != schedule.length())
    throw DataIntegrityError("frame count " + std::to_string(frames.size()) +
                             " does not match schedule length " +
                             std::to_string(schedule.length()));
  if (masks.size() != frames.size())
    throw DataIntegrityError("mask count does not match frame count");
  for (std::size_t l = 0; l < frames.size(); ++l) {
    const SamplingMask& m = masks[l];
    if (m.rows != rows || m.cols != cols || m.on.size() != pixels())
      throw DataIntegrityError("mask " + std::to_string(l + 1) + " has the wrong shape");
    if (frames[l].size() != pixels())
      throw DataIntegrityError("frame " + std::to_string(l + 1) + " has the wrong size");
    for (std::size_t k = 0; k < pixels(); ++k)
      if (!m.on[k] && frames[l][k] != cplx(0.0))
        throw DataIntegrityError("frame " + std::to_string(l + 1) +
                                 " has data outside its sampling mask");
  }
}

void simulate_responses(const ParameterMaps& x, const PrecessionKernel& kernel,
                        bool derivatives, Responses& out) {
  const std::size_t pixels = x.pixels(), frames = kernel.size();
  out.frames = frames;
  out.pixels = pixels;
  out.y.resize(frames * pixels);
  if (derivatives) {
    out.dy_t1.resize(frames * pixels);
    out.dy_t2.resize(frames * pixels);
  } else {
    out.dy_t1.clear();
    out.dy_t2.clear();
  }
  const auto& t1 = x[kT1];
  const auto& t2 = x[kT2];
  for (std::size_t p = 0; p < pixels; ++p)
    if (!(t1[p] > 0.0) || !(t2[p] > 0.0) || !std::isfinite(t1[p]) || !std::isfinite(t2[p]))
      throw DomainError("T1 and T2 must be positive and finite");
  const std::ptrdiff_t blocks = static_cast<std::ptrdiff_t>((pixels + kPixelBlock - 1) / kPixelBlock);
  const auto stride = static_cast<std::ptrdiff_t>(pixels);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < blocks; ++b) {
    const std::size_t p0 = static_cast<std::size_t>(b) * kPixelBlock;
    const std::size_t np = std::min(kPixelBlock, pixels - p0);
    kernel.transverse_batch(t1.data() + p0, t2.data() + p0, np, out.y.data() + p0,
                            derivatives ? out.dy_t1.data() + p0 : nullptr,
                            derivatives ? out.dy_t2.data() + p0 : nullptr, stride);
  }
}

Responses simulate_responses(const ParameterMaps& x, const PrecessionKernel& kernel,
                             bool derivatives) {
  Responses r;
  simulate_responses(x, kernel, derivatives, r);
  return r;
}

std::vector<cplx> transverse_phase(const ParameterMaps& x, double tr) {
  std::vector<cplx> q(x.pixels());
  for (std::size_t p = 0; p < q.size(); ++p) {
    const double phi = precession_angle(x[kOmega][p], tr);
    q[p] = cplx(-std::sin(phi), std::cos(phi));
  }
  return q;
}

MriOperator::MriOperator(const AcquisitionData& data)
    : data_(data), fft_(data.rows, data.cols) {
  if (data.masks.size() != data.length() || data.schedule.length() != data.length())
    throw DataIntegrityError("acquisition masks, frames and schedule disagree in length");
  sampled_.resize(data.length());
  for (std::size_t l = 0; l < data.length(); ++l) {
    const auto& on = data.masks[l].on;
    if (on.size() != data.pixels()) throw DataIntegrityError("mask size does not match the image");
    for (std::size_t i = 0; i < on.size(); ++i)
      if (on[i]) sampled_[l].push_back(static_cast<std::uint32_t>(i));
  }
}

std::vector<std::size_t> MriOperator::residual_offsets(const TemporalGrid& grid) const {
  std::vector<std::size_t> off(grid.size() + 1, 0);
  for (std::size_t j = 0; j < grid.size(); ++j)
    off[j + 1] = off[j] + sampled_[static_cast<std::size_t>(grid.index(j) - 1)].size();
  return off;
}

void MriOperator::check_grid(const TemporalGrid& grid) const {
  grid.validate();
  if (grid.length != length())
    throw DomainError("grid length " + std::to_string(grid.length) +
                      " does not match the acquisition length " + std::to_string(length()));
}

std::size_t MriOperator::frame_of(const TemporalGrid& grid, int l) const {
  check_grid(grid);
  return grid.position(l);
}

void MriOperator::transverse_image(const ParameterMaps& x, const Responses& r,
                                   std::span<const cplx> phase, std::size_t j,
                                   cplx* out) const {
  const std::size_t n = pixels();
  const double* y = r.y.data() + j * n;
  const double* rho = x[kRho].data();
  for (std::size_t p = 0; p < n; ++p) out[p] = (rho[p] * y[p]) * phase[p];
}

std::vector<cplx> MriOperator::forward_frame(const ParameterMaps& x, const Responses& r,
                                             std::span<const cplx> phase,
                                             const TemporalGrid& grid, int l) const {
  const std::size_t j = frame_of(grid, l);
  std::vector<cplx> k(pixels());
  transverse_image(x, r, phase, j, k.data());
  fft_.forward(k.data(), k.data());
  const auto& mask = data_.masks[static_cast<std::size_t>(l - 1)].on;
  for (std::size_t i = 0; i < k.size(); ++i)
    if (!mask[i]) k[i] = 0.0;
  return k;
}

double MriOperator::objective(const ParameterMaps& x, const Responses& r,
                              std::span<const cplx> phase, const TemporalGrid& grid) const {
  check_grid(grid);
  const std::size_t frames = grid.size(), n = pixels();
  std::vector<double> half_sq(frames);
#pragma omp parallel
  {
    CplxBuffer buf(n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t jj = 0; jj < static_cast<std::ptrdiff_t>(frames); ++jj) {
      const std::size_t j = static_cast<std::size_t>(jj);
      const std::size_t l = static_cast<std::size_t>(grid.index(j) - 1);
      transverse_image(x, r, phase, j, buf.data());
      fft_.forward(buf.data(), buf.data());
      const auto& mask = data_.masks[l].on;
      const auto& y = data_.frames[l];
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (mask[i]) acc += std::norm(buf[i] - y[i]);
      half_sq[j] = 0.5 * acc;
    }
  }
  double total = 0.0;
  for (double v : half_sq) total += v;
  return total / static_cast<double>(frames);
}

void MriOperator::accumulate_chunk(const ParameterMaps& x, const Responses& r,
                                   std::span<const cplx> phase, std::size_t j0, std::size_t j1,
                                   const cplx* back, ParameterMaps& grad) const {
  const std::size_t n = pixels();
  const double k_omega = dphi_domega(tr());
  const bool relax = r.has_derivatives();
  constexpr std::size_t kBlock = 256;
  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  // Each pixel sums the chunk's frames in order; pixels are split into blocks.
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t bb = 0; bb < static_cast<std::ptrdiff_t>(blocks); ++bb) {
    const std::size_t p0 = static_cast<std::size_t>(bb) * kBlock;
    const std::size_t np = std::min(kBlock, n - p0);
    double g_rho[kBlock] = {}, g_t1[kBlock] = {}, g_t2[kBlock] = {}, g_w[kBlock] = {};
    for (std::size_t j = j0; j < j1; ++j) {
      const cplx* b = back + (j - j0) * n + p0;
      const double* y = r.y.data() + j * n + p0;
      const cplx* q = phase.data() + p0;
      for (std::size_t i = 0; i < np; ++i) {
        const cplx z = std::conj(q[i]) * b[i];
        g_rho[i] += z.real() * y[i];
        g_w[i] += z.imag() * y[i];
      }
      if (relax) {
        const double* d1 = r.dy_t1.data() + j * n + p0;
        const double* d2 = r.dy_t2.data() + j * n + p0;
        for (std::size_t i = 0; i < np; ++i) {
          const double zr = (std::conj(q[i]) * b[i]).real();
          g_t1[i] += zr * d1[i];
          g_t2[i] += zr * d2[i];
        }
      }
    }
    for (std::size_t i = 0; i < np; ++i) {
      const std::size_t p = p0 + i;
      const double rho = x[kRho][p];
      grad[kRho][p] += g_rho[i];
      grad[kT1][p] += rho * g_t1[i];
      grad[kT2][p] += rho * g_t2[i];
      grad[kOmega][p] += rho * k_omega * g_w[i];
    }
  }
}

void MriOperator::masked_residual(const ParameterMaps& x, const Responses& r,
                                  std::span<const cplx> phase, const TemporalGrid& grid,
                                  std::size_t j, cplx* s, double& half_sq) const {
  const std::size_t n = pixels();
  const std::size_t l = static_cast<std::size_t>(grid.index(j) - 1);
  transverse_image(x, r, phase, j, s);
  fft_.forward(s, s);
  const auto& mask = data_.masks[l].on;
  const auto& y = data_.frames[l];
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i]) {
      s[i] -= y[i];
      acc += std::norm(s[i]);
    } else {
      s[i] = 0.0;
    }
  }
  half_sq = 0.5 * acc;
}

double MriOperator::gradient(const ParameterMaps& x, const Responses& r,
                             std::span<const cplx> phase, const TemporalGrid& grid,
                             ParameterMaps& grad) const {
  check_grid(grid);
  if (!r.has_derivatives()) throw DomainError("gradient needs responses with derivatives");
  const std::size_t frames = grid.size(), n = pixels();
  grad = ParameterMaps(x.rows, x.cols);
  std::vector<double> half_sq(frames);
  CplxBuffer back(std::min(kFrameChunk, frames) * n);

  // Frames are processed in fixed chunks: back-projected residuals for a chunk
  // are formed in parallel, then each pixel accumulates them in frame order,
  // so the result does not depend on the thread count.
  for (std::size_t j0 = 0; j0 < frames; j0 += kFrameChunk) {
    const std::size_t j1 = std::min(frames, j0 + kFrameChunk);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j0); jj < static_cast<std::ptrdiff_t>(j1); ++jj) {
      const std::size_t j = static_cast<std::size_t>(jj);
      cplx* s = back.data() + (j - j0) * n;
      masked_residual(x, r, phase, grid, j, s, half_sq[j]);
      fft_.inverse(s, s);
    }
    accumulate_chunk(x, r, phase, j0, j1, back.data(), grad);
  }
  const double inv = 1.0 / static_cast<double>(frames);
  for (auto& c : grad.ch)
    for (double& v : c) v *= inv;
  double total = 0.0;
  for (double v : half_sq) total += v;
  return total / static_cast<double>(frames);
}

double MriOperator::residual(const ParameterMaps& x, const Responses& r,
                             std::span<const cplx> phase, const TemporalGrid& grid,
                             CplxBuffer& out) const {
  check_grid(grid);
  const std::size_t frames = grid.size(), n = pixels();
  const std::vector<std::size_t> off = residual_offsets(grid);
  out.resize(off.back());
  std::vector<double> half_sq(frames);
#pragma omp parallel
  {
    CplxBuffer buf(n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t jj = 0; jj < static_cast<std::ptrdiff_t>(frames); ++jj) {
      const std::size_t j = static_cast<std::size_t>(jj);
      const std::size_t l = static_cast<std::size_t>(grid.index(j) - 1);
      transverse_image(x, r, phase, j, buf.data());
      fft_.forward(buf.data(), buf.data());
      const auto& idx = sampled_[l];
      const auto& y = data_.frames[l];
      cplx* o = out.data() + off[j];
      double acc = 0.0;
      for (std::size_t k = 0; k < idx.size(); ++k) {
        o[k] = buf[idx[k]] - y[idx[k]];
        acc += std::norm(o[k]);
      }
      half_sq[j] = 0.5 * acc;
    }
  }
  double total = 0.0;
  for (double v : half_sq) total += v;
  return total / static_cast<double>(frames);
}

void MriOperator::backproject(const ParameterMaps& x, const Responses& r,
                              std::span<const cplx> phase, const TemporalGrid& grid,
                              std::span<const cplx> residual, ParameterMaps& grad) const {
  check_grid(grid);
  const std::size_t frames = grid.size(), n = pixels();
  const std::vector<std::size_t> off = residual_offsets(grid);
  if (residual.size() != off.back()) throw DomainError("backproject: residual has the wrong size");
  grad = ParameterMaps(x.rows, x.cols);
  CplxBuffer back(std::min(kFrameChunk, frames) * n);
  for (std::size_t j0 = 0; j0 < frames; j0 += kFrameChunk) {
    const std::size_t j1 = std::min(frames, j0 + kFrameChunk);
#pragma omp parallel
    {
      CplxBuffer full(n);
#pragma omp for schedule(static)
      for (std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j0); jj < static_cast<std::ptrdiff_t>(j1); ++jj) {
        const std::size_t j = static_cast<std::size_t>(jj);
        const auto& idx = sampled_[static_cast<std::size_t>(grid.index(j) - 1)];
        std::fill(full.begin(), full.end(), cplx(0.0));
        for (std::size_t k = 0; k < idx.size(); ++k) full[idx[k]] = residual[off[j] + k];
        fft_.inverse(full.data(), back.data() + (j - j0) * n);
      }
    }
    accumulate_chunk(x, r, phase, j0, j1, back.data(), grad);
  }
  const double inv = 1.0 / static_cast<double>(frames);
  for (auto& c : grad.ch)
    for (double& v : c) v *= inv;
}

double MriOperator::objective(const ParameterMaps& x, const TemporalGrid& grid) const {
  check_grid(grid);
  const PrecessionKernel kernel(data_.schedule, grid);
  const Responses r = simulate_responses(x, kernel, false);
  return objective(x, r, transverse_phase(x, tr()), grid);
}

ObjectiveReport MriOperator::gradient(const ParameterMaps& x, const TemporalGrid& grid) const {
  check_grid(grid);
  const PrecessionKernel kernel(data_.schedule, grid);
  const Responses r = simulate_responses(x, kernel, true);
  ObjectiveReport rep;
  rep.grid = grid;
  rep.gradient.emplace();
  rep.value = gradient(x, r, transverse_phase(x, tr()), grid, *rep.gradient);
  return rep;
}

double MriOperator::true_objective(const ParameterMaps& x) const {
  return objective(x, TemporalGrid::fine(length()));
}

std::vector<cplx> MriOperator::jacobian_apply(const ParameterMaps& x, const TemporalGrid& grid,
                                              int l, const ParameterMaps& h) const {
  const std::size_t j = frame_of(grid, l);
  if (!h.same_shape(x)) throw DomainError("jacobian_apply: perturbation shape mismatch");
  const PrecessionKernel kernel(data_.schedule, grid);
  const Responses r = simulate_responses(x, kernel, true);
  const std::vector<cplx> q = transverse_phase(x, tr());
  const double k_omega = dphi_domega(tr());
  const std::size_t n = pixels();
  std::vector<cplx> v(n);
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t idx = j * n + p;
    const double rho = x[kRho][p], y = r.y[idx];
    const double real_part =
        h[kRho][p] * y + rho * (r.dy_t1[idx] * h[kT1][p] + r.dy_t2[idx] * h[kT2][p]);
    v[p] = q[p] * cplx(real_part, rho * y * k_omega * h[kOmega][p]);
  }
  fft_.forward(v.data(), v.data());
  const auto& mask = data_.masks[static_cast<std::size_t>(l - 1)].on;
  for (std::size_t i = 0; i < n; ++i)
    if (!mask[i]) v[i] = 0.0;
  return v;
}

ParameterMaps MriOperator::jacobian_adjoint(const ParameterMaps& x, const TemporalGrid& grid,
                                            int l, std::span<const cplx> w) const {
  const std::size_t j = frame_of(grid, l);
  const std::size_t n = pixels();
  if (w.size() != n) throw DomainError("jacobian_adjoint: data vector has the wrong size");
  const PrecessionKernel kernel(data_.schedule, grid);
  const Responses r = simulate_responses(x, kernel, true);
  const std::vector<cplx> q = transverse_phase(x, tr());
  const double k_omega = dphi_domega(tr());
  const auto& mask = data_.masks[static_cast<std::size_t>(l - 1)].on;
  std::vector<cplx> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = mask[i] ? w[i] : cplx(0.0);
  fft_.inverse(s.data(), s.data());
  ParameterMaps g(x.rows, x.cols);
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t idx = j * n + p;
    const cplx z = std::conj(q[p]) * s[p];
    const double rho = x[kRho][p], y = r.y[idx];
    g[kRho][p] = z.real() * y;
    g[kT1][p] = rho * z.real() * r.dy_t1[idx];
    g[kT2][p] = rho * z.real() * r.dy_t2[idx];
    g[kOmega][p] = rho * k_omega * y * z.imag();
  }
  return g;
}

}  // namespace msmrf
