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

// Imaging forward model, multiscale data-fidelity objective and its
// gradient.
//
// For a pixel with parameters (rho, T1, T2, omega) the lab-frame transverse
// signal at grid frame l is
//
//   rho (m_x + i m_y) = rho * q * y_l,   q = i exp(i phi),
//
// where y_l is the precession-frame response of PrecessionKernel. The frame
// model is Q_l = P_l F(rho q y_l) with the unitary FFT F and the k-space mask
// P_l, and
//
//   F_S(x) = 1/(2|S|) sum_{l in S} || Q_l(x) - y_l ||^2.

#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "msmrf/bloch.hpp"
#include "msmrf/fourier.hpp"
#include "msmrf/maps.hpp"
#include "msmrf/multiscale.hpp"

namespace msmrf {

struct SamplingMask {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> on;  // rows * cols entries, 0 or 1

  std::size_t count() const;
  double fraction() const;
  bool operator==(const SamplingMask&) const = default;
};

struct AcquisitionData {
  int rows = 0;
  int cols = 0;
  FlipSchedule schedule;
  std::vector<SamplingMask> masks;        // one per frame
  std::vector<std::vector<cplx>> frames;  // zero-filled k-space, one per frame

  std::size_t length() const { return frames.size(); }
  std::size_t pixels() const { return static_cast<std::size_t>(rows) * cols; }
  // Throws DataIntegrityError on shape mismatches or nonzero unsampled
  // entries.
  void validate() const;
};

// Precession-frame responses of every pixel on a grid, frame-major:
// y[j * pixels + p]. Derivative arrays are empty unless requested.
struct Responses {
  std::size_t frames = 0;
  std::size_t pixels = 0;
  std::vector<double> y, dy_t1, dy_t2;

  bool has_derivatives() const { return !dy_t1.empty(); }
};

void simulate_responses(const ParameterMaps& x, const PrecessionKernel& kernel,
                        bool derivatives, Responses& out);
Responses simulate_responses(const ParameterMaps& x, const PrecessionKernel& kernel,
                             bool derivatives);

// q = i exp(i phi) per pixel, so that m_x + i m_y = q y.
std::vector<cplx> transverse_phase(const ParameterMaps& x, double tr);

struct ObjectiveReport {
  double value = 0.0;
  TemporalGrid grid;
  std::optional<ParameterMaps> gradient;
};

class MriOperator {
 public:
  explicit MriOperator(const AcquisitionData& data);

  const AcquisitionData& data() const { return data_; }
  const Fourier2D& fourier() const { return fft_; }
  std::size_t pixels() const { return data_.pixels(); }
  std::size_t length() const { return data_.length(); }
  double tr() const { return data_.schedule.tr; }

  // Grid must span the acquisition length.
  void check_grid(const TemporalGrid& grid) const;

  // rho q y for grid frame j.
  void transverse_image(const ParameterMaps& x, const Responses& r,
                        std::span<const cplx> phase, std::size_t j, cplx* out) const;

  // P_l F(rho T m_{l,S}) for pulse index l (1-based) on the grid.
  std::vector<cplx> forward_frame(const ParameterMaps& x, const Responses& r,
                                  std::span<const cplx> phase, const TemporalGrid& grid,
                                  int l) const;

  // F_S from precomputed responses.
  double objective(const ParameterMaps& x, const Responses& r, std::span<const cplx> phase,
                   const TemporalGrid& grid) const;

  // F_S and its gradient; r must carry derivatives. grad is resized to x.
  double gradient(const ParameterMaps& x, const Responses& r, std::span<const cplx> phase,
                  const TemporalGrid& grid, ParameterMaps& grad) const;

  // k-space residuals F(rho q y) - y_l at the sampled entries of every grid
  // frame, frames concatenated in grid order and entries in pixel order;
  // returns F_S.
  double residual(const ParameterMaps& x, const Responses& r, std::span<const cplx> phase,
                  const TemporalGrid& grid, CplxBuffer& out) const;
  // Gradient of F_S from residuals computed at the same point. The T1 and T2
  // entries are left at zero when r carries no derivatives.
  void backproject(const ParameterMaps& x, const Responses& r, std::span<const cplx> phase,
                   const TemporalGrid& grid, std::span<const cplx> residual,
                   ParameterMaps& grad) const;

  // Entry points that simulate internally.
  double objective(const ParameterMaps& x, const TemporalGrid& grid) const;
  ObjectiveReport gradient(const ParameterMaps& x, const TemporalGrid& grid) const;
  // F = F_{S_1(1)}.
  double true_objective(const ParameterMaps& x) const;

  // Q'_{l,S}(x) h and its adjoint for a single frame.
  std::vector<cplx> jacobian_apply(const ParameterMaps& x, const TemporalGrid& grid, int l,
                                   const ParameterMaps& h) const;
  ParameterMaps jacobian_adjoint(const ParameterMaps& x, const TemporalGrid& grid, int l,
                                 std::span<const cplx> w) const;

 private:
  std::size_t frame_of(const TemporalGrid& grid, int l) const;
  void masked_residual(const ParameterMaps& x, const Responses& r, std::span<const cplx> phase,
                       const TemporalGrid& grid, std::size_t j, cplx* s, double& half_sq) const;
  void accumulate_chunk(const ParameterMaps& x, const Responses& r, std::span<const cplx> phase,
                        std::size_t j0, std::size_t j1, const cplx* back,
                        ParameterMaps& grad) const;

  std::vector<std::size_t> residual_offsets(const TemporalGrid& grid) const;

  const AcquisitionData& data_;
  Fourier2D fft_;
  std::vector<std::vector<std::uint32_t>> sampled_;  // sampled pixel indices per frame
};

}  // namespace msmrf
