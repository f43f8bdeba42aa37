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

// Synthetic phantoms, retrospective acquisition simulation, EPI sampling and
// reconstruction metrics.

#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "msmrf/bloch.hpp"
#include "msmrf/maps.hpp"
#include "msmrf/mri_operator.hpp"

namespace msmrf {

enum class PhantomKind { kEllipses, kBlocks };

PhantomKind parse_phantom_kind(const std::string& s);  // "ellipses" | "blocks"
std::string to_string(PhantomKind k);

// Reference tissue labels (T1, T2 in ms).
inline constexpr TissueParams kWhiteMatter{0.69, 811.0, 77.0, 0.0};
inline constexpr TissueParams kGreyMatter{0.86, 1331.0, 110.0, 0.0};
inline constexpr TissueParams kCsf{1.0, 4500.0, 500.0, 0.0};

struct Phantom {
  ParameterMaps truth;
  std::vector<std::uint8_t> foreground;  // truth rho > 0

  std::size_t foreground_count() const;
};

// Piecewise-constant tissue regions with a seeded smooth omega ramp
// (|omega| <= 35 Hz). Background pixels have rho = 0 and occupy at least a
// quarter of the image. size >= 16.
Phantom make_phantom(int size, PhantomKind kind, std::uint64_t seed);

// Rows (phase-encode index) congruent to a per-frame random offset modulo
// 1/rate are fully sampled. 1/rate must be an integer dividing rows.
std::vector<SamplingMask> make_epi_masks(int rows, int cols, double rate, std::size_t length,
                                         std::uint64_t seed);
// Shot spacing 1/rate as an integer; throws DomainError if rate is not the
// reciprocal of an integer dividing rows.
int epi_spacing(int rows, double rate);

// y_l = P_l F(rho (m_x + i m_y)) from simulate_exact per pixel, plus complex
// Gaussian noise of standard deviation sigma per sampled entry.
AcquisitionData simulate_acquisition(const ParameterMaps& truth, const FlipSchedule& sched,
                                     std::vector<SamplingMask> masks, double noise_sigma,
                                     std::uint64_t noise_seed);

inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

// 10 log10(peak^2 / MSE) over the pixels selected by mask (all pixels when
// mask is empty); +inf when MSE is 0.
double psnr(std::span<const double> recon, std::span<const double> truth, double peak,
            std::span<const std::uint8_t> mask = {});

// 100 * mean |recon - truth| / |truth| over the mask. Throws DomainError for
// an empty mask or a zero truth value inside it.
double mape(std::span<const double> recon, std::span<const double> truth,
            std::span<const std::uint8_t> mask);

// ((recon - truth + P/2) mod P) - P/2 per pixel, with a floored modulo.
std::vector<double> omega_wrap_error(std::span<const double> recon,
                                     std::span<const double> truth, double period);

struct MetricsReport {
  std::array<double, kChannels> psnr{};
  std::array<double, 3> mape{};  // rho, T1, T2
  std::array<double, kChannels> peak{};
  // Same metric over every pixel with peak max |truth| of the whole map.
  std::array<double, kChannels> psnr_all{};
  std::size_t foreground_pixels = 0;
  double omega_period = 0.0;
};

// PSNR on all four channels (omega wrapped) and MAPE on rho, T1, T2, all over
// the truth foreground (rho > 0); peak is max |truth| over the foreground.
// psnr_all repeats the PSNR over all pixels.
MetricsReport evaluate(const ParameterMaps& recon, const ParameterMaps& truth,
                       double omega_period);

}  // namespace msmrf
