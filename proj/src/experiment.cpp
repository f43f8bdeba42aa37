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

#include "msmrf/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "msmrf/error.hpp"
#include "msmrf/fourier.hpp"
#include "msmrf/random.hpp"

namespace msmrf {

PhantomKind parse_phantom_kind(const std::string& s) {
  if (s == "ellipses") return PhantomKind::kEllipses;
  if (s == "blocks") return PhantomKind::kBlocks;
  throw ConfigError("unknown phantom kind '" + s + "' (expected ellipses or blocks)");
}

std::string to_string(PhantomKind k) {
  return k == PhantomKind::kEllipses ? "ellipses" : "blocks";
}

std::size_t Phantom::foreground_count() const {
  return static_cast<std::size_t>(std::count(foreground.begin(), foreground.end(), 1));
}

namespace {

struct Region {
  double cx, cy, ax, ay, angle;  // normalized coordinates in [-1, 1]
  TissueParams tissue;
};

bool inside(const Region& r, double x, double y, PhantomKind kind) {
  const double c = std::cos(r.angle), s = std::sin(r.angle);
  const double u = (c * (x - r.cx) + s * (y - r.cy)) / r.ax;
  const double v = (-s * (x - r.cx) + c * (y - r.cy)) / r.ay;
  if (kind == PhantomKind::kEllipses) return u * u + v * v <= 1.0;
  return std::abs(u) <= 1.0 && std::abs(v) <= 1.0;
}

}  // namespace

Phantom make_phantom(int size, PhantomKind kind, std::uint64_t seed) {
  if (size < 16) throw DomainError("phantom size must be at least 16");
  Rng rng = make_stream(seed, RngStream::kPhantom);
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  auto j = [&](double amount) { return amount * jitter(rng); };

  // Later regions paint over earlier ones.
  const bool blocks = kind == PhantomKind::kBlocks;
  const double shrink = blocks ? 0.8 : 1.0;
  std::vector<Region> regions;
  regions.push_back({j(0.03), j(0.03), 0.78 * shrink, 0.66 * shrink, j(0.1), kGreyMatter});
  regions.push_back({j(0.03), j(0.03), 0.56 * shrink, 0.46 * shrink, j(0.1), kWhiteMatter});
  regions.push_back({-0.2 + j(0.03), j(0.05), 0.1, 0.24, 0.25 + j(0.1), kCsf});
  regions.push_back({0.2 + j(0.03), j(0.05), 0.1, 0.24, -0.25 + j(0.1), kCsf});
  // A small lesion-like region with intermediate values.
  regions.push_back({j(0.1), 0.33 + j(0.03), 0.08, 0.06, j(0.5),
                     TissueParams{1.17, 1800.0, 240.0, 0.0}});

  const double theta = 2.0 * std::numbers::pi * std::uniform_real_distribution<double>(0, 1)(rng);
  constexpr double kRampHz = 35.0;

  Phantom ph;
  ph.truth = ParameterMaps(size, size);
  ph.foreground.assign(ph.truth.pixels(), 0);
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const double x = (2.0 * c + 1.0) / size - 1.0;
      const double y = (2.0 * r + 1.0) / size - 1.0;
      TissueParams u{0.0, 1000.0, 100.0, 0.0};
      bool fg = false;
      for (const Region& reg : regions)
        if (inside(reg, x, y, kind)) {
          u = reg.tissue;
          fg = true;
        }
      u.omega = kRampHz * (std::cos(theta) * x + std::sin(theta) * y) / std::numbers::sqrt2;
      const std::size_t p = static_cast<std::size_t>(r) * size + c;
      ph.truth.set(p, u);
      ph.foreground[p] = fg ? 1 : 0;
    }
  }
  return ph;
}

int epi_spacing(int rows, double rate) {
  if (!(rate > 0.0) || rate > 1.0) throw DomainError("sampling rate must be in (0, 1]");
  const double inv = 1.0 / rate;
  const int spacing = static_cast<int>(std::lround(inv));
  if (std::abs(inv - spacing) > 1e-9 * inv)
    throw DomainError("sampling rate must be the reciprocal of an integer");
  if (rows % spacing != 0)
    throw DomainError("1/rate = " + std::to_string(spacing) + " does not divide " +
                      std::to_string(rows) + " phase-encode rows");
  return spacing;
}

std::vector<SamplingMask> make_epi_masks(int rows, int cols, double rate, std::size_t length,
                                         std::uint64_t seed) {
  if (rows < 1 || cols < 1) throw DomainError("mask dimensions must be positive");
  const int spacing = epi_spacing(rows, rate);
  Rng rng = make_stream(seed, RngStream::kMasks);
  std::vector<SamplingMask> masks(length);
  for (auto& m : masks) {
    const int offset = randi(rng, spacing) - 1;
    m.rows = rows;
    m.cols = cols;
    m.on.assign(static_cast<std::size_t>(rows) * cols, 0);
    for (int r = offset; r < rows; r += spacing)
      std::fill_n(m.on.begin() + static_cast<std::ptrdiff_t>(r) * cols, cols, 1);
  }
  return masks;
}

AcquisitionData simulate_acquisition(const ParameterMaps& truth, const FlipSchedule& sched,
                                     std::vector<SamplingMask> masks, double noise_sigma,
                                     std::uint64_t noise_seed) {
  truth.validate();
  sched.validate();
  if (masks.size() != sched.length())
    throw DomainError("need one sampling mask per frame");
  if (!(noise_sigma >= 0.0)) throw DomainError("noise sigma must be non-negative");
  for (const auto& m : masks)
    if (m.rows != truth.rows || m.cols != truth.cols)
      throw DomainError("sampling mask shape does not match the phantom");

  const std::size_t n = truth.pixels(), L = sched.length();
  for (std::size_t p = 0; p < n; ++p) truth.tissue(p).validate();

  // Transverse signal per frame, frame-major.
  std::vector<cplx> signal(L * n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t pp = 0; pp < static_cast<std::ptrdiff_t>(n); ++pp) {
    const std::size_t p = static_cast<std::size_t>(pp);
    const TissueParams u = truth.tissue(p);
    const auto m = simulate_exact(u, sched);
    for (std::size_t l = 0; l < L; ++l) signal[l * n + p] = u.rho * cplx(m[l](0), m[l](1));
  }

  AcquisitionData data;
  data.rows = truth.rows;
  data.cols = truth.cols;
  data.schedule = sched;
  data.masks = std::move(masks);
  data.frames.assign(L, std::vector<cplx>(n));
  const Fourier2D fft(truth.rows, truth.cols);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ll = 0; ll < static_cast<std::ptrdiff_t>(L); ++ll) {
    const std::size_t l = static_cast<std::size_t>(ll);
    auto& k = data.frames[l];
    fft.forward(signal.data() + l * n, k.data());
    for (std::size_t i = 0; i < n; ++i)
      if (!data.masks[l].on[i]) k[i] = 0.0;
  }
  if (noise_sigma > 0.0) {
    Rng rng = make_stream(noise_seed, RngStream::kNoise);
    std::normal_distribution<double> g(0.0, noise_sigma / std::numbers::sqrt2);
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t i = 0; i < n; ++i)
        if (data.masks[l].on[i]) {
          const double re = g(rng);
          const double im = g(rng);
          data.frames[l][i] += cplx(re, im);
        }
  }
  return data;
}

double psnr(std::span<const double> recon, std::span<const double> truth, double peak,
            std::span<const std::uint8_t> mask) {
  if (recon.size() != truth.size()) throw DomainError("psnr: shape mismatch");
  if (!mask.empty() && mask.size() != truth.size()) throw DomainError("psnr: mask shape mismatch");
  double sse = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    const double d = recon[i] - truth[i];
    sse += d * d;
    ++count;
  }
  if (count == 0) throw DomainError("psnr: empty mask");
  if (sse == 0.0) return kInfinitePsnr;
  return 10.0 * std::log10(peak * peak / (sse / static_cast<double>(count)));
}

double mape(std::span<const double> recon, std::span<const double> truth,
            std::span<const std::uint8_t> mask) {
  if (recon.size() != truth.size() || mask.size() != truth.size())
    throw DomainError("mape: shape mismatch");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!mask[i]) continue;
    if (truth[i] == 0.0) throw DomainError("mape: zero truth value inside the mask");
    sum += std::abs(recon[i] - truth[i]) / std::abs(truth[i]);
    ++count;
  }
  if (count == 0) throw DomainError("mape: empty mask");
  return 100.0 * sum / static_cast<double>(count);
}

std::vector<double> omega_wrap_error(std::span<const double> recon,
                                     std::span<const double> truth, double period) {
  if (!(period > 0.0)) throw DomainError("omega period must be positive");
  if (recon.size() != truth.size()) throw DomainError("omega_wrap_error: shape mismatch");
  std::vector<double> out(truth.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d = recon[i] - truth[i] + 0.5 * period;
    out[i] = d - period * std::floor(d / period) - 0.5 * period;
  }
  return out;
}

MetricsReport evaluate(const ParameterMaps& recon, const ParameterMaps& truth,
                       double omega_period) {
  recon.validate();
  truth.validate();
  if (!recon.same_shape(truth)) throw DomainError("evaluate: map shapes differ");
  std::vector<std::uint8_t> fg(truth.pixels());
  for (std::size_t p = 0; p < fg.size(); ++p) fg[p] = truth[kRho][p] > 0.0 ? 1 : 0;

  MetricsReport rep;
  rep.omega_period = omega_period;
  rep.foreground_pixels = static_cast<std::size_t>(std::count(fg.begin(), fg.end(), 1));
  if (rep.foreground_pixels == 0) throw DomainError("evaluate: truth has no foreground");
  for (int c = 0; c < kChannels; ++c) {
    double peak = 0.0;
    for (std::size_t p = 0; p < fg.size(); ++p)
      if (fg[p]) peak = std::max(peak, std::abs(truth[c][p]));
    rep.peak[c] = peak;
    double peak_all = 0.0;
    for (double v : truth[c]) peak_all = std::max(peak_all, std::abs(v));
    if (c == kOmega) {
      const auto err = omega_wrap_error(recon[c], truth[c], omega_period);
      const std::vector<double> zero(err.size(), 0.0);
      rep.psnr[c] = psnr(err, zero, peak, fg);
      rep.psnr_all[c] = psnr(err, zero, peak_all);
    } else {
      rep.psnr[c] = psnr(recon[c], truth[c], peak, fg);
      rep.psnr_all[c] = psnr(recon[c], truth[c], peak_all);
      rep.mape[c] = mape(recon[c], truth[c], fg);
    }
  }
  return rep;
}

}  // namespace msmrf
