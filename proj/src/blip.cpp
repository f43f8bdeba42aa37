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


#include "msmrf/blip.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "msmrf/error.hpp"

namespace msmrf {

namespace {

// Voxels per dense product in DictionaryProjector::project.
constexpr std::size_t kVoxelBlock = 64;

std::vector<double> arange(double first, double last, double step) {
  std::vector<double> v;
  const int n = static_cast<int>(std::lround((last - first) / step));
  for (int i = 0; i <= n; ++i) v.push_back(first + i * step);
  return v;
}

void check_axis(const std::vector<double>& v, const char* name, bool positive) {
  if (v.empty()) throw DomainError(std::string("dictionary grid: empty ") + name + " axis");
  for (double x : v) {
    if (!std::isfinite(x) || (positive && x <= 0.0))
      throw DomainError(std::string("dictionary grid: invalid ") + name + " value");
  }
}

double frame_step(const AcquisitionData& data, const Fourier2D& fft, cplx* x, std::size_t l,
                  double mu, CplxBuffer& k, CplxBuffer& back) {
  const std::size_t n = data.pixels();
  const cplx* y = data.frames[l].data();
  const std::uint8_t* on = data.masks[l].on.data();
  fft.forward(x, k.data());
  double sq = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const cplx r = on[p] ? y[p] - k[p] : cplx(0.0);
    sq += std::norm(r);
    k[p] = r;
  }
  if (mu != 0.0) {
    fft.inverse(k.data(), back.data());
    for (std::size_t p = 0; p < n; ++p) x[p] += mu * back[p];
  }
  return sq;
}

// Residual norm over all frames, optionally taking the step; per-frame sums
// are added in frame order so the result does not depend on the thread count.
double sweep(const AcquisitionData& data, const Fourier2D& fft, cplx* x, double mu) {
  const std::size_t frames = data.length(), n = data.pixels();
  if (fft.size() != n) throw DomainError("BLIP: transform size does not match the data");
  std::vector<double> sq(frames);
#pragma omp parallel
  {
    CplxBuffer k(n), back(n);
#pragma omp for schedule(static)
    for (std::size_t l = 0; l < frames; ++l)
      sq[l] = frame_step(data, fft, x + l * n, l, mu, k, back);
  }
  double total = 0.0;
  for (double s : sq) total += s;
  return std::sqrt(total);
}

}  // namespace

DictionaryGrid DictionaryGrid::coarse() {
  return {arange(500.0, 6000.0, 500.0), arange(50.0, 600.0, 50.0), arange(-50.0, 50.0, 10.0)};
}

void DictionaryGrid::validate() const {
  check_axis(t1, "T1", true);
  check_axis(t2, "T2", true);
  check_axis(omega, "omega", false);
}

void Dictionary::validate() const {
  grid.validate();
  const std::size_t n = grid.size();
  if (length == 0 || params.size() != n || norms.size() != n || atoms.size() != n * length)
    throw DataIntegrityError("dictionary: inconsistent sizes");
  for (double v : norms)
    if (!(v > 0.0) || !std::isfinite(v)) throw DataIntegrityError("dictionary: zero or non-finite atom");
}

Dictionary assemble_dictionary(const DictionaryGrid& grid, double tr, std::size_t length,
                               std::vector<cplx> atoms) {
  grid.validate();
  Dictionary d;
  d.grid = grid;
  d.tr = tr;
  d.length = length;
  d.atoms = std::move(atoms);
  for (double t1 : grid.t1)
    for (double t2 : grid.t2)
      for (double w : grid.omega) d.params.push_back({1.0, t1, t2, w});
  if (d.atoms.size() != d.params.size() * length)
    throw DataIntegrityError("dictionary: atom data does not match the grid");
  d.norms.resize(d.params.size());
  for (std::size_t a = 0; a < d.size(); ++a) {
    double sq = 0.0;
    for (const cplx& v : d.atom(a)) sq += std::norm(v);
    d.norms[a] = std::sqrt(sq);
  }
  d.validate();
  return d;
}

Dictionary build_dictionary(const DictionaryGrid& grid, const FlipSchedule& sched) {
  grid.validate();
  sched.validate();
  const std::size_t L = sched.length();
  const std::size_t n2 = grid.t2.size(), n3 = grid.omega.size();
  const std::size_t count = grid.size();
  std::vector<cplx> atoms(count * L);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::size_t a = 0; a < count; ++a) {
    const TissueParams u{1.0, grid.t1[a / (n2 * n3)], grid.t2[(a / n3) % n2], grid.omega[a % n3]};
    const std::vector<MagState> m = simulate_exact(u, sched);
    for (std::size_t l = 0; l < L; ++l) atoms[a * L + l] = cplx(m[l].x(), m[l].y());
  }
  return assemble_dictionary(grid, sched.tr, L, std::move(atoms));
}

MatchMode parse_match_mode(const std::string& s) {
  if (s == "real") return MatchMode::kRealPart;
  if (s == "modulus") return MatchMode::kModulus;
  throw ConfigError("unknown match mode '" + s + "' (expected real or modulus)");
}

std::string to_string(MatchMode m) { return m == MatchMode::kModulus ? "modulus" : "real"; }

Match match_voxel(std::span<const cplx> signal, const Dictionary& dict, MatchMode mode) {
  if (dict.size() == 0) throw DomainError("match_voxel: empty dictionary");
  if (signal.size() != dict.length) throw DomainError("match_voxel: signal length mismatch");
  std::size_t best = 0;
  double best_score = 0.0, best_inner = 0.0;
  for (std::size_t a = 0; a < dict.size(); ++a) {
    cplx inner = 0.0;
    const std::span<const cplx> d = dict.atom(a);
    for (std::size_t l = 0; l < d.size(); ++l) inner += std::conj(d[l]) * signal[l];
    const double v = mode == MatchMode::kModulus ? std::abs(inner) : inner.real();
    const double score = v / dict.norms[a];
    if (a == 0 || score > best_score) {
      best = a;
      best_score = score;
      best_inner = v;
    }
  }
  const double n = dict.norms[best];
  return {best, std::max(0.0, best_inner) / (n * n)};
}

DictionaryProjector::DictionaryProjector(const Dictionary& dict, MatchMode mode)
    : dict_(dict), mode_(mode) {
  dict.validate();
  const std::size_t L = dict.length;
  real_basis_.resize(dict.size() * 2 * L);
  if (mode == MatchMode::kModulus) imag_basis_.resize(real_basis_.size());
  for (std::size_t a = 0; a < dict.size(); ++a) {
    const double inv = 1.0 / dict.norms[a];
    const cplx* d = dict.atoms.data() + a * L;
    double* re = real_basis_.data() + a * 2 * L;
    for (std::size_t l = 0; l < L; ++l) {
      re[2 * l] = d[l].real() * inv;
      re[2 * l + 1] = d[l].imag() * inv;
    }
    if (mode == MatchMode::kModulus) {
      double* im = imag_basis_.data() + a * 2 * L;
      for (std::size_t l = 0; l < L; ++l) {
        im[2 * l] = -d[l].imag() * inv;
        im[2 * l + 1] = d[l].real() * inv;
      }
    }
  }
}

void DictionaryProjector::project(cplx* x, std::size_t pixels, std::vector<std::uint32_t>& atom,
                                  std::vector<double>& rho) const {
  using Eigen::Index;
  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>;
  const std::size_t L = dict_.length, A = dict_.size();
  const Eigen::Map<const Matrix> re_basis(real_basis_.data(), static_cast<Index>(2 * L),
                                          static_cast<Index>(A));
  const Eigen::Map<const Matrix> im_basis(imag_basis_.empty() ? nullptr : imag_basis_.data(),
                                          static_cast<Index>(2 * L), static_cast<Index>(A));
  atom.assign(pixels, 0);
  rho.assign(pixels, 0.0);
  const std::size_t blocks = (pixels + kVoxelBlock - 1) / kVoxelBlock;

  // A product issued inside a parallel region runs single-threaded, which
  // keeps its blocking, and so its rounding, independent of the thread count.
#pragma omp parallel
  {
    Matrix signals, re, im;
#pragma omp for schedule(static)
    for (std::size_t b = 0; b < blocks; ++b) {
      const std::size_t p0 = b * kVoxelBlock;
      const std::size_t nb = std::min(kVoxelBlock, pixels - p0);
      signals.resize(static_cast<Index>(2 * L), static_cast<Index>(nb));
      for (std::size_t l = 0; l < L; ++l) {
        const cplx* row = x + l * pixels + p0;
        for (std::size_t c = 0; c < nb; ++c) {
          signals(static_cast<Index>(2 * l), static_cast<Index>(c)) = row[c].real();
          signals(static_cast<Index>(2 * l + 1), static_cast<Index>(c)) = row[c].imag();
        }
      }
      re.noalias() = re_basis.transpose() * signals;
      if (mode_ == MatchMode::kModulus) im.noalias() = im_basis.transpose() * signals;
      for (std::size_t c = 0; c < nb; ++c) {
        const auto col = static_cast<Index>(c);
        auto score = [&](Index a) {
          return mode_ == MatchMode::kModulus ? std::hypot(re(a, col), im(a, col)) : re(a, col);
        };
        Index best = 0;
        double best_score = score(0);
        for (Index a = 1; a < static_cast<Index>(A); ++a) {
          const double s = score(a);
          if (s > best_score) {
            best = a;
            best_score = s;
          }
        }
        atom[p0 + c] = static_cast<std::uint32_t>(best);
        rho[p0 + c] = std::max(0.0, best_score) / dict_.norms[static_cast<std::size_t>(best)];
      }
      for (std::size_t l = 0; l < L; ++l) {
        cplx* row = x + l * pixels + p0;
        for (std::size_t c = 0; c < nb; ++c)
          row[c] = rho[p0 + c] * dict_.atoms[atom[p0 + c] * L + l];
      }
    }
  }
}

void BlipConfig::validate() const {
  if (iterations < 1) throw ConfigError("BLIP: iterations must be >= 1");
  if (!(step > 0.0) || !std::isfinite(step)) throw ConfigError("BLIP: step must be positive");
}

double data_residual(const AcquisitionData& data, const Fourier2D& fft, const cplx* x) {
  return sweep(data, fft, const_cast<cplx*>(x), 0.0);
}

double landweber_step(const AcquisitionData& data, const Fourier2D& fft, cplx* x, double mu) {
  return sweep(data, fft, x, mu);
}

BlipResult blip_reconstruct(const AcquisitionData& data, const Dictionary& dict,
                            const BlipConfig& cfg) {
  cfg.validate();
  data.validate();
  dict.validate();
  if (dict.length != data.length())
    throw DataIntegrityError("BLIP: dictionary length " + std::to_string(dict.length) +
                             " does not match " + std::to_string(data.length()) + " frames");
  if (std::abs(dict.tr - data.schedule.tr) > 1e-12 * data.schedule.tr)
    throw DataIntegrityError("BLIP: dictionary TR does not match the acquisition");

  const std::size_t n = data.pixels();
  const Fourier2D fft(data.rows, data.cols);
  const DictionaryProjector projector(dict, cfg.match);
  CplxBuffer x(data.length() * n, cplx(0.0));
  std::vector<std::uint32_t> atom;
  std::vector<double> rho;

  BlipResult out;
  for (int it = 0; it < cfg.iterations; ++it) {
    const double r = landweber_step(data, fft, x.data(), cfg.step);
    out.residuals.push_back(r);
    if (!std::isfinite(r))
      throw NumericalError("BLIP: non-finite residual at iteration " + std::to_string(it + 1));
    if (r > 10.0 * out.residuals.front())
      throw NumericalError("BLIP diverged: residual " + std::to_string(r) + " at iteration " +
                           std::to_string(it + 1) + " exceeds 10x the initial " +
                           std::to_string(out.residuals.front()));
    projector.project(x.data(), n, atom, rho);
  }

  out.maps = ParameterMaps(data.rows, data.cols);
  for (std::size_t p = 0; p < n; ++p) {
    const TissueParams& u = dict.params[atom[p]];
    out.maps.set(p, {rho[p], u.t1, u.t2, u.omega});
  }
  return out;
}

}  // namespace msmrf
