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


// Dictionary-based baseline reconstruction and initializer.
//
// Atoms are lab-frame transverse responses m_x + i m_y of the exact Bloch
// recursion over a (T1, T2, omega) grid. The reconstruction alternates a
// Landweber step on the image time series X,
//
//   X <- X + mu F^-1 P (y - P F X),
//
// with a per-voxel projection onto the closest scaled atom.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "msmrf/bloch.hpp"
#include "msmrf/fourier.hpp"
#include "msmrf/maps.hpp"
#include "msmrf/mri_operator.hpp"

namespace msmrf {

struct DictionaryGrid {
  std::vector<double> t1;     // ms
  std::vector<double> t2;     // ms
  std::vector<double> omega;  // Hz

  // T1 = 500..6000 ms step 500, T2 = 50..600 ms step 50, omega = -50..50 Hz
  // step 10: 12 x 12 x 11 = 1584 atoms.
  static DictionaryGrid coarse();

  std::size_t size() const { return t1.size() * t2.size() * omega.size(); }
  // Throws DomainError on an empty axis or invalid tissue values.
  void validate() const;
  bool operator==(const DictionaryGrid&) const = default;
};

// Atom a = (i1 * |T2| + i2) * |omega| + i3 for grid indices (i1, i2, i3).
struct Dictionary {
  DictionaryGrid grid;
  double tr = 0.0;
  std::size_t length = 0;            // L
  std::vector<TissueParams> params;  // rho = 1
  std::vector<cplx> atoms;           // atom-major, atoms[a * length + l]
  std::vector<double> norms;

  std::size_t size() const { return params.size(); }
  std::span<const cplx> atom(std::size_t a) const {
    return {atoms.data() + a * length, length};
  }
  // Throws DataIntegrityError on inconsistent sizes or a zero atom.
  void validate() const;
};

Dictionary build_dictionary(const DictionaryGrid& grid, const FlipSchedule& sched);

// Rebuilds params and norms from grid and atoms (after loading from disk).
Dictionary assemble_dictionary(const DictionaryGrid& grid, double tr, std::size_t length,
                               std::vector<cplx> atoms);

enum class MatchMode {
  // argmax Re<d,s>/|d|, rho = max(0, Re<d,s>)/|d|^2. Omega only enters an
  // atom as a constant phase, so the real part is what separates omega
  // values.
  kRealPart,
  // argmax |<d,s>|/|d|, rho = |<d,s>|/|d|^2.
  kModulus,
};

MatchMode parse_match_mode(const std::string& s);  // "real" | "modulus"
std::string to_string(MatchMode m);

struct Match {
  std::size_t atom = 0;
  double rho = 0.0;
};

// Exhaustive search; ties go to the lowest atom index, so an all-zero signal
// returns atom 0 with rho = 0.
Match match_voxel(std::span<const cplx> signal, const Dictionary& dict,
                  MatchMode mode = MatchMode::kRealPart);

// Batched matching for many voxels (one dense product per voxel block).
class DictionaryProjector {
 public:
  DictionaryProjector(const Dictionary& dict, MatchMode mode);

  const Dictionary& dictionary() const { return dict_; }
  MatchMode mode() const { return mode_; }

  // Matches every voxel of a frame-major series x[l * pixels + p] and
  // replaces it by rho * atom. Outputs are resized to pixels.
  void project(cplx* x, std::size_t pixels, std::vector<std::uint32_t>& atom,
               std::vector<double>& rho) const;

 private:
  const Dictionary& dict_;
  MatchMode mode_;
  std::vector<double> real_basis_;  // interleaved (re, im) / |d|, per atom
  std::vector<double> imag_basis_;  // interleaved (-im, re) / |d|; modulus only
};

struct BlipConfig {
  int iterations = 50;
  double step = 1.0;  // mu
  MatchMode match = MatchMode::kRealPart;

  void validate() const;  // ConfigError unless iterations >= 1 and step > 0
};

struct BlipResult {
  ParameterMaps maps;
  // ||y - P F X|| before each gradient step.
  std::vector<double> residuals;
};

// ||y - P F X|| over all frames; x is frame-major with data.pixels() entries
// per frame.
double data_residual(const AcquisitionData& data, const Fourier2D& fft, const cplx* x);

// One Landweber step in place; returns the residual norm before the step.
double landweber_step(const AcquisitionData& data, const Fourier2D& fft, cplx* x, double mu);

// Throws NumericalError when the residual becomes non-finite or exceeds 10x
// its initial value.
BlipResult blip_reconstruct(const AcquisitionData& data, const Dictionary& dict,
                            const BlipConfig& cfg = {});

}  // namespace msmrf
