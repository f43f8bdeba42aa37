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

#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <new>
#include <vector>

namespace msmrf {

using cplx = std::complex<double>;

// 64-byte aligned storage, so FFT buffers can use the SIMD plans directly.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using CplxBuffer = std::vector<cplx, AlignedAllocator<cplx>>;

// Unitary 2D DFT on a rows x cols row-major grid (scaled by 1/sqrt(rows*cols)
// in both directions, so the inverse is the adjoint). Backed by FFTW; plans
// are created once and execution is safe from several threads. In-place use
// (in == out) is allowed. Every call runs the same out-of-place plan;
// unaligned or in-place arguments go through a per-thread aligned scratch
// buffer, so results do not depend on where the data lives.
class Fourier2D {
 public:
  Fourier2D(int rows, int cols);
  ~Fourier2D();
  Fourier2D(const Fourier2D&) = delete;
  Fourier2D& operator=(const Fourier2D&) = delete;

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return static_cast<std::size_t>(rows_) * cols_; }

  void forward(const cplx* in, cplx* out) const;
  void inverse(const cplx* in, cplx* out) const;

 private:
  struct Plans;
  int rows_, cols_;
  double scale_;
  std::unique_ptr<Plans> plans_;
};

}  // namespace msmrf
