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

#include "msmrf/fourier.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <new>

#include <fftw3.h>

#include "msmrf/error.hpp"

namespace msmrf {

namespace {
// FFTW's planner is not thread-safe.
std::mutex g_planner_mutex;
}  // namespace

struct Fourier2D::Plans {
  fftw_plan fwd = nullptr, inv = nullptr;
};

Fourier2D::Fourier2D(int rows, int cols)
    : rows_(rows), cols_(cols), plans_(std::make_unique<Plans>()) {
  if (rows < 1 || cols < 1) throw DomainError("Fourier2D: dimensions must be positive");
  scale_ = 1.0 / std::sqrt(static_cast<double>(rows) * cols);
  const std::size_t n = size();
  fftw_complex* a = fftw_alloc_complex(n);
  fftw_complex* b = fftw_alloc_complex(n);
  {
    std::lock_guard<std::mutex> lock(g_planner_mutex);
    plans_->fwd = fftw_plan_dft_2d(rows, cols, a, b, FFTW_FORWARD, FFTW_ESTIMATE);
    plans_->inv = fftw_plan_dft_2d(rows, cols, a, b, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  fftw_free(a);
  fftw_free(b);
  if (!plans_->fwd || !plans_->inv) throw NumericalError("Fourier2D: FFTW planning failed");
}

Fourier2D::~Fourier2D() {
  std::lock_guard<std::mutex> lock(g_planner_mutex);
  for (fftw_plan p : {plans_->fwd, plans_->inv})
    if (p) fftw_destroy_plan(p);
}

namespace {

struct Scratch {
  fftw_complex* a = nullptr;
  fftw_complex* b = nullptr;
  std::size_t capacity = 0;

  ~Scratch() {
    fftw_free(a);
    fftw_free(b);
  }
  void reserve(std::size_t n) {
    if (n <= capacity) return;
    fftw_free(a);
    fftw_free(b);
    a = fftw_alloc_complex(n);
    b = fftw_alloc_complex(n);
    if (!a || !b) throw std::bad_alloc();
    capacity = n;
  }
};

thread_local Scratch t_scratch;

bool simd_aligned(const void* p) {
  return fftw_alignment_of(static_cast<double*>(const_cast<void*>(p))) == 0;
}

void run(fftw_plan plan, const cplx* in, cplx* out, std::size_t n, double scale) {
  auto* src = reinterpret_cast<fftw_complex*>(const_cast<cplx*>(in));
  if (!simd_aligned(in)) {
    t_scratch.reserve(n);
    std::copy(in, in + n, reinterpret_cast<cplx*>(t_scratch.a));
    src = t_scratch.a;
  }
  if (simd_aligned(out) && static_cast<const void*>(out) != static_cast<const void*>(src)) {
    fftw_execute_dft(plan, src, reinterpret_cast<fftw_complex*>(out));
    for (std::size_t i = 0; i < n; ++i) out[i] *= scale;
    return;
  }
  t_scratch.reserve(n);
  fftw_execute_dft(plan, src, t_scratch.b);
  const cplx* res = reinterpret_cast<const cplx*>(t_scratch.b);
  for (std::size_t i = 0; i < n; ++i) out[i] = res[i] * scale;
}

}  // namespace

void Fourier2D::forward(const cplx* in, cplx* out) const { run(plans_->fwd, in, out, size(), scale_); }

void Fourier2D::inverse(const cplx* in, cplx* out) const { run(plans_->inv, in, out, size(), scale_); }

}  // namespace msmrf
