/* Copyright 2026 The EAE Authors. All Rights Reserved.

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

#include <algorithm>
#include <cmath>
#include <numeric>

#include "eae/nn.hpp"

namespace eae::nn {

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
  const std::size_t n = std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>());
  values_.assign(n, fill);
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void matvec(const double* m, std::size_t rows, std::size_t cols, const double* x, double* y, bool accumulate) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = m + r * cols;
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += row[c] * x[c];
    y[r] = accumulate ? y[r] + s : s;
  }
}

void matvec_t_acc(const double* m, std::size_t rows, std::size_t cols, const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = m + r * cols;
    const double xr = x[r];
    for (std::size_t c = 0; c < cols; ++c) y[c] += row[c] * xr;
  }
}

void outer_acc(double* m, std::size_t rows, std::size_t cols, const double* a, const double* b) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = m + r * cols;
    const double ar = a[r];
    for (std::size_t c = 0; c < cols; ++c) row[c] += ar * b[c];
  }
}

void init_uniform(Tensor& t, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& v : t.values()) v = u(rng);
}

// Orthonormal rows via modified Gram-Schmidt on a seeded Gaussian matrix.
void init_orthogonal(Tensor& t, std::mt19937_64& rng) {
  const std::size_t n = t.rows();
  const std::size_t m = t.cols();
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto& v : t.values()) v = g(rng);
  for (std::size_t i = 0; i < n && i < m; ++i) {
    double* ri = t.data() + i * m;
    for (std::size_t j = 0; j < i; ++j) {
      const double* rj = t.data() + j * m;
      double d = 0.0;
      for (std::size_t c = 0; c < m; ++c) d += ri[c] * rj[c];
      for (std::size_t c = 0; c < m; ++c) ri[c] -= d * rj[c];
    }
    double norm = 0.0;
    for (std::size_t c = 0; c < m; ++c) norm += ri[c] * ri[c];
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (std::size_t c = 0; c < m; ++c) ri[c] /= norm;
  }
}

SplineKernel::SplineKernel(int k, int in, int out)
    : lattice(k),
      c_in(in),
      c_out(out),
      control({static_cast<std::size_t>(k * k), static_cast<std::size_t>(out), static_cast<std::size_t>(in)}),
      self({static_cast<std::size_t>(out), static_cast<std::size_t>(in)}) {
  if (k < 2) throw InvalidInput("spline lattice needs at least 2 points per axis");
  if (in < 1 || out < 1) throw InvalidInput("spline channel counts must be positive");
}

GRUParams::GRUParams(int in, int hid)
    : input(in),
      hidden(hid),
      wz({static_cast<std::size_t>(hid), static_cast<std::size_t>(in)}),
      uz({static_cast<std::size_t>(hid), static_cast<std::size_t>(hid)}),
      bz({static_cast<std::size_t>(hid)}),
      wr({static_cast<std::size_t>(hid), static_cast<std::size_t>(in)}),
      ur({static_cast<std::size_t>(hid), static_cast<std::size_t>(hid)}),
      br({static_cast<std::size_t>(hid)}),
      wh({static_cast<std::size_t>(hid), static_cast<std::size_t>(in)}),
      uh({static_cast<std::size_t>(hid), static_cast<std::size_t>(hid)}),
      bh({static_cast<std::size_t>(hid)}) {}

void init_spline(SplineKernel& k, int max_neighbors, std::mt19937_64& rng) {
  // the aggregation sums up to max_neighbors edge terms
  init_uniform(k.control, 1.0 / std::sqrt(static_cast<double>(k.c_in * (max_neighbors + 1))), rng);
  init_uniform(k.self, 1.0 / std::sqrt(static_cast<double>(k.c_in)), rng);
}

void init_gru(GRUParams& p, std::mt19937_64& rng) {
  const double b = 1.0 / std::sqrt(static_cast<double>(p.hidden));
  init_uniform(p.wz, b, rng);
  init_uniform(p.wr, b, rng);
  init_uniform(p.wh, b, rng);
  init_orthogonal(p.uz, rng);
  init_orthogonal(p.ur, rng);
  init_orthogonal(p.uh, rng);
  p.bz.fill(0.0);
  p.br.fill(0.0);
  p.bh.fill(0.0);
}

void init_linear(LinearParams& p, std::mt19937_64& rng) {
  const double b = 1.0 / std::sqrt(static_cast<double>(p.in()));
  init_uniform(p.weight, b, rng);
  init_uniform(p.bias, b, rng);
}

}  // namespace eae::nn
