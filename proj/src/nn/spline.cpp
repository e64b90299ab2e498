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

#include "eae/nn.hpp"

namespace eae::nn {

namespace {

std::atomic<std::uint64_t> g_clamped{0};

// Per-thread accumulators of sum_j basis_b(e_ij) x_j over control points b.
struct SplineScratch {
  Vec acc;
  std::vector<char> used;
  std::vector<std::uint32_t> touched;

  void reset(std::size_t points, std::size_t c_in) {
    if (used.size() != points || acc.size() != points * c_in) {
      acc.assign(points * c_in, 0.0);
      used.assign(points, 0);
    }
    for (const auto b : touched) {
      used[b] = 0;
      std::fill_n(acc.begin() + static_cast<std::ptrdiff_t>(b * c_in), c_in, 0.0);
    }
    touched.clear();
  }
};

SplineScratch& scratch() {
  thread_local SplineScratch s;
  return s;
}

// Accumulates the basis-weighted neighbour features of node i; touched control
// points end up sorted ascending.
void gather_neighbors(const SplineKernel& k, const EventGraph& g, std::span<const double> x, std::size_t i,
                      SplineScratch& s) {
  const auto cin = static_cast<std::size_t>(k.c_in);
  s.reset(static_cast<std::size_t>(k.lattice * k.lattice), cin);
  for (std::size_t e = g.in_begin(i); e < g.in_end(i); ++e) {
    const auto& edge = g.edges()[e];
    const SplineBasis basis = spline_basis(edge.feature, k.lattice);
    const double* xj = x.data() + static_cast<std::size_t>(edge.src) * cin;
    for (int q = 0; q < 4; ++q) {
      const double w = basis.weight[static_cast<std::size_t>(q)];
      if (w == 0.0) continue;
      const std::uint32_t b = basis.index[static_cast<std::size_t>(q)];
      if (!s.used[b]) {
        s.used[b] = 1;
        s.touched.push_back(b);
      }
      double* a = s.acc.data() + b * cin;
      for (std::size_t c = 0; c < cin; ++c) a[c] += w * xj[c];
    }
  }
  std::sort(s.touched.begin(), s.touched.end());
}

}  // namespace

SplineBasis spline_basis(std::array<double, 2> e, int lattice) {
  for (auto& v : e) {
    if (!(v >= 0.0 && v <= 1.0)) {
      g_clamped.fetch_add(1, std::memory_order_relaxed);
      v = std::isnan(v) ? 0.5 : std::clamp(v, 0.0, 1.0);
    }
  }
  const int cells = lattice - 1;
  const double sx = e[0] * cells;
  const double sy = e[1] * cells;
  const int ax = std::min(static_cast<int>(std::floor(sx)), cells - 1);
  const int ay = std::min(static_cast<int>(std::floor(sy)), cells - 1);
  const double fx = sx - ax;
  const double fy = sy - ay;
  SplineBasis b;
  const auto idx = [lattice](int a, int c) { return static_cast<std::uint32_t>(c * lattice + a); };
  b.index = {idx(ax, ay), idx(ax + 1, ay), idx(ax, ay + 1), idx(ax + 1, ay + 1)};
  b.weight = {(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy};
  return b;
}

std::uint64_t spline_clamp_count() { return g_clamped.load(std::memory_order_relaxed); }

Vec spline_weight(const SplineKernel& k, std::array<double, 2> e) {
  const std::size_t n = static_cast<std::size_t>(k.c_out * k.c_in);
  Vec w(n, 0.0);
  const SplineBasis b = spline_basis(e, k.lattice);
  for (int q = 0; q < 4; ++q) {
    const double* m = k.control_matrix(b.index[static_cast<std::size_t>(q)]);
    for (std::size_t i = 0; i < n; ++i) w[i] += b.weight[static_cast<std::size_t>(q)] * m[i];
  }
  return w;
}

void spline_conv_node(const SplineKernel& k, const EventGraph& g, std::span<const double> x, std::size_t i,
                      double* out) {
  const auto cin = static_cast<std::size_t>(k.c_in);
  const auto cout = static_cast<std::size_t>(k.c_out);
  matvec(k.self.data(), cout, cin, x.data() + i * cin, out, false);
  SplineScratch& s = scratch();
  gather_neighbors(k, g, x, i, s);
  for (const auto b : s.touched) matvec(k.control_matrix(b), cout, cin, s.acc.data() + b * cin, out, true);
}

void spline_conv_forward(const SplineKernel& k, const EventGraph& g, std::span<const double> x,
                         std::span<double> out) {
  const std::size_t n = g.num_nodes();
  if (x.size() != n * static_cast<std::size_t>(k.c_in) || out.size() != n * static_cast<std::size_t>(k.c_out))
    throw InvalidInput("spline_conv_forward: feature buffer does not match kernel dimensions");
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    spline_conv_node(k, g, x, idx, out.data() + idx * static_cast<std::size_t>(k.c_out));
  }
}

void spline_conv_backward(const SplineKernel& k, const EventGraph& g, std::span<const double> x,
                          std::span<const double> dout, SplineKernel& grad, std::span<double> dx) {
  const auto cin = static_cast<std::size_t>(k.c_in);
  const auto cout = static_cast<std::size_t>(k.c_out);
  const std::size_t n = g.num_nodes();
  if (x.size() != n * cin || dx.size() != n * cin || dout.size() != n * cout)
    throw InvalidInput("spline_conv_backward: buffer does not match kernel dimensions");
  SplineScratch& s = scratch();
  const std::size_t points = static_cast<std::size_t>(k.lattice * k.lattice);
  Vec u(points * cin, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* dz = dout.data() + i * cout;
    bool any = false;
    for (std::size_t c = 0; c < cout; ++c) any |= dz[c] != 0.0;
    if (!any) continue;
    outer_acc(grad.self.data(), cout, cin, dz, x.data() + i * cin);
    matvec_t_acc(k.self.data(), cout, cin, dz, dx.data() + i * cin);
    gather_neighbors(k, g, x, i, s);
    for (const auto b : s.touched) {
      outer_acc(grad.control.data() + b * cout * cin, cout, cin, dz, s.acc.data() + b * cin);
      double* ub = u.data() + b * cin;
      std::fill_n(ub, cin, 0.0);
      matvec_t_acc(k.control_matrix(b), cout, cin, dz, ub);
    }
    for (std::size_t e = g.in_begin(i); e < g.in_end(i); ++e) {
      const auto& edge = g.edges()[e];
      const SplineBasis basis = spline_basis(edge.feature, k.lattice);
      double* dxj = dx.data() + static_cast<std::size_t>(edge.src) * cin;
      for (int q = 0; q < 4; ++q) {
        const double w = basis.weight[static_cast<std::size_t>(q)];
        if (w == 0.0) continue;
        const double* ub = u.data() + basis.index[static_cast<std::size_t>(q)] * cin;
        for (std::size_t c = 0; c < cin; ++c) dxj[c] += w * ub[c];
      }
    }
  }
}

std::size_t SplineLut::bin_of(std::array<double, 2> e) const {
  const auto bin = [this](double v) {
    v = std::clamp(v, 0.0, 1.0);
    return std::min(bins - 1, static_cast<int>(std::floor(v * bins)));
  };
  return static_cast<std::size_t>(bin(e[1]) * bins + bin(e[0]));
}

SplineLut spline_conv_lut(const SplineKernel& k, int bins) {
  if (bins < 2) throw InvalidInput("lookup table needs at least 2 bins per axis");
  SplineLut lut;
  lut.bins = bins;
  lut.c_in = k.c_in;
  lut.c_out = k.c_out;
  lut.self.assign(k.self.values().begin(), k.self.values().end());
  const std::size_t m = static_cast<std::size_t>(k.c_out * k.c_in);
  lut.table.resize(static_cast<std::size_t>(bins * bins) * m);
  for (int by = 0; by < bins; ++by) {
    for (int bx = 0; bx < bins; ++bx) {
      const Vec w = spline_weight(k, {(bx + 0.5) / bins, (by + 0.5) / bins});
      std::copy(w.begin(), w.end(), lut.table.begin() + static_cast<std::ptrdiff_t>((by * bins + bx) * m));
    }
  }
  return lut;
}

void lut_forward(const SplineLut& lut, const EventGraph& g, std::span<const double> x, std::span<double> out) {
  const auto cin = static_cast<std::size_t>(lut.c_in);
  const auto cout = static_cast<std::size_t>(lut.c_out);
  const std::size_t n = g.num_nodes();
  if (x.size() != n * cin || out.size() != n * cout) throw InvalidInput("lut_forward: buffer size mismatch");
#pragma omp parallel for schedule(static)
  for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* o = out.data() + i * cout;
    matvec(lut.self.data(), cout, cin, x.data() + i * cin, o, false);
    for (std::size_t e = g.in_begin(i); e < g.in_end(i); ++e) {
      const auto& edge = g.edges()[e];
      matvec(lut.matrix(lut.bin_of(edge.feature)), cout, cin, x.data() + static_cast<std::size_t>(edge.src) * cin, o,
             true);
    }
  }
}

double elu(double v) { return v > 0.0 ? v : std::expm1(v); }
double elu_grad(double pre) { return pre > 0.0 ? 1.0 : std::exp(pre); }

void gnn_layer_node(const SplineKernel& k, const EventGraph& g, std::span<const double> x, std::size_t i, double* pre,
                    double* out) {
  spline_conv_node(k, g, x, i, pre);
  const auto cout = static_cast<std::size_t>(k.c_out);
  const double* xi = x.data() + i * static_cast<std::size_t>(k.c_in);
  for (std::size_t c = 0; c < cout; ++c) out[c] = elu(pre[c]) + (k.residual() ? xi[c] : 0.0);
}

}  // namespace eae::nn
