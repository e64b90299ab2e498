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

#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "eae/common.hpp"
#include "eae/graph.hpp"

namespace eae::nn {

using Vec = std::vector<double>;

// Dense row-major tensor of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const { return shape_.size() < 2 ? 1 : values_.size() / std::max<std::size_t>(1, shape_[0]); }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  void fill(double v);
  bool all_finite() const;
  bool operator==(const Tensor&) const = default;

 private:
  std::vector<std::size_t> shape_;
  Vec values_;
};

// y = M x for M of shape (rows, cols); accumulates into y when `accumulate`.
void matvec(const double* m, std::size_t rows, std::size_t cols, const double* x, double* y, bool accumulate);
// y += M^T x
void matvec_t_acc(const double* m, std::size_t rows, std::size_t cols, const double* x, double* y);
// M += a b^T
void outer_acc(double* m, std::size_t rows, std::size_t cols, const double* a, const double* b);

// ---------------------------------------------------------------------------
// Parameter containers. Each exposes for_each(f) visiting (name, tensor) so the
// optimizers, the serializer and gradient buffers can treat them uniformly.

struct SplineKernel {
  int lattice = 5;  // k control points per axis
  int c_in = 0;
  int c_out = 0;
  Tensor control;   // {k*k, c_out, c_in}; control point (a, b) at index b * k + a
  Tensor self;      // {c_out, c_in}  (W_c)

  SplineKernel() = default;
  SplineKernel(int lattice, int c_in, int c_out);
  bool residual() const { return c_in == c_out; }
  const double* control_matrix(std::size_t b) const { return control.data() + b * static_cast<std::size_t>(c_out * c_in); }

  template <typename F>
  void for_each(const std::string& prefix, F&& f) {
    f(prefix + ".control", control);
    f(prefix + ".self", self);
  }
};

struct GRUParams {
  int input = 0;
  int hidden = 0;
  Tensor wz, uz, bz, wr, ur, br, wh, uh, bh;

  GRUParams() = default;
  GRUParams(int input, int hidden);

  template <typename F>
  void for_each(const std::string& prefix, F&& f) {
    f(prefix + ".wz", wz);
    f(prefix + ".uz", uz);
    f(prefix + ".bz", bz);
    f(prefix + ".wr", wr);
    f(prefix + ".ur", ur);
    f(prefix + ".br", br);
    f(prefix + ".wh", wh);
    f(prefix + ".uh", uh);
    f(prefix + ".bh", bh);
  }
};

struct AttentionParams {
  Tensor w;  // {hidden}

  AttentionParams() = default;
  explicit AttentionParams(int hidden) : w({static_cast<std::size_t>(hidden)}) {}

  template <typename F>
  void for_each(const std::string& prefix, F&& f) {
    f(prefix + ".w", w);
  }
};

struct LinearParams {
  Tensor weight;  // {out, in}
  Tensor bias;    // {out}

  LinearParams() = default;
  LinearParams(int in, int out) : weight({static_cast<std::size_t>(out), static_cast<std::size_t>(in)}),
                                  bias({static_cast<std::size_t>(out)}) {}
  int in() const { return static_cast<int>(weight.cols()); }
  int out() const { return static_cast<int>(weight.rows()); }

  template <typename F>
  void for_each(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

// Seeded initializers.
void init_uniform(Tensor& t, double bound, std::mt19937_64& rng);
void init_orthogonal(Tensor& t, std::mt19937_64& rng);
void init_spline(SplineKernel& k, int max_neighbors, std::mt19937_64& rng);
void init_gru(GRUParams& p, std::mt19937_64& rng);
void init_linear(LinearParams& p, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Spline convolution (degree-1 B-spline over the edge-feature square).

struct SplineBasis {
  std::array<std::uint32_t, 4> index{};
  std::array<double, 4> weight{};
};

SplineBasis spline_basis(std::array<double, 2> e, int lattice);
// Count of edge-feature components clamped into [0, 1] by spline_basis since process start.
std::uint64_t spline_clamp_count();

// W(e) = sum_b basis_b(e) * control_b, shape {c_out, c_in}.
Vec spline_weight(const SplineKernel& k, std::array<double, 2> e);

// Spline convolution for one node: out = W_c x_i + sum_{j in N(i)} W(e_ij) x_j. `x` holds
// c_in features per node; `out` receives c_out values.
void spline_conv_node(const SplineKernel& k, const EventGraph& g, std::span<const double> x, std::size_t i,
                      double* out);
// Spline convolution over every node (parallel over nodes).
void spline_conv_forward(const SplineKernel& k, const EventGraph& g, std::span<const double> x, std::span<double> out);

// Backward of spline_conv_forward given dL/dout. Accumulates into grad.control,
// grad.self and dx.
void spline_conv_backward(const SplineKernel& k, const EventGraph& g, std::span<const double> x,
                          std::span<const double> dout, SplineKernel& grad, std::span<double> dx);

// Nearest-bin lookup table of W(e) at the centres of a bins x bins grid.
struct SplineLut {
  int bins = 0;
  int c_in = 0;
  int c_out = 0;
  Vec table;    // {bins * bins, c_out, c_in}
  Vec self;

  std::size_t bin_of(std::array<double, 2> e) const;
  const double* matrix(std::size_t bin) const { return table.data() + bin * static_cast<std::size_t>(c_out * c_in); }
};

SplineLut spline_conv_lut(const SplineKernel& k, int bins);
void lut_forward(const SplineLut& lut, const EventGraph& g, std::span<const double> x, std::span<double> out);

// Residual GNN layer: y = ELU(conv(x)) + x (identity term only when c_in == c_out).
double elu(double v);
double elu_grad(double pre);
void gnn_layer_node(const SplineKernel& k, const EventGraph& g, std::span<const double> x, std::size_t i,
                    double* pre, double* out);

// ---------------------------------------------------------------------------
// Recurrent, attention and dense ops. Each forward fills a cache that the
// matching backward consumes; backward on an unfilled cache throws StateError.

struct GruCache {
  bool valid = false;
  Vec x, h, z, r, cand, rh;
};

Vec gru_step(std::span<const double> x, std::span<const double> h, const GRUParams& p, GruCache* cache = nullptr);
// dh_next: dL/dh'. Accumulates parameter grads; writes dx and dh (overwritten).
void gru_backward(const GRUParams& p, const GruCache& cache, std::span<const double> dh_next, GRUParams& grad, Vec& dx,
                  Vec& dh);

struct AttentionCache {
  bool valid = false;
  std::vector<Vec> rows;
  Vec score;  // tanh(H w)
  Vec alpha;
};

struct AttentionOutput {
  Vec alpha;
  std::vector<Vec> weighted;  // alpha_i * H_i
};

AttentionOutput attention(const std::vector<Vec>& rows, const AttentionParams& p, AttentionCache* cache = nullptr);
// d_weighted: per-row upstream gradient. Returns dL/dH rows; accumulates grad.w.
std::vector<Vec> attention_backward(const AttentionParams& p, const AttentionCache& cache,
                                    const std::vector<Vec>& d_weighted, AttentionParams& grad);

struct LinearCache {
  bool valid = false;
  Vec x;
};

Vec linear_forward(std::span<const double> x, const LinearParams& p, LinearCache* cache = nullptr);
Vec linear_backward(const LinearParams& p, const LinearCache& cache, std::span<const double> dy, LinearParams& grad);

Vec relu(std::span<const double> x);
Vec softmax(std::span<const double> logits);

struct ClassWeights {
  double negative = 0.27;
  double positive = 1.0;
  double operator[](int label) const { return label == 0 ? negative : positive; }
};

struct LossResult {
  double loss = 0.0;
  Vec probs;
  Vec dlogits;  // dL/dlogits
};

LossResult weighted_cross_entropy(std::span<const double> logits, int label, const ClassWeights& weights = {});

// ---------------------------------------------------------------------------
// Optimizers

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled decay (AdamW) when decoupled = true
  bool decoupled = false;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // params[i] and grads[i] must share shapes; moments are created lazily.
  void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads);

  AdamConfig& config() { return cfg_; }
  const AdamConfig& config() const { return cfg_; }
  long steps() const { return step_; }

 private:
  AdamConfig cfg_;
  long step_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

inline AdamConfig adamw_config(double lr, double weight_decay = 1e-2) {
  AdamConfig c;
  c.lr = lr;
  c.weight_decay = weight_decay;
  c.decoupled = true;
  return c;
}

}  // namespace eae::nn
