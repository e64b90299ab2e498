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

// Brute-force reference implementations. Deliberately naive and independent of
// the production kernels; used by the tests and by `eae selftest`.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "eae/event_io.hpp"
#include "eae/graph.hpp"
#include "eae/metrics.hpp"
#include "eae/nn.hpp"

namespace eae::oracle {

struct RefEdge {
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  double fx = 0.0;
  double fy = 0.0;
  bool operator==(const RefEdge&) const = default;
};

// O(n^2) neighbour selection: all earlier nodes within R, nearest first, ties
// by larger timestamp then lower index, capped.
std::vector<RefEdge> graph_edges(const EventStream& events, const GraphConfig& cfg);

// Events a single pixel emits for an intensity sequence: the pixel fires when
// |delta| > C and then emits floor(|delta| / C) events.
int pixel_event_count(const std::vector<double>& intensity, double threshold, bool linear);

// Bilinear weights over all k*k control points, straight from the tent formula.
std::vector<double> bilinear_weights(double ex, double ey, int lattice);

// out_i = W_c x_i + sum_j W(e_ij) x_j with W(e) assembled densely per edge.
std::vector<double> spline_conv(const nn::SplineKernel& k, const EventGraph& g, const std::vector<double>& x);

// Lattice-Lipschitz bound L on |lut - exact| per unit edge-feature distance.
double lut_lipschitz(const nn::SplineKernel& k, const EventGraph& g, const std::vector<double>& x);

std::vector<double> gru(const std::vector<double>& x, const std::vector<double>& h, const nn::GRUParams& p);
std::vector<long double> softmax(const std::vector<double>& logits);

double auc_pairwise(const ScoredSet& set);
double ap_rank_scan(const ScoredSet& set);

// Voxel histogram: number of non-empty voxels.
std::size_t voxel_count(const EventGraph& g, const VoxelGrid& grid);

// Random time-ordered stream of n events on a w x h sensor within [0, t_max).
EventStream random_stream(std::mt19937_64& rng, std::size_t n, int w, int h, std::uint64_t t_max);

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "<tensor>[index]"
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Central differences over every entry of the named tensors. `loss` is
// re-evaluated with each entry perturbed by +-eps. Relative error is
// |a - n| / max(|a|, |n|, floor).
GradCheck check_gradients(const std::function<double()>& loss, const std::vector<std::string>& names,
                          const std::vector<nn::Tensor*>& params, const std::vector<const nn::Tensor*>& analytic,
                          double eps = 1e-5, double floor = 1e-8);

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

// Finite-difference checks of every learnable op (spline conv, GNN stack, GRU,
// attention, linear, loss, full head through time), `seeds` seeds each.
SuiteResult gradient_suite(int seeds, double tolerance = 1e-4);
// build_graph and build_graph_serial against graph_edges on random streams.
SuiteResult graph_suite(std::uint64_t seed, int streams, std::size_t max_events);
// Incremental scoring against batch scoring on random noisy scenarios.
SuiteResult async_suite(std::uint64_t seed, int streams, double tolerance = 1e-9);
// LUT error monotone over bins and below the lattice-Lipschitz bound at B = 64.
SuiteResult lut_suite(std::uint64_t seed);
// roc_auc / average_precision against the pairwise oracles, plus the worked
// mResponse and mTTA examples.
SuiteResult metric_suite(std::uint64_t seed, int instances, double tolerance = 1e-12);
// Softmax sums, partition of unity, attention permutation equivariance, zero
// residual layer identity.
SuiteResult normalization_suite(std::uint64_t seed, int permutations);

// Every suite above at full size; used by `eae selftest`.
std::vector<SuiteResult> run_selftest(std::uint64_t seed);

}  // namespace eae::oracle
