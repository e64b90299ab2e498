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

#include "eae/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

namespace eae::oracle {

std::vector<RefEdge> graph_edges(const EventStream& events, const GraphConfig& cfg) {
  const auto& ev = events.events;
  const std::size_t n = ev.size();
  std::vector<double> x(n), y(n), t(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = static_cast<double>(ev[i].x) / cfg.width;
    y[i] = static_cast<double>(ev[i].y) / cfg.height;
    t[i] = cfg.beta * static_cast<double>(ev[i].t);
  }
  std::vector<RefEdge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::tuple<double, long long, std::size_t>> cand;  // (d2, -t, j) sorts as required
    for (std::size_t j = 0; j < i; ++j) {
      const double d2 = (x[j] - x[i]) * (x[j] - x[i]) + (y[j] - y[i]) * (y[j] - y[i]) + (t[j] - t[i]) * (t[j] - t[i]);
      if (d2 <= cfg.radius * cfg.radius) cand.emplace_back(d2, -static_cast<long long>(ev[j].t), j);
    }
    std::sort(cand.begin(), cand.end());
    if (cand.size() > static_cast<std::size_t>(cfg.max_neighbors)) cand.resize(static_cast<std::size_t>(cfg.max_neighbors));
    for (const auto& [d2, nt, j] : cand)
      edges.push_back({static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(i), 0.5 * (x[j] - x[i]) + 0.5,
                       0.5 * (y[j] - y[i]) + 0.5});
  }
  return edges;
}

int pixel_event_count(const std::vector<double>& intensity, double threshold, bool linear) {
  if (intensity.empty()) return 0;
  const auto level = [linear](double v) { return linear ? v : std::log1p(v); };
  double ref = level(intensity[0]);
  int count = 0;
  for (std::size_t k = 1; k < intensity.size(); ++k) {
    const double d = level(intensity[k]) - ref;
    if (std::abs(d) <= threshold) continue;
    const int m = static_cast<int>(std::abs(d) / threshold);
    count += m;
    ref += (d > 0 ? m : -m) * threshold;
  }
  return count;
}

std::vector<double> bilinear_weights(double ex, double ey, int lattice) {
  std::vector<double> w(static_cast<std::size_t>(lattice * lattice), 0.0);
  const double sx = std::clamp(ex, 0.0, 1.0) * (lattice - 1);
  const double sy = std::clamp(ey, 0.0, 1.0) * (lattice - 1);
  for (int b = 0; b < lattice; ++b)
    for (int a = 0; a < lattice; ++a)
      w[static_cast<std::size_t>(b * lattice + a)] =
          std::max(0.0, 1.0 - std::abs(sx - a)) * std::max(0.0, 1.0 - std::abs(sy - b));
  return w;
}

std::vector<double> spline_conv(const nn::SplineKernel& k, const EventGraph& g, const std::vector<double>& x) {
  const auto cin = static_cast<std::size_t>(k.c_in);
  const auto cout = static_cast<std::size_t>(k.c_out);
  const std::size_t pts = static_cast<std::size_t>(k.lattice * k.lattice);
  std::vector<double> out(g.num_nodes() * cout, 0.0);
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t c = 0; c < cin; ++c) out[i * cout + o] += k.self.at(o, c) * x[i * cin + c];
    for (const auto& e : g.edges()) {
      if (e.dst != i) continue;
      const auto w = bilinear_weights(e.feature[0], e.feature[1], k.lattice);
      std::vector<double> wm(cout * cin, 0.0);  // dense W(e)
      for (std::size_t b = 0; b < pts; ++b)
        for (std::size_t q = 0; q < cout * cin; ++q) wm[q] += w[b] * k.control[b * cout * cin + q];
      for (std::size_t o = 0; o < cout; ++o)
        for (std::size_t c = 0; c < cin; ++c) out[i * cout + o] += wm[o * cin + c] * x[e.src * cin + c];
    }
  }
  return out;
}

double lut_lipschitz(const nn::SplineKernel& k, const EventGraph& g, const std::vector<double>& x) {
  const int kk = k.lattice;
  const std::size_t m = static_cast<std::size_t>(k.c_out * k.c_in);
  const auto ctrl = [&](int a, int b, std::size_t q) { return k.control[static_cast<std::size_t>(b * kk + a) * m + q]; };
  double dx = 0.0, dy = 0.0;
  for (int b = 0; b < kk; ++b)
    for (int a = 0; a < kk; ++a)
      for (std::size_t q = 0; q < m; ++q) {
        if (a + 1 < kk) dx = std::max(dx, std::abs(ctrl(a + 1, b, q) - ctrl(a, b, q)));
        if (b + 1 < kk) dy = std::max(dy, std::abs(ctrl(a, b + 1, q) - ctrl(a, b, q)));
      }
  // per-node sum of neighbour feature l1 norms
  const auto cin = static_cast<std::size_t>(k.c_in);
  std::vector<double> mass(g.num_nodes(), 0.0);
  for (const auto& e : g.edges()) {
    double l1 = 0.0;
    for (std::size_t c = 0; c < cin; ++c) l1 += std::abs(x[e.src * cin + c]);
    mass[e.dst] += l1;
  }
  const double worst = mass.empty() ? 0.0 : *std::max_element(mass.begin(), mass.end());
  return (kk - 1) * std::sqrt(dx * dx + dy * dy) * worst;
}

std::vector<double> gru(const std::vector<double>& x, const std::vector<double>& h, const nn::GRUParams& p) {
  const auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const std::size_t nh = h.size();
  std::vector<double> out(nh);
  std::vector<double> r(nh);
  for (std::size_t i = 0; i < nh; ++i) {
    double a = p.br[i];
    for (std::size_t j = 0; j < x.size(); ++j) a += p.wr.at(i, j) * x[j];
    for (std::size_t j = 0; j < nh; ++j) a += p.ur.at(i, j) * h[j];
    r[i] = sig(a);
  }
  for (std::size_t i = 0; i < nh; ++i) {
    double az = p.bz[i];
    double ah = p.bh[i];
    for (std::size_t j = 0; j < x.size(); ++j) {
      az += p.wz.at(i, j) * x[j];
      ah += p.wh.at(i, j) * x[j];
    }
    for (std::size_t j = 0; j < nh; ++j) {
      az += p.uz.at(i, j) * h[j];
      ah += p.uh.at(i, j) * (r[j] * h[j]);
    }
    const double z = sig(az);
    out[i] = h[i] + z * (std::tanh(ah) - h[i]);
  }
  return out;
}

std::vector<long double> softmax(const std::vector<double>& logits) {
  std::vector<long double> p(logits.size());
  long double mx = -INFINITY;
  for (const double v : logits) mx = std::max<long double>(mx, v);
  long double s = 0.0L;
  for (std::size_t i = 0; i < logits.size(); ++i) s += (p[i] = std::exp(static_cast<long double>(logits[i]) - mx));
  for (auto& v : p) v /= s;
  return p;
}

double auc_pairwise(const ScoredSet& set) {
  double num = 0.0;
  double pairs = 0.0;
  for (const auto& a : set) {
    if (a.label != 1) continue;
    for (const auto& b : set) {
      if (b.label != 0) continue;
      pairs += 1.0;
      num += a.score > b.score ? 1.0 : (a.score == b.score ? 0.5 : 0.0);
    }
  }
  return num / pairs;
}

double ap_rank_scan(const ScoredSet& set) {
  double sum = 0.0;
  int positives = 0;
  for (const auto& a : set) {
    if (a.label != 1) continue;
    ++positives;
    int above = 0, above_pos = 0;
    for (const auto& b : set) {
      if (b.score >= a.score) {
        ++above;
        above_pos += b.label;
      }
    }
    sum += static_cast<double>(above_pos) / above;
  }
  return sum / positives;
}

std::size_t voxel_count(const EventGraph& g, const VoxelGrid& grid) {
  if (g.num_nodes() == 0) return 0;
  std::uint64_t t0 = UINT64_MAX, t1 = 0;
  for (const auto& n : g.nodes()) {
    t0 = std::min(t0, n.t_us);
    t1 = std::max(t1, n.t_us);
  }
  std::set<std::tuple<int, int, int>> seen;
  for (const auto& n : g.nodes()) {
    const int bx = std::min(grid.nx - 1, static_cast<int>(n.px * grid.nx / g.config().width));
    const int by = std::min(grid.ny - 1, static_cast<int>(n.py * grid.ny / g.config().height));
    const std::uint64_t span = t1 - t0;
    const int bt = span > 0 ? std::min<int>(grid.nt - 1, static_cast<int>((n.t_us - t0) * static_cast<std::uint64_t>(grid.nt) / span)) : 0;
    seen.insert({bx, by, bt});
  }
  return seen.size();
}

EventStream random_stream(std::mt19937_64& rng, std::size_t n, int w, int h, std::uint64_t t_max) {
  EventStream s;
  s.width = static_cast<std::uint16_t>(w);
  s.height = static_cast<std::uint16_t>(h);
  std::uniform_int_distribution<int> ux(0, w - 1), uy(0, h - 1), up(0, 1);
  std::uniform_int_distribution<std::uint64_t> ut(0, t_max == 0 ? 0 : t_max - 1);
  for (std::size_t i = 0; i < n; ++i) {
    Event e;
    e.x = static_cast<std::uint16_t>(ux(rng));
    e.y = static_cast<std::uint16_t>(uy(rng));
    e.p = up(rng) ? 1 : -1;
    e.t = ut(rng);
    s.events.push_back(e);
  }
  std::stable_sort(s.events.begin(), s.events.end(), event_order);
  return s;
}

GradCheck check_gradients(const std::function<double()>& loss, const std::vector<std::string>& names,
                          const std::vector<nn::Tensor*>& params, const std::vector<const nn::Tensor*>& analytic,
                          double eps, double floor) {
  GradCheck r;
  for (std::size_t p = 0; p < params.size(); ++p) {
    nn::Tensor& t = *params[p];
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double keep = t[i];
      t[i] = keep + eps;
      const double up = loss();
      t[i] = keep - eps;
      const double down = loss();
      t[i] = keep;
      const double num = (up - down) / (2.0 * eps);
      const double ana = (*analytic[p])[i];
      const double rel = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), floor});
      ++r.checked;
      if (rel > r.max_rel_error) {
        r.max_rel_error = rel;
        r.worst = names[p] + "[" + std::to_string(i) + "]";
        r.worst_analytic = ana;
        r.worst_numeric = num;
      }
    }
  }
  return r;
}

}  // namespace eae::oracle
