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

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

void require_cache(bool valid, const char* op) {
  if (!valid) throw StateError(std::string(op) + ": backward called before forward");
}

}  // namespace

Vec gru_step(std::span<const double> x, std::span<const double> h, const GRUParams& p, GruCache* cache) {
  const auto in = static_cast<std::size_t>(p.input);
  const auto hid = static_cast<std::size_t>(p.hidden);
  if (x.size() != in || h.size() != hid) throw InvalidInput("gru_step: dimension mismatch");
  Vec z(hid), r(hid), cand(hid), rh(hid), out(hid);
  matvec(p.wz.data(), hid, in, x.data(), z.data(), false);
  matvec(p.uz.data(), hid, hid, h.data(), z.data(), true);
  matvec(p.wr.data(), hid, in, x.data(), r.data(), false);
  matvec(p.ur.data(), hid, hid, h.data(), r.data(), true);
  for (std::size_t i = 0; i < hid; ++i) {
    z[i] = sigmoid(z[i] + p.bz[i]);
    r[i] = sigmoid(r[i] + p.br[i]);
    rh[i] = r[i] * h[i];
  }
  matvec(p.wh.data(), hid, in, x.data(), cand.data(), false);
  matvec(p.uh.data(), hid, hid, rh.data(), cand.data(), true);
  for (std::size_t i = 0; i < hid; ++i) {
    cand[i] = std::tanh(cand[i] + p.bh[i]);
    out[i] = (1.0 - z[i]) * h[i] + z[i] * cand[i];
  }
  if (cache) {
    cache->valid = true;
    cache->x.assign(x.begin(), x.end());
    cache->h.assign(h.begin(), h.end());
    cache->z = std::move(z);
    cache->r = std::move(r);
    cache->cand = std::move(cand);
    cache->rh = std::move(rh);
  }
  return out;
}

void gru_backward(const GRUParams& p, const GruCache& c, std::span<const double> dh_next, GRUParams& g, Vec& dx,
                  Vec& dh) {
  require_cache(c.valid, "gru");
  const auto in = static_cast<std::size_t>(p.input);
  const auto hid = static_cast<std::size_t>(p.hidden);
  dx.assign(in, 0.0);
  dh.assign(hid, 0.0);
  Vec dz(hid), dcand_pre(hid), drh(hid, 0.0), dr(hid);
  for (std::size_t i = 0; i < hid; ++i) {
    dh[i] = dh_next[i] * (1.0 - c.z[i]);
    dz[i] = dh_next[i] * (c.cand[i] - c.h[i]) * c.z[i] * (1.0 - c.z[i]);
    dcand_pre[i] = dh_next[i] * c.z[i] * (1.0 - c.cand[i] * c.cand[i]);
  }
  // candidate branch
  outer_acc(g.wh.data(), hid, in, dcand_pre.data(), c.x.data());
  outer_acc(g.uh.data(), hid, hid, dcand_pre.data(), c.rh.data());
  for (std::size_t i = 0; i < hid; ++i) g.bh[i] += dcand_pre[i];
  matvec_t_acc(p.wh.data(), hid, in, dcand_pre.data(), dx.data());
  matvec_t_acc(p.uh.data(), hid, hid, dcand_pre.data(), drh.data());
  for (std::size_t i = 0; i < hid; ++i) {
    dh[i] += drh[i] * c.r[i];
    dr[i] = drh[i] * c.h[i] * c.r[i] * (1.0 - c.r[i]);
  }
  // update gate
  outer_acc(g.wz.data(), hid, in, dz.data(), c.x.data());
  outer_acc(g.uz.data(), hid, hid, dz.data(), c.h.data());
  for (std::size_t i = 0; i < hid; ++i) g.bz[i] += dz[i];
  matvec_t_acc(p.wz.data(), hid, in, dz.data(), dx.data());
  matvec_t_acc(p.uz.data(), hid, hid, dz.data(), dh.data());
  // reset gate
  outer_acc(g.wr.data(), hid, in, dr.data(), c.x.data());
  outer_acc(g.ur.data(), hid, hid, dr.data(), c.h.data());
  for (std::size_t i = 0; i < hid; ++i) g.br[i] += dr[i];
  matvec_t_acc(p.wr.data(), hid, in, dr.data(), dx.data());
  matvec_t_acc(p.ur.data(), hid, hid, dr.data(), dh.data());
}

AttentionOutput attention(const std::vector<Vec>& rows, const AttentionParams& p, AttentionCache* cache) {
  AttentionOutput out;
  if (rows.empty()) {
    if (cache) *cache = AttentionCache{true, {}, {}, {}};
    return out;
  }
  const std::size_t d = p.w.size();
  Vec score(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != d) throw InvalidInput("attention: row dimension mismatch");
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += rows[i][c] * p.w[c];
    score[i] = std::tanh(s);
  }
  out.alpha = softmax(score);
  out.weighted.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.weighted[i].resize(d);
    for (std::size_t c = 0; c < d; ++c) out.weighted[i][c] = out.alpha[i] * rows[i][c];
  }
  if (cache) {
    cache->valid = true;
    cache->rows = rows;
    cache->score = std::move(score);
    cache->alpha = out.alpha;
  }
  return out;
}

std::vector<Vec> attention_backward(const AttentionParams& p, const AttentionCache& c,
                                    const std::vector<Vec>& d_weighted, AttentionParams& g) {
  require_cache(c.valid, "attention");
  const std::size_t n = c.rows.size();
  const std::size_t d = p.w.size();
  std::vector<Vec> drows(n, Vec(d, 0.0));
  if (n == 0) return drows;
  Vec dalpha(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      dalpha[i] += d_weighted[i][k] * c.rows[i][k];
      drows[i][k] += c.alpha[i] * d_weighted[i][k];
    }
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < n; ++i) dot += c.alpha[i] * dalpha[i];
  for (std::size_t i = 0; i < n; ++i) {
    const double dscore = c.alpha[i] * (dalpha[i] - dot);
    const double dpre = dscore * (1.0 - c.score[i] * c.score[i]);
    for (std::size_t k = 0; k < d; ++k) {
      g.w[k] += dpre * c.rows[i][k];
      drows[i][k] += dpre * p.w[k];
    }
  }
  return drows;
}

Vec linear_forward(std::span<const double> x, const LinearParams& p, LinearCache* cache) {
  if (x.size() != static_cast<std::size_t>(p.in())) throw InvalidInput("linear: input dimension mismatch");
  Vec y(p.bias.values().begin(), p.bias.values().end());
  matvec(p.weight.data(), p.weight.rows(), p.weight.cols(), x.data(), y.data(), true);
  if (cache) {
    cache->valid = true;
    cache->x.assign(x.begin(), x.end());
  }
  return y;
}

Vec linear_backward(const LinearParams& p, const LinearCache& c, std::span<const double> dy, LinearParams& g) {
  require_cache(c.valid, "linear");
  const std::size_t out = p.weight.rows();
  const std::size_t in = p.weight.cols();
  outer_acc(g.weight.data(), out, in, dy.data(), c.x.data());
  for (std::size_t i = 0; i < out; ++i) g.bias[i] += dy[i];
  Vec dx(in, 0.0);
  matvec_t_acc(p.weight.data(), out, in, dy.data(), dx.data());
  return dx;
}

Vec relu(std::span<const double> x) {
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return y;
}

Vec softmax(std::span<const double> logits) {
  Vec p(logits.size());
  if (logits.empty()) return p;
  for (const double v : logits)
    if (!std::isfinite(v)) throw InvalidInput("softmax: non-finite logit");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

LossResult weighted_cross_entropy(std::span<const double> logits, int label, const ClassWeights& weights) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) throw InvalidInput("cross entropy: bad label");
  LossResult r;
  r.probs = softmax(logits);
  // log-softmax directly, so a saturated probability never yields log(0)
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (const double v : logits) sum += std::exp(v - mx);
  const double log_p = logits[static_cast<std::size_t>(label)] - mx - std::log(sum);
  const double w = weights[label];
  r.loss = -w * log_p;
  r.dlogits.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    r.dlogits[i] = w * (r.probs[i] - (static_cast<int>(i) == label ? 1.0 : 0.0));
  return r;
}

}  // namespace eae::nn
