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
#include <cstdio>

#include "eae/pipeline.hpp"

namespace eae {

void ModelConfig::validate() const {
  graph.validate();
  if (gnn_depth < 1) throw ConfigError("gnn_depth must be >= 1");
  if (gnn_channels < 1 || feature_c1 < 1 || feature_c2 < 1) throw ConfigError("channel counts must be >= 1");
  if (spline_lattice < 2) throw ConfigError("spline_lattice must be >= 2");
  if (object_dim < 1 || hidden_box < 1 || hidden_feat < 1) throw ConfigError("head widths must be >= 1");
  if (absent_drop_frames < 0) throw ConfigError("absent_drop_frames must be >= 0");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"graph",
           {{"radius", graph.radius},
            {"beta", graph.beta},
            {"max_neighbors", graph.max_neighbors},
            {"width", graph.width},
            {"height", graph.height},
            {"window_us", graph.window_us}}},
          {"gnn_depth", gnn_depth},
          {"gnn_channels", gnn_channels},
          {"spline_lattice", spline_lattice},
          {"feature_c1", feature_c1},
          {"feature_c2", feature_c2},
          {"object_dim", object_dim},
          {"hidden_box", hidden_box},
          {"hidden_feat", hidden_feat},
          {"absent_drop_frames", absent_drop_frames},
          {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    if (j.contains("graph")) {
      const auto& g = j.at("graph");
      c.graph.radius = g.value("radius", c.graph.radius);
      c.graph.beta = g.value("beta", c.graph.beta);
      c.graph.max_neighbors = g.value("max_neighbors", c.graph.max_neighbors);
      c.graph.width = g.value("width", c.graph.width);
      c.graph.height = g.value("height", c.graph.height);
      c.graph.window_us = g.value("window_us", c.graph.window_us);
    }
    c.gnn_depth = j.value("gnn_depth", c.gnn_depth);
    c.gnn_channels = j.value("gnn_channels", c.gnn_channels);
    c.spline_lattice = j.value("spline_lattice", c.spline_lattice);
    c.feature_c1 = j.value("feature_c1", c.feature_c1);
    c.feature_c2 = j.value("feature_c2", c.feature_c2);
    c.object_dim = j.value("object_dim", c.object_dim);
    c.hidden_box = j.value("hidden_box", c.hidden_box);
    c.hidden_feat = j.value("hidden_feat", c.hidden_feat);
    c.absent_drop_frames = j.value("absent_drop_frames", c.absent_drop_frames);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

nn::Vec FeatureMap::sample(double x, double y) const {
  nn::Vec out(static_cast<std::size_t>(channels), 0.0);
  const double gx = std::clamp(x * width - 0.5, 0.0, static_cast<double>(width - 1));
  const double gy = std::clamp(y * height - 0.5, 0.0, static_cast<double>(height - 1));
  const int j0 = static_cast<int>(std::floor(gx));
  const int i0 = static_cast<int>(std::floor(gy));
  const int j1 = std::min(j0 + 1, width - 1);
  const int i1 = std::min(i0 + 1, height - 1);
  const double fx = gx - j0;
  const double fy = gy - i0;
  for (int c = 0; c < channels; ++c) {
    out[static_cast<std::size_t>(c)] = (1.0 - fy) * ((1.0 - fx) * at(i0, j0, c) + fx * at(i0, j1, c)) +
                                      fy * ((1.0 - fx) * at(i1, j0, c) + fx * at(i1, j1, c));
  }
  return out;
}

nn::Vec FeatureMap::box_average(const PixelRect& rect, int sensor_w, int sensor_h) const {
  const double x0 = static_cast<double>(rect.x_min) / sensor_w;
  const double x1 = static_cast<double>(rect.x_max) / sensor_w;
  const double y0 = static_cast<double>(rect.y_min) / sensor_h;
  const double y1 = static_cast<double>(rect.y_max) / sensor_h;
  nn::Vec out(static_cast<std::size_t>(channels), 0.0);
  int count = 0;
  for (int i = 0; i < height; ++i) {
    const double cy = (i + 0.5) / height;
    if (cy < y0 || cy >= y1) continue;
    for (int j = 0; j < width; ++j) {
      const double cx = (j + 0.5) / width;
      if (cx < x0 || cx >= x1) continue;
      for (int c = 0; c < channels; ++c) out[static_cast<std::size_t>(c)] += at(i, j, c);
      ++count;
    }
  }
  if (count == 0) return sample(0.5 * (x0 + x1), 0.5 * (y0 + y1));
  for (auto& v : out) v /= count;
  return out;
}

namespace {

// 3x3 convolution, stride 2, zero padding 1, followed by ReLU. Layout (i, j, c).
std::vector<double> conv_s2(const std::vector<double>& in, int h, int w, int cin, const nn::Tensor& weight,
                            const nn::Tensor& bias, int* oh, int* ow) {
  const int cout = static_cast<int>(bias.size());
  *oh = (h + 1) / 2;
  *ow = (w + 1) / 2;
  std::vector<double> out(static_cast<std::size_t>(*oh * *ow * cout), 0.0);
  for (int i = 0; i < *oh; ++i) {
    for (int j = 0; j < *ow; ++j) {
      for (int o = 0; o < cout; ++o) {
        double s = bias[static_cast<std::size_t>(o)];
        for (int di = 0; di < 3; ++di) {
          const int y = 2 * i + di - 1;
          if (y < 0 || y >= h) continue;
          for (int dj = 0; dj < 3; ++dj) {
            const int x = 2 * j + dj - 1;
            if (x < 0 || x >= w) continue;
            for (int c = 0; c < cin; ++c) {
              const std::size_t widx = ((static_cast<std::size_t>(o) * cin + c) * 3 + di) * 3 + dj;
              s += weight[widx] * in[(static_cast<std::size_t>(y) * w + x) * cin + c];
            }
          }
        }
        out[(static_cast<std::size_t>(i) * *ow + j) * cout + o] = s > 0.0 ? s : 0.0;
      }
    }
  }
  return out;
}

}  // namespace

FeatureMap extract_features(const ToyExtractor& ex, const Frame& frame, int width, int height) {
  if (frame.pixels.size() != static_cast<std::size_t>(width * height))
    throw InvalidInput("extract_features: frame size does not match sensor");
  std::vector<double> img(frame.pixels.size());
  for (std::size_t k = 0; k < img.size(); ++k) img[k] = frame.pixels[k] / 255.0;
  int h1 = 0, w1 = 0, h2 = 0, w2 = 0;
  const auto c1 = static_cast<int>(ex.conv1_b.size());
  const auto a1 = conv_s2(img, height, width, 1, ex.conv1_w, ex.conv1_b, &h1, &w1);
  auto a2 = conv_s2(a1, h1, w1, c1, ex.conv2_w, ex.conv2_b, &h2, &w2);
  FeatureMap fm;
  fm.height = h2;
  fm.width = w2;
  fm.channels = static_cast<int>(ex.conv2_b.size());
  fm.values = std::move(a2);
  return fm;
}

// ---------------------------------------------------------------------------

HybridModel HybridModel::create(const ModelConfig& cfg) {
  cfg.validate();
  HybridModel m;
  m.cfg = cfg;
  std::mt19937_64 rng(cfg.seed);
  const int cg = cfg.gnn_channels;
  for (int l = 0; l < cfg.gnn_depth; ++l) {
    m.gnn.emplace_back(cfg.spline_lattice, l == 0 ? EventGraph::kEventFeatureDim : cg, cg);
    nn::init_spline(m.gnn.back(), cfg.graph.max_neighbors, rng);
  }
  m.object_fc = nn::LinearParams(cfg.object_input_dim(), cfg.object_dim);
  nn::init_linear(m.object_fc, rng);
  m.gru_box = nn::GRUParams(4, cfg.hidden_box);
  nn::init_gru(m.gru_box, rng);
  m.gru_feat = nn::GRUParams(cfg.object_dim, cfg.hidden_feat);
  nn::init_gru(m.gru_feat, rng);
  m.att_box = nn::AttentionParams(cfg.hidden_box);
  nn::init_uniform(m.att_box.w, 1.0 / std::sqrt(static_cast<double>(cfg.hidden_box)), rng);
  m.att_feat = nn::AttentionParams(cfg.hidden_feat);
  nn::init_uniform(m.att_feat.w, 1.0 / std::sqrt(static_cast<double>(cfg.hidden_feat)), rng);
  m.classifier = nn::LinearParams(cfg.hidden_box + cfg.hidden_feat, 2);
  nn::init_linear(m.classifier, rng);

  auto& ex = m.extractor;
  const auto c1 = static_cast<std::size_t>(cfg.feature_c1);
  const auto c2 = static_cast<std::size_t>(cfg.feature_c2);
  ex.conv1_w = nn::Tensor({c1, 1, 3, 3});
  ex.conv1_b = nn::Tensor({c1});
  ex.conv2_w = nn::Tensor({c2, c1, 3, 3});
  ex.conv2_b = nn::Tensor({c2});
  nn::init_uniform(ex.conv1_w, 1.0 / 3.0, rng);
  nn::init_uniform(ex.conv1_b, 0.1, rng);
  nn::init_uniform(ex.conv2_w, 1.0 / std::sqrt(9.0 * static_cast<double>(c1)), rng);
  nn::init_uniform(ex.conv2_b, 0.1, rng);
  return m;
}

HybridModel HybridModel::zeros_like() const {
  HybridModel z = *this;
  z.for_each_tensor([](const std::string&, nn::Tensor& t) { t.fill(0.0); });
  return z;
}

TensorArchive model_to_archive(const HybridModel& model) {
  TensorArchive a;
  a.meta = {{"kind", "eae-model"}, {"config", model.cfg.to_json()}};
  auto& m = const_cast<HybridModel&>(model);  // for_each is non-const; tensors are only copied
  m.for_each_tensor([&](const std::string& name, nn::Tensor& t) { a.tensors.push_back({name, t}); });
  return a;
}

HybridModel model_from_archive(const TensorArchive& archive) {
  if (archive.meta.value("kind", std::string()) != "eae-model" || !archive.meta.contains("config"))
    throw ParseError(ParseError::Kind::kManifest, 12, "archive does not hold a model");
  HybridModel m;
  try {
    m = HybridModel::create(ModelConfig::from_json(archive.meta.at("config")));
  } catch (const ConfigError& e) {
    throw ParseError(ParseError::Kind::kManifest, 12, e.what());
  }
  std::size_t expected = 0;
  m.for_each_tensor([&](const std::string& name, nn::Tensor& t) {
    const nn::Tensor& src = archive.get(name);
    if (src.shape() != t.shape())
      throw ParseError(ParseError::Kind::kManifest, 12, "tensor '" + name + "' has the wrong shape");
    t = src;
    ++expected;
  });
  if (archive.tensors.size() != expected)
    throw ParseError(ParseError::Kind::kManifest, 12, "archive holds tensors the model does not define");
  return m;
}

void save_model(const HybridModel& model, const std::filesystem::path& path) {
  save_archive(model_to_archive(model), path);
}

HybridModel load_model(const std::filesystem::path& path) { return model_from_archive(load_archive(path)); }

void save_feature_maps(const std::vector<FeatureMap>& maps, const std::filesystem::path& path) {
  TensorArchive a;
  a.meta = {{"kind", "eae-feature-maps"}, {"frames", maps.size()}};
  if (!maps.empty()) a.meta["source"] = maps.front().source;
  for (std::size_t k = 0; k < maps.size(); ++k) {
    const auto& fm = maps[k];
    nn::Tensor t({static_cast<std::size_t>(fm.height), static_cast<std::size_t>(fm.width),
                  static_cast<std::size_t>(fm.channels)});
    std::copy(fm.values.begin(), fm.values.end(), t.data());
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%05zu", k);
    a.tensors.push_back({name, std::move(t)});
  }
  save_archive(a, path);
}

std::vector<FeatureMap> load_feature_maps(const std::filesystem::path& path) {
  const TensorArchive a = load_archive(path);
  if (a.meta.value("kind", std::string()) != "eae-feature-maps")
    throw ParseError(ParseError::Kind::kManifest, 12, "archive does not hold feature maps");
  const std::string source = a.meta.value("source", std::string("external"));
  std::vector<FeatureMap> maps;
  for (const auto& nt : a.tensors) {
    const auto& s = nt.tensor.shape();
    if (s.size() != 3) throw ParseError(ParseError::Kind::kManifest, 12, "feature map '" + nt.name + "' is not 3-D");
    FeatureMap fm(static_cast<int>(s[0]), static_cast<int>(s[1]), static_cast<int>(s[2]));
    std::copy(nt.tensor.values().begin(), nt.tensor.values().end(), fm.values.begin());
    fm.source = source;
    maps.push_back(std::move(fm));
  }
  return maps;
}

}  // namespace eae
