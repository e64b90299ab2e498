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
#include <random>

#include <gtest/gtest.h>

#include "eae/oracle.hpp"
#include "eae/pipeline.hpp"
#include "test_util.hpp"

namespace eae {
namespace {

using testing::TempDir;

ModelConfig tiny_config() {
  ModelConfig mc;
  mc.graph.width = 32;
  mc.graph.height = 24;
  mc.gnn_depth = 2;
  mc.gnn_channels = 4;
  mc.feature_c1 = 2;
  mc.feature_c2 = 2;
  mc.object_dim = 6;
  mc.hidden_box = 5;
  mc.hidden_feat = 5;
  mc.seed = 3;
  return mc;
}

// 32x24 scene, 8 frames; object 1 is risky from 0.2 s, object 2 is benign.
Scenario tiny_scenario(std::uint64_t seed = 1) {
  ScenarioSpec spec;
  spec.width = 32;
  spec.height = 24;
  spec.duration_us = 400'000;
  spec.seed = seed;
  ObjectTrack a;
  a.id = 1;
  a.width = 5;
  a.height = 4;
  a.intensity = 200;
  a.path = {{0, 4.0, 6.0}, {200'000, 8.0, 8.0}, {400'000, 16.0, 14.0}};
  ObjectTrack b;
  b.id = 2;
  b.width = 4;
  b.height = 4;
  b.intensity = 150;
  b.path = {{0, 26.0, 4.0}, {400'000, 26.0 - 0.1 * static_cast<double>(seed), 18.0}};
  spec.objects = {a, b};
  spec.anomaly = AnomalySpec{1, 200'000, 400'000};
  Scenario sc;
  sc.id = "tiny-" + std::to_string(seed);
  sc.spec = spec;
  auto out = synth_scenario(spec);
  sc.frames = std::move(out.frames);
  sc.boxes = std::move(out.boxes);
  sc.labels = std::move(out.labels);
  ConverterOptions opts;
  opts.threshold = 0.1;
  sc.events = frames_to_events(sc.frames, opts);
  return sc;
}

void expect_same_timeline(const RiskTimeline& a, const RiskTimeline& b, double tol) {
  ASSERT_EQ(a.frames.size(), b.frames.size());
  for (std::size_t k = 0; k < a.frames.size(); ++k) {
    const auto& fa = a.frames[k];
    const auto& fb = b.frames[k];
    EXPECT_EQ(fa.frame, fb.frame);
    EXPECT_EQ(fa.t_us, fb.t_us);
    ASSERT_EQ(fa.objects.size(), fb.objects.size());
    for (std::size_t i = 0; i < fa.objects.size(); ++i) {
      EXPECT_EQ(fa.objects[i].first, fb.objects[i].first);
      EXPECT_NEAR(fa.objects[i].second, fb.objects[i].second, tol);
    }
    EXPECT_NEAR(fa.frame_score, fb.frame_score, tol);
  }
}

// ---------------------------------------------------------------------------

TEST(Fuse, ConstantMapAddsConstantSuffix) {
  std::mt19937_64 rng(51);
  GraphConfig gc = tiny_config().graph;
  const EventGraph g = build_graph(oracle::random_stream(rng, 40, 32, 24, 50'000), gc);
  const std::vector<double> acts(g.num_nodes() * 4, 0.25);
  std::vector<std::uint32_t> all(g.num_nodes());
  for (std::uint32_t i = 0; i < all.size(); ++i) all[i] = i;
  const FeatureMap fmap(3, 4, 2, 0.75);
  const auto rows = fuse_node_features(g, acts, 4, all, fmap);
  ASSERT_EQ(rows.size(), g.num_nodes());
  for (const auto& r : rows) EXPECT_EQ(r, (nn::Vec{0.25, 0.25, 0.25, 0.25, 0.75, 0.75}));
}

TEST(Fuse, GridPointAndMidpoint) {
  GraphConfig gc;
  gc.width = 64;
  gc.height = 48;
  // Cell (i, j) of a 3x4 map sits at pixel (16 j + 8, 16 i + 8) on a 64x48 sensor.
  EventStream s;
  s.width = 64;
  s.height = 48;
  s.events = {{24, 40, 1, 0}, {16, 16, 1, 10'000'000}};
  const EventGraph g = build_graph(s, gc);
  FeatureMap fmap(3, 4, 1);
  for (std::size_t i = 0; i < fmap.values.size(); ++i) fmap.values[i] = static_cast<double>(i * i);
  const std::vector<double> acts(2, 0.0);
  const std::vector<std::uint32_t> nodes{0, 1};
  const auto rows = fuse_node_features(g, acts, 1, nodes, fmap);
  EXPECT_DOUBLE_EQ(rows[0][1], fmap.at(2, 1, 0));
  EXPECT_DOUBLE_EQ(rows[1][1], 0.25 * (fmap.at(0, 0, 0) + fmap.at(0, 1, 0) + fmap.at(1, 0, 0) + fmap.at(1, 1, 0)));
  const std::vector<std::uint32_t> bad{7};
  EXPECT_THROW(fuse_node_features(g, acts, 1, bad, fmap), InvalidInput);
}

TEST(ObjectFeature, EmptyCropUsesOnlyImageFeatures) {
  const HybridModel model = HybridModel::create(tiny_config());
  EventGraph g(model.cfg.graph);
  FeatureMap fmap(3, 4, 2);
  std::mt19937_64 rng(52);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : fmap.values) v = u(rng);
  const PixelRect rect{4, 4, 12, 10};
  const nn::Vec f = object_feature(model, g, {}, {}, fmap, rect);
  nn::Vec p(static_cast<std::size_t>(model.cfg.fused_dim()), 0.0);
  const auto c = fmap.sample(8.0 / 32, 7.0 / 24);
  const auto m = fmap.box_average(rect, 32, 24);
  p.insert(p.end(), c.begin(), c.end());
  p.insert(p.end(), m.begin(), m.end());
  EXPECT_EQ(f, nn::relu(nn::linear_forward(p, model.object_fc)));
}

TEST(ObjectFeature, MatchesCompositionOfSubOps) {
  const HybridModel model = HybridModel::create(tiny_config());
  const Scenario sc = tiny_scenario();
  const EventGraph g = build_graph(sc.events, model.cfg.graph);
  const GnnActivations acts = gnn_forward(model, g);
  const FeatureMap fmap = extract_features(model.extractor, sc.frames.frames[4], 32, 24);
  for (const auto& b : sc.boxes) {
    if (b.frame_idx != 4) continue;
    const PixelRect rect{b.x_min, b.y_min, b.x_max, b.y_max};
    const auto t = sc.frames.frames[4].t_us;
    const auto crop = crop_nodes(g, rect, 0, t + 1);
    const nn::Vec f = object_feature(model, g, acts.final_layer(), crop, fmap, rect);
    EXPECT_EQ(f, object_feature(model, g, acts.final_layer(), crop, fmap, rect));

    // max over the crop graph's own GNN outputs is not the same thing (the
    // crop drops outside neighbours), so read the full-graph activations
    const auto rows = fuse_node_features(g, acts.final_layer(), model.cfg.gnn_channels, crop, fmap);
    nn::Vec p(static_cast<std::size_t>(model.cfg.fused_dim()), crop.empty() ? 0.0 : -INFINITY);
    for (const auto& r : rows)
      for (std::size_t c = 0; c < p.size(); ++c) p[c] = std::max(p[c], r[c]);
    const auto cs = fmap.sample(0.5 * (rect.x_min + rect.x_max) / 32.0, 0.5 * (rect.y_min + rect.y_max) / 24.0);
    const auto bm = fmap.box_average(rect, 32, 24);
    p.insert(p.end(), cs.begin(), cs.end());
    p.insert(p.end(), bm.begin(), bm.end());
    EXPECT_EQ(f, nn::relu(nn::linear_forward(p, model.object_fc)));
  }
}

// ---------------------------------------------------------------------------

TEST(HeadStep, ZeroObjectsLeaveStateUnchanged) {
  const HybridModel model = HybridModel::create(tiny_config());
  ObjectState state;
  const std::vector<HeadInput> one{{1, {0.5, 0.5, 0.1, 0.1}, nn::Vec(6, 0.3)}};
  head_step(model, state, one, 0);
  const auto before = state.tracks.at(1).h_box;
  EXPECT_TRUE(head_step(model, state, {}, 1).empty());
  EXPECT_EQ(state.tracks.at(1).h_box, before);
}

TEST(HeadStep, ZeroClassifierScoresOneHalf) {
  HybridModel model = HybridModel::create(tiny_config());
  model.classifier.weight.fill(0.0);
  model.classifier.bias.fill(0.0);
  ObjectState state;
  const std::vector<HeadInput> in{{7, {0.2, 0.3, 0.1, 0.2}, nn::Vec(6, 1.0)}};
  const auto s = head_step(model, state, in, 0);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].first, 7);
  EXPECT_DOUBLE_EQ(s[0].second, 0.5);
}

TEST(HeadStep, ReplayWithResetStateIsDeterministic) {
  const HybridModel model = HybridModel::create(tiny_config());
  const std::vector<HeadInput> f0{{1, {0.2, 0.3, 0.1, 0.2}, nn::Vec(6, 1.0)}, {2, {0.7, 0.3, 0.1, 0.2}, nn::Vec(6, 0.1)}};
  const std::vector<HeadInput> f1{{2, {0.6, 0.4, 0.1, 0.2}, nn::Vec(6, 0.5)}, {9, {0.1, 0.1, 0.1, 0.1}, nn::Vec(6, 2.0)}};
  std::vector<std::vector<std::pair<int, double>>> runs[2];
  for (auto& run : runs) {
    ObjectState state;
    run.push_back(head_step(model, state, f0, 0));
    run.push_back(head_step(model, state, f1, 1));
  }
  EXPECT_EQ(runs[0], runs[1]);
  for (const auto& frame : runs[0])
    for (const auto& [id, s] : frame) {
      EXPECT_GT(s, 0.0);
      EXPECT_LT(s, 1.0);
    }
}

TEST(HeadStep, AbsentTracksKeepStateThenDrop) {
  const HybridModel model = HybridModel::create(tiny_config());
  ObjectState state;
  const std::vector<HeadInput> both{{1, {0.2, 0.3, 0.1, 0.2}, nn::Vec(6, 1.0)}, {2, {0.7, 0.3, 0.1, 0.2}, nn::Vec(6, 0.1)}};
  const std::vector<HeadInput> only1{both[0]};
  head_step(model, state, both, 0);
  const auto kept = state.tracks.at(2).h_box;
  for (int k = 1; k <= 30; ++k) head_step(model, state, only1, k);
  ASSERT_TRUE(state.tracks.count(2));
  EXPECT_EQ(state.tracks.at(2).h_box, kept);
  head_step(model, state, only1, 31);
  EXPECT_FALSE(state.tracks.count(2));
  const std::vector<HeadInput> dup{both[0], both[0]};
  EXPECT_THROW(head_step(model, state, dup, 32), InvalidInput);
}

// ---------------------------------------------------------------------------

TEST(StepIncremental, EmptyDirtySetRecomputesNothing) {
  const HybridModel model = HybridModel::create(tiny_config());
  std::mt19937_64 rng(53);
  const EventGraph g = build_graph(oracle::random_stream(rng, 50, 32, 24, 50'000), model.cfg.graph);
  GnnActivations acts = gnn_forward(model, g);
  const GnnActivations before = acts;
  DirtySet empty;
  empty.base_version = empty.version = g.version();
  EXPECT_EQ(step_incremental(model, g, empty, acts), 0u);
  EXPECT_EQ(acts.out, before.out);
}

TEST(StepIncremental, IsolatedNodeComputesOncePerLayer) {
  const HybridModel model = HybridModel::create(tiny_config());
  EventGraph g(model.cfg.graph);
  GnnActivations acts;
  acts.version = g.version();
  EXPECT_EQ(step_incremental(model, g, insert_event(g, {1, 1, 1, 0}, 2), acts), 2u);
  EXPECT_EQ(step_incremental(model, g, insert_event(g, {30, 20, 1, 10}, 2), acts), 2u);
}

TEST(StepIncremental, StaleCacheIsStateError) {
  const HybridModel model = HybridModel::create(tiny_config());
  EventGraph g(model.cfg.graph);
  GnnActivations acts;
  acts.version = g.version();
  const DirtySet first = insert_event(g, {1, 1, 1, 0}, 2);
  const DirtySet second = insert_event(g, {2, 1, 1, 5}, 2);
  EXPECT_THROW(step_incremental(model, g, second, acts), StateError);
  EXPECT_THROW(step_incremental(model, g, first, acts), StateError);
}

TEST(StepIncremental, FiftyInsertionsMatchFullForward) {
  const HybridModel model = HybridModel::create(tiny_config());
  std::mt19937_64 rng(54);
  const EventStream s = oracle::random_stream(rng, 50, 32, 24, 20'000);
  EventGraph g(model.cfg.graph);
  GnnActivations acts;
  acts.version = g.version();
  for (const auto& e : s.events) step_incremental(model, g, insert_event(g, e, 2), acts);
  const GnnActivations full = gnn_forward(model, g);
  const GnnActivations serial = gnn_forward_serial(model, g);
  for (std::size_t l = 0; l < full.out.size(); ++l)
    for (std::size_t k = 0; k < full.out[l].size(); ++k) {
      EXPECT_NEAR(acts.out[l][k], full.out[l][k], 1e-9);
      EXPECT_EQ(serial.out[l][k], full.out[l][k]);
    }
}

// ---------------------------------------------------------------------------

TEST(RunSequence, EmptySequenceGivesEmptyTimeline) {
  const HybridModel model = HybridModel::create(tiny_config());
  EXPECT_TRUE(run_sequence(model, {}, ScoringMode::kIncremental).frames.empty());
}

TEST(RunSequence, ZeroClassifierGivesOneHalfEverywhere) {
  HybridModel model = HybridModel::create(tiny_config());
  model.classifier.weight.fill(0.0);
  model.classifier.bias.fill(0.0);
  const Scenario sc = tiny_scenario();
  const RiskTimeline tl = run_sequence(model, make_packets(model, sc), ScoringMode::kIncremental);
  ASSERT_EQ(tl.frames.size(), sc.frames.frames.size());
  for (const auto& f : tl.frames) {
    EXPECT_FALSE(f.objects.empty());
    EXPECT_DOUBLE_EQ(f.frame_score, 0.5);
  }
}

TEST(RunSequence, OutOfOrderPacketsAreRejected) {
  const HybridModel model = HybridModel::create(tiny_config());
  auto packets = make_packets(model, tiny_scenario());
  std::swap(packets[2], packets[3]);
  EXPECT_THROW(run_sequence(model, packets, ScoringMode::kBatch), InvalidInput);
}

TEST(RunSequence, IncrementalEqualsBatch) {
  const HybridModel model = HybridModel::create(tiny_config());
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Scenario sc = tiny_scenario(seed);
    const auto packets = make_packets(model, sc);
    const RiskTimeline inc = run_sequence(model, packets, ScoringMode::kIncremental);
    expect_same_timeline(inc, run_sequence(model, packets, ScoringMode::kBatch), 1e-9);
    // one-shot scoring over the full graph sees the same causal inputs
    expect_same_timeline(inc, score_prepared(model, prepare_scenario(model, sc)), 1e-9);
    for (const auto& f : inc.frames) {
      double mx = 0.0;
      for (const auto& [id, s] : f.objects) {
        EXPECT_GT(s, 0.0);
        EXPECT_LT(s, 1.0);
        mx = std::max(mx, s);
      }
      EXPECT_EQ(f.frame_score, mx);
      EXPECT_GE(f.infer_us, 0.0);
    }
  }
}

TEST(RunSequence, PrefixGivesTimelinePrefix) {
  const HybridModel model = HybridModel::create(tiny_config());
  const auto packets = make_packets(model, tiny_scenario(2));
  const RiskTimeline full = run_sequence(model, packets, ScoringMode::kIncremental);
  for (std::size_t n : {1u, 3u, 6u}) {
    const std::vector<FramePacket> prefix(packets.begin(), packets.begin() + static_cast<std::ptrdiff_t>(n));
    RiskTimeline want = full;
    want.frames.resize(n);
    expect_same_timeline(run_sequence(model, prefix, ScoringMode::kIncremental), want, 0.0);
  }
}

TEST(RunSequence, ObjectOrderDoesNotChangeScores) {
  const HybridModel model = HybridModel::create(tiny_config());
  auto packets = make_packets(model, tiny_scenario(3));
  const RiskTimeline a = run_sequence(model, packets, ScoringMode::kIncremental);
  for (auto& p : packets) std::reverse(p.objects.begin(), p.objects.end());
  RiskTimeline b = run_sequence(model, packets, ScoringMode::kIncremental);
  for (auto& f : b.frames) std::reverse(f.objects.begin(), f.objects.end());
  expect_same_timeline(a, b, 1e-12);
}

TEST(RunSequence, ZeroFeaturePathIgnoresPixels) {
  const HybridModel model = HybridModel::create(tiny_config());
  Scenario sc = tiny_scenario();
  const PacketOptions zero{FeatureSource::kZero, nullptr};
  const RiskTimeline a = run_sequence(model, make_packets(model, sc, zero), ScoringMode::kIncremental);
  for (auto& f : sc.frames.frames)
    for (auto& v : f.pixels) v = static_cast<std::uint8_t>(255 - v);
  const RiskTimeline b = run_sequence(model, make_packets(model, sc, zero), ScoringMode::kIncremental);
  expect_same_timeline(a, b, 0.0);
  const RiskTimeline c = run_sequence(model, make_packets(model, sc), ScoringMode::kIncremental);
  EXPECT_NE(a.frames.back().frame_score, c.frames.back().frame_score);
}

TEST(RunSequence, ExternalFeatureMapsAreUsed) {
  const HybridModel model = HybridModel::create(tiny_config());
  const Scenario sc = tiny_scenario();
  std::vector<FeatureMap> maps(sc.frames.frames.size(), FeatureMap(2, 2, 2, 0.0));
  const PacketOptions ext{FeatureSource::kExternal, &maps};
  const PacketOptions zero{FeatureSource::kZero, nullptr};
  expect_same_timeline(run_sequence(model, make_packets(model, sc, ext), ScoringMode::kBatch),
                       run_sequence(model, make_packets(model, sc, zero), ScoringMode::kBatch), 0.0);
  maps.pop_back();
  EXPECT_THROW(make_packets(model, sc, ext), InvalidInput);
}

TEST(RunSequence, SensorMismatchIsConfigError) {
  ModelConfig mc = tiny_config();
  mc.graph.width = 64;
  const HybridModel model = HybridModel::create(mc);
  EXPECT_THROW(make_packets(model, tiny_scenario()), ConfigError);
}

TEST(SplitPackets, PartialWindowsCarryPreviousFrame) {
  const HybridModel model = HybridModel::create(tiny_config());
  const auto packets = make_packets(model, tiny_scenario());
  EXPECT_THROW(split_packets(packets, 0), InvalidInput);
  const auto split = split_packets(packets, 4);
  std::size_t events = 0;
  for (const auto& p : split) events += p.events.size();
  std::size_t want = 0;
  for (const auto& p : packets) want += p.events.size();
  EXPECT_EQ(events, want);
  for (std::size_t i = 1; i < split.size(); ++i) {
    EXPECT_LT(split[i - 1].t_us, split[i].t_us);
    EXPECT_EQ(split[i - 1].window_end, split[i].window_begin);
  }
  // Windows ending at a frame timestamp are the original packets.
  std::size_t k = 0;
  for (std::size_t i = 0; i < split.size(); ++i) {
    const auto& q = split[i];
    if (q.t_us == packets[k].t_us) {
      EXPECT_EQ(q.objects.size(), packets[k].objects.size());
      ++k;
    } else if (k == 0) {
      EXPECT_TRUE(q.objects.empty());
    } else {
      EXPECT_EQ(q.objects.size(), packets[k - 1].objects.size());
      EXPECT_EQ(q.fmap.values, packets[k - 1].fmap.values);
    }
  }
  EXPECT_EQ(k, packets.size());
  const RiskTimeline tl = run_sequence(model, split, ScoringMode::kIncremental);
  EXPECT_EQ(tl.frames.size(), split.size());
}

// ---------------------------------------------------------------------------

TEST(Timeline, JsonlRoundTrip) {
  RiskTimeline tl;
  tl.scenario_id = "x";
  tl.frames.push_back({0, 0, {{2, 0.25}, {10, 0.75}}, 0.75, 12.5});
  tl.frames.push_back({1, 50'000, {}, 0.0, 3.0});
  const RiskTimeline back = timeline_from_jsonl(timeline_to_jsonl(tl), "x");
  ASSERT_EQ(back.frames.size(), 2u);
  EXPECT_EQ(back.frames[0].objects, tl.frames[0].objects);
  EXPECT_EQ(back.frames[0].frame_score, 0.75);
  EXPECT_EQ(back.frames[1].t_us, 50'000u);
  EXPECT_EQ(back.frames[1].infer_us, 3.0);
  EXPECT_THROW(timeline_from_jsonl("{\"frame\": 0, \"objects\": {\"a\": 1}}\n"), ParseError);
  EXPECT_THROW(timeline_from_jsonl("not json\n"), ParseError);
}

// ---------------------------------------------------------------------------

TEST(ModelFile, SaveLoadSaveIsByteIdentical) {
  TempDir dir;
  const HybridModel model = HybridModel::create(tiny_config());
  save_model(model, dir / "a.hnw");
  const HybridModel back = load_model(dir / "a.hnw");
  save_model(back, dir / "b.hnw");
  EXPECT_EQ(read_file(dir / "a.hnw"), read_file(dir / "b.hnw"));
  EXPECT_EQ(back.cfg.to_json(), model.cfg.to_json());
  const auto packets = make_packets(model, tiny_scenario());
  expect_same_timeline(run_sequence(model, packets, ScoringMode::kIncremental),
                       run_sequence(back, packets, ScoringMode::kIncremental), 0.0);
}

TEST(ModelFile, CorruptionIsDetected) {
  TempDir dir;
  const HybridModel model = HybridModel::create(tiny_config());
  save_model(model, dir / "a.hnw");
  std::string bytes = read_file(dir / "a.hnw");
  bytes[bytes.size() - 20] ^= 0x01;
  write_file_atomic(dir / "b.hnw", bytes);
  try {
    load_model(dir / "b.hnw");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.kind(), ParseError::Kind::kChecksum);
  }
  // A well-formed archive with the wrong tensors is a manifest error.
  TensorArchive other;
  other.meta = model_to_archive(model).meta;
  save_archive(other, dir / "c.hnw");
  try {
    load_model(dir / "c.hnw");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.kind(), ParseError::Kind::kManifest);
  }
}

TEST(FeatureMapFile, RoundTrip) {
  TempDir dir;
  std::vector<FeatureMap> maps{FeatureMap(2, 3, 2, 0.5), FeatureMap(1, 1, 2, -1.0)};
  maps[0].values[3] = 9.0;
  save_feature_maps(maps, dir / "f.hnw");
  const auto back = load_feature_maps(dir / "f.hnw");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].values, maps[0].values);
  EXPECT_EQ(back[1].height, 1);
}

// ---------------------------------------------------------------------------

TrainConfig quick_train(int epochs) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 1;
  tc.seed = 4;
  return tc;
}

TEST(Train, EmptyDatasetIsRejected) {
  HybridModel model = HybridModel::create(tiny_config());
  EXPECT_THROW(train(model, {}, quick_train(1)), InvalidInput);
  TrainConfig bad = quick_train(1);
  bad.batch_size = 0;
  EXPECT_THROW(TrainConfig::from_json(bad.to_json()), ConfigError);
}

TEST(Train, ZeroLearningRateLeavesModelUnchanged) {
  HybridModel model = HybridModel::create(tiny_config());
  const HybridModel init = model;
  const std::vector<PreparedScenario> data{prepare_scenario(model, tiny_scenario(1)),
                                           prepare_scenario(model, tiny_scenario(2))};
  TrainConfig tc = quick_train(3);
  tc.lr_head = 0.0;
  tc.lr_gnn = 0.0;
  const TrainResult r = train(model, data, tc);
  EXPECT_EQ(encode_archive(model_to_archive(model)), encode_archive(model_to_archive(init)));
  ASSERT_EQ(r.epoch_loss.size(), 3u);
  for (double l : r.epoch_loss) EXPECT_DOUBLE_EQ(l, r.epoch_loss[0]);
}

TEST(Train, SameSeedGivesIdenticalLossCurves) {
  std::vector<double> curves[2];
  for (auto& c : curves) {
    HybridModel model = HybridModel::create(tiny_config());
    const std::vector<PreparedScenario> data{prepare_scenario(model, tiny_scenario(1)),
                                             prepare_scenario(model, tiny_scenario(2)),
                                             prepare_scenario(model, tiny_scenario(3))};
    c = train(model, data, quick_train(4)).step_loss;
  }
  EXPECT_EQ(curves[0], curves[1]);
}

TEST(Train, OverfitsSingleScenario) {
  HybridModel model = HybridModel::create(tiny_config());
  const std::vector<PreparedScenario> data{prepare_scenario(model, tiny_scenario(1))};
  // the default rates are tuned for many scenarios; a single one needs a larger step
  TrainConfig tc = quick_train(200);
  tc.lr_head = 1e-2;
  tc.lr_gnn = 1e-3;
  const TrainResult r = train(model, data, tc);
  ASSERT_EQ(r.step_loss.size(), 200u);
  EXPECT_LT(r.step_loss.back(), 0.2 * r.step_loss.front());
}

// Whole-model gradient including the GNN behind the max readout. GNN entries
// can be tiny, so the criterion is absolute plus relative.
TEST(Train, WholeModelGradientMatchesFiniteDifferences) {
  HybridModel model = HybridModel::create(tiny_config());
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  model.for_each_head([&](const std::string&, nn::Tensor& t) {
    for (auto& v : t.values()) v = u(rng);
  });
  const PreparedScenario ps = prepare_scenario(model, tiny_scenario(1));
  const nn::ClassWeights w;
  HybridModel grad = model.zeros_like();
  scenario_loss(model, ps, w, &grad);
  std::vector<nn::Tensor*> params;
  std::vector<const nn::Tensor*> analytic;
  std::vector<std::string> names;
  model.for_each_trainable([&](const std::string& n, nn::Tensor& t) {
    names.push_back(n);
    params.push_back(&t);
  });
  grad.for_each_trainable([&](const std::string&, nn::Tensor& t) { analytic.push_back(&t); });
  const double eps = 1e-5;
  std::size_t checked = 0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p]->size(); ++i) {
      double& v = (*params[p])[i];
      const double keep = v;
      v = keep + eps;
      const double up = scenario_loss(model, ps, w, nullptr);
      v = keep - eps;
      const double down = scenario_loss(model, ps, w, nullptr);
      v = keep;
      const double num = (up - down) / (2 * eps);
      const double ana = (*analytic[p])[i];
      ASSERT_LE(std::abs(ana - num), 1e-4 * std::max(std::abs(ana), std::abs(num)) + 1e-9)
          << names[p] << "[" << i << "] analytic " << ana << " numeric " << num;
      ++checked;
    }
  }
  EXPECT_GT(checked, 500u);
}

}  // namespace
}  // namespace eae
