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
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "eae/event_io.hpp"
#include "eae/graph.hpp"
#include "eae/metrics.hpp"
#include "eae/oracle.hpp"
#include "eae/pipeline.hpp"
#include "run_manifest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace eae::cli {
namespace {

struct Context {
  std::uint64_t seed = 1;
  bool seed_given = false;
  int threads = 1;
  json config = json::object();
  std::vector<std::string> argv;

  json section(const char* name) const { return config.contains(name) ? config.at(name) : json::object(); }
};

struct ConverterFlags {
  ConverterOptions opts;
  double noise_rate = 0.0;
};

ConverterFlags converter_from_config(const json& j) {
  ConverterFlags c;
  try {
    c.opts.threshold = j.value("threshold", c.opts.threshold);
    c.opts.refractory_us = j.value("refractory_us", c.opts.refractory_us);
    c.opts.linear = j.value("linear", c.opts.linear);
    c.noise_rate = j.value("noise_rate", c.noise_rate);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("converter config: ") + e.what());
  }
  return c;
}

json converter_to_json(const ConverterFlags& c) {
  return {{"threshold", c.opts.threshold},
          {"refractory_us", c.opts.refractory_us},
          {"linear", c.opts.linear},
          {"noise_rate", c.noise_rate}};
}

void add_converter_flags(CLI::App* cmd, ConverterFlags& c) {
  cmd->add_option("--threshold", c.opts.threshold, "contrast threshold C");
  cmd->add_option("--refractory", c.opts.refractory_us, "refractory period in microseconds (0 disables)");
  cmd->add_flag("--linear", c.opts.linear, "threshold raw intensity instead of log(1 + L)");
  cmd->add_option("--noise-rate", c.noise_rate, "background noise events per pixel per second");
}

ModelConfig model_config(const Context& ctx) {
  ModelConfig cfg = ModelConfig::from_json(ctx.section("model"));
  if (ctx.seed_given) cfg.seed = ctx.seed;
  return cfg;
}

// Sensor size follows the data unless the config pins it.
ModelConfig model_config_for(const Context& ctx, int width, int height) {
  ModelConfig cfg = model_config(ctx);
  const json m = ctx.section("model");
  const bool pinned = m.contains("graph") && (m["graph"].contains("width") || m["graph"].contains("height"));
  if (!pinned) {
    cfg.graph.width = width;
    cfg.graph.height = height;
  }
  cfg.validate();
  return cfg;
}

std::vector<Scenario> load_dataset(const fs::path& root, RunManifest& manifest) {
  std::vector<Scenario> out;
  for (const auto& dir : list_scenarios(root)) {
    out.push_back(load_scenario(dir));
    manifest.input(dir);
  }
  if (out.empty()) throw InvalidInput("no scenarios under " + root.string());
  return out;
}

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  // nearest rank
  const auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * static_cast<double>(v.size())));
  return v[std::min(v.size() - 1, rank == 0 ? 0 : rank - 1)];
}

double median(std::vector<double> v) { return percentile(std::move(v), 50.0); }

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string preset = "mix";
  std::string spec;
  std::size_t count = 1;
  std::string out;
  ConverterFlags conv;
};

int cmd_synth(const Context& ctx, const SynthArgs& a) {
  RunManifest manifest("synth", ctx.argv);
  manifest.config({{"converter", converter_to_json(a.conv)}, {"preset", a.preset}, {"spec", a.spec},
                   {"count", a.count}});
  const fs::path out(a.out);
  fs::create_directories(out);
  for (std::size_t i = 0; i < a.count; ++i) {
    const std::uint64_t seed = ctx.seed + i;
    Scenario sc;
    if (!a.spec.empty()) {
      sc.spec = read_scenario_spec(a.spec);
      if (ctx.seed_given || a.count > 1) sc.spec.seed = seed;
      SynthOutput so = synth_scenario(sc.spec);
      sc.frames = std::move(so.frames);
      sc.boxes = std::move(so.boxes);
      sc.labels = std::move(so.labels);
      sc.events = frames_to_events(sc.frames, a.conv.opts);
      char id[96];
      std::snprintf(id, sizeof id, "%s-%05zu-s%llu", fs::path(a.spec).stem().c_str(), i,
                    static_cast<unsigned long long>(sc.spec.seed));
      sc.id = id;
    } else {
      sc = generate_scenario(a.preset, seed, i, a.conv.opts);
    }
    if (a.conv.noise_rate > 0.0)
      sc.events = add_noise(sc.events, a.conv.noise_rate, 0, sc.spec.duration_us, seed);
    write_scenario(sc, out / sc.id);
    manifest.output(out / sc.id);
    spdlog::info("wrote {} ({} frames, {} events)", sc.id, sc.frames.frames.size(), sc.events.size());
  }
  manifest.write(out, ctx.seed, ctx.threads);
  return 0;
}

struct ConvertArgs {
  std::string in;
  std::string out;
  double fps = 20.0;
  ConverterFlags conv;
  std::string graph_dump;
  std::vector<int> pool;
  std::string features_out;
  std::string model;
};

int cmd_convert(const Context& ctx, const ConvertArgs& a) {
  RunManifest manifest("convert", ctx.argv);
  manifest.config({{"converter", converter_to_json(a.conv)}, {"pool", a.pool}});
  const fs::path in(a.in);
  double fps = a.fps;
  std::uint64_t duration = 0;
  if (fs::exists(in / "scenario.json")) {
    const auto spec = read_scenario_spec(in / "scenario.json");
    fps = spec.fps;
    duration = spec.duration_us;
  }
  const fs::path frames_manifest = fs::is_directory(in) ? in / "frames.jsonl" : in;
  const FrameSequence frames = read_frames(frames_manifest, fps);
  manifest.input(frames_manifest);
  EventStream events = frames_to_events(frames, a.conv.opts);
  if (a.conv.noise_rate > 0.0) {
    if (duration == 0 && !frames.frames.empty()) duration = frames.frames.back().t_us + 1;
    events = add_noise(events, a.conv.noise_rate, 0, duration, ctx.seed);
  }
  write_events(events, a.out);
  manifest.output(a.out);
  spdlog::info("{} frames -> {} events", frames.frames.size(), events.size());

  if (!a.graph_dump.empty() || !a.features_out.empty()) {
    ModelConfig cfg = model_config_for(ctx, frames.width, frames.height);
    HybridModel model = a.model.empty() ? HybridModel::create(cfg) : load_model(a.model);
    if (!a.graph_dump.empty()) {
      EventGraph g = build_graph(events, model.cfg.graph);
      if (!a.pool.empty()) {
        if (a.pool.size() != 3) throw InvalidInput("--pool expects nx,ny,nt");
        g = voxel_pool(g, VoxelGrid{a.pool[0], a.pool[1], a.pool[2]});
      }
      write_file_atomic(a.graph_dump, graph_to_json(g));
      manifest.output(a.graph_dump);
    }
    if (!a.features_out.empty()) {
      std::vector<FeatureMap> maps;
      for (const auto& f : frames.frames)
        maps.push_back(extract_features(model.extractor, f, frames.width, frames.height));
      save_feature_maps(maps, a.features_out);
      manifest.output(a.features_out);
    }
  }
  manifest.write(a.out, ctx.seed, ctx.threads);
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string out;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<double> lr_head;
  std::optional<double> lr_gnn;
  bool zero_features = false;
  std::string loss_csv;
};

int cmd_train(const Context& ctx, const TrainArgs& a) {
  RunManifest manifest("train", ctx.argv);
  const auto scenarios = load_dataset(a.data, manifest);
  const ModelConfig mcfg = model_config_for(ctx, scenarios.front().frames.width, scenarios.front().frames.height);
  TrainConfig tcfg = TrainConfig::from_json(ctx.section("train"));
  if (ctx.seed_given) tcfg.seed = ctx.seed;
  if (a.epochs) tcfg.epochs = *a.epochs;
  if (a.batch_size) tcfg.batch_size = *a.batch_size;
  if (a.lr_head) tcfg.lr_head = *a.lr_head;
  if (a.lr_gnn) tcfg.lr_gnn = *a.lr_gnn;
  tcfg = TrainConfig::from_json(tcfg.to_json());  // re-validate overrides
  manifest.config({{"model", mcfg.to_json()}, {"train", tcfg.to_json()}, {"zero_features", a.zero_features}});

  HybridModel model = HybridModel::create(mcfg);
  PacketOptions popts;
  if (a.zero_features) popts.source = FeatureSource::kZero;
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<PreparedScenario> data(scenarios.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < scenarios.size(); ++i) data[i] = prepare_scenario(model, scenarios[i], popts);
  manifest.timing("prepare_s", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());

  const auto t1 = std::chrono::steady_clock::now();
  const TrainResult res = train(model, data, tcfg, [](int epoch, double loss) {
    spdlog::info("epoch {} loss {:.6f}", epoch, loss);
  });
  manifest.timing("train_s", std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count());

  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_model(model, out);
  manifest.output(out);
  const fs::path csv = a.loss_csv.empty() ? fs::path(out.string() + ".loss.csv") : fs::path(a.loss_csv);
  const std::size_t per_epoch = (data.size() + static_cast<std::size_t>(tcfg.batch_size) - 1) /
                                static_cast<std::size_t>(tcfg.batch_size);
  std::ostringstream os;
  os.precision(17);
  os << "step,epoch,loss\n";
  for (std::size_t s = 0; s < res.step_loss.size(); ++s) os << s << ',' << s / per_epoch << ',' << res.step_loss[s] << '\n';
  write_file_atomic(csv, os.str());
  manifest.output(csv);
  manifest.set("epoch_loss", res.epoch_loss);
  manifest.write(out, ctx.seed, ctx.threads);
  return 0;
}

struct InferArgs {
  std::string model;
  std::string data;
  std::string out;
  std::string mode = "incremental";
  std::string timing = "on";
  std::string features;
  bool zero_features = false;
  int substeps = 1;
};

int cmd_infer(const Context& ctx, const InferArgs& a) {
  RunManifest manifest("infer", ctx.argv);
  const HybridModel model = load_model(a.model);
  manifest.input(a.model);
  const auto scenarios = load_dataset(a.data, manifest);
  const ScoringMode mode = a.mode == "batch" ? ScoringMode::kBatch : ScoringMode::kIncremental;
  PacketOptions popts;
  std::vector<FeatureMap> external;
  if (a.zero_features) popts.source = FeatureSource::kZero;
  if (!a.features.empty()) {
    if (scenarios.size() != 1) throw InvalidInput("--features applies to a single scenario");
    external = load_feature_maps(a.features);
    manifest.input(a.features);
    popts.source = FeatureSource::kExternal;
    popts.external = &external;
  }
  manifest.config({{"mode", a.mode}, {"timing", a.timing}, {"substeps", a.substeps},
                   {"zero_features", a.zero_features}, {"model", model.cfg.to_json()}});
  const fs::path out(a.out);
  fs::create_directories(out);
  for (const auto& sc : scenarios) {
    auto packets = make_packets(model, sc, popts);
    if (a.substeps > 1) packets = split_packets(packets, a.substeps);
    RiskTimeline tl = run_sequence(model, packets, mode);
    tl.scenario_id = sc.id;
    if (a.timing == "off")
      for (auto& f : tl.frames) f.infer_us = 0.0;
    write_file_atomic(out / (sc.id + ".jsonl"), timeline_to_jsonl(tl));
    manifest.output(out / (sc.id + ".jsonl"));
    spdlog::info("scored {} ({} frames)", sc.id, tl.frames.size());
  }
  manifest.write(out, ctx.seed, ctx.threads);
  return 0;
}

struct EvalArgs {
  std::string scores;
  std::string data;
  std::string out;
};

int cmd_eval(const Context& ctx, const EvalArgs& a) {
  RunManifest manifest("eval", ctx.argv);
  const EvalConfig cfg = EvalConfig::from_json(ctx.section("eval"));
  manifest.config({{"eval", cfg.to_json()}});
  const fs::path scores(a.scores);
  std::vector<RiskTimeline> timelines;
  std::vector<LabelSet> labels;
  std::set<std::string> ids;
  for (const auto& dir : list_scenarios(a.data)) {
    const std::string id = dir.filename().string();
    const fs::path file = scores / (id + ".jsonl");
    if (!fs::exists(file)) throw InvalidInput("no scores for scenario " + id);
    timelines.push_back(timeline_from_jsonl(read_file(file), id));
    labels.push_back(read_labels(dir / "labels.json"));
    ids.insert(id);
    manifest.input(file);
    manifest.input(dir / "labels.json");
  }
  for (const auto& entry : fs::directory_iterator(scores))
    if (entry.path().extension() == ".jsonl" && !ids.count(entry.path().stem().string()))
      throw InvalidInput("scores for unknown scenario " + entry.path().stem().string());
  if (timelines.empty()) throw InvalidInput("no scenarios under " + a.data);

  json report = evaluate(timelines, labels, cfg);
  // cross-check the pooled sets against the brute-force oracles
  const auto objects = object_scored_set(timelines, labels);
  const auto frames = frame_scored_set(timelines, labels);
  json check;
  const auto agree = [&](const char* name, const ScoredSet& set, auto fast, auto slow) {
    try {
      const double x = fast(set), y = slow(set);
      check[name] = {{"value", x}, {"oracle", y}, {"match", std::abs(x - y) <= 1e-9}};
    } catch (const UndefinedMetric&) {
      check[name] = {{"match", nullptr}};
    }
  };
  agree("auc", objects, roc_auc, [](const ScoredSet& s) {
    bool pos = false, neg = false;
    for (const auto& x : s) (x.label ? pos : neg) = true;
    if (!pos || !neg) throw UndefinedMetric("single class");
    return oracle::auc_pairwise(s);
  });
  agree("ap", objects, average_precision, [](const ScoredSet& s) {
    if (std::none_of(s.begin(), s.end(), [](const Scored& x) { return x.label == 1; })) throw UndefinedMetric("no positives");
    return oracle::ap_rank_scan(s);
  });
  agree("auc_frame", frames, roc_auc, [](const ScoredSet& s) {
    bool pos = false, neg = false;
    for (const auto& x : s) (x.label ? pos : neg) = true;
    if (!pos || !neg) throw UndefinedMetric("single class");
    return oracle::auc_pairwise(s);
  });
  report["oracle_check"] = check;
  if (report.contains("undefined"))
    for (const auto& [name, why] : report["undefined"].items())
      spdlog::warn("{} undefined: {}", name, why.get<std::string>());

  const fs::path out(a.out);
  fs::create_directories(out);
  write_file_atomic(out / "report.json", report.dump(2) + "\n");
  manifest.output(out / "report.json");
  const auto curve = [&](const char* file, auto fn, const ScoredSet& set, const char* x, const char* y) {
    try {
      write_file_atomic(out / file, curve_to_csv(fn(set), x, y));
      manifest.output(out / file);
    } catch (const UndefinedMetric& e) {
      spdlog::warn("{} not written: {}", file, e.what());
    }
  };
  curve("roc.csv", roc_curve, objects, "fpr", "tpr");
  curve("pr.csv", pr_curve, objects, "recall", "precision");
  curve("roc_frame.csv", roc_curve, frames, "fpr", "tpr");
  manifest.write(out, ctx.seed, ctx.threads);
  std::cout << report["metrics"].dump() << "\n";
  return 0;
}

struct BenchArgs {
  std::string model;
  std::string data;
  std::string out;
  std::size_t graph_nodes = 10'000;
  int insertions = 100;
  int events_per_insert = 1;
};

json latency_stats(const std::vector<double>& us) {
  return {{"frames", us.size()},
          {"p50_us", percentile(us, 50)},
          {"p95_us", percentile(us, 95)},
          {"p99_us", percentile(us, 99)}};
}

int cmd_bench(const Context& ctx, const BenchArgs& a) {
  RunManifest manifest("bench", ctx.argv);
  HybridModel model;
  if (!a.model.empty()) {
    model = load_model(a.model);
    manifest.input(a.model);
  } else {
    model = HybridModel::create(model_config(ctx));
  }
  if (a.insertions < 1 || a.events_per_insert < 1) throw InvalidInput("insertions and events-per-insert must be >= 1");
  json report;
  report["threads"] = ctx.threads;
  report["model"] = model.cfg.to_json();

  // Per-frame scoring on real data.
  std::size_t events = 0;
  std::vector<double> inc_us, batch_us;
  if (!a.data.empty()) {
    for (const auto& sc : load_dataset(a.data, manifest)) {
      const auto packets = make_packets(model, sc);
      for (const auto& f : run_sequence(model, packets, ScoringMode::kIncremental).frames) inc_us.push_back(f.infer_us);
      for (const auto& f : run_sequence(model, packets, ScoringMode::kBatch).frames) batch_us.push_back(f.infer_us);
      events += sc.events.size();
    }
  }
  double inc_total = 0.0;
  for (const double v : inc_us) inc_total += v;
  report["scenario"] = {{"no_data", events == 0},
                        {"events", events},
                        {"events_per_s", events == 0 || inc_total <= 0.0 ? 0.0 : static_cast<double>(events) / (inc_total / 1e6)},
                        {"incremental", latency_stats(inc_us)},
                        {"batch", latency_stats(batch_us)}};

  // Single-insertion update against full recomputation on a large graph.
  const auto& gc = model.cfg.graph;
  std::mt19937_64 rng(ctx.seed);
  const std::size_t extra = static_cast<std::size_t>(a.insertions) * static_cast<std::size_t>(a.events_per_insert);
  // a quarter second of uniform activity gives graph densities close to the synthetic scenes
  const EventStream stream = oracle::random_stream(rng, a.graph_nodes + extra, gc.width, gc.height, 250'000);
  EventStream base{stream.width, stream.height, {stream.events.begin(), stream.events.begin() + static_cast<std::ptrdiff_t>(a.graph_nodes)}};
  EventGraph graph = build_graph(base, gc);
  GnnActivations acts = gnn_forward(model, graph);
  std::vector<double> inc, full;
  std::size_t evaluated = 0;
  for (int k = 0; k < a.insertions; ++k) {
    const auto first = a.graph_nodes + static_cast<std::size_t>(k) * static_cast<std::size_t>(a.events_per_insert);
    const auto t0 = std::chrono::steady_clock::now();
    DirtySet dirty;
    dirty.base_version = dirty.version = graph.version();
    for (int e = 0; e < a.events_per_insert; ++e)
      dirty.merge(insert_event(graph, stream.events[first + static_cast<std::size_t>(e)], model.cfg.gnn_depth));
    evaluated += step_incremental(model, graph, dirty, acts);
    const auto t1 = std::chrono::steady_clock::now();
    const GnnActivations ref = gnn_forward(model, graph);
    const auto t2 = std::chrono::steady_clock::now();
    inc.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
    full.push_back(std::chrono::duration<double, std::micro>(t2 - t1).count());
  }
  const double inc_med = median(inc), full_med = median(full);
  report["insertion"] = {{"graph_nodes", graph.num_nodes()},
                         {"edges_per_node", static_cast<double>(graph.num_edges()) / static_cast<double>(graph.num_nodes())},
                         {"insertions", a.insertions},
                         {"events_per_insert", a.events_per_insert},
                         {"incremental_median_us", inc_med},
                         {"full_median_us", full_med},
                         {"speedup", inc_med > 0.0 ? full_med / inc_med : 0.0},
                         {"node_layer_evaluations", evaluated},
                         {"incremental_events_per_s", inc_med > 0.0 ? a.events_per_insert / (inc_med / 1e6) : 0.0}};
  report["flops_per_event"] = gnn_flops_per_event(model, graph);

  const std::string text = report.dump(2) + "\n";
  if (a.out.empty()) {
    std::cout << text;
  } else {
    write_file_atomic(a.out, text);
    manifest.output(a.out);
    manifest.write(a.out, ctx.seed, ctx.threads);
  }
  return 0;
}

int cmd_selftest(const Context& ctx) {
  json out;
  out["suites"] = json::array();
  bool ok = true;
  for (const auto& r : oracle::run_selftest(ctx.seed)) {
    out["suites"].push_back({{"name", r.name}, {"passed", r.passed}, {"detail", r.detail}, {"seconds", r.seconds}});
    ok = ok && r.passed;
    (r.passed ? spdlog::info("{}: ok", r.name) : spdlog::error("{}: {}", r.name, r.detail));
  }
  out["passed"] = ok;
  std::cout << out.dump(2) << "\n";
  return ok ? 0 : 3;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_st("eae");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("EAE_LOG");
  spdlog::set_level(env ? spdlog::level::from_str(env) : spdlog::level::info);
}

int run(std::vector<std::string> args) {
  CLI::App app{"Event-camera traffic anomaly scoring"};
  app.fallthrough();  // global flags may follow the subcommand
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(0, 1);
  Context ctx;
  std::string config_path, replay;
  app.add_option("--seed", ctx.seed, "random seed");
  app.add_option("--threads", ctx.threads, "OpenMP threads (1 keeps runs reproducible)")->check(CLI::PositiveNumber);
  app.add_option("--config", config_path, "JSON config with converter/model/train/eval sections")->check(CLI::ExistingFile);
  app.add_option("--replay", replay, "re-run the command recorded in a manifest")->check(CLI::ExistingFile);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "generate synthetic driving scenarios");
  c_synth->add_option("--preset", synth.preset, "lane-merge | rush-out | oncoming | normal | mix");
  c_synth->add_option("--spec", synth.spec, "scenario spec JSON instead of a preset")->check(CLI::ExistingFile);
  c_synth->add_option("--count", synth.count, "number of scenarios (seeds seed .. seed + count - 1)");
  c_synth->add_option("--out", synth.out, "output directory")->required();
  add_converter_flags(c_synth, synth.conv);

  ConvertArgs conv;
  auto* c_conv = app.add_subcommand("convert", "convert a frame sequence to events");
  c_conv->add_option("--in", conv.in, "scenario directory or frames.jsonl")->required()->check(CLI::ExistingPath);
  c_conv->add_option("--out", conv.out, "output EVT1 file")->required();
  c_conv->add_option("--fps", conv.fps, "frame rate when no scenario.json is present");
  add_converter_flags(c_conv, conv.conv);
  c_conv->add_option("--graph-dump", conv.graph_dump, "write the event graph as JSON");
  c_conv->add_option("--pool", conv.pool, "voxel-pool the dumped graph: nx,ny,nt")->delimiter(',')->expected(3);
  c_conv->add_option("--features-out", conv.features_out, "write toy-extractor feature maps (HNW1)");
  c_conv->add_option("--model", conv.model, "model whose extractor/graph config to use");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "train a model on a scenario dataset");
  c_train->add_option("--data", tr.data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  c_train->add_option("--out", tr.out, "model file")->required();
  c_train->add_option("--epochs", tr.epochs);
  c_train->add_option("--batch-size", tr.batch_size);
  c_train->add_option("--lr-head", tr.lr_head);
  c_train->add_option("--lr-gnn", tr.lr_gnn);
  c_train->add_flag("--zero-features", tr.zero_features, "replace image features by zeros");
  c_train->add_option("--loss-csv", tr.loss_csv, "loss curve CSV (default <out>.loss.csv)");

  InferArgs inf;
  auto* c_inf = app.add_subcommand("infer", "score scenarios");
  c_inf->add_option("--model", inf.model)->required()->check(CLI::ExistingFile);
  c_inf->add_option("--data", inf.data)->required()->check(CLI::ExistingDirectory);
  c_inf->add_option("--out", inf.out, "directory for <id>.jsonl")->required();
  c_inf->add_option("--mode", inf.mode)->check(CLI::IsMember({"batch", "incremental"}));
  c_inf->add_option("--timing", inf.timing, "off writes infer_us = 0")->check(CLI::IsMember({"on", "off"}));
  c_inf->add_option("--features", inf.features, "external feature maps (HNW1)")->check(CLI::ExistingFile);
  c_inf->add_flag("--zero-features", inf.zero_features);
  c_inf->add_option("--substeps", inf.substeps, "score partial windows within each frame")->check(CLI::PositiveNumber);

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "evaluate scores against labels");
  c_eval->add_option("--scores", ev.scores)->required()->check(CLI::ExistingDirectory);
  c_eval->add_option("--data", ev.data)->required()->check(CLI::ExistingDirectory);
  c_eval->add_option("--out", ev.out)->required();

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "latency and throughput");
  c_bench->add_option("--model", bench.model)->check(CLI::ExistingFile);
  c_bench->add_option("--data", bench.data)->check(CLI::ExistingDirectory);
  c_bench->add_option("--out", bench.out, "bench JSON (default stdout)");
  c_bench->add_option("--graph-nodes", bench.graph_nodes);
  c_bench->add_option("--insertions", bench.insertions);
  c_bench->add_option("--events-per-insert", bench.events_per_insert);

  auto* c_self = app.add_subcommand("selftest", "run every oracle suite");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (!replay.empty()) {
    const json m = json::parse(read_file(replay));
    std::vector<std::string> again{"eae"};
    for (const auto& s : m.at("argv")) again.push_back(s.get<std::string>());
    spdlog::info("replaying {}", m.at("command").get<std::string>());
    return run(again);
  }
  if (app.get_subcommands().empty()) {
    std::cerr << "A subcommand is required\n" << app.help();
    return 1;
  }

  ctx.seed_given = app.count("--seed") > 0;
  ctx.argv.assign(args.begin() + 1, args.end());
  if (!config_path.empty()) {
    try {
      ctx.config = json::parse(read_file(config_path));
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }
  set_num_threads(ctx.threads);

  if (*c_synth) {
    const ConverterFlags base = converter_from_config(ctx.section("converter"));
    if (!c_synth->count("--threshold")) synth.conv.opts.threshold = base.opts.threshold;
    if (!c_synth->count("--refractory")) synth.conv.opts.refractory_us = base.opts.refractory_us;
    if (!c_synth->count("--linear")) synth.conv.opts.linear = base.opts.linear;
    if (!c_synth->count("--noise-rate")) synth.conv.noise_rate = base.noise_rate;
    return cmd_synth(ctx, synth);
  }
  if (*c_conv) {
    const ConverterFlags base = converter_from_config(ctx.section("converter"));
    if (!c_conv->count("--threshold")) conv.conv.opts.threshold = base.opts.threshold;
    if (!c_conv->count("--refractory")) conv.conv.opts.refractory_us = base.opts.refractory_us;
    if (!c_conv->count("--linear")) conv.conv.opts.linear = base.opts.linear;
    if (!c_conv->count("--noise-rate")) conv.conv.noise_rate = base.noise_rate;
    return cmd_convert(ctx, conv);
  }
  if (*c_train) return cmd_train(ctx, tr);
  if (*c_inf) return cmd_infer(ctx, inf);
  if (*c_eval) return cmd_eval(ctx, ev);
  if (*c_bench) return cmd_bench(ctx, bench);
  if (*c_self) return cmd_selftest(ctx);
  return 1;
}

}  // namespace
}  // namespace eae::cli

int main(int argc, char** argv) {
  eae::cli::setup_logging();
  try {
    return eae::cli::run({argv, argv + argc});
  } catch (const eae::StateError& e) {
    spdlog::error("{}", e.what());
    return 3;
  } catch (const eae::Error& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    return 3;
  }
}
