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

// OpenMP kernels against their serial references, and single-event incremental
// updates against full recomputation. Thread count comes from OMP_NUM_THREADS.

#include <random>

#include <benchmark/benchmark.h>

#include "eae/event_io.hpp"
#include "eae/graph.hpp"
#include "eae/oracle.hpp"
#include "eae/pipeline.hpp"

namespace {

using namespace eae;

EventStream stream_of(std::size_t n) {
  std::mt19937_64 rng(42);
  return oracle::random_stream(rng, n, 64, 48, 250'000);
}

HybridModel bench_model() {
  ModelConfig cfg;
  cfg.seed = 5;
  return HybridModel::create(cfg);
}

void BM_BuildGraphSerial(benchmark::State& state) {
  const EventStream s = stream_of(static_cast<std::size_t>(state.range(0)));
  const GraphConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(build_graph_serial(s, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_BuildGraphParallel(benchmark::State& state) {
  const EventStream s = stream_of(static_cast<std::size_t>(state.range(0)));
  const GraphConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(build_graph(s, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_GnnForwardSerial(benchmark::State& state) {
  const HybridModel model = bench_model();
  const EventGraph g = build_graph(stream_of(static_cast<std::size_t>(state.range(0))), model.cfg.graph);
  for (auto _ : state) benchmark::DoNotOptimize(gnn_forward_serial(model, g));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_GnnForwardParallel(benchmark::State& state) {
  const HybridModel model = bench_model();
  const EventGraph g = build_graph(stream_of(static_cast<std::size_t>(state.range(0))), model.cfg.graph);
  for (auto _ : state) benchmark::DoNotOptimize(gnn_forward(model, g));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_FramesToEvents(benchmark::State& state) {
  const Scenario sc = generate_scenario("mix", 3, 0);
  set_num_threads(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(frames_to_events(sc.frames));
  set_num_threads(1);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(sc.frames.frames.size()));
}

// One insertion per iteration on a graph of range(0) nodes.
void BM_InsertIncremental(benchmark::State& state) {
  const HybridModel model = bench_model();
  const auto n = static_cast<std::size_t>(state.range(0));
  const EventStream s = stream_of(n + 4096);
  EventGraph g = build_graph(EventStream{s.width, s.height, {s.events.begin(), s.events.begin() + static_cast<std::ptrdiff_t>(n)}},
                             model.cfg.graph);
  GnnActivations acts = gnn_forward(model, g);
  std::size_t next = n;
  for (auto _ : state) {
    if (next == s.events.size()) {
      state.SkipWithError("ran out of events");
      break;
    }
    DirtySet dirty = insert_event(g, s.events[next++], model.cfg.gnn_depth);
    benchmark::DoNotOptimize(step_incremental(model, g, dirty, acts));
  }
}

void BM_InsertFullRecompute(benchmark::State& state) {
  const HybridModel model = bench_model();
  const EventGraph g = build_graph(stream_of(static_cast<std::size_t>(state.range(0))), model.cfg.graph);
  for (auto _ : state) benchmark::DoNotOptimize(gnn_forward(model, g));
}

}  // namespace

BENCHMARK(BM_BuildGraphSerial)->Arg(2000)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BuildGraphParallel)->Arg(2000)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GnnForwardSerial)->Arg(2000)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GnnForwardParallel)->Arg(2000)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FramesToEvents)->Arg(1)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK(BM_InsertIncremental)->Arg(10000)->Iterations(2000)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_InsertFullRecompute)->Arg(10000)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
