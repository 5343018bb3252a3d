#include <benchmark/benchmark.h>

#include "vigtext/attacks.hpp"
#include "vigtext/dct.hpp"
#include "vigtext/pipeline.hpp"
#include "vigtext/rng.hpp"

using namespace vigtext;

namespace {

RasterImage noise_image(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  RasterImage img(w, h);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

const char* kExplanation = "{B2, B3}: the brick pattern repeats too evenly\n{D4}: odd glow near the edge";

void BM_Dct2(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(1);
  Eigen::MatrixXd x(n, n);
  for (auto& v : x.reshaped()) v = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(dct2(x));
}
BENCHMARK(BM_Dct2)->Arg(8)->Arg(16)->Arg(32)->Arg(128);

void BM_DctVisual(benchmark::State& state) {
  const auto img = noise_image(15, 15, 2);
  for (auto _ : state) benchmark::DoNotOptimize(dct_visual(img));
}
BENCHMARK(BM_DctVisual);

DualGraph sample_graph(int grid) {
  static const ToyProvider toy(3);
  GraphBuilder builder(toy, grid, nullptr);
  return builder.build(noise_image(60, 60, 4), kExplanation, 1).graph;
}

void BM_GraphBuild(benchmark::State& state) {
  const ToyProvider toy(3);
  const int grid = static_cast<int>(state.range(0));
  GraphBuilder builder(toy, grid, nullptr);
  const auto img = noise_image(60, 60, 4);
  for (auto _ : state) benchmark::DoNotOptimize(builder.build(img, kExplanation, 1));
}
BENCHMARK(BM_GraphBuild)->Arg(3)->Arg(4)->Arg(5);

void BM_GatForward(benchmark::State& state) {
  const auto g = sample_graph(static_cast<int>(state.range(0)));
  const auto model = init_model(GnnConfig{}, 5);
  const auto batch = make_batch(g, model.config.in_dim);
  for (auto _ : state) benchmark::DoNotOptimize(forward(model, batch, false));
  state.counters["nodes"] = static_cast<double>(g.nodes.size());
}
BENCHMARK(BM_GatForward)->Arg(4)->Arg(8);

void BM_GatForwardBackward(benchmark::State& state) {
  const auto g = sample_graph(static_cast<int>(state.range(0)));
  const auto model = init_model(GnnConfig{}, 5);
  const auto batch = make_batch(g, model.config.in_dim);
  const std::vector<int> labels = {1};
  for (auto _ : state) {
    const auto r = forward(model, batch, true, 7);
    benchmark::DoNotOptimize(backward(model, r.cache, r.logits, labels));
  }
}
BENCHMARK(BM_GatForwardBackward)->Arg(4)->Arg(8);

void BM_FgsmStep(benchmark::State& state) {
  const ToyProvider toy(3);
  GraphBuilder builder(toy, 4, nullptr);
  const DifferentiableGraphBuilder diff(toy, 4, builder.text_graphs(kExplanation, nullptr));
  const auto model = init_model(GnnConfig{}, 5);
  const auto x = to_float(noise_image(60, 60, 6));
  for (auto _ : state) benchmark::DoNotOptimize(diff.evaluate_ce(model, x, 1));
}
BENCHMARK(BM_FgsmStep);

}  // namespace
BENCHMARK_MAIN();
