#include <benchmark/benchmark.h>

#include "coinmark/baselines.hpp"
#include "coinmark/classifier.hpp"
#include "coinmark/landmark.hpp"
#include "coinmark/random.hpp"
#include "coinmark/regions.hpp"

using namespace coinmark;

namespace {

Image noise_image(std::size_t side, std::uint64_t seed) {
  Rng rng(seed);
  Image img(side, side, 1);
  for (auto& p : img.pixels) p = rng.uniform();
  return img;
}

std::vector<std::string> labels(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("c" + std::to_string(i));
  return out;
}

const Classifier& model() {
  static const Classifier m = build_model(labels(16), {1, 32, 32}, 3, 40);
  return m;
}

void BM_Forward(benchmark::State& state) {
  const Image img = noise_image(40, 1);
  for (auto _ : state) benchmark::DoNotOptimize(model().predict_proba(img));
}
BENCHMARK(BM_Forward);

void BM_ForwardBackward(benchmark::State& state) {
  const Image img = noise_image(40, 1);
  for (auto _ : state) benchmark::DoNotOptimize(model().score_gradient(img, 0));
}
BENCHMARK(BM_ForwardBackward);

void BM_ApplyMask(benchmark::State& state) {
  const auto window = static_cast<std::size_t>(state.range(0));
  const auto stride = static_cast<std::size_t>(state.range(1));
  const RegionSet regions = grid_regions(40, 40, 1, window, stride);
  const Image img = noise_image(40, 2);
  const std::vector<double> x(regions.size(), 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(apply_mask(img, regions, x));
  state.counters["regions"] = static_cast<double>(regions.size());
}
BENCHMARK(BM_ApplyMask)->Args({11, 1})->Args({11, 3})->Args({21, 11});

void BM_Discover(benchmark::State& state) {
  const RegionSet regions = grid_regions(40, 40, 1, 11, 3);
  const Image img = noise_image(40, 3);
  const std::size_t c = model().predict(img);
  DiscoveryConfig cfg;
  cfg.epsilon = 0.5;
  std::size_t evals = 0;
  for (auto _ : state) {
    const auto r = discover(model(), img, regions, c, cfg);
    evals = r.model_evaluations;
    benchmark::DoNotOptimize(r.x_star.data());
  }
  state.counters["evaluations"] = static_cast<double>(evals);
}
BENCHMARK(BM_Discover)->Unit(benchmark::kMillisecond);

void BM_Occlusion(benchmark::State& state) {
  const Image img = noise_image(40, 3);
  for (auto _ : state) benchmark::DoNotOptimize(occlusion_map(model(), img, 0, 11, 3));
}
BENCHMARK(BM_Occlusion)->Unit(benchmark::kMillisecond);

}  // namespace
