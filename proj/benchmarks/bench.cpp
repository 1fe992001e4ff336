#include <benchmark/benchmark.h>

#include "tgseg/datasets.hpp"
#include "tgseg/metrics.hpp"
#include "tgseg/model.hpp"

using namespace tgseg;

namespace {

const Model& toy() {
  static const Model model = Model::create(ModelConfig{});
  return model;
}

GeometricPrompt whole_box() {
  GeometricPrompt g;
  g.box = Box{0, 0, 64, 64};
  return g;
}

void BM_SimilarityMap(benchmark::State& state) {
  const EncodedImage enc = toy().encode_image(render_synthetic_sample(0, 0, 64).image);
  for (auto _ : state) benchmark::DoNotOptimize(toy().similarity_map(enc, "line"));
}
BENCHMARK(BM_SimilarityMap);

void BM_SimilarityPromptEncoder(benchmark::State& state) {
  const EncodedImage enc = toy().encode_image(render_synthetic_sample(0, 0, 64).image);
  const Grid2D up = prepare_similarity_input(toy().similarity_map(enc, "line"));
  for (auto _ : state) {
    benchmark::DoNotOptimize(encode_similarity_map(up, toy().params().prompt_encoder, 16, 16));
  }
}
BENCHMARK(BM_SimilarityPromptEncoder);

void BM_PromptedForward(benchmark::State& state) {
  const EncodedImage enc = toy().encode_image(render_synthetic_sample(0, 0, 64).image);
  const GeometricPrompt g = whole_box();
  for (auto _ : state) benchmark::DoNotOptimize(toy().forward(enc, "line", g));
}
BENCHMARK(BM_PromptedForward);

void BM_Predict(benchmark::State& state) {
  const FeatureMap image = render_synthetic_sample(0, 0, 64).image;
  const GeometricPrompt g = whole_box();
  for (auto _ : state) benchmark::DoNotOptimize(toy().predict(image, "grid", g));
}
BENCHMARK(BM_Predict);

void BM_BoundaryIou(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto a = render_synthetic_sample(1, 0, n), b = render_synthetic_sample(2, 0, n);
  const double d = default_boundary_distance(n, n);
  for (auto _ : state) benchmark::DoNotOptimize(boundary_iou(a.target, b.target, d));
}
BENCHMARK(BM_BoundaryIou)->Arg(64)->Arg(256)->Arg(1024);

}  // namespace

BENCHMARK_MAIN();
