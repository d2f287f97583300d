#include <benchmark/benchmark.h>

#include "refsr/autograd.hpp"
#include "refsr/features.hpp"
#include "refsr/image.hpp"
#include "refsr/matching.hpp"
#include "refsr/metrics.hpp"
#include "refsr/rng.hpp"
#include "refsr/wavelet.hpp"

using namespace refsr;

namespace {

Tensor normal_tensor(Tensor::Shape shape, std::uint64_t seed) {
  Tensor t(shape);
  Rng rng(seed);
  for (double& v : t.storage()) v = rng.normal();
  return t;
}

ImageTensor uniform_image(int h, int w, std::uint64_t seed) {
  ImageTensor img(h, w, 3);
  Rng rng(seed);
  for (double& v : img.data) v = rng.uniform();
  return img;
}

void BM_Conv2dForward(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0)), ch = static_cast<int>(state.range(1));
  const ag::Var x = ag::constant(normal_tensor({1, side, side, ch}, 1));
  const ag::Var w = ag::constant(normal_tensor({3, 3, ch, ch}, 2));
  for (auto _ : state)
    benchmark::DoNotOptimize(ag::conv2d(x, w, nullptr, 1, 1, ag::Padding::Replicate)->value.data());
  state.SetItemsProcessed(state.iterations() * side * side * 9 * ch * ch);
}
BENCHMARK(BM_Conv2dForward)->Args({32, 16})->Args({64, 32})->Args({128, 32});

void BM_Conv2dBackward(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0)), ch = static_cast<int>(state.range(1));
  const Tensor x0 = normal_tensor({1, side, side, ch}, 3);
  const Tensor w0 = normal_tensor({3, 3, ch, ch}, 4);
  for (auto _ : state) {
    ag::Var x = ag::leaf(x0), w = ag::leaf(w0);
    ag::backward(ag::sum(ag::conv2d(x, w, nullptr, 1, 1, ag::Padding::Zero)));
    benchmark::DoNotOptimize(w->grad.data());
  }
}
BENCHMARK(BM_Conv2dBackward)->Args({32, 16})->Args({64, 32});

void BM_MatchFeatures(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const Tensor q = normal_tensor({1, side, side, 64}, 5), r = normal_tensor({1, side, side, 64}, 6);
  for (auto _ : state) benchmark::DoNotOptimize(match_features(q, r, 3, 1).best_index.data());
  state.SetComplexityN(static_cast<std::int64_t>(side) * side);
}
BENCHMARK(BM_MatchFeatures)->Arg(8)->Arg(16)->Arg(32)->Complexity();

void BM_TransferFeatures(benchmark::State& state) {
  const Tensor q = normal_tensor({1, 16, 16, 8}, 7), r = normal_tensor({1, 16, 16, 8}, 8);
  const MatchMap m = match_features(q, r, 3, 1);
  const Tensor ref = normal_tensor({1, 64, 64, 16}, 9);
  for (auto _ : state) benchmark::DoNotOptimize(transfer_features(ref, m, 4).data.data());
}
BENCHMARK(BM_TransferFeatures);

void BM_HaarForward(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const ImageTensor img = uniform_image(side, side, 10);
  for (auto _ : state) benchmark::DoNotOptimize(haar_forward(img).hh.data.data());
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(img.size() * sizeof(double)));
}
BENCHMARK(BM_HaarForward)->Arg(128)->Arg(512);

void BM_BicubicDown(benchmark::State& state) {
  const int s = static_cast<int>(state.range(0));
  const ImageTensor img = uniform_image(256, 256, 11);
  for (auto _ : state) benchmark::DoNotOptimize(degrade_bicubic(img, s).data.data());
}
BENCHMARK(BM_BicubicDown)->Arg(4)->Arg(8)->Arg(16);

void BM_BicubicUp(benchmark::State& state) {
  const ImageTensor img = uniform_image(32, 32, 12);
  for (auto _ : state) benchmark::DoNotOptimize(bicubic_resize(img, {8, 1}).data.data());
}
BENCHMARK(BM_BicubicUp);

void BM_FallbackPyramid(benchmark::State& state) {
  const FallbackExtractor ex(0);
  const ImageTensor img = uniform_image(64, 64, 13);
  for (auto _ : state) benchmark::DoNotOptimize(extract_pyramid(img, {1, 3}, 3, ex).levels.size());
}
BENCHMARK(BM_FallbackPyramid);

void BM_Ssim(benchmark::State& state) {
  const ImageTensor a = uniform_image(256, 256, 14), b = uniform_image(256, 256, 15);
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim);

}  // namespace

BENCHMARK_MAIN();
