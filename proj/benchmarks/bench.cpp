#include <benchmark/benchmark.h>

#include <random>

#include "moldkit/backbone.hpp"
#include "moldkit/mold.hpp"
#include "moldkit/tensor.hpp"
#include "test_support.hpp"

namespace {

using namespace moldkit;

TensorF random_tensor(Shape shape, std::mt19937_64& rng) {
  TensorF t(std::move(shape));
  std::normal_distribution<float> n;
  for (auto& v : t.values()) v = n(rng);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(0);
  const auto a = random_tensor({n, n}, rng), b = random_tensor({n, n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

ViTConfig mid_config() {
  ViTConfig c;
  c.name = "bench-mid";
  c.image_size = 64;
  c.patch_size = 8;
  c.embed_dim = 128;
  c.num_layers = 6;
  c.num_heads = 4;
  return c;
}

void encode_bench(benchmark::State& state, const ViTConfig& config) {
  const auto weights = random_weights(config, 0);
  std::mt19937_64 rng(1);
  const auto pixels = random_tensor({3, config.image_size, config.image_size}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(encode_layers(weights, config, pixels));
}

void BM_EncodeToy32(benchmark::State& state) { encode_bench(state, ViTConfig::preset("toy-32")); }
void BM_EncodeMid(benchmark::State& state) { encode_bench(state, mid_config()); }
BENCHMARK(BM_EncodeToy32)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_EncodeMid)->Unit(benchmark::kMillisecond);

// Head sized like a 24-layer, 1024-wide backbone.
void BM_MoldForward(benchmark::State& state) {
  const auto L = static_cast<std::size_t>(state.range(0)), d = static_cast<std::size_t>(state.range(1));
  std::mt19937_64 rng(2);
  const auto head = MoldHead::initialize(MoldDims::defaults(L, d), 0);
  const auto feats = testing::random_features(L, d, rng);
  for (auto _ : state) benchmark::DoNotOptimize(forward(head, feats));
}
BENCHMARK(BM_MoldForward)->Args({4, 16})->Args({12, 768})->Args({24, 1024})->Unit(benchmark::kMicrosecond);

void BM_MoldBackward(benchmark::State& state) {
  const auto L = static_cast<std::size_t>(state.range(0)), d = static_cast<std::size_t>(state.range(1));
  std::mt19937_64 rng(3);
  const auto head = MoldHead::initialize(MoldDims::defaults(L, d), 0);
  const auto feats = testing::random_features(L, d, rng);
  const auto trace = forward(head, feats);
  for (auto _ : state) benchmark::DoNotOptimize(backward(head, feats, trace, 1));
}
BENCHMARK(BM_MoldBackward)->Args({4, 16})->Args({12, 768})->Args({24, 1024})->Unit(benchmark::kMicrosecond);

}  // namespace
BENCHMARK_MAIN();
