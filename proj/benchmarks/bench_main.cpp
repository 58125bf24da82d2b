// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "informer/codec.hpp"
#include "informer/dataset.hpp"
#include "informer/ops.hpp"
#include "informer/range_coder.hpp"

using namespace informer;

namespace {

Tensor noise(Shape shape, RngState& rng) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-1, 1);
  return Tensor(std::move(shape), std::move(v));
}

ModelConfig bench_model() {
  ModelConfig c;
  c.latent_channels = 16;
  c.global_tokens = 4;
  c.num_heads = 2;
  c.transform_channels = 16;
  return c;
}

}  // namespace

static void BM_Conv2d(benchmark::State& state) {
  const auto size = static_cast<std::size_t>(state.range(0));
  RngState rng(1);
  const Tensor x = noise({size, size, 16}, rng), k = noise({5, 5, 16, 16}, rng), b = noise({16}, rng);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, k, b, 2, 2));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(size * size));
}
BENCHMARK(BM_Conv2d)->Arg(32)->Arg(64)->Arg(128);

static void BM_Conv2dBackward(benchmark::State& state) {
  RngState rng(2);
  const Tensor x = noise({64, 64, 16}, rng);
  const Tensor k = Tensor::parameter({5, 5, 16, 16}, std::vector<double>(5 * 5 * 16 * 16, 0.01));
  const Tensor b = Tensor::parameter({16}, std::vector<double>(16, 0.0));
  for (auto _ : state) {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(sum(square(conv2d(x, k, b, 2, 2))));
  }
}
BENCHMARK(BM_Conv2dBackward);

static void BM_RangeEncode(benchmark::State& state) {
  RngState rng(3);
  const GaussianConditional g;
  std::vector<CmfTable> tables;
  std::vector<std::int32_t> symbols;
  for (int i = 0; i < 4096; ++i) {
    tables.push_back(g.build_cmf(0.0, rng.uniform(0.2, 6.0), -32, 32));
    symbols.push_back(static_cast<std::int32_t>(rng.index(65)) - 32);
  }
  for (auto _ : state) {
    RangeEncoder enc;
    for (std::size_t i = 0; i < symbols.size(); ++i) enc.encode(tables[i], symbols[i]);
    benchmark::DoNotOptimize(enc.finish());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(symbols.size()));
}
BENCHMARK(BM_RangeEncode);

static void BM_BuildGaussianCmf(benchmark::State& state) {
  const GaussianConditional g;
  double mu = 0.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(g.build_cmf(mu, 1.5, -64, 64));
    mu += 1e-3;
  }
}
BENCHMARK(BM_BuildGaussianCmf);

static void BM_EncodeImage(benchmark::State& state) {
  const auto size = static_cast<std::size_t>(state.range(0));
  SyntheticDatasetSpec spec;
  spec.height = size;
  spec.width = size;
  const Image img = generate_image(spec, 0);
  const InformerModel model(bench_model());
  for (auto _ : state) benchmark::DoNotOptimize(encode_image(model, img));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(size * size));
}
BENCHMARK(BM_EncodeImage)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

static void BM_DecodeImage(benchmark::State& state) {
  const auto size = static_cast<std::size_t>(state.range(0));
  SyntheticDatasetSpec spec;
  spec.height = size;
  spec.width = size;
  const InformerModel model(bench_model());
  const Bitstream b = encode_image(model, generate_image(spec, 0)).bitstream;
  for (auto _ : state) benchmark::DoNotOptimize(decode_image(model, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(size * size));
}
BENCHMARK(BM_DecodeImage)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
