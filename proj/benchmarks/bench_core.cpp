#include <benchmark/benchmark.h>

#include "univ/data.hpp"
#include "univ/encoder.hpp"
#include "univ/lora.hpp"
#include "univ/pccl.hpp"
#include "univ/tensor_ops.hpp"
#include "univ/training.hpp"

namespace {

using namespace univ;

Tensor random_tensor(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = random_tensor(rng, {n, n}), b = random_tensor(rng, {n, n});
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(32)->Arg(128);

void BM_PseudoLabels(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  Tensor a = random_tensor(rng, {n, n});
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += (a.at(i, j) = std::abs(a.at(i, j)) + 1e-3);
    for (std::size_t j = 0; j < n; ++j) a.at(i, j) /= total;
  }
  for (auto _ : state) benchmark::DoNotOptimize(pccl::pseudo_labels(a, pccl::kDefaultGamma));
}
BENCHMARK(BM_PseudoLabels)->Arg(16)->Arg(196);

void BM_EncoderForward(benchmark::State& state) {
  const encoder::EncoderConfig cfg;
  const ParameterSet params = encoder::init_params(cfg);
  Rng rng(3);
  Tensor image({cfg.channels, cfg.image_size, cfg.image_size});
  for (auto& v : image.data()) v = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(encoder::encode(image, params, cfg));
}
BENCHMARK(BM_EncoderForward);

void BM_TrainStep(benchmark::State& state) {
  const bool with_lora = state.range(0) != 0;
  const train::Teacher teacher = train::make_teacher(encoder::EncoderConfig{});
  train::TrainConfig cfg;
  cfg.batch_size = 8;
  if (with_lora) cfg.lora = lora::LoraConfig{};
  const auto batch = data::make_training_pairs(data::SyntheticTask{}, 8, 0.5, 4);
  train::TrainState ts = train::init_state(teacher, cfg);
  const train::Schedule sched{0, 1'000'000, cfg.base_lr};
  for (auto _ : state) benchmark::DoNotOptimize(train::train_step(ts, batch, teacher, cfg, sched));
  state.SetLabel(with_lora ? "lora" : "full");
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
