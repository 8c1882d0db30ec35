#include <benchmark/benchmark.h>

#include "svj/judge_net.hpp"
#include "svj/perturb.hpp"
#include "svj/synthworld.hpp"
#include "svj/trainer.hpp"

namespace {

svj::BackboneConfig config_for(int dim, int layers) {
  svj::BackboneConfig cfg;
  cfg.model_dim = dim;
  cfg.num_layers = layers;
  cfg.num_heads = dim >= 32 ? 4 : 2;
  cfg.mlp_ratio = 2;
  cfg.energy_hidden = dim;
  cfg.aspect_hidden = dim;
  return cfg;
}

svj::LatentVideo sample_video(std::uint64_t seed) {
  return svj::gen_video(svj::QualityKnobs{}, svj::VideoShape{}, seed).first;
}

void BM_ForwardEnergy(benchmark::State& state) {
  svj::JudgeNet net(config_for(static_cast<int>(state.range(0)), static_cast<int>(state.range(1))), 1);
  const auto v = sample_video(3);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward_energy(v).aggregate);
}
BENCHMARK(BM_ForwardEnergy)->Args({16, 3})->Args({32, 3})->Args({64, 6});

void BM_ForwardBackwardAdapters(benchmark::State& state) {
  svj::JudgeNet net(config_for(static_cast<int>(state.range(0)), static_cast<int>(state.range(1))), 1);
  net.set_placement(svj::AdapterConfig{}, 2);
  net.set_trainable(svj::ParamGroup::kAdapter | svj::ParamGroup::kEnergyHead);
  const auto v = sample_video(3);
  for (auto _ : state) {
    auto pass = net.forward(v, svj::kEnergyOutput);
    auto grads = net.zero_gradients();
    svj::UpstreamGrads up;
    up.d_energy_per_step = net.aggregate_grad(pass.frames, 1.0);
    net.backward(pass, up, grads);
    benchmark::DoNotOptimize(grads);
  }
}
BENCHMARK(BM_ForwardBackwardAdapters)->Args({16, 3})->Args({32, 3})->Args({64, 6});

void BM_Perturbation(benchmark::State& state) {
  const auto kind = svj::kAllPerturbations[static_cast<std::size_t>(state.range(0))];
  const auto v = sample_video(5);
  svj::Rng rng(7);
  for (auto _ : state) {
    const auto spec = svj::sample_spec(kind, v.frames(), 8, 8, rng);
    benchmark::DoNotOptimize(svj::apply_perturbation(v, spec));
  }
  state.SetLabel(svj::to_string(kind));
}
BENCHMARK(BM_Perturbation)->DenseRange(0, 4);

void BM_GenVideo(benchmark::State& state) {
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(svj::gen_video(svj::QualityKnobs{0.9, 0.3, 1, 0.2}, {}, seed++));
  }
}
BENCHMARK(BM_GenVideo);

}  // namespace

BENCHMARK_MAIN();
