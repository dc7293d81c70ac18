#include <benchmark/benchmark.h>

#include "varscale/config.hpp"
#include "varscale/model.hpp"
#include "varscale/trainer.hpp"

namespace {

using namespace varscale;

TrainConfig bench_config(Method method) {
  nlohmann::json doc = {{"method", std::string(to_string(method))}, {"seed", 3}};
  return config_from_json(doc);
}

void BM_EncodeBatch(benchmark::State& st) {
  const TrainConfig config = bench_config(Method::pn);
  const SyntheticDomain domain = make_domain(config.domain, config.seed);
  Rng rng(config.seed, streams::kInit);
  const ModelState model = init_model(config, rng);
  Rng erng(1, 1);
  const Episode ep = sample_episode(domain, Partition::train, 5, 5, 15, erng);
  for (auto _ : st) {
    auto r = encode_batch(model.encoder, ep.support);
    benchmark::DoNotOptimize(r.embeddings.data());
  }
}
BENCHMARK(BM_EncodeBatch);

// Forward and backward of one training episode, without sampling.
void BM_EpisodeObjective(benchmark::State& st) {
  const auto method = static_cast<Method>(st.range(0));
  const TrainConfig config = bench_config(method);
  const SyntheticDomain domain = make_domain(config.domain, config.seed);
  Rng rng(config.seed, streams::kInit);
  const ModelState model = init_model(config, rng);
  Rng erng(1, 1);
  const Episode ep = sample_episode(domain, Partition::train, 5, 5, 15, erng);
  const Eigen::Index n = method == Method::pn || method == Method::svs ? 1 : config.embed_dim;
  const Eigen::VectorXd eps = Eigen::VectorXd::Constant(n, 0.3);
  ObjectiveSettings settings{config.prior, config.kl_weight, 0.5};
  for (auto _ : st) {
    auto obj = evaluate_episode(model, ep, eps, settings);
    benchmark::DoNotOptimize(obj.loss);
  }
  st.SetLabel(std::string(to_string(method)));
}
BENCHMARK(BM_EpisodeObjective)->DenseRange(0, 3);

// A full training step: sampling, objective, optimiser and scaling updates.
void BM_TrainStep(benchmark::State& st) {
  const auto method = static_cast<Method>(st.range(0));
  TrainConfig config = bench_config(method);
  config.val_every = 1 << 30;
  config.episodes = 1 << 30;
  const SyntheticDomain domain = make_domain(config.domain, config.seed);
  Trainer trainer(initial_state(config), domain);
  for (auto _ : st) trainer.step();
  st.SetLabel(std::string(to_string(method)));
}
BENCHMARK(BM_TrainStep)->DenseRange(0, 3);

}  // namespace
BENCHMARK_MAIN();
