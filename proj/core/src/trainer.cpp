#include "varscale/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>

#include "varscale/checkpoint.hpp"
#include "varscale/error.hpp"
#include "varscale/metrics_log.hpp"

namespace varscale {

TrainingState initial_state(const TrainConfig& config) {
  config.validate();
  Rng init(config.seed, streams::kInit);
  TrainingState s{config,
                  init_model(config, init),
                  Optimizer(config.optimizer),
                  make_schedule(config.gamma),
                  Rng(config.seed, streams::kEpisodes),
                  Rng(config.seed, streams::kScaling),
                  0,
                  {},
                  -1.0,
                  -1};
  if (config.method != Method::davs) s.schedule.lambda = 0.0;
  return s;
}

namespace {

// Pairwise summation keeps the reduction independent of how a caller might
// chunk the values and accurate for long runs.
double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

bool all_finite(ModelState& model) {
  for (const auto& view : model_views(model))
    for (double x : view.data)
      if (!std::isfinite(x)) return false;
  return true;
}

Eigen::VectorXd current_mu(const TrainingState& s, const EpisodeObjective* obj) {
  switch (s.model.method) {
    case Method::svs:
    case Method::dsvs: return s.model.posterior.mu;
    case Method::davs:
      if (obj != nullptr) return obj->task_mu;
      return Eigen::VectorXd();
    case Method::pn: break;
  }
  return Eigen::VectorXd::Ones(1);
}

}  // namespace

MeanCI mean_ci95(std::span<const double> values) {
  MeanCI out;
  if (values.empty()) return out;
  const double n = static_cast<double>(values.size());
  out.mean = pairwise_sum(values) / n;
  if (values.size() < 2) return out;
  std::vector<double> sq(values.size());
  std::transform(values.begin(), values.end(), sq.begin(),
                 [&](double x) { return (x - out.mean) * (x - out.mean); });
  const double var = pairwise_sum(sq) / (n - 1.0);
  out.ci95 = 1.96 * std::sqrt(var / n);
  return out;
}

Trainer::Trainer(TrainingState state, const SyntheticDomain& domain)
    : state_(std::move(state)), domain_(&domain) {
  const auto& cfg = state_.config;
  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    log_ = std::make_unique<MetricsLog>(cfg.output_dir + "/metrics.csv",
                                        cfg.output_dir + "/mu.csv", cfg.log_wallclock);
  }
  if (state_.step == 0 && (cfg.method == Method::svs || cfg.method == Method::dsvs)) {
    MuSnapshot snap{0, state_.model.posterior.mu};
    if (log_) log_->write(snap);
    metrics_.mu_history.push_back(std::move(snap));
  }
}

Trainer::~Trainer() = default;
Trainer::Trainer(Trainer&&) noexcept = default;

void Trainer::run(std::int64_t until) {
  until = std::min<std::int64_t>(until, state_.config.episodes);
  while (state_.step < until) step();
  if (log_) {
    log_->flush();
    if (state_.step == state_.config.episodes) write_checkpoint("final.ckpt");
  }
}

void Trainer::step() {
  auto& s = state_;
  const auto& cfg = s.config;
  const auto t0 = std::chrono::steady_clock::now();

  const TrainingState before = s;
  const Episode episode =
      sample_episode(*domain_, Partition::train, cfg.train_episode.way, cfg.train_episode.shot,
                     cfg.train_episode.query, s.episode_rng, s.step);

  Eigen::VectorXd epsilon;
  switch (cfg.method) {
    case Method::pn: break;
    case Method::svs:
    case Method::dsvs:
      epsilon = sample_alpha(s.model.posterior, s.scaling_rng, s.step,
                             cfg.reject_nonpositive_alpha)
                    .epsilon;
      break;
    case Method::davs:
      epsilon.resize(cfg.embed_dim);
      for (Eigen::Index m = 0; m < epsilon.size(); ++m) epsilon[m] = s.scaling_rng.normal();
      break;
  }

  const ObjectiveSettings settings{cfg.prior, cfg.kl_weight, s.schedule.lambda};
  EpisodeObjective obj;
  try {
    obj = evaluate_episode(s.model, episode, epsilon, settings);
  } catch (const NumericError& e) {
    s = before;
    write_checkpoint("last_good.ckpt");
    throw NumericError("training diverged at step " + std::to_string(before.step) + ": " +
                       e.what());
  }

  {
    auto params = encoder_views(s.model.encoder);
    auto grads = encoder_views(obj.grad_encoder);
    std::vector<std::span<double>> p, g;
    for (auto& v : params) p.push_back(v.data);
    for (auto& v : grads) g.push_back(v.data);
    s.optimizer.step(p, g);
  }
  try {
    if (cfg.method == Method::svs || cfg.method == Method::dsvs) {
      s.model.posterior = apply_update(s.model.posterior, obj.grad_posterior, cfg.l_psi);
    } else if (cfg.method == Method::davs) {
      auto params = generator_views(s.model.generator);
      auto grads = generator_views(obj.grad_generator);
      for (std::size_t i = 0; i < params.size(); ++i)
        for (std::size_t k = 0; k < params[i].data.size(); ++k)
          params[i].data[k] -= cfg.l_beta * grads[i].data[k];
    }
  } catch (const NumericError&) {
    // reported below together with non-finite encoder updates
    s.model.posterior.mu.setConstant(std::numeric_limits<double>::quiet_NaN());
  }
  if (!all_finite(s.model)) {
    s = before;
    write_checkpoint("last_good.ckpt");
    throw NumericError("training diverged at step " + std::to_string(before.step) +
                       ": parameters became non-finite after the update");
  }

  ++s.step;
  if (cfg.method == Method::davs && s.step % cfg.episodes_per_epoch() == 0)
    s.schedule = decay_lambda(s.schedule);

  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  metrics_.step_ms.push_back(ms);

  std::optional<double> val;
  if (cfg.val_every > 0 && s.step % cfg.val_every == 0) {
    val = validate_and_track();
  }

  const bool log_row = (cfg.log_every > 0 && s.step % cfg.log_every == 0) || val.has_value();
  if (log_row) {
    const Eigen::VectorXd mu = current_mu(s, &obj);
    MetricsRow row;
    row.step = s.step;
    row.loss = obj.loss;
    row.train_acc = static_cast<double>(obj.correct) / obj.total;
    row.val_acc = val;
    row.lambda = cfg.method == Method::davs ? s.schedule.lambda : 0.0;
    if (mu.size() > 0) {
      row.mu_mean = mu.mean();
      row.mu_min = mu.minCoeff();
      row.mu_max = mu.maxCoeff();
    }
    row.wallclock_ms = ms;
    if (log_) log_->write(row);
    metrics_.rows.push_back(row);
  }

  if (cfg.method != Method::pn && cfg.mu_log_every > 0 && s.step % cfg.mu_log_every == 0) {
    MuSnapshot snap{s.step, current_mu(s, &obj)};
    if (log_) log_->write(snap);
    metrics_.mu_history.push_back(std::move(snap));
  }

  if (cfg.checkpoint_every > 0 && s.step % cfg.checkpoint_every == 0)
    write_checkpoint("step_" + std::to_string(s.step) + ".ckpt");
}

double Trainer::validate_and_track() {
  auto& s = state_;
  const auto res = meta_test(s.model, *domain_, Partition::val, s.config.test_episode,
                             s.config.val_episodes, s.config.seed, streams::kValidation);
  if (res.mean > s.best_val_acc) {
    s.best_val_acc = res.mean;
    s.best_step = s.step;
    s.best_model = s.model;
  }
  return res.mean;
}

void Trainer::write_checkpoint(const std::string& name) const {
  if (state_.config.output_dir.empty()) return;
  save_checkpoint(state_, state_.config.output_dir + "/" + name);
}

TrainResult train(const TrainConfig& config, const SyntheticDomain& domain) {
  Trainer trainer(initial_state(config), domain);
  trainer.run();
  return {trainer.state(), trainer.metrics()};
}

MetaTestResult meta_test(const ModelState& model, const SyntheticDomain& domain,
                         Partition partition, const EpisodeShape& shape, int num_episodes,
                         std::uint64_t seed, std::uint64_t stream) {
  MetaTestResult out;
  out.accuracies.reserve(num_episodes);
  for (int e = 0; e < num_episodes; ++e) {
    Rng rng(seed, (stream << 32) + static_cast<std::uint64_t>(e));
    const Episode ep =
        sample_episode(domain, partition, shape.way, shape.shot, shape.query, rng, e);
    const int m = ep.num_support();
    const int q = ep.num_query();
    Eigen::MatrixXd inputs(ep.support.rows(), m + q);
    inputs << ep.support, ep.query;
    const EncodeResult enc = encode_batch(model.encoder, inputs);
    const Eigen::MatrixXd support = enc.embeddings.leftCols(m);
    const Eigen::MatrixXd query = enc.embeddings.rightCols(q);
    const PrototypeSet protos = compute_prototypes(support, ep.support_labels, ep.way);
    const ScalingVector scaling = test_scaling(model, support, query);
    int correct = 0;
    for (int j = 0; j < q; ++j)
      if (predict(query.col(j), protos, scaling, model.distance) == ep.query_labels[j]) ++correct;
    out.accuracies.push_back(static_cast<double>(correct) / q);
    if (model.method == Method::davs) out.task_scaling.push_back(scaling.values);
  }
  const MeanCI ci = mean_ci95(out.accuracies);
  out.mean = ci.mean;
  out.ci95 = ci.ci95;
  return out;
}

const ModelState& selected_model(const TrainingState& state) {
  return state.best_step >= 0 ? state.best_model : state.model;
}

}  // namespace varscale
