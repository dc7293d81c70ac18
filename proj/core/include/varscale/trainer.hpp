#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "varscale/amortized_scaling.hpp"
#include "varscale/config.hpp"
#include "varscale/episodic_data.hpp"
#include "varscale/model.hpp"
#include "varscale/optimizer.hpp"
#include "varscale/rng.hpp"

namespace varscale {

struct MetricsRow {
  std::int64_t step = 0;
  double loss = 0.0;
  double train_acc = 0.0;
  std::optional<double> val_acc;
  double lambda = 0.0;
  double mu_mean = 0.0;
  double mu_min = 0.0;
  double mu_max = 0.0;
  double wallclock_ms = 0.0;
};

struct MuSnapshot {
  std::int64_t step = 0;
  Eigen::VectorXd mu;
};

struct RunMetrics {
  std::vector<MetricsRow> rows;
  std::vector<MuSnapshot> mu_history;
  std::vector<double> step_ms;  // training compute per episode
};

// Complete resumable state of a training run.
struct TrainingState {
  TrainConfig config;
  ModelState model;
  Optimizer optimizer;
  AuxSchedule schedule;
  Rng episode_rng{0, streams::kEpisodes};
  Rng scaling_rng{0, streams::kScaling};
  std::int64_t step = 0;

  ModelState best_model;
  double best_val_acc = -1.0;
  std::int64_t best_step = -1;
};

TrainingState initial_state(const TrainConfig& config);

struct MeanCI {
  double mean = 0.0;
  double ci95 = 0.0;  // 1.96 * standard error
};

// Pairwise-summed mean and 95% half-width of the normal approximation.
MeanCI mean_ci95(std::span<const double> values);

class MetricsLog;

// Episodic meta-training loop. Each step samples an episode, draws the
// scaling noise, evaluates the objective, and updates the encoder with its
// optimiser and the posterior or generator with plain gradient steps.
class Trainer {
 public:
  Trainer(TrainingState state, const SyntheticDomain& domain);
  ~Trainer();
  Trainer(Trainer&&) noexcept;
  Trainer& operator=(Trainer&&) = delete;

  // Trains until `state().step == until` (bounded by the episode budget).
  void run(std::int64_t until);
  void run() { run(state_.config.episodes); }
  void step();

  const TrainingState& state() const { return state_; }
  TrainingState& state() { return state_; }
  const RunMetrics& metrics() const { return metrics_; }

 private:
  double validate_and_track();
  void write_checkpoint(const std::string& name) const;

  TrainingState state_;
  const SyntheticDomain* domain_;
  RunMetrics metrics_;
  std::unique_ptr<MetricsLog> log_;
};

struct TrainResult {
  TrainingState state;
  RunMetrics metrics;
};

TrainResult train(const TrainConfig& config, const SyntheticDomain& domain);

struct MetaTestResult {
  double mean = 0.0;
  double ci95 = 0.0;
  std::vector<double> accuracies;
  std::vector<Eigen::VectorXd> task_scaling;  // davs: mu_i per task
};

// Classifies held-out episodes with the mean scaling (no sampling). Episode
// e uses its own stream derived from (seed, stream, e), so results do not
// depend on evaluation order.
MetaTestResult meta_test(const ModelState& model, const SyntheticDomain& domain,
                         Partition partition, const EpisodeShape& shape,
                         int num_episodes, std::uint64_t seed,
                         std::uint64_t stream = streams::kTest);

// Model used for reporting: best-validation snapshot when one exists.
const ModelState& selected_model(const TrainingState& state);

}  // namespace varscale
