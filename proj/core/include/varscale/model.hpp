#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "varscale/amortized_scaling.hpp"
#include "varscale/config.hpp"
#include "varscale/encoder.hpp"
#include "varscale/episodic_data.hpp"
#include "varscale/proto_metric.hpp"
#include "varscale/variational_scaling.hpp"

namespace varscale {

// Everything the learner owns: the embedding network plus, depending on the
// method, a global/dimensional posterior (svs, dsvs) or a generator (davs).
struct ModelState {
  Method method = Method::pn;
  DistanceKind distance = DistanceKind::euclidean;
  EncoderParams encoder;
  VariationalPosterior posterior;  // svs, dsvs
  GeneratorParams generator;       // davs
};

ModelState init_model(const TrainConfig& config, Rng& rng);

// Named flat view of one parameter array (column-major for matrices).
struct ParamView {
  std::string name;
  std::vector<Eigen::Index> shape;
  std::span<double> data;
};

std::vector<ParamView> encoder_views(EncoderParams& encoder);
std::vector<ParamView> posterior_views(VariationalPosterior& posterior);
std::vector<ParamView> generator_views(GeneratorParams& generator);
// All trainable arrays of the model, in a fixed order.
std::vector<ParamView> model_views(ModelState& model);

struct ObjectiveSettings {
  GaussianPrior prior;
  double kl_weight = 1.0;
  double lambda = 0.0;  // davs auxiliary weight
};

// Value and gradients of one episode's training objective at fixed noise:
//   pn:        CE at alpha = 1
//   svs/dsvs:  CE at alpha = sigma*eps + mu, plus kl_weight * KL
//   davs:      (1 - lambda) (CE at alpha_i + kl_weight * KL_i) + lambda CE at 1
struct EpisodeObjective {
  double loss = 0.0;
  double scaled_loss = 0.0;    // cross-entropy part at the sampled scaling
  double unscaled_loss = 0.0;  // davs: CE at alpha = 1 (only when lambda > 0)
  double kl = 0.0;
  int correct = 0;
  int total = 0;
  ScalingSample sample;
  Eigen::VectorXd task_mu;     // davs: generated mu_i
  EncoderParams grad_encoder;
  PosteriorGrad grad_posterior;
  GeneratorParams grad_generator;
};

EpisodeObjective evaluate_episode(const ModelState& model, const Episode& episode,
                                  const Eigen::VectorXd& epsilon,
                                  const ObjectiveSettings& settings,
                                  bool with_gradients = true);

// Gradient arrays of `objective` in the same order as model_views(model).
std::vector<std::span<double>> gradient_spans(const ModelState& model,
                                              EpisodeObjective& objective);

// Scaling used to classify an episode at meta-test time (posterior or
// generated mean; 1 for plain prototypical networks).
ScalingVector test_scaling(const ModelState& model, const Eigen::MatrixXd& support_embeddings,
                           const Eigen::MatrixXd& query_embeddings);

}  // namespace varscale
