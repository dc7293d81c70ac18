#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>

#include "varscale/proto_metric.hpp"
#include "varscale/rng.hpp"
#include "varscale/variational_scaling.hpp"

namespace varscale {

// One-hidden-layer perceptron G: task prototype [M] -> tanh(H) -> [2M].
// Output rows [0, M) are mu_i; rows [M, 2M) pass through
// softplus(.) + kSigmaFloor to give sigma_i.
struct GeneratorParams {
  Eigen::MatrixXd w1;  // H x M
  Eigen::VectorXd b1;  // H
  Eigen::MatrixXd w2;  // 2M x H
  Eigen::VectorXd b2;  // 2M

  Eigen::Index embed_dim() const { return w1.cols(); }
  Eigen::Index hidden_dim() const { return w1.rows(); }
  void validate() const;
  // Content hash used to detect tapes recorded with other parameters.
  std::uint64_t fingerprint() const;
};

GeneratorParams zero_generator(Eigen::Index embed_dim, Eigen::Index hidden_dim);

// Small random weights; output biases chosen so that an input of zero maps
// to (mu_init, sigma_init) in every dimension.
GeneratorParams make_generator(Eigen::Index embed_dim, Eigen::Index hidden_dim,
                               double mu_init, double sigma_init, Rng& rng,
                               double output_weight_scale = 0.1);

double softplus(double x);
double softplus_inverse(double y);

// Mean of all support and query embeddings.
Eigen::VectorXd task_prototype(const Eigen::MatrixXd& support_embeddings,
                               const Eigen::MatrixXd& query_embeddings);

struct GeneratorTape {
  Eigen::VectorXd input;
  Eigen::VectorXd hidden;  // tanh activations
  Eigen::VectorXd raw;     // 2M pre-positivity outputs
  std::uint64_t fingerprint = 0;
};

struct GeneratedPosterior {
  VariationalPosterior posterior;  // dimensional, sigma generated per task
  GeneratorTape tape;
};

GeneratedPosterior generate_posterior(const GeneratorParams& gen,
                                      const Eigen::VectorXd& task_proto);

struct GeneratorGrad {
  GeneratorParams params;
  Eigen::VectorXd input;  // gradient with respect to the task prototype
};

// Backpropagates gradients on (mu_i, sigma_i) through the generator.
// Throws ContractError if `tape` was recorded with different parameters.
GeneratorGrad generator_backward(const GeneratorParams& gen, const GeneratorTape& tape,
                                 const Eigen::VectorXd& grad_mu,
                                 const Eigen::VectorXd& grad_sigma);

// Linear decay of the auxiliary weight: lambda = max(0, 1 - step_count/gamma).
struct AuxSchedule {
  double lambda = 1.0;
  int gamma = 125;
  int step_count = 0;
};

AuxSchedule make_schedule(int gamma);
AuxSchedule decay_lambda(AuxSchedule schedule);

// (1 - lambda) * amortized + lambda * unscaled; exact at lambda in {0, 1}.
double aux_loss(double lambda, double amortized, double unscaled);

struct AmortizedForward {
  Eigen::VectorXd task_proto;
  GeneratedPosterior generated;
  ScalingSample sample;
  EpisodeForward scaled;  // cross-entropy at alpha_i = sigma_i * eps + mu_i
  double kl = 0.0;
  double loss = 0.0;      // scaled.loss + kl_weight * kl
};

AmortizedForward amortized_loss(const GeneratorParams& gen,
                                const Eigen::MatrixXd& support_embeddings,
                                const Eigen::MatrixXd& query_embeddings,
                                std::span<const int> query_labels,
                                const PrototypeSet& prototypes,
                                const GaussianPrior& prior,
                                const Eigen::VectorXd& epsilon,
                                double kl_weight = 1.0,
                                std::int64_t episode_id = 0);

struct AmortizedGrad {
  GeneratorParams generator;
  Eigen::MatrixXd support;  // embed_dim x m
  Eigen::MatrixXd query;    // embed_dim x q
};

// Gradient of `upstream * forward.loss` through every path: the scaled
// distances, alpha_i -> (mu_i, sigma_i) -> generator, the per-dimension KL,
// and the task prototype back to the embeddings.
AmortizedGrad amortized_backward(const GeneratorParams& gen,
                                 const AmortizedForward& forward,
                                 std::span<const int> support_labels,
                                 const Eigen::MatrixXd& query_embeddings,
                                 std::span<const int> query_labels,
                                 const PrototypeSet& prototypes,
                                 const GaussianPrior& prior, double upstream,
                                 double kl_weight = 1.0);

}  // namespace varscale
