#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>

#include "varscale/proto_metric.hpp"
#include "varscale/rng.hpp"

namespace varscale {

enum class SigmaMode { fixed, learned };

// Lower clamp applied to a learned sigma after every update.
inline constexpr double kSigmaFloor = 1e-2;

// Gaussian q(alpha) = N(mu, sigma^2), either one scalar (global scaling) or
// one independent Gaussian per embedding dimension.
struct VariationalPosterior {
  ScalingKind kind = ScalingKind::global;
  Eigen::VectorXd mu = Eigen::VectorXd::Constant(1, 100.0);
  Eigen::VectorXd sigma = Eigen::VectorXd::Constant(1, 0.2);
  SigmaMode sigma_mode = SigmaMode::fixed;

  static VariationalPosterior global(double mu, double sigma,
                                     SigmaMode mode = SigmaMode::fixed);
  static VariationalPosterior dimensional(Eigen::Index dim, double mu, double sigma,
                                          SigmaMode mode = SigmaMode::fixed);

  Eigen::Index size() const { return mu.size(); }
  // Scaling used at meta-test time: the posterior mean.
  ScalingVector mean_scaling() const;
  void validate() const;
};

// Isotropic Gaussian prior N(mu0, sigma0^2). `enabled = false` is the
// sigma0 -> infinity limit: no KL value and no prior gradient.
struct GaussianPrior {
  double mu0 = 1.0;
  double sigma0 = 1.0;
  bool enabled = true;
};

struct ScalingSample {
  ScalingKind kind = ScalingKind::global;
  Eigen::VectorXd alpha;
  Eigen::VectorXd epsilon;
  std::int64_t episode_id = 0;

  ScalingVector scaling() const;
};

// alpha = sigma * eps + mu with one eps draw per episode (per dimension for
// dimensional posteriors). With `reject_nonpositive`, draws producing any
// alpha <= 0 are redrawn.
ScalingSample sample_alpha(const VariationalPosterior& post, Rng& rng,
                           std::int64_t episode_id = 0,
                           bool reject_nonpositive = false);

// Reparameterised sample for a given noise vector.
ScalingSample sample_alpha_with(const VariationalPosterior& post,
                                const Eigen::VectorXd& epsilon,
                                std::int64_t episode_id = 0);

// log(sigma0/sigma) + (sigma^2 + (mu - mu0)^2) / (2 sigma0^2), summed over
// dimensions. This is the Gaussian KL plus 1/2 per dimension.
double kl_term(const VariationalPosterior& post, const GaussianPrior& prior);

// Gradient of kl_term with respect to mu and sigma.
Eigen::VectorXd kl_grad_mu(const VariationalPosterior& post, const GaussianPrior& prior);
Eigen::VectorXd kl_grad_sigma(const VariationalPosterior& post, const GaussianPrior& prior);

// Derivative of the episode cross-entropy with respect to the scaling that
// produced `forward`: sum_j (d(x_j, c_y) - sum_k p_jk d(x_j, c_k)) for a
// global scale (length 1), and the same with per-dimension squared
// differences for a dimensional scale (length embed_dim).
Eigen::VectorXd data_term(const EpisodeForward& forward,
                          std::span<const int> query_labels);

// d/dmu of  loss(alpha) + kl_weight * kl_term  for a global posterior.
double grad_mu(const EpisodeForward& forward, std::span<const int> query_labels,
               const GaussianPrior& prior, const VariationalPosterior& post,
               double kl_weight = 1.0);

// d/dsigma of the same objective; eps is the episode's stored draw.
// Throws ContractError when sigma is fixed.
double grad_sigma(const EpisodeForward& forward, std::span<const int> query_labels,
                  const GaussianPrior& prior, const VariationalPosterior& post,
                  double epsilon, double kl_weight = 1.0);

Eigen::VectorXd grad_mu_vec(const EpisodeForward& forward,
                            std::span<const int> query_labels,
                            const GaussianPrior& prior,
                            const VariationalPosterior& post, double kl_weight = 1.0);

Eigen::VectorXd grad_sigma_vec(const EpisodeForward& forward,
                               std::span<const int> query_labels,
                               const GaussianPrior& prior,
                               const VariationalPosterior& post,
                               const Eigen::VectorXd& epsilon, double kl_weight = 1.0);

struct PosteriorGrad {
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma;  // zero in fixed mode
};

// Both gradients from one forward pass, for either posterior kind.
PosteriorGrad posterior_grad(const EpisodeForward& forward,
                             std::span<const int> query_labels,
                             const GaussianPrior& prior,
                             const VariationalPosterior& post,
                             const ScalingSample& sample, double kl_weight = 1.0);

// Plain gradient step; a learned sigma is clamped to kSigmaFloor, a fixed
// sigma is left untouched. Throws NumericError on non-finite results.
VariationalPosterior apply_update(const VariationalPosterior& post,
                                  const PosteriorGrad& grads, double l_psi);

}  // namespace varscale
