#include "varscale/variational_scaling.hpp"

#include <cmath>
#include <sstream>

#include "varscale/error.hpp"

namespace varscale {

VariationalPosterior VariationalPosterior::global(double mu, double sigma,
                                                  SigmaMode mode) {
  return {ScalingKind::global, Eigen::VectorXd::Constant(1, mu),
          Eigen::VectorXd::Constant(1, sigma), mode};
}

VariationalPosterior VariationalPosterior::dimensional(Eigen::Index dim, double mu,
                                                       double sigma, SigmaMode mode) {
  return {ScalingKind::dimensional, Eigen::VectorXd::Constant(dim, mu),
          Eigen::VectorXd::Constant(dim, sigma), mode};
}

ScalingVector VariationalPosterior::mean_scaling() const {
  return kind == ScalingKind::global ? ScalingVector::global(mu(0))
                                     : ScalingVector::dimensional(mu);
}

void VariationalPosterior::validate() const {
  if (mu.size() != sigma.size() || mu.size() == 0)
    throw ShapeError("posterior mu and sigma lengths differ");
  if (kind == ScalingKind::global && mu.size() != 1)
    throw ShapeError("global posterior must be scalar");
  if (!mu.allFinite() || !sigma.allFinite())
    throw NumericError("posterior has non-finite parameters");
  if ((sigma.array() < 0.0).any()) throw NumericError("posterior sigma is negative");
}

ScalingVector ScalingSample::scaling() const {
  return kind == ScalingKind::global ? ScalingVector::global(alpha(0))
                                     : ScalingVector::dimensional(alpha);
}

ScalingSample sample_alpha_with(const VariationalPosterior& post,
                                const Eigen::VectorXd& epsilon,
                                std::int64_t episode_id) {
  if (epsilon.size() != post.size())
    throw ShapeError("noise length does not match posterior");
  ScalingSample s;
  s.kind = post.kind;
  s.epsilon = epsilon;
  s.alpha = post.sigma.cwiseProduct(epsilon) + post.mu;
  s.episode_id = episode_id;
  return s;
}

ScalingSample sample_alpha(const VariationalPosterior& post, Rng& rng,
                           std::int64_t episode_id, bool reject_nonpositive) {
  constexpr int kMaxRedraws = 1000;
  Eigen::VectorXd eps(post.size());
  for (int attempt = 0;; ++attempt) {
    for (Eigen::Index m = 0; m < eps.size(); ++m) eps(m) = rng.normal();
    auto s = sample_alpha_with(post, eps, episode_id);
    if (!reject_nonpositive || (s.alpha.array() > 0.0).all()) return s;
    if (attempt == kMaxRedraws)
      throw SamplingError("no positive scaling sample after repeated redraws");
  }
}

double kl_term(const VariationalPosterior& post, const GaussianPrior& prior) {
  if (!prior.enabled) return 0.0;
  const double s0sq = prior.sigma0 * prior.sigma0;
  double total = 0.0;
  for (Eigen::Index m = 0; m < post.size(); ++m) {
    const double s = post.sigma(m);
    const double dmu = post.mu(m) - prior.mu0;
    total += std::log(prior.sigma0 / s) + (s * s + dmu * dmu) / (2.0 * s0sq);
  }
  return total;
}

Eigen::VectorXd kl_grad_mu(const VariationalPosterior& post, const GaussianPrior& prior) {
  if (!prior.enabled) return Eigen::VectorXd::Zero(post.size());
  return (post.mu.array() - prior.mu0).matrix() / (prior.sigma0 * prior.sigma0);
}

Eigen::VectorXd kl_grad_sigma(const VariationalPosterior& post, const GaussianPrior& prior) {
  if (!prior.enabled) return Eigen::VectorXd::Zero(post.size());
  return (-post.sigma.array().inverse() +
          post.sigma.array() / (prior.sigma0 * prior.sigma0))
      .matrix();
}

Eigen::VectorXd data_term(const EpisodeForward& forward,
                          std::span<const int> query_labels) {
  const Eigen::Index q = forward.probs.cols();
  const Eigen::Index way = forward.probs.rows();
  if (static_cast<Eigen::Index>(query_labels.size()) != q)
    throw ShapeError("query label count does not match forward cache");

  if (forward.scaling.kind == ScalingKind::global) {
    double total = 0.0;
    for (Eigen::Index j = 0; j < q; ++j) {
      const int y = query_labels[static_cast<std::size_t>(j)];
      total += forward.distances(y, j) - forward.probs.col(j).dot(forward.distances.col(j));
    }
    return Eigen::VectorXd::Constant(1, total);
  }

  if (forward.sq_diff.size() == 0)
    throw ContractError("dimensional data term needs squared differences");
  const Eigen::Index dim = forward.sq_diff.rows();
  Eigen::VectorXd total = Eigen::VectorXd::Zero(dim);
  for (Eigen::Index j = 0; j < q; ++j) {
    const int y = query_labels[static_cast<std::size_t>(j)];
    total += forward.sq_diff.col(j * way + y);
    for (Eigen::Index k = 0; k < way; ++k)
      total -= forward.probs(k, j) * forward.sq_diff.col(j * way + k);
  }
  return total;
}

namespace {

void require_kind(const EpisodeForward& forward, const VariationalPosterior& post,
                  ScalingKind kind) {
  if (post.kind != kind || forward.scaling.kind != kind)
    throw ContractError("posterior / forward scaling kind mismatch");
}

}  // namespace

double grad_mu(const EpisodeForward& forward, std::span<const int> query_labels,
               const GaussianPrior& prior, const VariationalPosterior& post,
               double kl_weight) {
  require_kind(forward, post, ScalingKind::global);
  return data_term(forward, query_labels)(0) + kl_weight * kl_grad_mu(post, prior)(0);
}

double grad_sigma(const EpisodeForward& forward, std::span<const int> query_labels,
                  const GaussianPrior& prior, const VariationalPosterior& post,
                  double epsilon, double kl_weight) {
  require_kind(forward, post, ScalingKind::global);
  if (post.sigma_mode != SigmaMode::learned)
    throw ContractError("grad_sigma called with a fixed sigma");
  return epsilon * data_term(forward, query_labels)(0) +
         kl_weight * kl_grad_sigma(post, prior)(0);
}

Eigen::VectorXd grad_mu_vec(const EpisodeForward& forward,
                            std::span<const int> query_labels,
                            const GaussianPrior& prior,
                            const VariationalPosterior& post, double kl_weight) {
  require_kind(forward, post, ScalingKind::dimensional);
  return data_term(forward, query_labels) + kl_weight * kl_grad_mu(post, prior);
}

Eigen::VectorXd grad_sigma_vec(const EpisodeForward& forward,
                               std::span<const int> query_labels,
                               const GaussianPrior& prior,
                               const VariationalPosterior& post,
                               const Eigen::VectorXd& epsilon, double kl_weight) {
  require_kind(forward, post, ScalingKind::dimensional);
  if (post.sigma_mode != SigmaMode::learned)
    throw ContractError("grad_sigma_vec called with a fixed sigma");
  if (epsilon.size() != post.size()) throw ShapeError("noise length mismatch");
  return data_term(forward, query_labels).cwiseProduct(epsilon) +
         kl_weight * kl_grad_sigma(post, prior);
}

PosteriorGrad posterior_grad(const EpisodeForward& forward,
                             std::span<const int> query_labels,
                             const GaussianPrior& prior,
                             const VariationalPosterior& post,
                             const ScalingSample& sample, double kl_weight) {
  if (post.kind != forward.scaling.kind)
    throw ContractError("posterior / forward scaling kind mismatch");
  const Eigen::VectorXd data = data_term(forward, query_labels);
  PosteriorGrad g;
  g.mu = data + kl_weight * kl_grad_mu(post, prior);
  if (post.sigma_mode == SigmaMode::learned)
    g.sigma = data.cwiseProduct(sample.epsilon) + kl_weight * kl_grad_sigma(post, prior);
  else
    g.sigma = Eigen::VectorXd::Zero(post.size());
  return g;
}

VariationalPosterior apply_update(const VariationalPosterior& post,
                                  const PosteriorGrad& grads, double l_psi) {
  if (grads.mu.size() != post.size() || grads.sigma.size() != post.size())
    throw ShapeError("posterior gradient length mismatch");
  VariationalPosterior next = post;
  next.mu = post.mu - l_psi * grads.mu;
  if (post.sigma_mode == SigmaMode::learned)
    next.sigma = (post.sigma - l_psi * grads.sigma).cwiseMax(kSigmaFloor);
  if (!next.mu.allFinite() || !next.sigma.allFinite()) {
    std::ostringstream os;
    os << "non-finite posterior after update (l_psi=" << l_psi
       << ", |grad_mu|max=" << grads.mu.cwiseAbs().maxCoeff()
       << ", |grad_sigma|max=" << grads.sigma.cwiseAbs().maxCoeff() << ")";
    throw NumericError(os.str());
  }
  return next;
}

}  // namespace varscale
