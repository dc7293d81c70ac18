#include "varscale/amortized_scaling.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "varscale/error.hpp"

namespace varscale {

void GeneratorParams::validate() const {
  const Eigen::Index m = embed_dim();
  const Eigen::Index h = hidden_dim();
  if (b1.size() != h || w2.rows() != 2 * m || w2.cols() != h || b2.size() != 2 * m)
    throw ShapeError("generator shapes are inconsistent");
  if (!w1.allFinite() || !b1.allFinite() || !w2.allFinite() || !b2.allFinite())
    throw NumericError("generator has non-finite parameters");
}

std::uint64_t GeneratorParams::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](const double* p, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) {
      h ^= std::bit_cast<std::uint64_t>(p[i]);
      h *= 0x100000001b3ull;
    }
  };
  mix(w1.data(), w1.size());
  mix(b1.data(), b1.size());
  mix(w2.data(), w2.size());
  mix(b2.data(), b2.size());
  return h;
}

GeneratorParams zero_generator(Eigen::Index embed_dim, Eigen::Index hidden_dim) {
  return {Eigen::MatrixXd::Zero(hidden_dim, embed_dim), Eigen::VectorXd::Zero(hidden_dim),
          Eigen::MatrixXd::Zero(2 * embed_dim, hidden_dim),
          Eigen::VectorXd::Zero(2 * embed_dim)};
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw NumericError("softplus_inverse needs a positive argument");
  return y + std::log(-std::expm1(-y));
}

namespace {
double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
}  // namespace

GeneratorParams make_generator(Eigen::Index embed_dim, Eigen::Index hidden_dim,
                               double mu_init, double sigma_init, Rng& rng,
                               double output_weight_scale) {
  if (!(sigma_init > kSigmaFloor))
    throw ConfigError("init.sigma_init",
                      "generator sigma_init must exceed the 1e-2 floor");
  GeneratorParams g = zero_generator(embed_dim, hidden_dim);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(embed_dim));
  for (Eigen::Index c = 0; c < g.w1.cols(); ++c)
    for (Eigen::Index r = 0; r < g.w1.rows(); ++r) g.w1(r, c) = s1 * rng.normal();
  const double s2 = output_weight_scale / std::sqrt(static_cast<double>(hidden_dim));
  for (Eigen::Index c = 0; c < g.w2.cols(); ++c)
    for (Eigen::Index r = 0; r < g.w2.rows(); ++r) g.w2(r, c) = s2 * rng.normal();
  g.b2.head(embed_dim).setConstant(mu_init);
  g.b2.tail(embed_dim).setConstant(softplus_inverse(sigma_init - kSigmaFloor));
  return g;
}

Eigen::VectorXd task_prototype(const Eigen::MatrixXd& support_embeddings,
                               const Eigen::MatrixXd& query_embeddings) {
  const Eigen::Index n = support_embeddings.cols() + query_embeddings.cols();
  if (n == 0) throw ShapeError("task prototype of an empty episode");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(
      support_embeddings.cols() > 0 ? support_embeddings.rows() : query_embeddings.rows());
  if (support_embeddings.cols() > 0) sum += support_embeddings.rowwise().sum();
  if (query_embeddings.cols() > 0) sum += query_embeddings.rowwise().sum();
  return sum / static_cast<double>(n);
}

GeneratedPosterior generate_posterior(const GeneratorParams& gen,
                                      const Eigen::VectorXd& task_proto) {
  if (task_proto.size() != gen.embed_dim())
    throw ShapeError("task prototype length does not match generator input");
  const Eigen::Index m = gen.embed_dim();
  GeneratedPosterior out;
  auto& tape = out.tape;
  tape.input = task_proto;
  tape.hidden = (gen.w1 * task_proto + gen.b1).array().tanh().matrix();
  tape.raw = gen.w2 * tape.hidden + gen.b2;
  tape.fingerprint = gen.fingerprint();
  if (!tape.raw.allFinite()) throw NumericError("non-finite generator output");

  auto& post = out.posterior;
  post.kind = ScalingKind::dimensional;
  post.sigma_mode = SigmaMode::learned;
  post.mu = tape.raw.head(m);
  post.sigma.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) post.sigma(i) = softplus(tape.raw(m + i)) + kSigmaFloor;
  return out;
}

GeneratorGrad generator_backward(const GeneratorParams& gen, const GeneratorTape& tape,
                                 const Eigen::VectorXd& grad_mu,
                                 const Eigen::VectorXd& grad_sigma) {
  if (tape.fingerprint != gen.fingerprint())
    throw ContractError("generator tape was recorded with different parameters");
  const Eigen::Index m = gen.embed_dim();
  if (grad_mu.size() != m || grad_sigma.size() != m)
    throw ShapeError("generator upstream gradient length mismatch");

  Eigen::VectorXd g_raw(2 * m);
  g_raw.head(m) = grad_mu;
  for (Eigen::Index i = 0; i < m; ++i) g_raw(m + i) = grad_sigma(i) * sigmoid(tape.raw(m + i));

  GeneratorGrad out;
  out.params.w2.noalias() = g_raw * tape.hidden.transpose();
  out.params.b2 = g_raw;
  const Eigen::VectorXd g_pre =
      (gen.w2.transpose() * g_raw).cwiseProduct(
          (1.0 - tape.hidden.array().square()).matrix());
  out.params.w1.noalias() = g_pre * tape.input.transpose();
  out.params.b1 = g_pre;
  out.input = gen.w1.transpose() * g_pre;
  return out;
}

AuxSchedule make_schedule(int gamma) {
  if (gamma < 1) throw ConfigError("gamma", "gamma must be a positive integer");
  return {1.0, gamma, 0};
}

AuxSchedule decay_lambda(AuxSchedule schedule) {
  if (schedule.lambda == 0.0) return schedule;
  ++schedule.step_count;
  schedule.lambda = std::max(
      0.0, 1.0 - static_cast<double>(schedule.step_count) / schedule.gamma);
  return schedule;
}

double aux_loss(double lambda, double amortized, double unscaled) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw ContractError("auxiliary weight lambda must lie in [0, 1]");
  if (lambda == 0.0) return amortized;
  if (lambda == 1.0) return unscaled;
  return (1.0 - lambda) * amortized + lambda * unscaled;
}

AmortizedForward amortized_loss(const GeneratorParams& gen,
                                const Eigen::MatrixXd& support_embeddings,
                                const Eigen::MatrixXd& query_embeddings,
                                std::span<const int> query_labels,
                                const PrototypeSet& prototypes,
                                const GaussianPrior& prior,
                                const Eigen::VectorXd& epsilon, double kl_weight,
                                std::int64_t episode_id) {
  AmortizedForward fwd;
  fwd.task_proto = task_prototype(support_embeddings, query_embeddings);
  fwd.generated = generate_posterior(gen, fwd.task_proto);
  fwd.sample = sample_alpha_with(fwd.generated.posterior, epsilon, episode_id);
  fwd.scaled = episode_loss(query_embeddings, query_labels, prototypes,
                            fwd.sample.scaling(), DistanceKind::euclidean);
  fwd.kl = kl_term(fwd.generated.posterior, prior);
  fwd.loss = fwd.scaled.loss + kl_weight * fwd.kl;
  return fwd;
}

AmortizedGrad amortized_backward(const GeneratorParams& gen,
                                 const AmortizedForward& forward,
                                 std::span<const int> support_labels,
                                 const Eigen::MatrixXd& query_embeddings,
                                 std::span<const int> query_labels,
                                 const PrototypeSet& prototypes,
                                 const GaussianPrior& prior, double upstream,
                                 double kl_weight) {
  const auto& post = forward.generated.posterior;
  const EpisodeGrad eg = episode_loss_backward(forward.scaled, query_embeddings,
                                               query_labels, prototypes, upstream);
  const Eigen::VectorXd g_alpha = upstream * data_term(forward.scaled, query_labels);
  const Eigen::VectorXd g_mu = g_alpha + (upstream * kl_weight) * kl_grad_mu(post, prior);
  const Eigen::VectorXd g_sigma = g_alpha.cwiseProduct(forward.sample.epsilon) +
                                  (upstream * kl_weight) * kl_grad_sigma(post, prior);
  GeneratorGrad gg = generator_backward(gen, forward.generated.tape, g_mu, g_sigma);

  AmortizedGrad out;
  out.generator = std::move(gg.params);
  const double n = static_cast<double>(support_labels.size() + query_labels.size());
  const Eigen::VectorXd share = gg.input / n;
  out.support = prototype_backward(eg.prototypes, support_labels, prototypes.counts);
  out.support.colwise() += share;
  out.query = eg.queries;
  out.query.colwise() += share;
  return out;
}

}  // namespace varscale
