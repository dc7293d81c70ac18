#include <gtest/gtest.h>

#include "unit/support.hpp"
#include "varscale/error.hpp"
#include "varscale/oracles/finite_diff.hpp"
#include "varscale/oracles/mc_kl.hpp"
#include "varscale/variational_scaling.hpp"

using namespace varscale;
using varscale::testing::Gen;

namespace {

struct Instance {
  Eigen::MatrixXd query;
  std::vector<int> labels;
  PrototypeSet protos;
};

Instance random_instance(Gen& g, int m) {
  const int way = g.integer(2, 4), q = g.integer(2, 8);
  Instance in;
  const Eigen::MatrixXd S = g.mat(m, way * 2);
  in.protos = compute_prototypes(S, g.labels(way * 2, way), way);
  in.query = g.mat(m, q);
  in.labels = g.labels(q, std::min(way, q));
  return in;
}

// Eq. 6 objective at frozen noise.
double objective(const Instance& in, const VariationalPosterior& post, const GaussianPrior& prior,
                 const Eigen::VectorXd& eps) {
  const auto s = sample_alpha_with(post, eps);
  return episode_loss(in.query, in.labels, in.protos, s.scaling(), DistanceKind::euclidean).loss +
         kl_term(post, prior);
}

}  // namespace

TEST(SampleAlpha, DegenerateCases) {
  Rng rng(1, 1);
  const auto post = VariationalPosterior::global(3.5, 0.0);
  EXPECT_EQ(sample_alpha(post, rng).alpha(0), 3.5);
  const auto p2 = VariationalPosterior::dimensional(4, 2.0, 0.7);
  const auto s = sample_alpha_with(p2, Eigen::VectorXd::Zero(4), 9);
  EXPECT_EQ(s.alpha, p2.mu);
  EXPECT_EQ(s.episode_id, 9);
}

TEST(SampleAlpha, ReconstructionIsExact) {
  Gen g(2);
  for (int t = 0; t < 200; ++t) {
    const int m = g.integer(1, 8);
    auto post = VariationalPosterior::dimensional(m, 0.0, 1.0);
    post.mu = g.vec(m, 10.0);
    post.sigma = g.vec(m).cwiseAbs();
    const auto s = sample_alpha(post, g.rng, t);
    EXPECT_EQ(s.alpha, (post.sigma.cwiseProduct(s.epsilon) + post.mu).eval());
  }
}

TEST(SampleAlpha, MomentsAtPaperDefaults) {
  Rng rng(3, 5);
  const auto post = VariationalPosterior::global(100.0, 0.2);
  const int n = 1000000;
  double mean = 0.0, m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double a = sample_alpha(post, rng).alpha(0);
    const double d = a - mean;
    mean += d / (i + 1);
    m2 += d * (a - mean);
  }
  EXPECT_NEAR(mean, 100.0, 1e-3);
  EXPECT_NEAR(std::sqrt(m2 / (n - 1)), 0.2, 1e-3);
}

TEST(SampleAlpha, RejectionKeepsPositiveDraws) {
  Rng rng(4, 4);
  const auto post = VariationalPosterior::dimensional(3, 0.2, 1.0);
  for (int i = 0; i < 200; ++i)
    EXPECT_TRUE((sample_alpha(post, rng, i, true).alpha.array() > 0.0).all());
}

TEST(KlTerm, Examples) {
  const GaussianPrior prior{1.0, 1.0, true};
  EXPECT_DOUBLE_EQ(kl_term(VariationalPosterior::global(1.0, 1.0), prior), 0.5);
  EXPECT_DOUBLE_EQ(kl_term(VariationalPosterior::dimensional(7, 1.0, 1.0), prior), 3.5);
  const double v = kl_term(VariationalPosterior::global(100.0, 0.2), prior);
  EXPECT_NEAR(v, std::log(5.0) + (0.04 + 9801.0) / 2.0, 1e-9);
  EXPECT_NEAR(v, 4902.1294, 5e-5);
  EXPECT_EQ(kl_grad_mu(VariationalPosterior::global(1.0, 0.3), prior)(0), 0.0);
  EXPECT_EQ(kl_term(VariationalPosterior::global(5.0, 0.3), GaussianPrior{1, 1, false}), 0.0);
}

TEST(KlTerm, MatchesMonteCarloAtPaperDefaults) {
  Rng rng(5, 5);
  const auto mc = oracles::mc_kl(100.0, 0.2, 1.0, 1.0, 1000000, rng);
  const double closed = kl_term(VariationalPosterior::global(100.0, 0.2), {1.0, 1.0, true}) - 0.5;
  EXPECT_LE(std::abs(mc.estimate - closed), 0.05);
  EXPECT_LE(std::abs(mc.estimate - closed), 3.0 * mc.std_error);
}

TEST(KlTerm, LowerBoundHalfPerDimension) {
  Gen g(6);
  for (int t = 0; t < 500; ++t) {
    const int m = g.integer(1, 6);
    auto post = VariationalPosterior::dimensional(m, 0.0, 1.0);
    post.mu = g.vec(m, 3.0);
    post.sigma = g.vec(m).cwiseAbs().array() + 0.01;
    const GaussianPrior prior{g.real(-2, 2), g.real(0.2, 3), true};
    EXPECT_GE(kl_term(post, prior), 0.5 * m - 1e-12);
  }
}

TEST(GradMu, SaturatedClassifierLeavesPriorTerm) {
  Eigen::MatrixXd P(1, 2);
  P << 0, 10;
  const PrototypeSet protos{P, {1, 1}};
  Eigen::MatrixXd Q(1, 1);
  Q << 0;
  const std::vector<int> l{0};
  const auto f = episode_loss(Q, l, protos, ScalingVector::global(50.0), DistanceKind::euclidean);
  const auto post = VariationalPosterior::global(3.0, 0.5, SigmaMode::learned);
  const GaussianPrior prior{1.0, 2.0, true};
  EXPECT_NEAR(grad_mu(f, l, prior, post), (3.0 - 1.0) / 4.0, 1e-12);
  EXPECT_NEAR(grad_sigma(f, l, prior, post, 0.7), -1.0 / 0.5 + 0.5 / 4.0, 1e-12);
}

TEST(GradMu, EqualDistancesGiveZeroDataTerm) {
  const PrototypeSet protos{Eigen::MatrixXd::Ones(3, 4), {1, 1, 1, 1}};
  Gen g(7);
  const Eigen::MatrixXd Q = g.mat(3, 5);
  const auto l = g.labels(5, 4);
  const auto f = episode_loss(Q, l, protos, ScalingVector::global(2.0), DistanceKind::euclidean);
  EXPECT_NEAR(data_term(f, l)(0), 0.0, 1e-12);
  const auto fd = episode_loss(Q, l, protos, ScalingVector::dimensional(Eigen::VectorXd::Ones(3)),
                               DistanceKind::euclidean);
  EXPECT_TRUE(data_term(fd, l).isZero(1e-12));
}

// K=2, d=(0,1), true class 0, alpha=1: the derivative of the cross-entropy
// with respect to mu is d_true - sum_k p_k d_k = -0.26894.
TEST(GradMu, TwoClassExample) {
  Eigen::MatrixXd P(1, 2);
  P << 0, 1;
  const PrototypeSet protos{P, {1, 1}};
  Eigen::MatrixXd Q(1, 1);
  Q << 0;
  const std::vector<int> l{0};
  const GaussianPrior prior{1.0, 1.0, true};
  auto post = VariationalPosterior::global(1.0, 0.2);
  const auto f = episode_loss(Q, l, protos, ScalingVector::global(1.0), DistanceKind::euclidean);
  const double g = grad_mu(f, l, prior, post);
  EXPECT_NEAR(g, -0.26894, 5e-6);
  const Instance in{Q, l, protos};
  const Eigen::VectorXd eps = Eigen::VectorXd::Zero(1);
  const double num = oracles::finite_diff([&] { return objective(in, post, prior, eps); },
                                          post.mu(0), 1e-5);
  EXPECT_LE(oracles::relative_error(g, num), 1e-5);
}

TEST(GradSigma, PriorMatchedNoiseFree) {
  Eigen::MatrixXd P(1, 2);
  P << 0, 1;
  const PrototypeSet protos{P, {1, 1}};
  Eigen::MatrixXd Q(1, 1);
  Q << 0.3;
  const std::vector<int> l{1};
  const auto f = episode_loss(Q, l, protos, ScalingVector::global(1.0), DistanceKind::euclidean);
  const GaussianPrior prior{1.0, 1.7, true};
  EXPECT_NEAR(grad_sigma(f, l, prior, VariationalPosterior::global(1.0, 1.7, SigmaMode::learned), 0.0),
              0.0, 1e-15);
  EXPECT_THROW(grad_sigma(f, l, prior, VariationalPosterior::global(1.0, 1.7, SigmaMode::fixed), 0.0),
               ContractError);
}

TEST(GradMuVec, CollapsesToScalarForOneDimension) {
  Gen g(8);
  for (int t = 0; t < 50; ++t) {
    Instance in = random_instance(g, 1);
    const GaussianPrior prior{g.real(0, 2), g.real(0.5, 2), true};
    const double mu = g.real(0.5, 3), sigma = g.real(0.1, 1), e = g.vec(1)(0);
    const auto gp = VariationalPosterior::global(mu, sigma, SigmaMode::learned);
    const auto dp = VariationalPosterior::dimensional(1, mu, sigma, SigmaMode::learned);
    const double a = sigma * e + mu;
    const auto fg = episode_loss(in.query, in.labels, in.protos, ScalingVector::global(a), DistanceKind::euclidean);
    const auto fdim = episode_loss(in.query, in.labels, in.protos,
                                   ScalingVector::dimensional(Eigen::VectorXd::Constant(1, a)),
                                   DistanceKind::euclidean);
    EXPECT_NEAR(grad_mu_vec(fdim, in.labels, prior, dp)(0), grad_mu(fg, in.labels, prior, gp), 1e-12);
    EXPECT_NEAR(grad_sigma_vec(fdim, in.labels, prior, dp, Eigen::VectorXd::Constant(1, e))(0),
                grad_sigma(fg, in.labels, prior, gp, e), 1e-12);
  }
}

// The central property: analytic posterior gradients against central
// differences of the full objective at frozen noise.
TEST(PosteriorGrad, MatchesFiniteDifferences) {
  Gen g(9);
  for (int t = 0; t < 100; ++t) {
    const bool dimensional = t % 2 == 1;
    const int m = dimensional ? 4 : g.integer(1, 5);
    Instance in = random_instance(g, m);
    const GaussianPrior prior{g.real(0, 2), g.real(0.5, 2), true};
    auto post = dimensional ? VariationalPosterior::dimensional(m, 1.0, 0.5, SigmaMode::learned)
                            : VariationalPosterior::global(1.0, 0.5, SigmaMode::learned);
    for (auto& x : post.mu) x = g.real(0.5, 4.0);
    for (auto& x : post.sigma) x = g.real(0.05, 1.0);
    const Eigen::VectorXd eps = g.vec(post.size());
    const auto s = sample_alpha_with(post, eps);
    const auto f = episode_loss(in.query, in.labels, in.protos, s.scaling(), DistanceKind::euclidean);
    const auto grads = posterior_grad(f, in.labels, prior, post, s);
    auto loss = [&] { return objective(in, post, prior, eps); };
    for (Eigen::Index k = 0; k < post.size(); ++k) {
      const double nm = oracles::finite_diff_adaptive(loss, post.mu(k));
      const double ns = oracles::finite_diff_adaptive(loss, post.sigma(k));
      EXPECT_LE(oracles::relative_error(grads.mu(k), nm), 1e-4) << "instance " << t << " mu " << k;
      EXPECT_LE(oracles::relative_error(grads.sigma(k), ns), 1e-4) << "instance " << t << " sigma " << k;
    }
    if (!dimensional) {
      EXPECT_EQ(grads.mu(0), grad_mu(f, in.labels, prior, post));
      EXPECT_EQ(grads.sigma(0), grad_sigma(f, in.labels, prior, post, eps(0)));
    }
  }
}

TEST(ApplyUpdate, Examples) {
  const auto post = VariationalPosterior::global(100.0, 0.2, SigmaMode::learned);
  const PosteriorGrad zero{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)};
  const auto same = apply_update(post, zero, 0.5);
  EXPECT_EQ(same.mu, post.mu);
  EXPECT_EQ(same.sigma, post.sigma);

  const PosteriorGrad g{Eigen::VectorXd::Constant(1, 10.0), Eigen::VectorXd::Constant(1, 0.7)};
  const auto next = apply_update(post, g, 1e-4);
  EXPECT_NEAR(next.mu(0), 99.999, 1e-12);

  const PosteriorGrad big{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 7.0)};
  EXPECT_EQ(apply_update(post, big, 0.1).sigma(0), kSigmaFloor);  // 0.2 - 0.7 = -0.5

  const auto fixed = VariationalPosterior::global(1.0, 0.2, SigmaMode::fixed);
  EXPECT_EQ(apply_update(fixed, big, 0.1).sigma(0), 0.2);

  const PosteriorGrad bad{Eigen::VectorXd::Constant(1, std::nan("")), Eigen::VectorXd::Zero(1)};
  EXPECT_THROW(apply_update(post, bad, 0.1), NumericError);
}

TEST(ApplyUpdate, LearnedSigmaStaysAboveFloor) {
  Gen g(10);
  auto post = VariationalPosterior::dimensional(5, 1.0, 0.5, SigmaMode::learned);
  for (int t = 0; t < 1000; ++t) {
    const PosteriorGrad gr{g.vec(5), g.vec(5, 10.0)};
    post = apply_update(post, gr, 0.05);
    EXPECT_GE(post.sigma.minCoeff(), kSigmaFloor);
  }
}
