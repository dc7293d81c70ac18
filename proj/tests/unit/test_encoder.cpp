#include <gtest/gtest.h>

#include "unit/support.hpp"
#include "varscale/error.hpp"
#include "varscale/oracles/finite_diff.hpp"

using namespace varscale;
using varscale::testing::Gen;

namespace {

// Dense evaluation written out loop by loop.
std::vector<double> manual_forward(const EncoderParams& p, const std::vector<double>& x) {
  std::vector<double> a = x;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& W = p.layers[l].weight;
    std::vector<double> z(W.rows());
    for (int r = 0; r < W.rows(); ++r) {
      double s = p.layers[l].bias(r);
      for (int c = 0; c < W.cols(); ++c) s += W(r, c) * a[c];
      z[r] = (l + 1 < p.layers.size() && s < 0.0) ? 0.0 : s;
    }
    a = z;
  }
  if (p.normalize) {
    double n = 0.0;
    for (double v : a) n += v * v;
    n = std::sqrt(n);
    for (double& v : a) v /= n;
  }
  return a;
}

bool near_kink(const EncodeTape& tape, double margin) {
  for (std::size_t l = 0; l + 1 < tape.pre_activations.size(); ++l)
    if ((tape.pre_activations[l].array().abs() < margin).any()) return true;
  return false;
}

}  // namespace

TEST(Encoder, IdentityLayerWithoutNormalisationIsIdentity) {
  const EncoderParams p = identity_encoder(5, false);
  Eigen::VectorXd v(5);
  v << 1.5, -2, 0.25, 3, -0.125;
  EXPECT_EQ(encode(p, v).first, v);
}

TEST(Encoder, NormalisedOutputHasUnitNorm) {
  Gen g(1);
  for (int t = 0; t < 100; ++t) {
    const int d = g.integer(2, 10);
    const EncoderParams p = g.encoder(d, g.integer(1, 8), true);
    const auto [e, tape] = encode(p, g.vec(d));
    if (tape.degenerate[0]) continue;
    EXPECT_NEAR(e.norm(), 1.0, 1e-9);
  }
}

TEST(Encoder, MatchesManualDenseEvaluation) {
  Gen g(2);
  std::vector<Eigen::Index> hidden{6};
  EncoderParams p = make_encoder(4, hidden, 3, true, g.rng);
  p.layers[0].bias = g.vec(6, 0.5);
  p.layers[1].bias = g.vec(3, 0.5);
  const Eigen::VectorXd x = g.vec(4);
  const auto [e, tape] = encode(p, x);
  const auto ref = manual_forward(p, {x.data(), x.data() + x.size()});
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(e(i), ref[i], 1e-14);
}

TEST(Encoder, InputShapeMismatchThrows) {
  const EncoderParams p = identity_encoder(3, true);
  EXPECT_THROW(encode(p, Eigen::VectorXd::Ones(4)), ShapeError);
}

TEST(Encoder, NonFiniteInputThrows) {
  const EncoderParams p = identity_encoder(3, false);
  Eigen::VectorXd x = Eigen::VectorXd::Ones(3);
  x(1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(encode(p, x), NumericError);
}

TEST(Encoder, DegenerateNormGivesZeroAndFlag) {
  EncoderParams p = identity_encoder(3, true);
  const auto [e, tape] = encode(p, Eigen::VectorXd::Zero(3));
  EXPECT_TRUE(tape.degenerate[0]);
  EXPECT_EQ(e, Eigen::VectorXd::Zero(3));
}

TEST(EncoderBackward, ZeroUpstreamGivesZeroGrads) {
  Gen g(3);
  const EncoderParams p = g.encoder(5, 4, true);
  const auto [e, tape] = encode(p, g.vec(5));
  const EncoderGrad grad = encode_backward(p, tape, Eigen::VectorXd::Zero(4));
  for (const auto& l : grad.params.layers) {
    EXPECT_TRUE(l.weight.isZero(0.0));
    EXPECT_TRUE(l.bias.isZero(0.0));
  }
  EXPECT_TRUE(grad.inputs.isZero(0.0));
}

TEST(EncoderBackward, LinearLayerGradientIsOuterProduct) {
  Gen g(4);
  EncoderParams p = make_encoder(4, {}, 3, false, g.rng);
  const Eigen::VectorXd x = g.vec(4);
  const Eigen::VectorXd up = g.vec(3);
  const auto [e, tape] = encode(p, x);
  const EncoderGrad grad = encode_backward(p, tape, up);
  const Eigen::MatrixXd outer = up * x.transpose();
  EXPECT_TRUE(grad.params.layers[0].weight.isApprox(outer, 1e-15));
  EXPECT_TRUE(grad.params.layers[0].bias.isApprox(up, 1e-15));
}

// Random small networks, loss = w . encode(x); every weight, bias and input
// coordinate checked by central differences at h = 1e-5.
TEST(EncoderBackward, MatchesFiniteDifferencesOnRandomNetworks) {
  Gen g(5);
  int checked = 0;
  while (checked < 60) {
    const int d = g.integer(2, 6);
    const int m = g.integer(2, 5);
    const bool normalize = g.coin(0.7);
    EncoderParams p = g.encoder(d, m, normalize);
    Eigen::VectorXd x = g.vec(d);
    const Eigen::VectorXd w = g.vec(m);
    auto [e0, tape] = encode(p, x);
    if (near_kink(tape, 1e-3) || tape.degenerate[0]) continue;
    ++checked;
    const EncoderGrad grad = encode_backward(p, tape, w);
    auto loss = [&] { return w.dot(encode(p, x).first); };
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      auto& W = p.layers[l].weight;
      for (Eigen::Index k = 0; k < W.size(); ++k) {
        const double num = oracles::finite_diff(loss, W.data()[k], 1e-5);
        EXPECT_LE(oracles::relative_error(grad.params.layers[l].weight.data()[k], num), 1e-4)
            << "layer " << l << " weight " << k;
      }
      auto& b = p.layers[l].bias;
      for (Eigen::Index k = 0; k < b.size(); ++k) {
        const double num = oracles::finite_diff(loss, b(k), 1e-5);
        EXPECT_LE(oracles::relative_error(grad.params.layers[l].bias(k), num), 1e-4);
      }
    }
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      const double num = oracles::finite_diff(loss, x(k), 1e-5);
      EXPECT_LE(oracles::relative_error(grad.inputs(k), num), 1e-4);
    }
  }
}

TEST(Encoder, NormalisationRemovesPositiveScaleOfFinalStage) {
  Gen g(6);
  for (int t = 0; t < 50; ++t) {
    EncoderParams p = g.encoder(4, 3, true);
    const Eigen::VectorXd x = g.vec(4);
    const auto a = encode(p, x).first;
    const double c = g.real(0.01, 100.0);
    p.layers.back().weight *= c;
    p.layers.back().bias *= c;
    const auto b = encode(p, x).first;
    EXPECT_TRUE(a.isApprox(b, 1e-12));
  }
}

TEST(Encoder, DeterministicBitIdentical) {
  Gen g(7);
  const EncoderParams p = g.encoder(6, 4, true);
  const Eigen::VectorXd x = g.vec(6);
  const auto a = encode(p, x).first;
  const auto b = encode(p, x).first;
  EXPECT_EQ(0, std::memcmp(a.data(), b.data(), sizeof(double) * a.size()));
}

TEST(Encoder, BatchColumnsMatchSingleEncodes) {
  Gen g(8);
  const EncoderParams p = g.encoder(5, 3, true);
  const Eigen::MatrixXd X = g.mat(5, 7);
  const auto batch = encode_batch(p, X);
  for (int j = 0; j < 7; ++j)
    EXPECT_TRUE(batch.embeddings.col(j).isApprox(encode(p, X.col(j)).first, 1e-14));
}
