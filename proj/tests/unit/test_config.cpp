#include <gtest/gtest.h>

#include "varscale/config.hpp"
#include "varscale/error.hpp"

using namespace varscale;
using nlohmann::json;

namespace {

std::string field_of(const json& doc) {
  try {
    config_from_json(doc);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<none>";
}

}  // namespace

TEST(Config, MethodDefaults) {
  const auto svs = config_from_json({{"method", "svs"}, {"seed", 1}});
  EXPECT_EQ(svs.l_psi, 1e-4);
  EXPECT_EQ(svs.mu_init, 100.0);
  EXPECT_EQ(svs.sigma_init, 0.2);
  EXPECT_EQ(svs.prior.mu0, 1.0);
  EXPECT_EQ(svs.prior.sigma0, 1.0);
  EXPECT_EQ(svs.sigma_mode, SigmaMode::fixed);
  EXPECT_EQ(svs.embed_dim, 16);
  EXPECT_EQ(svs.hidden_dims, std::vector<int>{64});
  EXPECT_EQ(svs.l_theta, 0.05);
  EXPECT_EQ(svs.val_every, 200);
  EXPECT_EQ(svs.gamma, 125);
  const auto dsvs = config_from_json({{"method", "dsvs"}, {"seed", 1}});
  EXPECT_EQ(dsvs.l_psi, 16.0);
  EXPECT_EQ(dsvs.kl_weight * dsvs.l_psi, 1e-4);
}

TEST(Config, RoundTripsThroughJson) {
  auto c = config_from_json({{"method", "davs"}, {"seed", 9}, {"rates", {{"l_beta", 0.002}}}});
  const auto again = config_from_json(to_json(c));
  EXPECT_EQ(to_json(again), to_json(c));
  EXPECT_EQ(again.l_beta, 0.002);
}

TEST(Config, ErrorsNameTheField) {
  EXPECT_EQ(field_of(json::object()), "method");
  EXPECT_EQ(field_of({{"method", "svs"}}), "seed");
  EXPECT_EQ(field_of({{"method", "xyz"}, {"seed", 1}}), "method");
  EXPECT_EQ(field_of({{"method", "svs"}, {"seed", 1}, {"rates", {{"l_psi", -1}}}}), "rates.l_psi");
  EXPECT_EQ(field_of({{"method", "svs"}, {"seed", 1}, {"rates", {{"l_psi", "x"}}}}), "rates.l_psi");
  EXPECT_EQ(field_of({{"method", "svs"}, {"seed", 1}, {"bogus", 1}}), "bogus");
  EXPECT_EQ(field_of({{"method", "pn"}, {"seed", 1}, {"episode", {{"train", {{"way", 1}}}}}}),
            "episode.train.way");
  EXPECT_EQ(field_of({{"method", "dsvs"}, {"seed", 1}, {"distance", "cosine"}}), "distance");
  EXPECT_EQ(field_of({{"method", "pn"}, {"seed", 1}, {"encoder", {{"identity_init", true}}}}),
            "encoder.identity_init");
}

TEST(Config, FallbackSeed) {
  const std::uint64_t s = 42;
  EXPECT_EQ(config_from_json({{"method", "pn"}}, &s).seed, 42u);
  EXPECT_EQ(config_from_json({{"method", "pn"}, {"seed", 3}}, &s).seed, 3u);
}

TEST(Config, Overrides) {
  json doc = {{"method", "svs"}};
  apply_overrides(doc, {"seed=7", "prior.mu0=2.5", "encoder.hidden=[8,4]", "distance=cosine"});
  const auto c = config_from_json(doc);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.prior.mu0, 2.5);
  EXPECT_EQ(c.hidden_dims, (std::vector<int>{8, 4}));
  EXPECT_EQ(c.distance, DistanceKind::cosine);
  EXPECT_THROW(apply_overrides(doc, {"novalue"}), ConfigError);
}
