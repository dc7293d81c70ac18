#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <string_view>
#include <vector>

#include "varscale/episodic_data.hpp"
#include "varscale/optimizer.hpp"
#include "varscale/proto_metric.hpp"
#include "varscale/variational_scaling.hpp"

namespace varscale {

enum class Method { pn, svs, dsvs, davs };

std::string_view to_string(Method m);
Method parse_method(std::string_view s);

struct EpisodeShape {
  int way = 5;
  int shot = 5;
  int query = 15;
};

// Fully resolved run configuration. Serialises to a nested JSON document;
// every leaf can be overridden with a dotted key (e.g. "rates.l_psi").
struct TrainConfig {
  Method method = Method::pn;
  DistanceKind distance = DistanceKind::euclidean;
  std::uint64_t seed = 0;

  DomainConfig domain;

  // encoder
  std::vector<int> hidden_dims = {64};
  int embed_dim = 16;
  bool normalize = true;
  bool identity_init = false;  // single identity layer; needs embed_dim == input_dim

  EpisodeShape train_episode;
  EpisodeShape test_episode;

  int episodes = 20000;
  int epochs = 200;  // lambda decays once per epoch = episodes / epochs episodes

  double l_theta = 0.05;
  double l_psi = 1e-4;
  double l_beta = 1e-3;
  OptimizerConfig optimizer;  // optimizer.lr mirrors l_theta

  GaussianPrior prior;
  double mu_init = 100.0;
  double sigma_init = 0.2;
  SigmaMode sigma_mode = SigmaMode::fixed;
  double kl_weight = 1.0;
  bool reject_nonpositive_alpha = false;

  int gamma = 125;
  int generator_hidden = 32;
  double generator_init_scale = 0.1;

  int val_every = 200;
  int val_episodes = 100;
  int test_episodes = 1000;

  std::string output_dir;  // empty: nothing written
  int log_every = 1;
  int mu_log_every = 100;
  int checkpoint_every = 0;  // 0: only final / last-good
  bool log_wallclock = false;

  int episodes_per_epoch() const;
  void validate() const;
};

// Method-dependent default for l_psi when the document does not set it.
double default_l_psi(Method m);
// Weight on the KL term. The per-episode pull of the prior on mu is
// kl_weight * learning rate; the defaults keep it at 1e-4 for every method,
// so D-SVS (l_psi = 16) and D-AVS (l_beta = 1e-3) stay stable.
double default_kl_weight(Method m);

nlohmann::json to_json(const TrainConfig& config);

// Parses a (possibly partial) document. "method" is required; "seed" is
// required unless `fallback_seed` is given. Unknown keys, type errors and
// invalid values raise ConfigError naming the field.
TrainConfig config_from_json(const nlohmann::json& doc,
                             const std::uint64_t* fallback_seed = nullptr);

// Applies "a.b.c=value" overrides to a document. Values are parsed as JSON
// when possible and kept as strings otherwise.
void apply_overrides(nlohmann::json& doc, const std::vector<std::string>& overrides);

nlohmann::json load_json_file(const std::string& path);

}  // namespace varscale
