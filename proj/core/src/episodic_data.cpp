#include "varscale/episodic_data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "varscale/error.hpp"

namespace varscale {

std::string_view to_string(Partition p) {
  switch (p) {
    case Partition::train: return "train";
    case Partition::val: return "val";
    case Partition::test: return "test";
  }
  return "?";
}

const std::vector<int>& ClassSplit::part(Partition p) const {
  switch (p) {
    case Partition::train: return train;
    case Partition::val: return val;
    case Partition::test: return test;
  }
  return train;
}

Eigen::VectorXd SyntheticDomain::sample_point(int cls, Rng& rng) const {
  Eigen::VectorXd x = class_centers.row(cls).transpose();
  for (int d : informative_dims) x(d) += informative_sigma * rng.normal();
  for (int d : noise_dims) x(d) += noise_sigma * rng.normal();
  return x;
}

SyntheticDomain make_domain(const DomainConfig& config, std::uint64_t seed) {
  if (config.input_dim < 2)
    throw ConfigError("domain.input_dim", "domain.input_dim must be >= 2");
  if (config.informative_dims < 1 || config.informative_dims > config.input_dim)
    throw ConfigError("domain.informative_dims",
                      "domain.informative_dims must lie in [1, input_dim]");
  if (config.num_classes < config.min_way)
    throw ConfigError("domain.num_classes",
                      "domain.num_classes is smaller than the episode way");
  if (!(config.informative_sigma > 0.0))
    throw ConfigError("domain.informative_sigma", "domain.informative_sigma must be > 0");
  if (!(config.noise_sigma > 0.0))
    throw ConfigError("domain.noise_sigma", "domain.noise_sigma must be > 0");
  const double frac_sum = config.split[0] + config.split[1] + config.split[2];
  if (std::abs(frac_sum - 1.0) > 1e-9 ||
      std::any_of(config.split.begin(), config.split.end(),
                  [](double f) { return f < 0.0; }))
    throw ConfigError("domain.split", "domain.split fractions must be >= 0 and sum to 1");

  Rng rng(seed, streams::kDomain);
  SyntheticDomain domain;
  domain.seed = seed;
  domain.informative_sigma = config.informative_sigma;
  domain.noise_sigma = config.noise_sigma;
  for (int d = 0; d < config.input_dim; ++d)
    (d < config.informative_dims ? domain.informative_dims : domain.noise_dims)
        .push_back(d);

  domain.class_centers = Eigen::MatrixXd::Zero(config.num_classes, config.input_dim);
  for (int c = 0; c < config.num_classes; ++c)
    for (int d : domain.informative_dims)
      domain.class_centers(c, d) = rng.uniform(-config.center_range, config.center_range);

  std::vector<int> order(static_cast<std::size_t>(config.num_classes));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng.engine());

  const int n = config.num_classes;
  const int n_train = static_cast<int>(std::lround(config.split[0] * n));
  const int n_val = static_cast<int>(std::lround(config.split[1] * n));
  const int n_test = n - n_train - n_val;
  if (n_test < 0) throw ConfigError("domain.split", "domain.split is infeasible");
  auto& split = domain.class_split;
  split.train.assign(order.begin(), order.begin() + n_train);
  split.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  split.test.assign(order.begin() + n_train + n_val, order.end());
  for (auto* part : {&split.train, &split.val, &split.test}) {
    std::sort(part->begin(), part->end());
    if (static_cast<int>(part->size()) < config.min_way)
      throw ConfigError("domain.split",
                        "domain.split leaves a partition with " +
                            std::to_string(part->size()) + " classes, fewer than way " +
                            std::to_string(config.min_way));
  }
  return domain;
}

Episode sample_episode(const SyntheticDomain& domain, Partition partition,
                       int way, int shot, int queries, Rng& rng,
                       std::int64_t episode_id) {
  const auto& pool = domain.class_split.part(partition);
  if (way < 1 || shot < 1 || queries < 1)
    throw SamplingError("episode needs way, shot and query counts >= 1");
  if (static_cast<std::size_t>(way) > pool.size())
    throw SamplingError("way " + std::to_string(way) + " exceeds the " +
                        std::to_string(pool.size()) + " classes of the " +
                        std::string(to_string(partition)) + " partition");

  Episode ep;
  ep.way = way;
  ep.shot = shot;
  ep.episode_id = episode_id;

  // Partial Fisher-Yates over the partition's classes.
  std::vector<int> classes = pool;
  for (int k = 0; k < way; ++k) {
    const auto j = static_cast<std::size_t>(k) +
                   rng.index(classes.size() - static_cast<std::size_t>(k));
    std::swap(classes[static_cast<std::size_t>(k)], classes[j]);
  }
  classes.resize(static_cast<std::size_t>(way));
  ep.classes = classes;

  const int dim = domain.input_dim();
  ep.support.resize(dim, way * shot);
  ep.support_labels.reserve(static_cast<std::size_t>(way * shot));
  for (int k = 0; k < way; ++k)
    for (int s = 0; s < shot; ++s) {
      ep.support.col(k * shot + s) = domain.sample_point(classes[static_cast<std::size_t>(k)], rng);
      ep.support_labels.push_back(k);
    }
  ep.query.resize(dim, queries);
  ep.query_labels.reserve(static_cast<std::size_t>(queries));
  for (int j = 0; j < queries; ++j) {
    const int k = j % way;
    ep.query.col(j) = domain.sample_point(classes[static_cast<std::size_t>(k)], rng);
    ep.query_labels.push_back(k);
  }
  return ep;
}

int nearest_center(const SyntheticDomain& domain, const Eigen::VectorXd& x,
                   const std::vector<int>& candidates,
                   const std::vector<int>& dims) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    double d = 0.0;
    for (int dim : dims) {
      const double diff = x(dim) - domain.class_centers(candidates[i], dim);
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

}  // namespace varscale
