#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "varscale/rng.hpp"

namespace varscale {

enum class Partition { train, val, test };

std::string_view to_string(Partition p);

struct DomainConfig {
  int input_dim = 16;
  int informative_dims = 8;
  int num_classes = 40;
  std::array<double, 3> split = {0.6, 0.2, 0.2};  // train / val / test
  double informative_sigma = 0.3;
  double noise_sigma = 1.5;
  double center_range = 1.0;  // informative centers ~ U[-range, range]
  int min_way = 5;            // every partition must hold at least this many classes
};

struct ClassSplit {
  std::vector<int> train, val, test;
  const std::vector<int>& part(Partition p) const;
};

// Gaussian classes in input space. The first `informative_dims` coordinates
// carry class-specific centers; the remaining coordinates are centered at 0
// for every class and carry no label signal.
struct SyntheticDomain {
  Eigen::MatrixXd class_centers;  // num_classes x input_dim
  std::vector<int> informative_dims;
  std::vector<int> noise_dims;
  double informative_sigma = 0.3;
  double noise_sigma = 1.5;
  ClassSplit class_split;
  std::uint64_t seed = 0;

  int num_classes() const { return static_cast<int>(class_centers.rows()); }
  int input_dim() const { return static_cast<int>(class_centers.cols()); }
  Eigen::VectorXd sample_point(int cls, Rng& rng) const;
};

SyntheticDomain make_domain(const DomainConfig& config, std::uint64_t seed);

struct Episode {
  int way = 0;
  int shot = 0;
  Eigen::MatrixXd support;  // input_dim x (way * shot), class-major
  std::vector<int> support_labels;
  Eigen::MatrixXd query;    // input_dim x q
  std::vector<int> query_labels;
  std::vector<int> classes;  // domain class behind each episode-local label
  std::int64_t episode_id = 0;

  int num_support() const { return static_cast<int>(support.cols()); }
  int num_query() const { return static_cast<int>(query.cols()); }
};

// K distinct classes drawn from `partition`, N fresh support draws per class
// and q fresh query draws assigned to classes round-robin.
Episode sample_episode(const SyntheticDomain& domain, Partition partition,
                       int way, int shot, int queries, Rng& rng,
                       std::int64_t episode_id = 0);

// Position in `candidates` (domain class ids) of the nearest class center by
// squared Euclidean distance over `dims`; ties go to the lowest position.
int nearest_center(const SyntheticDomain& domain, const Eigen::VectorXd& x,
                   const std::vector<int>& candidates,
                   const std::vector<int>& dims);

}  // namespace varscale
