#pragma once

#include <Eigen/Dense>
#include <span>
#include <string_view>
#include <vector>

namespace varscale {

enum class DistanceKind { euclidean, cosine };
enum class ScalingKind { global, dimensional };

std::string_view to_string(DistanceKind kind);

// Metric scaling: a single temperature (global) or per-dimension weights on
// the squared coordinate differences (dimensional).
struct ScalingVector {
  ScalingKind kind = ScalingKind::global;
  Eigen::VectorXd values = Eigen::VectorXd::Ones(1);

  static ScalingVector global(double alpha);
  static ScalingVector dimensional(Eigen::VectorXd weights);

  double alpha() const { return values(0); }
  // Weight applied to coordinate m of the squared difference.
  double weight(Eigen::Index m) const {
    return kind == ScalingKind::global ? values(0) : values(m);
  }
};

struct PrototypeSet {
  Eigen::MatrixXd prototypes;  // embed_dim x way
  std::vector<int> counts;

  int way() const { return static_cast<int>(prototypes.cols()); }
};

// Per-class mean of the support embeddings (one embedding per column).
PrototypeSet compute_prototypes(const Eigen::MatrixXd& embeddings,
                                std::span<const int> labels, int way);

// Scatters prototype gradients back to the supports that formed them.
Eigen::MatrixXd prototype_backward(const Eigen::MatrixXd& grad_prototypes,
                                   std::span<const int> labels,
                                   const std::vector<int>& counts);

double squared_euclidean(const Eigen::Ref<const Eigen::VectorXd>& a,
                         const Eigen::Ref<const Eigen::VectorXd>& b);

// 1 - cos(a, b), in [0, 2].
double cosine_distance(const Eigen::Ref<const Eigen::VectorXd>& a,
                       const Eigen::Ref<const Eigen::VectorXd>& b);

// sum_m s_m (a_m - b_m)^2
double dimensional_distance(const Eigen::Ref<const Eigen::VectorXd>& a,
                            const Eigen::Ref<const Eigen::VectorXd>& b,
                            const ScalingVector& s);

// softmax(-alpha * d) via the max-shifted form.
Eigen::VectorXd scaled_class_probs(const Eigen::VectorXd& distances, double alpha);

// Forward quantities of one episode's cross-entropy, kept for the backward
// pass and for the variational-parameter gradients.
struct EpisodeForward {
  double loss = 0.0;                 // -sum_j log p(y_j | x_j)
  Eigen::MatrixXd probs;             // way x q
  Eigen::MatrixXd distances;         // way x q, unscaled d(x_j, c_k)
  Eigen::MatrixXd sq_diff;           // embed_dim x (q * way), column j * way + k
  std::vector<int> predictions;      // argmax of probs per query
  DistanceKind distance = DistanceKind::euclidean;
  ScalingVector scaling;

  int correct(std::span<const int> labels) const;
};

EpisodeForward episode_loss(const Eigen::MatrixXd& query_embeddings,
                            std::span<const int> query_labels,
                            const PrototypeSet& prototypes,
                            const ScalingVector& scaling, DistanceKind distance);

struct EpisodeGrad {
  Eigen::MatrixXd queries;     // embed_dim x q
  Eigen::MatrixXd prototypes;  // embed_dim x way
};

// Gradient of `upstream * loss` with respect to query embeddings and
// prototypes, at fixed scaling.
EpisodeGrad episode_loss_backward(const EpisodeForward& forward,
                                  const Eigen::MatrixXd& query_embeddings,
                                  std::span<const int> query_labels,
                                  const PrototypeSet& prototypes,
                                  double upstream = 1.0);

// Nearest prototype under the scaled distance; ties go to the lowest index.
int predict(const Eigen::Ref<const Eigen::VectorXd>& query,
            const PrototypeSet& prototypes, const ScalingVector& scaling,
            DistanceKind distance = DistanceKind::euclidean);

}  // namespace varscale
