#include "varscale/proto_metric.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "varscale/error.hpp"

namespace varscale {

std::string_view to_string(DistanceKind kind) {
  return kind == DistanceKind::euclidean ? "euclidean" : "cosine";
}

ScalingVector ScalingVector::global(double alpha) {
  return {ScalingKind::global, Eigen::VectorXd::Constant(1, alpha)};
}

ScalingVector ScalingVector::dimensional(Eigen::VectorXd weights) {
  return {ScalingKind::dimensional, std::move(weights)};
}

PrototypeSet compute_prototypes(const Eigen::MatrixXd& embeddings,
                                std::span<const int> labels, int way) {
  if (static_cast<Eigen::Index>(labels.size()) != embeddings.cols())
    throw ShapeError("label count does not match number of support embeddings");
  PrototypeSet set;
  set.prototypes = Eigen::MatrixXd::Zero(embeddings.rows(), way);
  set.counts.assign(static_cast<std::size_t>(way), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int k = labels[i];
    if (k < 0 || k >= way) throw ShapeError("support label out of range");
    set.prototypes.col(k) += embeddings.col(static_cast<Eigen::Index>(i));
    ++set.counts[static_cast<std::size_t>(k)];
  }
  for (int k = 0; k < way; ++k) {
    const int n = set.counts[static_cast<std::size_t>(k)];
    if (n == 0)
      throw ShapeError("class " + std::to_string(k) + " has no support points");
    set.prototypes.col(k) /= static_cast<double>(n);
  }
  return set;
}

Eigen::MatrixXd prototype_backward(const Eigen::MatrixXd& grad_prototypes,
                                   std::span<const int> labels,
                                   const std::vector<int>& counts) {
  Eigen::MatrixXd grad(grad_prototypes.rows(), static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int k = labels[i];
    grad.col(static_cast<Eigen::Index>(i)) =
        grad_prototypes.col(k) / static_cast<double>(counts[static_cast<std::size_t>(k)]);
  }
  return grad;
}

namespace {

void require_same_length(Eigen::Index a, Eigen::Index b) {
  if (a != b)
    throw ShapeError("vector lengths differ: " + std::to_string(a) + " vs " +
                     std::to_string(b));
}

}  // namespace

double squared_euclidean(const Eigen::Ref<const Eigen::VectorXd>& a,
                         const Eigen::Ref<const Eigen::VectorXd>& b) {
  require_same_length(a.size(), b.size());
  // Same summation order as dimensional_distance, so unit weights agree exactly.
  double d = 0.0;
  for (Eigen::Index m = 0; m < a.size(); ++m) {
    const double diff = a(m) - b(m);
    d += diff * diff;
  }
  return d;
}

double cosine_distance(const Eigen::Ref<const Eigen::VectorXd>& a,
                       const Eigen::Ref<const Eigen::VectorXd>& b) {
  require_same_length(a.size(), b.size());
  const double na = a.norm();
  const double nb = b.norm();
  if (na <= 1e-12 || nb <= 1e-12)
    throw NumericError("cosine distance of a near-zero vector");
  return 1.0 - a.dot(b) / (na * nb);
}

double dimensional_distance(const Eigen::Ref<const Eigen::VectorXd>& a,
                            const Eigen::Ref<const Eigen::VectorXd>& b,
                            const ScalingVector& s) {
  require_same_length(a.size(), b.size());
  if (s.kind == ScalingKind::dimensional) require_same_length(a.size(), s.values.size());
  double d = 0.0;
  for (Eigen::Index m = 0; m < a.size(); ++m) {
    const double diff = a(m) - b(m);
    d += s.weight(m) * diff * diff;
  }
  return d;
}

namespace {

// Fills `probs` with softmax(logits) and returns log-sum-exp(logits).
double softmax_into(const Eigen::VectorXd& logits, Eigen::Ref<Eigen::VectorXd> probs) {
  const double top = logits.maxCoeff();
  probs = (logits.array() - top).exp().matrix();
  const double z = probs.sum();
  probs /= z;
  return top + std::log(z);
}

}  // namespace

Eigen::VectorXd scaled_class_probs(const Eigen::VectorXd& distances, double alpha) {
  if (!std::isfinite(alpha) || !distances.allFinite())
    throw NumericError("non-finite distance or scaling in softmax");
  Eigen::VectorXd probs(distances.size());
  softmax_into(-alpha * distances, probs);
  return probs;
}

int EpisodeForward::correct(std::span<const int> labels) const {
  int n = 0;
  for (std::size_t j = 0; j < labels.size(); ++j) n += predictions[j] == labels[j];
  return n;
}

EpisodeForward episode_loss(const Eigen::MatrixXd& query_embeddings,
                            std::span<const int> query_labels,
                            const PrototypeSet& prototypes,
                            const ScalingVector& scaling, DistanceKind distance) {
  const Eigen::Index dim = query_embeddings.rows();
  const Eigen::Index q = query_embeddings.cols();
  const int way = prototypes.way();
  if (q < 1) throw ShapeError("episode has no queries");
  if (static_cast<Eigen::Index>(query_labels.size()) != q)
    throw ShapeError("query label count does not match query embeddings");
  require_same_length(dim, prototypes.prototypes.rows());
  if (scaling.kind == ScalingKind::dimensional) {
    require_same_length(dim, scaling.values.size());
    if (distance != DistanceKind::euclidean)
      throw ContractError("dimensional scaling requires the euclidean distance");
  }
  if (!scaling.values.allFinite()) throw NumericError("non-finite metric scaling");

  EpisodeForward fwd;
  fwd.distance = distance;
  fwd.scaling = scaling;
  fwd.probs.resize(way, q);
  fwd.distances.resize(way, q);
  fwd.predictions.resize(static_cast<std::size_t>(q));
  if (distance == DistanceKind::euclidean) fwd.sq_diff.resize(dim, q * way);

  Eigen::VectorXd logits(way);
  for (Eigen::Index j = 0; j < q; ++j) {
    const auto e = query_embeddings.col(j);
    for (int k = 0; k < way; ++k) {
      if (distance == DistanceKind::euclidean) {
        auto sq = fwd.sq_diff.col(j * way + k);
        sq = (e - prototypes.prototypes.col(k)).array().square().matrix();
        fwd.distances(k, j) = sq.sum();
        logits(k) = scaling.kind == ScalingKind::global
                        ? -scaling.alpha() * fwd.distances(k, j)
                        : -scaling.values.dot(sq);
      } else {
        fwd.distances(k, j) = cosine_distance(e, prototypes.prototypes.col(k));
        logits(k) = -scaling.alpha() * fwd.distances(k, j);
      }
    }
    if (!logits.allFinite()) throw NumericError("non-finite logits in episode loss");
    const double lse = softmax_into(logits, fwd.probs.col(j));
    const int y = query_labels[static_cast<std::size_t>(j)];
    if (y < 0 || y >= way) throw ShapeError("query label out of range");
    fwd.loss += lse - logits(y);
    Eigen::Index arg = 0;
    fwd.probs.col(j).maxCoeff(&arg);
    fwd.predictions[static_cast<std::size_t>(j)] = static_cast<int>(arg);
  }
  return fwd;
}

EpisodeGrad episode_loss_backward(const EpisodeForward& forward,
                                  const Eigen::MatrixXd& query_embeddings,
                                  std::span<const int> query_labels,
                                  const PrototypeSet& prototypes, double upstream) {
  const Eigen::Index dim = query_embeddings.rows();
  const Eigen::Index q = query_embeddings.cols();
  const int way = prototypes.way();
  if (forward.probs.rows() != way || forward.probs.cols() != q)
    throw ShapeError("episode forward cache does not match the inputs");

  EpisodeGrad grad{Eigen::MatrixXd::Zero(dim, q), Eigen::MatrixXd::Zero(dim, way)};
  const ScalingVector& s = forward.scaling;

  // dL/dlogit_jk = p_jk - [k == y_j]
  Eigen::VectorXd weights(dim);
  for (Eigen::Index m = 0; m < dim; ++m) weights(m) = s.weight(m);

  for (Eigen::Index j = 0; j < q; ++j) {
    const auto e = query_embeddings.col(j);
    const int y = query_labels[static_cast<std::size_t>(j)];
    for (int k = 0; k < way; ++k) {
      const double g = upstream * (forward.probs(k, j) - (k == y ? 1.0 : 0.0));
      if (g == 0.0) continue;
      const auto c = prototypes.prototypes.col(k);
      if (forward.distance == DistanceKind::euclidean) {
        // logit = -sum_m w_m (e_m - c_m)^2
        const Eigen::VectorXd dlogit_de =
            -2.0 * weights.cwiseProduct(e - c);
        grad.queries.col(j) += g * dlogit_de;
        grad.prototypes.col(k) -= g * dlogit_de;
      } else {
        // logit = -alpha (1 - cos); d cos/de = (c_hat - cos e_hat) / |e|
        const double ne = e.norm();
        const double nc = c.norm();
        const double cos = e.dot(c) / (ne * nc);
        const double a = s.alpha();
        grad.queries.col(j) += g * a * (c / nc - cos * e / ne) / ne;
        grad.prototypes.col(k) += g * a * (e / ne - cos * c / nc) / nc;
      }
    }
  }
  return grad;
}

int predict(const Eigen::Ref<const Eigen::VectorXd>& query,
            const PrototypeSet& prototypes, const ScalingVector& scaling,
            DistanceKind distance) {
  // A global scale only reorders (alpha < 0) or flattens (alpha == 0) the
  // unscaled distances, so it is applied as a sign rather than a product.
  double sign = 1.0;
  if (scaling.kind == ScalingKind::global) {
    if (scaling.alpha() == 0.0) return 0;
    sign = scaling.alpha() > 0.0 ? 1.0 : -1.0;
  }
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < prototypes.way(); ++k) {
    const auto c = prototypes.prototypes.col(k);
    double d = 0.0;
    if (scaling.kind == ScalingKind::dimensional) {
      d = dimensional_distance(query, c, scaling);
    } else if (distance == DistanceKind::euclidean) {
      d = sign * squared_euclidean(query, c);
    } else {
      d = sign * cosine_distance(query, c);
    }
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

}  // namespace varscale
