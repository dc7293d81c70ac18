#include "varscale/oracles/joint_baseline.hpp"

#include <cmath>

#include "varscale/error.hpp"
#include "varscale/model.hpp"

namespace varscale::oracles {

using Vec = std::vector<double>;

std::vector<double> JointState::flatten() const {
  std::vector<double> out;
  for (const auto& l : layers) {
    for (int c = 0; c < l.cols; ++c)
      for (int r = 0; r < l.rows; ++r) out.push_back(l.w[r * l.cols + c]);
    out.insert(out.end(), l.b.begin(), l.b.end());
  }
  out.push_back(alpha);
  return out;
}

namespace {

struct Forward {
  std::vector<Vec> inputs;  // input to each layer
  std::vector<Vec> pre;     // pre-activation of each layer
  double norm = 0.0;
  Vec out;
};

Forward forward(const std::vector<NaiveLayer>& layers, const Vec& x, bool normalize) {
  Forward f;
  Vec h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    f.inputs.push_back(h);
    Vec a(L.rows);
    for (int r = 0; r < L.rows; ++r) {
      double s = L.b[r];
      for (int c = 0; c < L.cols; ++c) s += L.w[r * L.cols + c] * h[c];
      a[r] = s;
    }
    f.pre.push_back(a);
    if (l + 1 < layers.size())
      for (double& v : a) v = v > 0.0 ? v : 0.0;
    h = a;
  }
  if (normalize) {
    double n2 = 0.0;
    for (double v : h) n2 += v * v;
    f.norm = std::sqrt(n2);
    if (f.norm > 1e-12) {
      for (double& v : h) v /= f.norm;
    } else {
      for (double& v : h) v = 0.0;
    }
  }
  f.out = h;
  return f;
}

// Accumulates parameter gradients for upstream gradient g on the output.
void backward(const std::vector<NaiveLayer>& layers, const Forward& f, Vec g, bool normalize,
              std::vector<NaiveLayer>& grads) {
  if (normalize) {
    if (f.norm <= 1e-12) return;
    double dot = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) dot += f.out[i] * g[i];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = (g[i] - f.out[i] * dot) / f.norm;
  }
  for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
    const auto& L = layers[l];
    if (l + 1 < static_cast<int>(layers.size()))
      for (int r = 0; r < L.rows; ++r)
        if (!(f.pre[l][r] > 0.0)) g[r] = 0.0;
    auto& G = grads[l];
    for (int r = 0; r < L.rows; ++r) {
      G.b[r] += g[r];
      for (int c = 0; c < L.cols; ++c) G.w[r * L.cols + c] += g[r] * f.inputs[l][c];
    }
    Vec gin(L.cols, 0.0);
    for (int r = 0; r < L.rows; ++r)
      for (int c = 0; c < L.cols; ++c) gin[c] += L.w[r * L.cols + c] * g[r];
    g = gin;
  }
}

Vec column(const Eigen::MatrixXd& m, int j) {
  Vec v(m.rows());
  for (int i = 0; i < m.rows(); ++i) v[i] = m(i, j);
  return v;
}

}  // namespace

std::vector<JointState> joint_training_baseline(const TrainConfig& config,
                                                const SyntheticDomain& domain, int steps) {
  if (config.distance != DistanceKind::euclidean)
    throw ContractError("joint baseline supports the euclidean distance only");
  const auto& opt = config.optimizer;
  if (opt.kind != OptimizerKind::sgd || opt.momentum != 0.0 || opt.weight_decay != 0.0 ||
      opt.clip_norm != 0.0)
    throw ContractError("joint baseline uses plain SGD without momentum, decay or clipping");

  Rng init(config.seed, streams::kInit);
  TrainConfig pn = config;
  pn.method = Method::pn;
  const EncoderParams enc = init_model(pn, init).encoder;
  JointState state;
  for (const auto& layer : enc.layers) {
    NaiveLayer L;
    L.rows = static_cast<int>(layer.weight.rows());
    L.cols = static_cast<int>(layer.weight.cols());
    L.w.resize(L.rows * L.cols);
    for (int r = 0; r < L.rows; ++r)
      for (int c = 0; c < L.cols; ++c) L.w[r * L.cols + c] = layer.weight(r, c);
    L.b.assign(layer.bias.data(), layer.bias.data() + layer.bias.size());
    state.layers.push_back(L);
  }
  state.alpha = config.mu_init;

  const bool normalize = config.normalize;
  const double lr = config.l_theta;
  const auto& shape = config.train_episode;
  Rng episodes(config.seed, streams::kEpisodes);
  std::vector<JointState> out{state};

  for (int t = 0; t < steps; ++t) {
    const Episode ep = sample_episode(domain, Partition::train, shape.way, shape.shot,
                                      shape.query, episodes, t);
    const int K = ep.way;
    std::vector<Forward> sf, qf;
    for (int i = 0; i < ep.num_support(); ++i)
      sf.push_back(forward(state.layers, column(ep.support, i), normalize));
    for (int j = 0; j < ep.num_query(); ++j)
      qf.push_back(forward(state.layers, column(ep.query, j), normalize));
    const std::size_t M = qf.front().out.size();

    std::vector<Vec> protos(K, Vec(M, 0.0));
    std::vector<int> counts(K, 0);
    for (int i = 0; i < ep.num_support(); ++i) {
      const int k = ep.support_labels[i];
      ++counts[k];
      for (std::size_t m = 0; m < M; ++m) protos[k][m] += sf[i].out[m];
    }
    for (int k = 0; k < K; ++k)
      for (double& v : protos[k]) v /= counts[k];

    std::vector<Vec> g_query(qf.size(), Vec(M, 0.0));
    std::vector<Vec> g_proto(K, Vec(M, 0.0));
    double g_alpha = 0.0;
    for (std::size_t j = 0; j < qf.size(); ++j) {
      Vec d(K);
      for (int k = 0; k < K; ++k) {
        double s = 0.0;
        for (std::size_t m = 0; m < M; ++m) {
          const double diff = qf[j].out[m] - protos[k][m];
          s += diff * diff;
        }
        d[k] = s;
      }
      double zmax = -state.alpha * d[0];
      for (int k = 1; k < K; ++k) zmax = std::max(zmax, -state.alpha * d[k]);
      Vec p(K);
      double z = 0.0;
      for (int k = 0; k < K; ++k) z += p[k] = std::exp(-state.alpha * d[k] - zmax);
      for (double& v : p) v /= z;
      const int y = ep.query_labels[j];
      for (int k = 0; k < K; ++k) {
        const double dz = p[k] - (k == y ? 1.0 : 0.0);  // dL/dlogit_k
        g_alpha += -dz * d[k];
        const double dd = -state.alpha * dz;
        for (std::size_t m = 0; m < M; ++m) {
          const double diff = qf[j].out[m] - protos[k][m];
          g_query[j][m] += 2.0 * dd * diff;
          g_proto[k][m] -= 2.0 * dd * diff;
        }
      }
    }

    std::vector<NaiveLayer> grads = state.layers;
    for (auto& G : grads) {
      std::fill(G.w.begin(), G.w.end(), 0.0);
      std::fill(G.b.begin(), G.b.end(), 0.0);
    }
    for (int i = 0; i < ep.num_support(); ++i) {
      const int k = ep.support_labels[i];
      Vec g(M);
      for (std::size_t m = 0; m < M; ++m) g[m] = g_proto[k][m] / counts[k];
      backward(state.layers, sf[i], g, normalize, grads);
    }
    for (std::size_t j = 0; j < qf.size(); ++j)
      backward(state.layers, qf[j], g_query[j], normalize, grads);

    for (std::size_t l = 0; l < state.layers.size(); ++l) {
      for (std::size_t i = 0; i < state.layers[l].w.size(); ++i)
        state.layers[l].w[i] -= lr * grads[l].w[i];
      for (std::size_t i = 0; i < state.layers[l].b.size(); ++i)
        state.layers[l].b[i] -= lr * grads[l].b[i];
    }
    state.alpha -= lr * g_alpha;
    out.push_back(state);
  }
  return out;
}

}  // namespace varscale::oracles
