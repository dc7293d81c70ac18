#include "varscale/encoder.hpp"

#include <cmath>
#include <string>

#include "varscale/error.hpp"

namespace varscale {

void EncoderParams::validate() const {
  if (layers.empty()) throw ShapeError("encoder has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.bias.size() != layer.weight.rows())
      throw ShapeError("encoder layer " + std::to_string(l) +
                       ": bias length does not match weight rows");
    if (l > 0 && layer.weight.cols() != layers[l - 1].weight.rows())
      throw ShapeError("encoder layer " + std::to_string(l) +
                       ": input width does not match previous layer");
    if (!layer.weight.allFinite() || !layer.bias.allFinite())
      throw NumericError("encoder layer " + std::to_string(l) +
                         " has non-finite parameters");
  }
}

EncoderParams make_encoder(Eigen::Index input_dim,
                           const std::vector<Eigen::Index>& hidden_dims,
                           Eigen::Index embed_dim, bool normalize, Rng& rng) {
  EncoderParams params;
  params.normalize = normalize;
  Eigen::Index fan_in = input_dim;
  auto add_layer = [&](Eigen::Index out) {
    DenseLayer layer;
    layer.weight.resize(out, fan_in);
    const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (Eigen::Index c = 0; c < fan_in; ++c)
      for (Eigen::Index r = 0; r < out; ++r) layer.weight(r, c) = scale * rng.normal();
    layer.bias = Eigen::VectorXd::Zero(out);
    params.layers.push_back(std::move(layer));
    fan_in = out;
  };
  for (auto h : hidden_dims) add_layer(h);
  add_layer(embed_dim);
  return params;
}

EncoderParams identity_encoder(Eigen::Index dim, bool normalize) {
  EncoderParams params;
  params.normalize = normalize;
  params.layers.push_back(
      {Eigen::MatrixXd::Identity(dim, dim), Eigen::VectorXd::Zero(dim)});
  return params;
}

EncoderParams zeros_like(const EncoderParams& params) {
  EncoderParams out;
  out.normalize = params.normalize;
  for (const auto& layer : params.layers)
    out.layers.push_back({Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()),
                          Eigen::VectorXd::Zero(layer.bias.size())});
  return out;
}

EncodeResult encode_batch(const EncoderParams& params,
                          const Eigen::MatrixXd& inputs) {
  if (params.layers.empty()) throw ShapeError("encoder has no layers");
  if (inputs.rows() != params.input_dim())
    throw ShapeError("encoder input width " + std::to_string(inputs.rows()) +
                     " does not match expected " +
                     std::to_string(params.input_dim()));

  EncodeTape tape;
  const std::size_t n_layers = params.layers.size();
  tape.layer_inputs.reserve(n_layers);
  tape.pre_activations.reserve(n_layers);

  Eigen::MatrixXd x = inputs;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& layer = params.layers[l];
    Eigen::MatrixXd pre = layer.weight * x;
    pre.colwise() += layer.bias;
    tape.layer_inputs.push_back(std::move(x));
    x = (l + 1 < n_layers) ? Eigen::MatrixXd(pre.cwiseMax(0.0)) : pre;
    tape.pre_activations.push_back(std::move(pre));
  }
  if (!x.allFinite()) throw NumericError("non-finite activation in encoder");

  const Eigen::Index batch = x.cols();
  tape.norms = x.colwise().norm();
  tape.degenerate.assign(static_cast<std::size_t>(batch), false);
  if (params.normalize) {
    for (Eigen::Index j = 0; j < batch; ++j) {
      if (tape.norms(j) < kNormFloor) {
        tape.degenerate[static_cast<std::size_t>(j)] = true;
        x.col(j).setZero();
      } else {
        x.col(j) /= tape.norms(j);
      }
    }
  }
  tape.embeddings = x;
  return {std::move(x), std::move(tape)};
}

std::pair<Eigen::VectorXd, EncodeTape> encode(const EncoderParams& params,
                                              const Eigen::VectorXd& input) {
  auto result = encode_batch(params, input);
  return {result.embeddings.col(0), std::move(result.tape)};
}

EncoderGrad encode_backward(const EncoderParams& params, const EncodeTape& tape,
                            const Eigen::MatrixXd& grad_embeddings) {
  const std::size_t n_layers = params.layers.size();
  if (tape.pre_activations.size() != n_layers ||
      tape.layer_inputs.size() != n_layers)
    throw ShapeError("encoder tape layer count does not match parameters");
  if (grad_embeddings.rows() != params.embed_dim() ||
      grad_embeddings.cols() != tape.embeddings.cols())
    throw ShapeError("upstream gradient shape does not match encoder output");

  Eigen::MatrixXd g = grad_embeddings;
  if (params.normalize) {
    // d(z/|z|)/dz = (I - y y^T) / |z|
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      if (tape.degenerate[static_cast<std::size_t>(j)]) {
        g.col(j).setZero();
        continue;
      }
      const auto y = tape.embeddings.col(j);
      g.col(j) = (g.col(j) - y * y.dot(g.col(j))) / tape.norms(j);
    }
  }

  EncoderGrad grad{zeros_like(params), {}};
  for (std::size_t l = n_layers; l-- > 0;) {
    if (l + 1 < n_layers) {
      // ReLU; subgradient at exactly zero is taken as zero.
      g = g.cwiseProduct(
          (tape.pre_activations[l].array() > 0.0).cast<double>().matrix());
    }
    grad.params.layers[l].weight.noalias() = g * tape.layer_inputs[l].transpose();
    grad.params.layers[l].bias = g.rowwise().sum();
    g = params.layers[l].weight.transpose() * g;
  }
  grad.inputs = std::move(g);
  return grad;
}

}  // namespace varscale
