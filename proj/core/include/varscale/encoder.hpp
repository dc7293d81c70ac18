#pragma once

#include <Eigen/Dense>
#include <vector>

#include "varscale/rng.hpp"

namespace varscale {

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

// Multilayer perceptron embedding network. ReLU between layers, linear last
// layer, optional L2 normalisation of the output.
struct EncoderParams {
  std::vector<DenseLayer> layers;
  bool normalize = true;

  Eigen::Index input_dim() const { return layers.front().weight.cols(); }
  Eigen::Index embed_dim() const { return layers.back().weight.rows(); }

  // Throws ShapeError on inconsistent layer shapes, NumericError on
  // non-finite entries.
  void validate() const;
};

// Embeddings whose pre-normalisation norm falls below this are returned as
// zero vectors and flagged on the tape.
inline constexpr double kNormFloor = 1e-12;

// Cached forward quantities for a batch of inputs (one column per input).
struct EncodeTape {
  std::vector<Eigen::MatrixXd> layer_inputs;  // input to layer l
  std::vector<Eigen::MatrixXd> pre_activations;
  Eigen::RowVectorXd norms;                   // pre-normalisation norms
  std::vector<bool> degenerate;
  Eigen::MatrixXd embeddings;                 // final (normalised) output
};

struct EncodeResult {
  Eigen::MatrixXd embeddings;  // embed_dim x batch
  EncodeTape tape;
};

struct EncoderGrad {
  EncoderParams params;    // same shapes as the encoder
  Eigen::MatrixXd inputs;  // input_dim x batch
};

// He-initialised input -> hidden(ReLU) ... -> embed_dim network.
EncoderParams make_encoder(Eigen::Index input_dim,
                           const std::vector<Eigen::Index>& hidden_dims,
                           Eigen::Index embed_dim, bool normalize, Rng& rng);

// Single linear layer with identity weight and zero bias.
EncoderParams identity_encoder(Eigen::Index dim, bool normalize);

EncoderParams zeros_like(const EncoderParams& params);

EncodeResult encode_batch(const EncoderParams& params,
                          const Eigen::MatrixXd& inputs);

std::pair<Eigen::VectorXd, EncodeTape> encode(const EncoderParams& params,
                                              const Eigen::VectorXd& input);

// Reverse pass through the network for upstream gradients with the same
// layout as the embeddings in `tape`. Gradients accumulate over the batch.
EncoderGrad encode_backward(const EncoderParams& params, const EncodeTape& tape,
                            const Eigen::MatrixXd& grad_embeddings);

}  // namespace varscale
