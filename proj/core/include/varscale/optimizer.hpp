#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace varscale {

enum class OptimizerKind { sgd, adam };

std::string_view to_string(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double lr = 0.05;
  double momentum = 0.0;      // sgd
  double weight_decay = 0.0;  // both, L2 added to the gradient
  double beta1 = 0.9;         // adam
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 0.0;     // global max-norm clipping; 0 disables
};

using ParamSpans = std::span<const std::span<double>>;
using GradSpans = std::span<const std::span<const double>>;

struct SgdState {
  std::vector<std::vector<double>> velocity;
};

// v <- momentum * v + (g + wd * p);  p <- p - lr * v.  From a zero state the
// first step is p - lr * (g + wd * p).
void sgd_step(ParamSpans params, GradSpans grads, double lr, double momentum,
              double weight_decay, SgdState& state);

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t t = 0;
};

void adam_step(ParamSpans params, GradSpans grads, const OptimizerConfig& config,
               AdamState& state);

// Scales `grads` in place so their joint L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(std::span<const std::span<double>> grads, double max_norm);

// Encoder optimiser: dispatches on the configured kind and owns its state.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config = {}) : config_(config) {}

  void step(ParamSpans params, std::span<const std::span<double>> grads);

  const OptimizerConfig& config() const { return config_; }
  SgdState& sgd_state() { return sgd_; }
  AdamState& adam_state() { return adam_; }
  const SgdState& sgd_state() const { return sgd_; }
  const AdamState& adam_state() const { return adam_; }

 private:
  OptimizerConfig config_;
  SgdState sgd_;
  AdamState adam_;
};

}  // namespace varscale
