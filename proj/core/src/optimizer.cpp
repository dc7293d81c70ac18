#include "varscale/optimizer.hpp"

#include <cmath>

#include "varscale/error.hpp"

namespace varscale {

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::sgd ? "sgd" : "adam";
}

namespace {

void check_shapes(ParamSpans params, GradSpans grads) {
  if (params.size() != grads.size())
    throw ShapeError("optimizer: parameter and gradient counts differ");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].size() != grads[i].size())
      throw ShapeError("optimizer: parameter and gradient sizes differ");
}

void ensure_state(std::vector<std::vector<double>>& buffers, ParamSpans params) {
  if (buffers.size() == params.size()) {
    for (std::size_t i = 0; i < params.size(); ++i)
      if (buffers[i].size() != params[i].size())
        throw ShapeError("optimizer state does not match parameters");
    return;
  }
  if (!buffers.empty()) throw ShapeError("optimizer state does not match parameters");
  for (const auto& p : params) buffers.emplace_back(p.size(), 0.0);
}

}  // namespace

void sgd_step(ParamSpans params, GradSpans grads, double lr, double momentum,
              double weight_decay, SgdState& state) {
  check_shapes(params, grads);
  ensure_state(state.velocity, params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i];
    auto g = grads[i];
    auto& v = state.velocity[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double d = g[j] + weight_decay * p[j];
      v[j] = momentum * v[j] + d;
      p[j] -= lr * v[j];
    }
  }
}

void adam_step(ParamSpans params, GradSpans grads, const OptimizerConfig& config,
               AdamState& state) {
  check_shapes(params, grads);
  ensure_state(state.m, params);
  ensure_state(state.v, params);
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double bias1 = 1.0 - std::pow(config.beta1, t);
  const double bias2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i];
    auto g = grads[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double d = g[j] + config.weight_decay * p[j];
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * d;
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * d * d;
      const double m_hat = m[j] / bias1;
      const double v_hat = v[j] / bias2;
      p[j] -= config.lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

double clip_grad_norm(std::span<const std::span<double>> grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (double x : g) sq += x * x;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (const auto& g : grads)
      for (double& x : g) x *= scale;
  }
  return norm;
}

void Optimizer::step(ParamSpans params, std::span<const std::span<double>> grads) {
  if (config_.clip_norm > 0.0) clip_grad_norm(grads, config_.clip_norm);
  std::vector<std::span<const double>> const_grads(grads.begin(), grads.end());
  if (config_.kind == OptimizerKind::sgd)
    sgd_step(params, const_grads, config_.lr, config_.momentum, config_.weight_decay, sgd_);
  else
    adam_step(params, const_grads, config_, adam_);
}

}  // namespace varscale
