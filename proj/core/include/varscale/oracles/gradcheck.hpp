#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include "varscale/config.hpp"
#include "varscale/oracles/finite_diff.hpp"

namespace varscale::oracles {

struct GradcheckOptions {
  Method method = Method::svs;
  std::uint64_t seed = 0;
  int instances = 100;
  double h_max = 1.0;  // largest step of the adaptive ladder
  int levels = 8;
  double tolerance = 1e-4;
  // Instances with a hidden pre-activation closer than this to the ReLU
  // kink are redrawn, so a perturbation of size h cannot cross it.
  double kink_margin = 1e-3;
};

struct GradcheckResult {
  Method method = Method::svs;
  int instances = 0;
  int resampled = 0;
  int failures = 0;
  double max_rel_error = 0.0;
  std::vector<GradReport> reports;
};

// Draws random small models and episodes with frozen noise and compares
// every analytic gradient entry (encoder, posterior or generator) against
// central differences of the training objective.
GradcheckResult gradcheck(const GradcheckOptions& options);

void write_grad_report_csv(std::ostream& out, const GradcheckResult& result);

}  // namespace varscale::oracles
