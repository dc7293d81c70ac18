#pragma once

#include <functional>
#include <string>

namespace varscale::oracles {

// One compared gradient entry.
struct GradReport {
  std::string name;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  bool pass = false;
};

// |a - n| / max(1e-12, |a| + |n|)
double relative_error(double analytic, double numeric);

GradReport compare_gradient(std::string name, double analytic, double numeric,
                            double tolerance);

// Central difference (f(p + h) - f(p - h)) / 2h, perturbing `param` in place
// and restoring it afterwards. Throws NumericError on a non-finite
// evaluation.
double finite_diff(const std::function<double()>& loss, double& param, double h);

// (4 D(h/2) - D(h)) / 3 from two central differences; error O(h^4), which
// allows a larger h and so less round-off on small gradients.
double finite_diff_richardson(const std::function<double()>& loss, double& param, double h);

// Richardson estimates on the step ladder h_max, h_max/4, ...; returns the
// smallest-step estimate that agrees with its larger neighbour, or else the
// best-agreeing pair. Small steps suit curved parameters; weakly coupled
// ones need large steps to rise above round-off.
double finite_diff_adaptive(const std::function<double()>& loss, double& param,
                            double h_max = 1.0, int levels = 8);

}  // namespace varscale::oracles
