#include "varscale/oracles/finite_diff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "varscale/error.hpp"

namespace varscale::oracles {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max(1e-12, std::abs(analytic) + std::abs(numeric));
}

GradReport compare_gradient(std::string name, double analytic, double numeric,
                            double tolerance) {
  const double rel = relative_error(analytic, numeric);
  return {std::move(name), analytic, numeric, rel, rel <= tolerance};
}

double finite_diff(const std::function<double()>& loss, double& param, double h) {
  const double saved = param;
  double up = 0.0;
  double down = 0.0;
  try {
    param = saved + h;
    up = loss();
    param = saved - h;
    down = loss();
  } catch (...) {
    param = saved;
    throw;
  }
  param = saved;
  if (!std::isfinite(up) || !std::isfinite(down))
    throw NumericError("finite difference: non-finite loss evaluation");
  return (up - down) / (2.0 * h);
}

double finite_diff_richardson(const std::function<double()>& loss, double& param, double h) {
  const double coarse = finite_diff(loss, param, h);
  const double fine = finite_diff(loss, param, 0.5 * h);
  return (4.0 * fine - coarse) / 3.0;
}

double finite_diff_adaptive(const std::function<double()>& loss, double& param,
                            double h_max, int levels) {
  if (levels < 2) return finite_diff_richardson(loss, param, h_max);
  // est[0] uses h_max, each further level a quarter of the previous step.
  // Levels whose stencil leaves the loss's domain are skipped.
  std::vector<double> est;
  double h = h_max;
  for (int i = 0; i < levels; ++i, h *= 0.25) {
    try {
      est.push_back(finite_diff_richardson(loss, param, h));
    } catch (const Error&) {
      est.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  // Smallest step that agrees with the next larger one.
  for (std::size_t i = est.size() - 1; i > 0; --i) {
    const double gap = std::abs(est[i] - est[i - 1]);
    if (std::isfinite(gap) &&
        gap <= 1e-6 * std::max(std::abs(est[i]), std::abs(est[i - 1])))
      return est[i];
  }
  // Nothing resolved at small steps: the derivative is tiny relative to the
  // round-off, so take the best-agreeing pair.
  int best = -1;
  double best_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < est.size(); ++i) {
    const double gap = std::abs(est[i] - est[i - 1]);
    if (std::isfinite(gap) && gap < best_gap) {
      best_gap = gap;
      best = static_cast<int>(i);
    }
  }
  if (best < 0) throw NumericError("finite difference: no usable step on the ladder");
  return est[best];
}

}  // namespace varscale::oracles
