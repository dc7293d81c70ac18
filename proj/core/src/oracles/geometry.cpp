#include "varscale/oracles/geometry.hpp"

namespace varscale::oracles {

int geometry_oracle(const Point2& query, const std::vector<Point2>& centers,
                    const Point2& axis_scales) {
  const Point2 q{query[0] * axis_scales[0], query[1] * axis_scales[1]};
  int best = -1;
  double best_d = 0.0;
  for (std::size_t k = 0; k < centers.size(); ++k) {
    const double dx = centers[k][0] * axis_scales[0] - q[0];
    const double dy = centers[k][1] * axis_scales[1] - q[1];
    const double d = dx * dx + dy * dy;
    if (best < 0 || d < best_d) {
      best = static_cast<int>(k);
      best_d = d;
    }
  }
  return best;
}

}  // namespace varscale::oracles
