#pragma once

#include <array>
#include <vector>

namespace varscale::oracles {

using Point2 = std::array<double, 2>;

// Stretches both coordinates of every point by `axis_scales`, then returns
// the index of the nearest center by plain squared distance (ties to the
// lowest index).
int geometry_oracle(const Point2& query, const std::vector<Point2>& centers,
                    const Point2& axis_scales);

// The two-class configuration of the dimensional-scaling illustration.
struct FigureOneInstance {
  Point2 query{0.5303, -0.5303};
  std::vector<Point2> centers{{0.5303, 0.5303}, {0.0, -0.75}};
};

}  // namespace varscale::oracles
