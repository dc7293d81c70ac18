#pragma once

#include <vector>

#include "varscale/config.hpp"
#include "varscale/episodic_data.hpp"

namespace varscale::oracles {

// Row-major dense layer, kept separate from the Eigen types on purpose.
struct NaiveLayer {
  int rows = 0;
  int cols = 0;
  std::vector<double> w;  // rows * cols, w[r * cols + c]
  std::vector<double> b;
};

struct JointState {
  std::vector<NaiveLayer> layers;
  double alpha = 1.0;

  // Encoder weights (column-major per matrix), biases, then alpha; the same
  // order as the trainer's parameter views for an svs model.
  std::vector<double> flatten() const;
};

// Prototypical network whose temperature alpha is an ordinary parameter
// trained with plain SGD at the encoder's rate. Uses the trainer's episode
// stream and encoder initialisation so trajectories are comparable.
// states[t] is the state after t steps. Requires euclidean distance.
std::vector<JointState> joint_training_baseline(const TrainConfig& config,
                                                const SyntheticDomain& domain, int steps);

}  // namespace varscale::oracles
