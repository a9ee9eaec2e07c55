// trajectory.hpp - fixed-horizon state/action sequences
#pragma once

#include <vector>

namespace mpo {

struct Step {
  int state;
  int action;
  bool operator==(const Step&) const = default;
};

struct Trajectory {
  std::vector<Step> steps;
  double cumulative_reward = 0.0;
  bool operator==(const Trajectory&) const = default;
};

}  // namespace mpo
