#pragma once

#include <cstdint>
#include <vector>

namespace ctrlab {

// one learning-curve sample, converted to a metrics row by the harness
struct TrainPoint {
  int iteration = 0;
  std::int64_t env_steps = 0;
  double wall_time_s = 0.0;
  double objective = 0.0;
  bool success = false;
};

}  // namespace ctrlab
