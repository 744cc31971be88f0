#pragma once

#include "vtrack/types.hpp"

#include <vector>

namespace vtrack {

/// Per-node direction scores plus a scalar radius (mm). Holds predicted
/// probabilities or 0/1 target labels.
struct DirectionField {
  std::vector<double> probabilities;
  double radius = 0.0;

  std::size_t positives(double threshold = 0.5) const {
    std::size_t n = 0;
    for (double p : probabilities) n += p >= threshold;
    return n;
  }
};

/// Anything that turns a position into a direction field: the trained
/// network or the ground-truth oracle.
class DirectionEstimator {
 public:
  virtual ~DirectionEstimator() = default;
  virtual DirectionField estimate(const Vec3& position) const = 0;
};

}  // namespace vtrack
