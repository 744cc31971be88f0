#pragma once

#include "vtrack/skeleton.hpp"

#include <array>
#include <string>
#include <vector>

namespace vtrack {

inline constexpr double kDefaultResampleStep = 0.5;  // mm
inline constexpr int kRadiusGroups = 5;

/// Splits every edge evenly into pieces no longer than `step`, with linearly
/// interpolated radii. All original points, and so all endpoints and
/// junctions, are kept at their original indices.
SkeletonGraph resample_arclength(const SkeletonGraph& graph, double step);

struct OverlapResult {
  double ov = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct MatchOptions {
  double step = kDefaultResampleStep;
  /// Lower bound on the matching radius, as a fraction of `step`.
  double radius_floor_fraction = 0.5;
};

/// Point-correspondence overlap after resampling both skeletons. A reference
/// point is covered when a predicted point lies within its radius; a
/// predicted point is correct when it lies within the radius of its nearest
/// reference point.
OverlapResult overlap_precision(const SkeletonGraph& pred, const SkeletonGraph& ref,
                                const MatchOptions& options = {});

/// Recall inside five equal-population radius quantile groups of the
/// resampled reference, thinnest first.
std::array<double, kRadiusGroups> recall_by_radius(const SkeletonGraph& pred, const SkeletonGraph& ref,
                                                   const MatchOptions& options = {});

struct BettiNumbers {
  long beta0 = 0;
  long beta1 = 0;
};

/// Components via disjoint-set union; cycles via E - V + beta0.
BettiNumbers betti_numbers(const SkeletonGraph& graph);

struct BettiErrors {
  long beta0_err = 0;
  long beta1_err = 0;
};
BettiErrors betti_errors(const SkeletonGraph& pred, const SkeletonGraph& ref);

struct EvalReport {
  double ov = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::array<double, kRadiusGroups> recall_by_radius_group{};
  long beta0_err = 0;
  long beta1_err = 0;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& doc);
};

EvalReport evaluate(const SkeletonGraph& pred, const SkeletonGraph& ref, const MatchOptions& options = {});

/// Per-case rows plus mean and (population) standard deviation per metric.
nlohmann::json aggregate_reports(const std::vector<std::pair<std::string, EvalReport>>& cases);

}  // namespace vtrack
