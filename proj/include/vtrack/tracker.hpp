#pragma once

#include "vtrack/direction_field.hpp"
#include "vtrack/mesh_net.hpp"
#include "vtrack/skeleton.hpp"
#include "vtrack/sphere_graph.hpp"
#include "vtrack/volume.hpp"

#include <json.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vtrack {

/// Accept iff |candidate - p_j| >= R_j for every node j of `tree` except
/// `parent` (pass SkeletonTree::kNoParent to check against all nodes).
bool occupancy_filter(const Vec3& candidate, const SkeletonTree& tree, int parent);

/// Signed distance to the surface of a binary mask, negative inside. Built
/// once from an exact Euclidean distance transform over voxel centres; the
/// surface sits half a voxel beyond the last foreground centre.
class MaskDistance {
 public:
  explicit MaskDistance(const VolumeGrid& mask);

  /// Trilinear in the precomputed field; +infinity outside the grid.
  double signed_distance(const Vec3& p) const;
  /// The candidate must stay at least `threshold` mm inside the mask.
  bool accept(const Vec3& p, double threshold) const { return signed_distance(p) <= -threshold; }

  const VolumeGrid& field() const { return field_; }

 private:
  VolumeGrid field_;
};

/// The trained estimator bound to one volume and one online scale list.
class NetworkEstimator final : public DirectionEstimator {
 public:
  NetworkEstimator(const MeshNet& net, const VolumeGrid& volume, std::vector<double> scales,
                   const SphereGraph& graph, IntensityWindow window = {});
  DirectionField estimate(const Vec3& position) const override;

 private:
  const MeshNet& net_;
  const VolumeGrid& volume_;
  std::vector<double> scales_;
  const SphereGraph& graph_;
  IntensityWindow window_;
};

/// Online scale presets: "thin" (coronary-like) and "wide" (aorta-like).
std::vector<double> online_scales(const std::string& preset);

enum class BudgetPolicy { prune, halt };

struct TrackerConfig {
  double threshold = 0.5;   // local-maximum probability threshold
  int max_fronts = 20;      // L_max
  BudgetPolicy budget = BudgetPolicy::prune;
  std::size_t max_nodes = 100000;
  int max_iterations = 10000;
  int threads = 1;
  double mask_threshold = 1.0;  // mm, used only when a mask is supplied

  nlohmann::json to_json() const;
  static TrackerConfig from_json(const nlohmann::json& doc);
};

enum class TrackStatus { completed, budget_halt, node_cap, iteration_cap, estimator_failure };
const char* to_string(TrackStatus s);

struct IterationRecord {
  int seed = 0;
  int iteration = 0;
  int fronts = 0;      // fronts evaluated
  int committed = 0;   // fronts that survived commit-time revalidation
  int candidates = 0;  // local maxima before filtering
  int accepted = 0;    // fronts carried to the next iteration
};

struct TrackResult {
  SkeletonTree tree;
  std::vector<IterationRecord> log;
  std::vector<int> skipped_seeds;
  TrackStatus status = TrackStatus::completed;
  std::string message;

  bool ok() const { return status == TrackStatus::completed || status == TrackStatus::budget_halt; }
};

/// Wave-propagation expansion from each seed in turn. Fronts of one
/// iteration are evaluated (possibly concurrently), then committed in
/// insertion order; a front is dropped at commit if a node appended since it
/// was filtered now occupies its position. Throws std::invalid_argument for
/// an empty seed list or a seed outside the volume.
TrackResult propagate(std::span<const Vec3> seeds, const DirectionEstimator& estimator, const VolumeGrid& volume,
                      const SphereGraph& graph, const TrackerConfig& config, const MaskDistance* mask = nullptr);

}  // namespace vtrack
