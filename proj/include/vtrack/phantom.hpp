#pragma once

#include "vtrack/direction_field.hpp"
#include "vtrack/skeleton.hpp"
#include "vtrack/sphere_graph.hpp"
#include "vtrack/volume.hpp"

#include <array>
#include <cstdint>
#include <string>

namespace vtrack {

class InfeasibleSpecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Recipe for a synthetic vessel tree. The root crosses the volume along x;
/// every further branch sprouts from the side of an existing one, so a spec
/// with n branches has n - 1 junctions.
struct PhantomSpec {
  std::string preset = "custom";
  std::uint64_t seed = 1;
  int n_branches = 5;
  std::array<double, 2> radius_range{0.5, 3.0};       // hard bounds on any radius (mm)
  std::array<double, 2> root_radius{2.0, 3.0};        // root start radius drawn here (mm)
  double taper = 0.75;                                // end / start radius along a branch
  double child_ratio = 0.8;                           // child start / parent local radius
  std::array<double, 2> branch_angle_range{0.70, 1.30};  // radians from the parent tangent
  std::array<double, 2> child_length{10.0, 22.0};     // mm
  std::array<double, 2> curvature_amplitude{0.0, 2.5};  // mm, sinusoidal bend
  std::array<double, 2> curvature_period{15.0, 30.0};   // mm
  std::array<int, 3> dims{96, 96, 96};
  double spacing = 0.5;           // mm, isotropic
  double margin = 2.0;            // mm between any lumen and the volume boundary
  double separation = 1.0;        // mm of clearance between unrelated lumina
  double lumen_value = 1.0;
  double background_value = 0.0;
  double edge_softness = 0.25;    // mm
  double noise_sigma = 0.05;
  double point_spacing = 0.25;    // mm between centreline samples

  /// Coronary-like: radii 0.5-3 mm, tortuous branches.
  static PhantomSpec thin(std::uint64_t seed, int n_branches);
  /// Aorta-like: radii 2-20 mm with large radius contrast.
  static PhantomSpec wide(std::uint64_t seed, int n_branches);
  static PhantomSpec preset_named(const std::string& name, std::uint64_t seed, int n_branches);

  void validate() const;
  nlohmann::json to_json() const;
  static PhantomSpec from_json(const nlohmann::json& doc);
};

struct PhantomBranch {
  int parent = -1;                 // parent branch, -1 for the root
  std::vector<int> points;         // skeleton point indices, first is the attachment
  double start_radius = 0.0;
  double end_radius = 0.0;
  std::vector<double> arc_length;  // cumulative, per point
};

struct Phantom {
  PhantomSpec spec;
  VolumeGrid volume;
  SkeletonGraph skeleton;
  std::vector<PhantomBranch> branches;

  /// A seed on the root centreline, in its first half and away from junctions.
  Vec3 default_seed() const;
};

Phantom generate_phantom(const PhantomSpec& spec);

/// Ground-truth direction estimator: probability 1 at the nodes of the
/// skeleton-sphere crossings, 0 elsewhere, radius from the reference.
class OracleEstimator final : public DirectionEstimator {
 public:
  OracleEstimator(const SkeletonGraph& reference, const SphereGraph& graph);
  DirectionField estimate(const Vec3& position) const override;

 private:
  SkeletonLocator locator_;
  const SphereGraph& graph_;
};

}  // namespace vtrack
