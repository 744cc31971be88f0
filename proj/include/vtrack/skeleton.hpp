#pragma once

#include "vtrack/types.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

namespace vtrack {

struct SkeletonPoint {
  Vec3 position = Vec3::Zero();
  double radius = 0.0;
};

/// Undirected skeleton graph used for evaluation and as reference geometry.
struct SkeletonGraph {
  std::vector<SkeletonPoint> points;
  std::vector<std::array<int, 2>> edges;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  /// Throws std::invalid_argument on out-of-range indices, self loops or
  /// duplicate edges.
  void validate() const;
  double total_length() const;
  std::vector<int> degrees() const;
};

/// Growing skeleton forest. Nodes are appended in visiting order, so a
/// parent index is always smaller than its child's.
class SkeletonTree {
 public:
  static constexpr int kNoParent = -1;

  struct Node {
    Vec3 position = Vec3::Zero();
    double radius = 0.0;
    int parent = kNoParent;
    int iteration = 0;
  };

  int add(const Vec3& position, double radius, int parent, int iteration);

  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& node(std::size_t i) const { return nodes_[i]; }
  const std::vector<int>& roots() const { return roots_; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

  SkeletonGraph to_graph() const;

 private:
  std::vector<Node> nodes_;
  std::vector<int> roots_;
};

struct NearestSkeletonPoint {
  Vec3 point = Vec3::Zero();
  double distance = 0.0;
  double radius = 0.0;  // interpolated along the closest segment
};

/// Segment-level geometric queries against a reference skeleton: closest
/// point with interpolated radius, and crossings with a sphere.
class SkeletonLocator {
 public:
  explicit SkeletonLocator(const SkeletonGraph& graph);

  NearestSkeletonPoint nearest(const Vec3& p) const;

  /// True if p lies within the local radius of its closest skeleton point.
  bool in_lumen(const Vec3& p) const;

  /// Points where the skeleton polylines cross the sphere |x - center| = radius.
  /// Crossings closer than merge_fraction * radius to an earlier crossing are
  /// merged.
  std::vector<Vec3> sphere_crossings(const Vec3& center, double radius,
                                     double merge_fraction = 0.1) const;

  const SkeletonGraph& graph() const { return graph_; }

 private:
  struct Segment {
    Vec3 a, b;
    double ra, rb;
  };
  SkeletonGraph graph_;
  std::vector<Segment> segments_;
};

// JSON skeleton files: {"nodes": [{"id", "pos": [x,y,z], "radius", "parent"}],
// "meta": {...}} with an optional "edges" list for graphs that are not forests.
nlohmann::json tree_to_json(const SkeletonTree& tree, const nlohmann::json& meta = nlohmann::json::object());
nlohmann::json graph_to_json(const SkeletonGraph& graph, const nlohmann::json& meta = nlohmann::json::object());
SkeletonGraph graph_from_json(const nlohmann::json& doc);

/// Parses a skeleton file; malformed input raises std::runtime_error naming
/// the line/column or the offending field.
SkeletonGraph read_skeleton(const std::filesystem::path& path);
void write_json(const nlohmann::json& doc, const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

/// Polyline OBJ ("v" + "l" records) for external viewers.
void write_skeleton_obj(const SkeletonGraph& graph, std::ostream& out);

}  // namespace vtrack
