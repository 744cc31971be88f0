#pragma once

#include "vtrack/types.hpp"

#include <array>
#include <iosfwd>
#include <span>
#include <vector>

namespace vtrack {

/// Subdivided icosahedron on the unit sphere. Each node stands for one
/// discrete direction; edges connect 1-ring neighbours of the triangulation.
///
/// Immutable after construction, so one instance may be shared freely
/// between threads.
class SphereGraph {
 public:
  static constexpr int kMaxLevel = 4;

  /// Builds the level-`subdivision_level` icosphere. Node order is fixed:
  /// the 12 golden-ratio icosahedron vertices come first, then each round of
  /// midpoints in lexicographic order of the split edge.
  static SphereGraph build(int subdivision_level);

  int level() const { return level_; }
  std::size_t size() const { return nodes_.size(); }

  const Vec3& node(std::size_t i) const { return nodes_[i]; }
  const std::vector<Vec3>& nodes() const { return nodes_; }
  const std::vector<std::array<int, 2>>& edges() const { return edges_; }
  const std::vector<std::array<int, 3>>& faces() const { return faces_; }
  std::span<const int> neighbors(std::size_t i) const {
    return {adjacency_.data() + offsets_[i], adjacency_.data() + offsets_[i + 1]};
  }
  std::size_t degree(std::size_t i) const { return offsets_[i + 1] - offsets_[i]; }

  /// Great-circle angle between two nodes, in [0, pi].
  double haversine(std::size_t a, std::size_t b) const;

  /// Index of the node closest in angle to `direction` (need not be unit).
  /// Ties within 1e-12 in cosine go to the lowest index.
  std::size_t nearest_node(const Vec3& direction) const;

  /// Nodes whose value is >= threshold and strictly greater than every
  /// neighbour's. Sorted ascending.
  std::vector<int> local_maxima(std::span<const double> field, double threshold) const;

  /// Node permutation induced by a rotation mapping the node set onto itself:
  /// result[i] is the index of rotation * node(i). Throws if the rotation is
  /// not a symmetry of this mesh.
  std::vector<int> symmetry_permutation(const Mat3& rotation) const;

  /// Wavefront OBJ of the sphere mesh (vertices and triangles).
  void write_obj(std::ostream& out) const;

 private:
  SphereGraph() = default;
  void finalize();

  int level_ = 0;
  std::vector<Vec3> nodes_;
  std::vector<std::array<int, 3>> faces_;
  std::vector<std::array<int, 2>> edges_;
  std::vector<int> adjacency_;
  std::vector<std::size_t> offsets_;
};

/// Great-circle angle between two unit vectors via the haversine formula,
/// evaluated in its arctangent form.
double haversine(const Vec3& a, const Vec3& b);

/// Two generators of the rotation group of the canonical icosahedron:
/// the cyclic axis permutation (x,y,z) -> (y,z,x) and the half turn about x.
std::array<Mat3, 2> icosahedral_generators();

}  // namespace vtrack
