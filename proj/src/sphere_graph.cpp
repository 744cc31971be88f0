#include "vtrack/sphere_graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <utility>

namespace vtrack {

namespace {

constexpr double kTieTolerance = 1e-12;

std::vector<Vec3> icosahedron_vertices() {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {
      {-1, phi, 0}, {1, phi, 0},  {-1, -phi, 0}, {1, -phi, 0},
      {0, -1, phi}, {0, 1, phi},  {0, -1, -phi}, {0, 1, -phi},
      {phi, 0, -1}, {phi, 0, 1},  {-phi, 0, -1}, {-phi, 0, 1},
  };
  for (auto& p : v) p.normalize();
  return v;
}

std::vector<std::array<int, 3>> icosahedron_faces() {
  return {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1},
  };
}

std::pair<int, int> ordered(int a, int b) { return a < b ? std::pair{a, b} : std::pair{b, a}; }

}  // namespace

double haversine(const Vec3& a, const Vec3& b) {
  // h = sin^2(theta/2) = |a - b|^2 / 4 for unit vectors.
  const double h = std::clamp((a - b).squaredNorm() / 4.0, 0.0, 1.0);
  return 2.0 * std::atan2(std::sqrt(h), std::sqrt(1.0 - h));
}

std::array<Mat3, 2> icosahedral_generators() {
  Mat3 cyclic;
  cyclic << 0, 1, 0,
            0, 0, 1,
            1, 0, 0;
  Mat3 half_turn = Vec3(1, -1, -1).asDiagonal();
  return {cyclic, half_turn};
}

SphereGraph SphereGraph::build(int subdivision_level) {
  if (subdivision_level < 0 || subdivision_level > kMaxLevel) {
    throw std::invalid_argument("icosphere subdivision level must be in [0, " +
                                std::to_string(kMaxLevel) + "], got " +
                                std::to_string(subdivision_level));
  }
  SphereGraph g;
  g.level_ = subdivision_level;
  g.nodes_ = icosahedron_vertices();
  g.faces_ = icosahedron_faces();

  for (int level = 0; level < subdivision_level; ++level) {
    // Ordered map gives the lexicographic split order.
    std::map<std::pair<int, int>, int> midpoint;
    for (const auto& f : g.faces_) {
      for (int e = 0; e < 3; ++e) midpoint.emplace(ordered(f[e], f[(e + 1) % 3]), -1);
    }
    for (auto& [edge, index] : midpoint) {
      index = static_cast<int>(g.nodes_.size());
      g.nodes_.push_back((g.nodes_[edge.first] + g.nodes_[edge.second]).normalized());
    }
    std::vector<std::array<int, 3>> faces;
    faces.reserve(g.faces_.size() * 4);
    for (const auto& f : g.faces_) {
      const int a = midpoint.at(ordered(f[0], f[1]));
      const int b = midpoint.at(ordered(f[1], f[2]));
      const int c = midpoint.at(ordered(f[2], f[0]));
      faces.push_back({f[0], a, c});
      faces.push_back({f[1], b, a});
      faces.push_back({f[2], c, b});
      faces.push_back({a, b, c});
    }
    g.faces_ = std::move(faces);
  }
  g.finalize();
  return g;
}

void SphereGraph::finalize() {
  std::vector<std::pair<int, int>> edges;
  for (const auto& f : faces_) {
    for (int e = 0; e < 3; ++e) edges.push_back(ordered(f[e], f[(e + 1) % 3]));
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  std::vector<std::vector<int>> lists(nodes_.size());
  edges_.clear();
  for (auto [a, b] : edges) {
    edges_.push_back({a, b});
    lists[a].push_back(b);
    lists[b].push_back(a);
  }
  offsets_.assign(1, 0);
  adjacency_.clear();
  for (auto& l : lists) {
    std::sort(l.begin(), l.end());
    adjacency_.insert(adjacency_.end(), l.begin(), l.end());
    offsets_.push_back(adjacency_.size());
  }
}

double SphereGraph::haversine(std::size_t a, std::size_t b) const {
  return vtrack::haversine(nodes_.at(a), nodes_.at(b));
}

std::size_t SphereGraph::nearest_node(const Vec3& direction) const {
  const double norm = direction.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw std::invalid_argument("nearest_node: direction must be a finite non-zero vector");
  }
  const Vec3 d = direction / norm;
  double best = -2.0;
  for (const auto& n : nodes_) best = std::max(best, n.dot(d));
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].dot(d) >= best - kTieTolerance) return i;
  }
  return 0;  // unreachable
}

std::vector<int> SphereGraph::local_maxima(std::span<const double> field, double threshold) const {
  if (field.size() != nodes_.size()) {
    throw std::invalid_argument("local_maxima: field has " + std::to_string(field.size()) +
                                " values for " + std::to_string(nodes_.size()) + " nodes");
  }
  std::vector<int> out;
  for (std::size_t i = 0; i < field.size(); ++i) {
    if (!(field[i] >= threshold)) continue;
    bool peak = true;
    for (int j : neighbors(i)) {
      if (!(field[i] > field[j])) {
        peak = false;
        break;
      }
    }
    if (peak) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<int> SphereGraph::symmetry_permutation(const Mat3& rotation) const {
  std::vector<int> perm(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Vec3 r = rotation * nodes_[i];
    const std::size_t j = nearest_node(r);
    if ((nodes_[j] - r).norm() > 1e-9) {
      throw std::invalid_argument("rotation does not map the sphere mesh onto itself");
    }
    perm[i] = static_cast<int>(j);
  }
  return perm;
}

void SphereGraph::write_obj(std::ostream& out) const {
  out << "# icosphere level " << level_ << "\n";
  for (const auto& n : nodes_) out << "v " << n.x() << ' ' << n.y() << ' ' << n.z() << '\n';
  for (const auto& f : faces_) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

}  // namespace vtrack
