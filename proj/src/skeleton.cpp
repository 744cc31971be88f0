#include "vtrack/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace vtrack {

using nlohmann::json;

void SkeletonGraph::validate() const {
  const auto n = static_cast<int>(points.size());
  std::set<std::pair<int, int>> seen;
  for (const auto& [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n || b >= n) throw std::invalid_argument("skeleton edge index out of range");
    if (a == b) throw std::invalid_argument("skeleton edge is a self loop");
    if (!seen.emplace(std::min(a, b), std::max(a, b)).second) {
      throw std::invalid_argument("duplicate skeleton edge (" + std::to_string(a) + ", " + std::to_string(b) + ")");
    }
  }
}

double SkeletonGraph::total_length() const {
  double len = 0.0;
  for (const auto& [a, b] : edges) len += (points[a].position - points[b].position).norm();
  return len;
}

std::vector<int> SkeletonGraph::degrees() const {
  std::vector<int> deg(points.size(), 0);
  for (const auto& [a, b] : edges) {
    ++deg[a];
    ++deg[b];
  }
  return deg;
}

int SkeletonTree::add(const Vec3& position, double radius, int parent, int iteration) {
  const int id = static_cast<int>(nodes_.size());
  if (parent != kNoParent && (parent < 0 || parent >= id)) {
    throw std::invalid_argument("skeleton tree parent must precede its child");
  }
  if (!(radius > 0.0)) throw std::invalid_argument("skeleton tree radius must be positive");
  nodes_.push_back({position, radius, parent, iteration});
  if (parent == kNoParent) roots_.push_back(id);
  return id;
}

SkeletonGraph SkeletonTree::to_graph() const {
  SkeletonGraph g;
  g.points.reserve(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    g.points.push_back({nodes_[i].position, nodes_[i].radius});
    if (nodes_[i].parent != kNoParent) g.edges.push_back({nodes_[i].parent, static_cast<int>(i)});
  }
  return g;
}

SkeletonLocator::SkeletonLocator(const SkeletonGraph& graph) : graph_(graph) {
  graph_.validate();
  segments_.reserve(graph_.edges.size());
  for (const auto& [a, b] : graph_.edges) {
    const auto& pa = graph_.points[a];
    const auto& pb = graph_.points[b];
    segments_.push_back({pa.position, pb.position, pa.radius, pb.radius});
  }
  // Isolated points behave as zero-length segments.
  const auto deg = graph_.degrees();
  for (std::size_t i = 0; i < deg.size(); ++i) {
    if (deg[i] == 0) {
      const auto& p = graph_.points[i];
      segments_.push_back({p.position, p.position, p.radius, p.radius});
    }
  }
}

NearestSkeletonPoint SkeletonLocator::nearest(const Vec3& p) const {
  NearestSkeletonPoint best;
  best.distance = std::numeric_limits<double>::infinity();
  for (const auto& s : segments_) {
    const Vec3 ab = s.b - s.a;
    const double len2 = ab.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp((p - s.a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    const Vec3 q = s.a + t * ab;
    const double d = (p - q).norm();
    if (d < best.distance) {
      best.distance = d;
      best.point = q;
      best.radius = s.ra + t * (s.rb - s.ra);
    }
  }
  return best;
}

bool SkeletonLocator::in_lumen(const Vec3& p) const {
  if (segments_.empty()) return false;
  const auto n = nearest(p);
  return n.distance <= n.radius;
}

std::vector<Vec3> SkeletonLocator::sphere_crossings(const Vec3& center, double radius,
                                                    double merge_fraction) const {
  std::vector<Vec3> out;
  const double merge = merge_fraction * radius;
  auto push = [&](const Vec3& x) {
    for (const auto& y : out) {
      if ((x - y).norm() < merge) return;
    }
    out.push_back(x);
  };
  const double r2 = radius * radius;
  for (const auto& s : segments_) {
    // |a + t (b - a) - c|^2 = R^2 on t in [0, 1].
    const Vec3 d = s.b - s.a;
    const Vec3 f = s.a - center;
    const double qa = d.squaredNorm();
    if (qa == 0.0) continue;
    const double qb = 2.0 * f.dot(d);
    const double qc = f.squaredNorm() - r2;
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc < 0.0) continue;
    const double sq = std::sqrt(disc);
    // Numerically stable pair of roots.
    const double q = -0.5 * (qb + std::copysign(sq, qb));
    double roots[2] = {q / qa, q != 0.0 ? qc / q : q / qa};
    if (roots[0] > roots[1]) std::swap(roots[0], roots[1]);
    for (int r = 0; r < (disc == 0.0 ? 1 : 2); ++r) {
      const double t = roots[r];
      if (t >= 0.0 && t <= 1.0) push(s.a + t * d);
    }
  }
  return out;
}

json tree_to_json(const SkeletonTree& tree, const json& meta) {
  json nodes = json::array();
  for (std::size_t i = 0; i < tree.size(); ++i) {
    const auto& n = tree.node(i);
    nodes.push_back({{"id", i},
                     {"pos", {n.position.x(), n.position.y(), n.position.z()}},
                     {"radius", n.radius},
                     {"parent", n.parent == SkeletonTree::kNoParent ? json(nullptr) : json(n.parent)},
                     {"iteration", n.iteration}});
  }
  return {{"nodes", std::move(nodes)}, {"meta", meta}};
}

json graph_to_json(const SkeletonGraph& graph, const json& meta) {
  // Emit parent links when the graph is a forest whose edges can be oriented
  // from lower to higher index with at most one parent per node.
  std::vector<int> parent(graph.size(), -1);
  bool forest = true;
  for (const auto& [a, b] : graph.edges) {
    const int lo = std::min(a, b), hi = std::max(a, b);
    if (parent[hi] != -1) {
      forest = false;
      break;
    }
    parent[hi] = lo;
  }
  json nodes = json::array();
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const auto& p = graph.points[i];
    nodes.push_back({{"id", i},
                     {"pos", {p.position.x(), p.position.y(), p.position.z()}},
                     {"radius", p.radius},
                     {"parent", forest && parent[i] >= 0 ? json(parent[i]) : json(nullptr)}});
  }
  json doc = {{"nodes", std::move(nodes)}, {"meta", meta}};
  if (!forest) doc["edges"] = graph.edges;
  return doc;
}

namespace {

double number_at(const json& v, const std::string& where) {
  if (!v.is_number()) throw std::runtime_error(where + ": expected a number");
  return v.get<double>();
}

}  // namespace

SkeletonGraph graph_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("nodes") || !doc["nodes"].is_array()) {
    throw std::runtime_error("skeleton: missing \"nodes\" array");
  }
  const auto& nodes = doc["nodes"];
  SkeletonGraph g;
  std::map<long long, int> index_of;
  std::vector<std::pair<int, long long>> parents;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    const std::string where = "nodes[" + std::to_string(i) + "]";
    if (!n.is_object()) throw std::runtime_error(where + ": expected an object");
    const long long id = n.contains("id") ? static_cast<long long>(number_at(n["id"], where + ".id"))
                                          : static_cast<long long>(i);
    if (!index_of.emplace(id, static_cast<int>(i)).second) {
      throw std::runtime_error(where + ".id: duplicate id " + std::to_string(id));
    }
    if (!n.contains("pos") || !n["pos"].is_array() || n["pos"].size() != 3) {
      throw std::runtime_error(where + ".pos: expected [x, y, z]");
    }
    SkeletonPoint p;
    for (int a = 0; a < 3; ++a) p.position[a] = number_at(n["pos"][a], where + ".pos");
    if (!n.contains("radius")) throw std::runtime_error(where + ".radius: missing");
    p.radius = number_at(n["radius"], where + ".radius");
    g.points.push_back(p);
    if (n.contains("parent") && !n["parent"].is_null()) {
      parents.emplace_back(static_cast<int>(i),
                           static_cast<long long>(number_at(n["parent"], where + ".parent")));
    }
  }
  if (doc.contains("edges")) {
    if (!doc["edges"].is_array()) throw std::runtime_error("edges: expected an array");
    for (std::size_t e = 0; e < doc["edges"].size(); ++e) {
      const auto& pair = doc["edges"][e];
      const std::string where = "edges[" + std::to_string(e) + "]";
      if (!pair.is_array() || pair.size() != 2) throw std::runtime_error(where + ": expected [a, b]");
      std::array<int, 2> edge{};
      for (int k = 0; k < 2; ++k) {
        const auto id = static_cast<long long>(number_at(pair[k], where));
        const auto it = index_of.find(id);
        if (it == index_of.end()) throw std::runtime_error(where + ": unknown node id " + std::to_string(id));
        edge[k] = it->second;
      }
      g.edges.push_back(edge);
    }
  }
  for (const auto& [child, pid] : parents) {
    const auto it = index_of.find(pid);
    if (it == index_of.end()) {
      throw std::runtime_error("nodes[" + std::to_string(child) + "].parent: unknown id " + std::to_string(pid));
    }
    g.edges.push_back({it->second, child});
  }
  try {
    g.validate();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("skeleton: ") + e.what());
  }
  return g;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    // Translate the byte offset into a line/column pair.
    std::ifstream again(path);
    std::string text((std::istreambuf_iterator<char>(again)), std::istreambuf_iterator<char>());
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw std::runtime_error(path.string() + ":" + std::to_string(line) + ":" + std::to_string(col) +
                             ": malformed JSON (" + e.what() + ")");
  }
}

SkeletonGraph read_skeleton(const std::filesystem::path& path) {
  const json doc = read_json(path);
  try {
    return graph_from_json(doc);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void write_json(const json& doc, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
}

void write_skeleton_obj(const SkeletonGraph& graph, std::ostream& out) {
  out.precision(17);
  for (const auto& p : graph.points) {
    out << "v " << p.position.x() << ' ' << p.position.y() << ' ' << p.position.z() << '\n';
  }
  for (const auto& [a, b] : graph.edges) out << "l " << a + 1 << ' ' << b + 1 << '\n';
}

}  // namespace vtrack
