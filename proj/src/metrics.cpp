#include "vtrack/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace vtrack {

using nlohmann::json;

namespace {

struct Matcher {
  SkeletonGraph pred, ref;
  std::vector<double> ref_radius;  // matching radius per reference point
  std::vector<char> ref_hit, pred_hit;

  Matcher(const SkeletonGraph& p, const SkeletonGraph& r, const MatchOptions& o)
      : pred(resample_arclength(p, o.step)), ref(resample_arclength(r, o.step)) {
    const double floor = o.radius_floor_fraction * o.step;
    for (const auto& q : ref.points) ref_radius.push_back(std::max(q.radius, floor));
    ref_hit.assign(ref.size(), 0);
    pred_hit.assign(pred.size(), 0);
    for (std::size_t i = 0; i < ref.size(); ++i) {
      const Vec3& x = ref.points[i].position;
      const double r2 = ref_radius[i] * ref_radius[i];
      for (const auto& q : pred.points) {
        if ((q.position - x).squaredNorm() <= r2) {
          ref_hit[i] = 1;
          break;
        }
      }
    }
    for (std::size_t j = 0; j < pred.size(); ++j) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t nearest = 0;
      for (std::size_t i = 0; i < ref.size(); ++i) {
        const double d = (ref.points[i].position - pred.points[j].position).squaredNorm();
        if (d < best) {
          best = d;
          nearest = i;
        }
      }
      pred_hit[j] = best <= ref_radius[nearest] * ref_radius[nearest];
    }
  }
};

}  // namespace

SkeletonGraph resample_arclength(const SkeletonGraph& graph, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("resample step must be positive");
  graph.validate();
  // Every original vertex is kept and each edge is split evenly, so bends
  // survive and the polyline length is unchanged.
  SkeletonGraph out;
  out.points = graph.points;
  std::set<std::pair<int, int>> seen;
  for (const auto& [a, b] : graph.edges) {
    const auto& pa = graph.points[a];
    const auto& pb = graph.points[b];
    long pieces = std::max(1L, static_cast<long>(std::ceil((pb.position - pa.position).norm() / step - 1e-9)));
    if (!seen.insert({std::min(a, b), std::max(a, b)}).second) pieces = std::max(pieces, 2L);
    int prev = a;
    for (long k = 1; k < pieces; ++k) {
      const double t = static_cast<double>(k) / static_cast<double>(pieces);
      const int idx = static_cast<int>(out.points.size());
      out.points.push_back({pa.position + t * (pb.position - pa.position), pa.radius + t * (pb.radius - pa.radius)});
      out.edges.push_back({prev, idx});
      prev = idx;
    }
    out.edges.push_back({prev, b});
  }
  return out;
}

OverlapResult overlap_precision(const SkeletonGraph& pred, const SkeletonGraph& ref, const MatchOptions& options) {
  if (ref.empty()) throw std::invalid_argument("overlap: reference skeleton is empty");
  const Matcher m(pred, ref, options);
  const double ref_hits = std::accumulate(m.ref_hit.begin(), m.ref_hit.end(), 0.0);
  const double pred_hits = std::accumulate(m.pred_hit.begin(), m.pred_hit.end(), 0.0);
  OverlapResult r;
  const double total = static_cast<double>(m.ref.size() + m.pred.size());
  r.ov = (ref_hits + pred_hits) / total;
  r.precision = m.pred.empty() ? 0.0 : pred_hits / static_cast<double>(m.pred.size());
  r.recall = ref_hits / static_cast<double>(m.ref.size());
  return r;
}

namespace {

std::array<double, kRadiusGroups> grouped_recall(const Matcher& m) {
  const std::size_t n = m.ref.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return m.ref.points[a].radius < m.ref.points[b].radius; });
  std::array<double, kRadiusGroups> out{};
  std::size_t begin = 0;
  for (int g = 0; g < kRadiusGroups; ++g) {
    const std::size_t size = n / kRadiusGroups + (static_cast<std::size_t>(g) < n % kRadiusGroups ? 1 : 0);
    double hits = 0.0;
    for (std::size_t k = begin; k < begin + size; ++k) hits += m.ref_hit[order[k]];
    out[g] = size > 0 ? hits / static_cast<double>(size) : 0.0;
    begin += size;
  }
  return out;
}

}  // namespace

std::array<double, kRadiusGroups> recall_by_radius(const SkeletonGraph& pred, const SkeletonGraph& ref,
                                                   const MatchOptions& options) {
  if (ref.empty()) throw std::invalid_argument("recall_by_radius: reference skeleton is empty");
  return grouped_recall(Matcher(pred, ref, options));
}

BettiNumbers betti_numbers(const SkeletonGraph& graph) {
  std::vector<int> parent(graph.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    int root = x;
    while (parent[root] != root) root = parent[root];
    while (parent[x] != root) {
      const int next = parent[x];
      parent[x] = root;
      x = next;
    }
    return root;
  };
  long components = static_cast<long>(graph.size());
  for (const auto& [a, b] : graph.edges) {
    const int ra = find(a), rb = find(b);
    if (ra != rb) {
      parent[std::max(ra, rb)] = std::min(ra, rb);
      --components;
    }
  }
  return {components, static_cast<long>(graph.edges.size()) - static_cast<long>(graph.size()) + components};
}

BettiErrors betti_errors(const SkeletonGraph& pred, const SkeletonGraph& ref) {
  const auto p = betti_numbers(pred);
  const auto r = betti_numbers(ref);
  return {std::labs(p.beta0 - r.beta0), std::labs(p.beta1 - r.beta1)};
}

json EvalReport::to_json() const {
  return {{"ov", ov},
          {"precision", precision},
          {"recall", recall},
          {"recall_by_radius_group", recall_by_radius_group},
          {"beta0_err", beta0_err},
          {"beta1_err", beta1_err}};
}

EvalReport EvalReport::from_json(const json& doc) {
  EvalReport r;
  r.ov = doc.at("ov").get<double>();
  r.precision = doc.at("precision").get<double>();
  r.recall = doc.at("recall").get<double>();
  r.recall_by_radius_group = doc.at("recall_by_radius_group").get<std::array<double, kRadiusGroups>>();
  r.beta0_err = doc.at("beta0_err").get<long>();
  r.beta1_err = doc.at("beta1_err").get<long>();
  return r;
}

EvalReport evaluate(const SkeletonGraph& pred, const SkeletonGraph& ref, const MatchOptions& options) {
  if (ref.empty()) throw std::invalid_argument("evaluate: reference skeleton is empty");
  const Matcher m(pred, ref, options);
  EvalReport r;
  const double ref_hits = std::accumulate(m.ref_hit.begin(), m.ref_hit.end(), 0.0);
  const double pred_hits = std::accumulate(m.pred_hit.begin(), m.pred_hit.end(), 0.0);
  r.ov = (ref_hits + pred_hits) / static_cast<double>(m.ref.size() + m.pred.size());
  r.precision = m.pred.empty() ? 0.0 : pred_hits / static_cast<double>(m.pred.size());
  r.recall = ref_hits / static_cast<double>(m.ref.size());
  r.recall_by_radius_group = grouped_recall(m);
  const auto b = betti_errors(pred, ref);
  r.beta0_err = b.beta0_err;
  r.beta1_err = b.beta1_err;
  return r;
}

json aggregate_reports(const std::vector<std::pair<std::string, EvalReport>>& cases) {
  json rows = json::array();
  std::vector<std::vector<double>> columns(5 + kRadiusGroups);
  const std::vector<std::string> names = {"ov", "precision", "recall", "beta0_err", "beta1_err"};
  for (const auto& [name, r] : cases) {
    json row = r.to_json();
    row["case"] = name;
    rows.push_back(std::move(row));
    const double values[5] = {r.ov, r.precision, r.recall, static_cast<double>(r.beta0_err),
                              static_cast<double>(r.beta1_err)};
    for (int k = 0; k < 5; ++k) columns[k].push_back(values[k]);
    for (int g = 0; g < kRadiusGroups; ++g) columns[5 + g].push_back(r.recall_by_radius_group[g]);
  }
  auto stats = [](const std::vector<double>& v) {
    if (v.empty()) return json{{"mean", 0.0}, {"std", 0.0}};
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return json{{"mean", mean}, {"std", std::sqrt(var / static_cast<double>(v.size()))}};
  };
  json summary;
  for (int k = 0; k < 5; ++k) summary[names[k]] = stats(columns[k]);
  json groups = json::array();
  for (int g = 0; g < kRadiusGroups; ++g) groups.push_back(stats(columns[5 + g]));
  summary["recall_by_radius_group"] = groups;
  return {{"cases", rows}, {"summary", summary}, {"count", cases.size()}};
}

}  // namespace vtrack
