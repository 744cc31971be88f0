#include "vtrack/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

namespace vtrack {

using nlohmann::json;

bool occupancy_filter(const Vec3& candidate, const SkeletonTree& tree, int parent) {
  const auto& nodes = tree.nodes();
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    if (static_cast<int>(j) == parent) continue;
    if (!((candidate - nodes[j].position).norm() >= nodes[j].radius)) return false;
  }
  return true;
}

namespace {

constexpr double kFar = 1e30;

// Squared distance transform along one line (lower envelope of parabolas),
// sample positions q * h.
void edt_line(std::vector<double>& f, double h, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  d.resize(n);
  v.resize(n);
  z.resize(n + 1);
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  auto pos2 = [h](int q) { return (q * h) * (q * h); };
  for (int q = 1; q < n; ++q) {
    double s;
    while (true) {
      s = ((f[q] + pos2(q)) - (f[v[k]] + pos2(v[k]))) / (2.0 * h * (q - v[k]));
      if (s <= z[k] && k > 0) {
        --k;
        continue;
      }
      break;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q * h) ++k;
    const double dx = (q - v[k]) * h;
    d[q] = dx * dx + f[v[k]];
  }
  for (int q = 0; q < n; ++q) f[q] = d[q];
}

// Euclidean distance from every voxel centre to the nearest voxel where
// `target` is true.
std::vector<double> distance_to(const VolumeGrid& grid, const std::vector<char>& target) {
  const auto dims = grid.dims();
  std::vector<double> g(target.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = target[i] ? 0.0 : kFar;
  std::vector<double> line, d, z;
  std::vector<int> v;
  for (int axis = 0; axis < 3; ++axis) {
    const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    line.resize(dims[axis]);
    std::array<int, 3> idx{};
    for (idx[a2] = 0; idx[a2] < dims[a2]; ++idx[a2]) {
      for (idx[a1] = 0; idx[a1] < dims[a1]; ++idx[a1]) {
        for (idx[axis] = 0; idx[axis] < dims[axis]; ++idx[axis]) line[idx[axis]] = g[grid.index(idx[0], idx[1], idx[2])];
        edt_line(line, grid.spacing()[axis], d, v, z);
        for (idx[axis] = 0; idx[axis] < dims[axis]; ++idx[axis]) g[grid.index(idx[0], idx[1], idx[2])] = line[idx[axis]];
      }
    }
  }
  for (auto& x : g) x = std::sqrt(std::min(x, kFar));
  return g;
}

}  // namespace

MaskDistance::MaskDistance(const VolumeGrid& mask) : field_(mask.dims(), mask.spacing(), mask.origin()) {
  if (mask.voxel_count() == 0) throw std::invalid_argument("mask volume is empty");
  const auto data = mask.data();
  std::vector<char> inside(data.size()), outside(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    inside[i] = data[i] > 0.5f;
    outside[i] = !inside[i];
  }
  const auto d_bg = distance_to(mask, outside);
  const auto d_fg = distance_to(mask, inside);
  const double half = 0.5 * mask.spacing().minCoeff();
  auto out = field_.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>(inside[i] ? -(d_bg[i] - half) : d_fg[i] - half);
  }
}

double MaskDistance::signed_distance(const Vec3& p) const {
  if (!field_.contains(p)) return std::numeric_limits<double>::infinity();
  return field_.sample(p);
}

NetworkEstimator::NetworkEstimator(const MeshNet& net, const VolumeGrid& volume, std::vector<double> scales,
                                   const SphereGraph& graph, IntensityWindow window)
    : net_(net), volume_(volume), scales_(std::move(scales)), graph_(graph), window_(window) {
  if (scales_.empty()) throw std::invalid_argument("network estimator: empty scale list");
}

DirectionField NetworkEstimator::estimate(const Vec3& position) const {
  const auto sample =
      sample_multiscale(volume_, position, scales_, graph_, net_.params().config.input_width, window_);
  return net_.predict(sample, graph_);
}

std::vector<double> online_scales(const std::string& preset) {
  if (preset == "thin") return {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  if (preset == "wide") return {2.5, 3, 3.5, 4, 4.5, 5, 5.5, 6, 6.5, 7, 10, 15, 20, 25, 30};
  throw std::invalid_argument("unknown scale preset '" + preset + "' (expected thin or wide)");
}

json TrackerConfig::to_json() const {
  return {{"threshold", threshold},
          {"max_fronts", max_fronts},
          {"budget", budget == BudgetPolicy::prune ? "prune" : "halt"},
          {"max_nodes", max_nodes},
          {"max_iterations", max_iterations},
          {"mask_threshold", mask_threshold}};
}

TrackerConfig TrackerConfig::from_json(const json& doc) {
  TrackerConfig c;
  c.threshold = doc.value("threshold", c.threshold);
  c.max_fronts = doc.value("max_fronts", c.max_fronts);
  const std::string budget = doc.value("budget", std::string("prune"));
  if (budget == "prune") {
    c.budget = BudgetPolicy::prune;
  } else if (budget == "halt") {
    c.budget = BudgetPolicy::halt;
  } else {
    throw std::invalid_argument("budget: expected \"prune\" or \"halt\", got \"" + budget + "\"");
  }
  c.max_nodes = doc.value("max_nodes", c.max_nodes);
  c.max_iterations = doc.value("max_iterations", c.max_iterations);
  c.threads = doc.value("threads", c.threads);
  c.mask_threshold = doc.value("mask_threshold", c.mask_threshold);
  if (c.max_fronts <= 0 || c.max_iterations <= 0 || c.max_nodes == 0 || c.threads <= 0) {
    throw std::invalid_argument("tracker config: max_fronts, max_nodes, max_iterations and threads must be positive");
  }
  return c;
}

const char* to_string(TrackStatus s) {
  switch (s) {
    case TrackStatus::completed: return "completed";
    case TrackStatus::budget_halt: return "budget_halt";
    case TrackStatus::node_cap: return "node_cap";
    case TrackStatus::iteration_cap: return "iteration_cap";
    case TrackStatus::estimator_failure: return "estimator_failure";
  }
  return "?";
}

namespace {

struct Front {
  Vec3 position;
  int parent;
};

struct Evaluation {
  DirectionField field;
  std::exception_ptr error;
};

void evaluate_fronts(const std::vector<Front>& fronts, const DirectionEstimator& estimator, int threads,
                     std::vector<Evaluation>& out) {
  out.assign(fronts.size(), {});
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < fronts.size(); i += stride) {
      try {
        out[i].field = estimator.estimate(fronts[i].position);
      } catch (...) {
        out[i].error = std::current_exception();
      }
    }
  };
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), fronts.size());
  if (n <= 1) {
    work(0, 1);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < n; ++t) pool.emplace_back(work, t, n);
  for (auto& t : pool) t.join();
}

std::string describe(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const std::exception& ex) {
    return ex.what();
  } catch (...) {
    return "unknown error";
  }
}

}  // namespace

TrackResult propagate(std::span<const Vec3> seeds, const DirectionEstimator& estimator, const VolumeGrid& volume,
                      const SphereGraph& graph, const TrackerConfig& config, const MaskDistance* mask) {
  if (seeds.empty()) throw std::invalid_argument("propagate: no seeds");
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    if (!seeds[s].allFinite() || !volume.contains(seeds[s])) {
      throw std::invalid_argument("propagate: seed " + std::to_string(s) + " lies outside the volume");
    }
  }
  TrackResult result;
  SkeletonTree& tree = result.tree;
  std::vector<Evaluation> evals;

  for (std::size_t s = 0; s < seeds.size(); ++s) {
    if (!occupancy_filter(seeds[s], tree, SkeletonTree::kNoParent)) {
      result.skipped_seeds.push_back(static_cast<int>(s));
      continue;
    }
    std::vector<Front> fronts{{seeds[s], SkeletonTree::kNoParent}};
    for (int it = 0; !fronts.empty(); ++it) {
      if (it >= config.max_iterations) {
        result.status = TrackStatus::iteration_cap;
        result.message = "seed " + std::to_string(s) + ": iteration cap " + std::to_string(config.max_iterations) +
                         " reached";
        return result;
      }
      IterationRecord rec;
      rec.seed = static_cast<int>(s);
      rec.iteration = it;
      rec.fronts = static_cast<int>(fronts.size());
      evaluate_fronts(fronts, estimator, config.threads, evals);

      std::vector<Front> next;
      for (std::size_t f = 0; f < fronts.size(); ++f) {
        const Front& front = fronts[f];
        // Nodes appended after this front was filtered may now cover it.
        if (it > 0 && !occupancy_filter(front.position, tree, front.parent)) continue;
        if (evals[f].error) {
          result.status = TrackStatus::estimator_failure;
          result.message = "seed " + std::to_string(s) + ", iteration " + std::to_string(it) +
                           ": estimator failed: " + describe(evals[f].error);
          result.log.push_back(rec);
          return result;
        }
        const DirectionField& field = evals[f].field;
        const bool finite_field = std::all_of(field.probabilities.begin(), field.probabilities.end(),
                                              [](double p) { return std::isfinite(p); });
        if (field.probabilities.size() != graph.size() || !finite_field || !std::isfinite(field.radius) ||
            !(field.radius > 0.0)) {
          result.status = TrackStatus::estimator_failure;
          result.message = "seed " + std::to_string(s) + ", iteration " + std::to_string(it) +
                           ": estimator returned an invalid field (radius " + std::to_string(field.radius) +
                           (finite_field ? "" : ", non-finite probabilities") + ")";
          result.log.push_back(rec);
          return result;
        }
        if (tree.size() >= config.max_nodes) {
          result.status = TrackStatus::node_cap;
          result.message = "node cap " + std::to_string(config.max_nodes) + " reached";
          result.log.push_back(rec);
          return result;
        }
        const int id = tree.add(front.position, field.radius, front.parent, it);
        ++rec.committed;
        for (int node : graph.local_maxima(field.probabilities, config.threshold)) {
          ++rec.candidates;
          const Vec3 candidate = front.position + graph.node(node) * field.radius;
          if (!volume.contains(candidate)) continue;
          if (mask != nullptr && !mask->accept(candidate, config.mask_threshold)) continue;
          next.push_back({candidate, id});
        }
      }
      // Candidates are filtered once every front of the iteration is in T.
      std::vector<Front> accepted;
      for (const Front& c : next) {
        if (occupancy_filter(c.position, tree, c.parent)) accepted.push_back(c);
      }
      rec.accepted = static_cast<int>(accepted.size());
      result.log.push_back(rec);
      if (static_cast<int>(accepted.size()) > config.max_fronts) {
        if (config.budget == BudgetPolicy::halt) {
          result.status = TrackStatus::budget_halt;
          result.message = "seed " + std::to_string(s) + ": " + std::to_string(accepted.size()) +
                           " fronts exceed the budget of " + std::to_string(config.max_fronts);
          break;
        }
        accepted.resize(static_cast<std::size_t>(config.max_fronts));
      }
      fronts = std::move(accepted);
    }
  }
  return result;
}

}  // namespace vtrack
