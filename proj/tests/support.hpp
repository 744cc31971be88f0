#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. None of these call into the library code they are checking.

#include "vtrack/mesh_net.hpp"
#include "vtrack/skeleton.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace vtrack::testing {

// --- Betti numbers by linear algebra over GF(2) -----------------------------
// beta0 = V - rank(boundary), beta1 = E - rank(boundary), with the boundary
// matrix reduced by Gaussian elimination on bit rows.
struct BruteBetti {
  long beta0, beta1;
};

inline BruteBetti brute_betti(std::size_t n_vertices, const std::vector<std::array<int, 2>>& edges) {
  std::vector<std::vector<bool>> rows;
  for (const auto& e : edges) {
    std::vector<bool> r(n_vertices, false);
    r[e[0]] = !r[e[0]];
    r[e[1]] = !r[e[1]];
    rows.push_back(std::move(r));
  }
  long rank = 0;
  std::size_t pivot_row = 0;
  for (std::size_t col = 0; col < n_vertices && pivot_row < rows.size(); ++col) {
    std::size_t sel = pivot_row;
    while (sel < rows.size() && !rows[sel][col]) ++sel;
    if (sel == rows.size()) continue;
    std::swap(rows[sel], rows[pivot_row]);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (r != pivot_row && rows[r][col]) {
        for (std::size_t c = 0; c < n_vertices; ++c) rows[r][c] = rows[r][c] != rows[pivot_row][c];
      }
    }
    ++pivot_row;
    ++rank;
  }
  return {static_cast<long>(n_vertices) - rank, static_cast<long>(edges.size()) - rank};
}

// Random simple graph with up to max_nodes vertices.
inline SkeletonGraph random_graph(std::mt19937_64& rng, int max_nodes) {
  std::uniform_int_distribution<int> nd(1, max_nodes);
  const int n = nd(rng);
  SkeletonGraph g;
  for (int i = 0; i < n; ++i) g.points.push_back({Vec3(i, 0, 0), 1.0});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double density = u(rng) * 0.4;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (u(rng) < density) g.edges.push_back({i, j});
  return g;
}

// --- Occupancy: the filter condition written out over all pairs -------------
inline bool brute_occupancy(const Vec3& c, const std::vector<Vec3>& pos, const std::vector<double>& radius,
                            int parent) {
  for (std::size_t j = 0; j < pos.size(); ++j) {
    if (static_cast<int>(j) == parent) continue;
    const double dx = c.x() - pos[j].x(), dy = c.y() - pos[j].y(), dz = c.z() - pos[j].z();
    if (std::sqrt(dx * dx + dy * dy + dz * dz) < radius[j]) return false;
  }
  return true;
}

// --- Analytic skeletons -------------------------------------------------------
// Straight polyline from a to b with `n` segments and constant radius.
inline SkeletonGraph straight_line(const Vec3& a, const Vec3& b, int n, double radius) {
  SkeletonGraph g;
  for (int i = 0; i <= n; ++i) g.points.push_back({a + (b - a) * (double(i) / n), radius});
  for (int i = 0; i < n; ++i) g.edges.push_back({i, i + 1});
  return g;
}

// Three straight arms of length `len` meeting at `center` with 120 degrees
// between them in the xy-plane. Node 0 is the junction.
inline SkeletonGraph y_junction(const Vec3& center, double len, int n, double radius) {
  SkeletonGraph g;
  g.points.push_back({center, radius});
  for (int arm = 0; arm < 3; ++arm) {
    const double phi = arm * 2.0 * M_PI / 3.0;
    const Vec3 dir(std::cos(phi), std::sin(phi), 0.0);
    int prev = 0;
    for (int i = 1; i <= n; ++i) {
      g.points.push_back({center + dir * (len * i / n), radius});
      const int cur = static_cast<int>(g.points.size()) - 1;
      g.edges.push_back({prev, cur});
      prev = cur;
    }
  }
  return g;
}

// --- Finite differences -------------------------------------------------------
// Relative error in the form used by the gradient criteria; absolute error
// when both magnitudes are tiny.
inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

// Fourth-order central difference of f at x0. Round-off stays near
// eps * |f| / h, well below the gradients being checked.
template <class F>
double central_difference(F&& f, double x0, double h = 1e-4) {
  return (f(x0 - 2 * h) - 8 * f(x0 - h) + 8 * f(x0 + h) - f(x0 + 2 * h)) / (12 * h);
}

// The network uses a leaky rectifier, so the loss is only piecewise smooth.
// A stencil that straddles a kink averages the two slopes; such estimates
// change with the step, while kink-free ones do not. Halve the step until two
// consecutive estimates agree.
template <class F>
double piecewise_difference(F&& f, double x0) {
  double h = 1e-4;
  double prev = central_difference(f, x0, h);
  while (h > 1e-8) {
    h /= 4;
    const double next = central_difference(f, x0, h);
    if (std::abs(next - prev) <= 1e-9 + 1e-7 * std::abs(next)) return next;
    prev = next;
  }
  return prev;
}

// Finite difference of `loss` with respect to one parameter entry, restoring
// the entry afterwards.
template <class Loss>
double parameter_difference(ad::Tensor& t, Eigen::Index row, Eigen::Index col, Loss&& loss) {
  const double x0 = t.value(row, col);
  const double fd = piecewise_difference(
      [&](double x) {
        t.value(row, col) = x;
        return loss();
      },
      x0);
  t.value(row, col) = x0;
  return fd;
}

struct Probe {
  std::size_t tensor;
  Eigen::Index row, col;
};

inline std::vector<Probe> random_probes(const EstimatorParams& params, int count, std::uint64_t seed) {
  const auto ts = params.tensors();
  std::vector<Probe> out;
  std::mt19937_64 rng(seed);
  std::size_t total = 0;
  for (const auto* t : ts) total += static_cast<std::size_t>(t->size());
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  for (int k = 0; k < count; ++k) {
    std::size_t flat = pick(rng);
    std::size_t ti = 0;
    while (flat >= static_cast<std::size_t>(ts[ti]->size())) flat -= ts[ti++]->size();
    const auto cols = ts[ti]->value.cols();
    out.push_back({ti, static_cast<Eigen::Index>(flat) / cols, static_cast<Eigen::Index>(flat) % cols});
  }
  return out;
}

// --- Scratch directories ---------------------------------------------------------
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("vtrack_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace vtrack::testing
