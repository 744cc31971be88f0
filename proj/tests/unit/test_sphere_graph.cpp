#include "doctest.h"
#include "vtrack/sphere_graph.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

using namespace vtrack;

TEST_CASE("icosphere sizes, degrees and normalisation") {
  for (int level = 0; level <= SphereGraph::kMaxLevel; ++level) {
    const auto g = SphereGraph::build(level);
    const std::size_t p = std::size_t{1} << (2 * level);
    CHECK(g.size() == 10 * p + 2);
    CHECK(g.edges().size() == 30 * p);
    CHECK(g.faces().size() == 20 * p);
    // Euler characteristic of the sphere.
    CHECK(long(g.size()) - long(g.edges().size()) + long(g.faces().size()) == 2);

    double worst = 0.0;
    int deg5 = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      worst = std::max(worst, std::abs(g.node(i).norm() - 1.0));
      const auto d = g.degree(i);
      CHECK((d == 5 || d == 6));
      deg5 += d == 5;
    }
    CHECK(worst < 1e-9);
    CHECK(deg5 == 12);
  }
  CHECK(SphereGraph::build(0).size() == 12);
  CHECK(SphereGraph::build(2).size() == 162);
  CHECK(SphereGraph::build(2).edges().size() == 480);
  CHECK_THROWS_AS(SphereGraph::build(5), std::invalid_argument);
  CHECK_THROWS_AS(SphereGraph::build(-1), std::invalid_argument);
}

TEST_CASE("adjacency is symmetric, sorted and connected") {
  const auto g = SphereGraph::build(2);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto n = g.neighbors(i);
    CHECK(std::is_sorted(n.begin(), n.end()));
    for (int j : n) {
      const auto m = g.neighbors(j);
      CHECK(std::find(m.begin(), m.end(), int(i)) != m.end());
    }
  }
  std::vector<bool> seen(g.size(), false);
  std::vector<int> stack{0};
  seen[0] = true;
  std::size_t count = 1;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int u : g.neighbors(v))
      if (!seen[u]) {
        seen[u] = true;
        ++count;
        stack.push_back(u);
      }
  }
  CHECK(count == g.size());
}

TEST_CASE("construction is deterministic") {
  const auto a = SphereGraph::build(3), b = SphereGraph::build(3);
  CHECK(a.nodes() == b.nodes());
  CHECK(a.edges() == b.edges());
}

TEST_CASE("haversine examples and metric properties") {
  CHECK(haversine(Vec3(1, 0, 0), Vec3(1, 0, 0)) == 0.0);
  CHECK(haversine(Vec3(1, 0, 0), Vec3(0, 1, 0)) == doctest::Approx(M_PI / 2).epsilon(1e-14));
  CHECK(haversine(Vec3(1, 0, 0), Vec3(-1, 0, 0)) == doctest::Approx(M_PI).epsilon(1e-14));

  const auto g = SphereGraph::build(1);
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(g.haversine(i, i) == 0.0);
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double hij = g.haversine(i, j);
      CHECK(hij == g.haversine(j, i));
      CHECK(hij >= 0.0);
      CHECK(hij <= M_PI + 1e-15);
      // acos reference for well-conditioned pairs
      const double dot = std::clamp(g.node(i).dot(g.node(j)), -1.0, 1.0);
      if (std::abs(dot) < 0.99) CHECK(hij == doctest::Approx(std::acos(dot)).epsilon(1e-12));
      for (std::size_t k = 0; k < g.size(); ++k) CHECK(g.haversine(i, k) <= hij + g.haversine(j, k) + 1e-12);
    }
  }
  // Every icosphere node has its antipode in the node set.
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g.haversine(i, g.nearest_node(-g.node(i))) == doctest::Approx(M_PI));
}

TEST_CASE("nearest_node") {
  const auto g = SphereGraph::build(2);
  CHECK(g.nearest_node(g.node(7)) == 7);
  CHECK(g.nearest_node(g.node(7) * 42.0) == 7);
  CHECK_THROWS_AS(g.nearest_node(Vec3::Zero()), std::invalid_argument);
  CHECK_THROWS_AS(g.nearest_node(Vec3(NAN, 0, 0)), std::invalid_argument);

  // Edge midpoints tie; the lower index wins.
  for (const auto& e : g.edges()) {
    const Vec3 mid = (g.node(e[0]) + g.node(e[1])).normalized();
    const double d0 = g.node(e[0]).dot(mid), d1 = g.node(e[1]).dot(mid);
    if (d0 == d1) CHECK(g.nearest_node(mid) == std::size_t(std::min(e[0], e[1])));
  }

  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int t = 0; t < 1000; ++t) {
    const Vec3 d(n(rng), n(rng), n(rng));
    std::size_t best = 0;
    double best_dot = -2.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double dot = g.node(i).dot(d.normalized());
      if (dot > best_dot) {
        best_dot = dot;
        best = i;
      }
    }
    CHECK(g.nearest_node(d) == best);
    CHECK(g.nearest_node(d * 0.003) == best);
  }
}

TEST_CASE("local maxima") {
  const auto g = SphereGraph::build(2);
  std::vector<double> f(g.size(), 0.4);
  CHECK(g.local_maxima(f, 0.5).empty());
  f.assign(g.size(), 0.7);
  CHECK(g.local_maxima(f, 0.5).empty());  // plateau

  f.assign(g.size(), 0.1);
  f[33] = 0.9;
  CHECK(g.local_maxima(f, 0.5) == std::vector<int>{33});

  // threshold tie counts as passing
  f[33] = 0.5;
  CHECK(g.local_maxima(f, 0.5) == std::vector<int>{33});

  f.assign(g.size(), 0.1);
  const int a = 5, b = static_cast<int>(g.nearest_node(-g.node(5)));
  f[a] = f[b] = 0.8;
  CHECK(g.local_maxima(f, 0.5) == std::vector<int>{std::min(a, b), std::max(a, b)});

  CHECK_THROWS_AS(g.local_maxima(std::vector<double>(3, 0.0), 0.5), std::invalid_argument);

  // Brute-force neighbourhood check on random fields.
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    for (auto& v : f) v = std::round(u(rng) * 8) / 8;  // coarse values so ties occur
    std::vector<int> ref;
    for (std::size_t i = 0; i < g.size(); ++i) {
      bool ok = f[i] >= 0.5;
      for (const auto& e : g.edges()) {
        if (e[0] == int(i) && f[e[1]] >= f[i]) ok = false;
        if (e[1] == int(i) && f[e[0]] >= f[i]) ok = false;
      }
      if (ok) ref.push_back(int(i));
    }
    CHECK(g.local_maxima(f, 0.5) == ref);
  }
}

TEST_CASE("icosahedral symmetries permute the mesh and commute with local maxima") {
  const auto g = SphereGraph::build(2);
  const auto gens = icosahedral_generators();
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const Mat3& r : gens) {
    CHECK((r * r.transpose() - Mat3::Identity()).norm() < 1e-12);
    CHECK(r.determinant() == doctest::Approx(1.0));
    const auto perm = g.symmetry_permutation(r);
    CHECK(std::set<int>(perm.begin(), perm.end()).size() == g.size());
    // Adjacency preserved.
    for (const auto& e : g.edges()) {
      const auto n = g.neighbors(perm[e[0]]);
      CHECK(std::find(n.begin(), n.end(), perm[e[1]]) != n.end());
    }
    std::vector<double> f(g.size()), fp(g.size());
    for (auto& v : f) v = u(rng);
    for (std::size_t i = 0; i < g.size(); ++i) fp[perm[i]] = f[i];
    std::vector<int> expect;
    for (int i : g.local_maxima(f, 0.5)) expect.push_back(perm[i]);
    std::sort(expect.begin(), expect.end());
    CHECK(g.local_maxima(fp, 0.5) == expect);
  }
  const Mat3 not_sym = Eigen::AngleAxisd(0.1, Vec3::UnitZ()).toRotationMatrix();
  CHECK_THROWS_AS(g.symmetry_permutation(not_sym), std::invalid_argument);
}

TEST_CASE("obj export lists every vertex and face") {
  const auto g = SphereGraph::build(1);
  std::ostringstream os;
  g.write_obj(os);
  const std::string s = os.str();
  CHECK(std::count(s.begin(), s.end(), 'v') >= long(g.size()));
  std::size_t faces = 0;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) faces += line.rfind("f ", 0) == 0;
  CHECK(faces == g.faces().size());
}
