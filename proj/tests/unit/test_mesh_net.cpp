#include "doctest.h"
#include "support.hpp"
#include "vtrack/mesh_net.hpp"

#include <fstream>
#include <random>

using namespace vtrack;

namespace {

MultiScaleSample random_sample(const SphereGraph& g, int width, int scales, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MultiScaleSample s;
  for (int m = 0; m < scales; ++m) {
    s.scales.push_back(1.0 + m);
    Matrix f(static_cast<Eigen::Index>(g.size()), width);
    for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = u(rng);
    s.features.push_back(f);
  }
  return s;
}

MultiScaleSample permuted(const MultiScaleSample& s, const std::vector<int>& perm) {
  MultiScaleSample out = s;
  for (std::size_t m = 0; m < s.features.size(); ++m)
    for (std::size_t i = 0; i < perm.size(); ++i) out.features[m].row(perm[i]) = s.features[m].row(i);
  return out;
}

// Loss = sum_i c_i p_i + c_r R; returns the worst relative error over probes.
double network_gradient_error(EstimatorParams params, const MultiScaleSample& sample, const SphereGraph& g,
                              int probes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> c(g.size());
  for (auto& v : c) v = n(rng);
  const double cr = n(rng);
  auto loss = [&](const DirectionField& f) {
    double s = cr * f.radius;
    for (std::size_t i = 0; i < c.size(); ++i) s += c[i] * f.probabilities[i];
    return s;
  };
  MeshNet net(std::move(params));
  net.params().zero_grad();
  net.forward(sample, g);
  net.backward(c, cr);
  double worst = 0.0;
  for (const auto& p : testing::random_probes(net.params(), probes, seed + 1)) {
    auto* t = net.params().tensors()[p.tensor];
    const double fd = testing::parameter_difference(*t, p.row, p.col, [&] { return loss(net.predict(sample, g)); });
    worst = std::max(worst, testing::relative_error(t->grad(p.row, p.col), fd));
  }
  return worst;
}

}  // namespace

TEST_CASE("mesh_conv identity configuration and automorphism equivariance") {
  const auto g = SphereGraph::build(1);
  ConvLayer layer{ad::Tensor(Matrix::Identity(3, 3)), ad::Tensor(3, 3), ad::Tensor(1, 3)};
  std::mt19937_64 rng(1);
  Matrix f = Matrix::Random(42, 3);
  ad::Tape t;
  const auto out = mesh_conv(t, t.input(f), g, bind(t, layer), Activation::none);
  CHECK(t.value(out) == f);

  ConvLayer r{ad::Tensor(Matrix::Random(3, 4)), ad::Tensor(Matrix::Random(3, 4)), ad::Tensor(Matrix::Random(1, 4))};
  for (const Mat3& rot : icosahedral_generators()) {
    const auto perm = g.symmetry_permutation(rot);
    Matrix fp(42, 3);
    for (int i = 0; i < 42; ++i) fp.row(perm[i]) = f.row(i);
    ad::Tape a;
    const Matrix y = a.value(mesh_conv(a, a.input(f), g, bind(a, r)));
    const Matrix yp = a.value(mesh_conv(a, a.input(fp), g, bind(a, r)));
    double worst = 0.0;
    for (int i = 0; i < 42; ++i) worst = std::max(worst, (y.row(i) - yp.row(perm[i])).cwiseAbs().maxCoeff());
    CHECK(worst < 1e-12);
  }
  ad::Tape bad;
  CHECK_THROWS_AS(mesh_conv(bad, bad.input(Matrix::Ones(42, 5)), g, bind(bad, layer)), std::invalid_argument);
}

TEST_CASE("gated fusion") {
  ad::Tape t;
  Matrix f1(2, 2), f2(2, 2);
  f1 << 1, 2, 3, 4;
  f2 << -1, 0.5, 2, -3;
  const ad::Var v1 = t.input(f1), v2 = t.input(f2);
  const std::vector<ad::Var> both{v1, v2};

  const ad::Var w0 = t.input(Matrix::Zero(2, 2)), b0 = t.input(Matrix::Zero(1, 2));
  CHECK(t.value(gated_fusion(t, both, w0, b0)).isApprox(0.5 * (f1 + f2)));

  const std::vector<ad::Var> one{v1};
  const ad::Var big = t.input(Matrix::Constant(1, 2, 60.0));
  CHECK(t.value(gated_fusion(t, one, w0, big)).isApprox(f1, 1e-12));

  // Hand evaluation: gate_m = sigmoid(f_m W + b) per node and channel.
  Matrix w(2, 2), b(1, 2);
  w << 0.5, -1, 0.25, 2;
  b << 0.1, -0.2;
  auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  Matrix expect(2, 2);
  for (int i = 0; i < 2; ++i)
    for (int c = 0; c < 2; ++c) {
      const double z1 = f1(i, 0) * w(0, c) + f1(i, 1) * w(1, c) + b(0, c);
      const double z2 = f2(i, 0) * w(0, c) + f2(i, 1) * w(1, c) + b(0, c);
      expect(i, c) = sig(z1) * f1(i, c) + sig(z2) * f2(i, c);
    }
  CHECK(t.value(gated_fusion(t, both, t.input(w), t.input(b))).isApprox(expect, 1e-14));
  CHECK_THROWS_AS(gated_fusion(t, std::vector<ad::Var>{}, w0, b0), std::invalid_argument);
  CHECK(t.value(mean_fusion(t, both)).isApprox(0.5 * (f1 + f2)));
}

TEST_CASE("forward codomain and zero parameters") {
  const auto g = SphereGraph::build(1);
  NetConfig cfg{8, 6, 2, true, 0.01};
  MeshNet zero(EstimatorParams::zeros(cfg));
  const auto s = random_sample(g, 8, 3, 2);
  const auto z = zero.forward(s, g);
  for (double p : z.probabilities) CHECK(p == 0.5);
  CHECK(z.radius == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    MeshNet net(EstimatorParams::random(cfg, seed));
    auto big = random_sample(g, 8, 2, seed);
    for (auto& f : big.features) f *= 100.0;
    const auto out = net.predict(big, g);
    CHECK(out.probabilities.size() == g.size());
    for (double p : out.probabilities) CHECK((p >= 0.0 && p <= 1.0));
    CHECK(out.radius > 0.0);
  }
  auto wrong = random_sample(g, 5, 1, 0);
  CHECK_THROWS_AS(zero.forward(wrong, g), std::invalid_argument);
}

TEST_CASE("forward and predict agree; scale order and count") {
  const auto g = SphereGraph::build(1);
  for (bool gating : {true, false}) {
    NetConfig cfg{8, 6, 3, gating, 0.01};
    MeshNet net(EstimatorParams::random(cfg, 4));
    const auto s = random_sample(g, 8, 4, 3);
    const auto a = net.forward(s, g), b = net.predict(s, g);
    CHECK(a.probabilities == b.probabilities);
    CHECK(a.radius == b.radius);

    // Reordering scales only reorders a commutative sum.
    auto r = s;
    std::reverse(r.features.begin(), r.features.end());
    const auto c = net.predict(r, g);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(c.probabilities[i] == doctest::Approx(a.probabilities[i]).epsilon(1e-13));
    CHECK(c.radius == doctest::Approx(a.radius).epsilon(1e-13));

    // One shared encoder: the parameter count does not depend on the scale count.
    CHECK(net.params().parameter_count() == EstimatorParams::zeros(cfg).parameter_count());
    CHECK_NOTHROW(net.predict(random_sample(g, 8, 1, 0), g));
    CHECK_NOTHROW(net.predict(random_sample(g, 8, 15, 0), g));
  }
}

TEST_CASE("network output is equivariant under icosahedral symmetries") {
  const auto g = SphereGraph::build(2);
  MeshNet net(EstimatorParams::random(NetConfig{16, 8, 3, true, 0.01}, 8));
  const auto s = random_sample(g, 16, 3, 5);
  const auto base = net.predict(s, g);
  for (const Mat3& rot : icosahedral_generators()) {
    const auto perm = g.symmetry_permutation(rot);
    const auto out = net.predict(permuted(s, perm), g);
    double worst = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i)
      worst = std::max(worst, std::abs(base.probabilities[i] - out.probabilities[perm[i]]));
    CHECK(worst <= 1e-12);
    CHECK(std::abs(base.radius - out.radius) <= 1e-12);
  }
}

TEST_CASE("reverse mode matches finite differences") {
  const auto g0 = SphereGraph::build(0);
  SUBCASE("tiny net on the 12-node graph at every depth") {
    for (int depth : {2, 3, 4})
      for (bool gating : {true, false}) {
        NetConfig cfg{6, 4, depth, gating, 0.01};
        auto params = EstimatorParams::random(cfg, 10 + depth);
        // Non-zero biases so every path carries gradient.
        std::mt19937_64 rng(depth);
        std::uniform_real_distribution<double> u(-0.3, 0.3);
        for (auto& l : params.conv)
          for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias.value.data()[i] = u(rng);
        CHECK(network_gradient_error(params, random_sample(g0, 6, 3, depth), g0, 60, 100 + depth) <= 1e-4);
      }
  }
  SUBCASE("every parameter entry of a small net") {
    NetConfig cfg{4, 3, 2, true, 0.01};
    auto params = EstimatorParams::random(cfg, 1);
    MeshNet net(params);
    const auto s = random_sample(g0, 4, 2, 9);
    std::vector<double> c(g0.size(), 1.0);
    net.forward(s, g0);
    net.backward(c, 1.0);
    double worst = 0.0;
    for (std::size_t ti = 0; ti < net.params().tensors().size(); ++ti) {
      auto* t = net.params().tensors()[ti];
      for (Eigen::Index k = 0; k < t->size(); ++k) {
        auto total = [&] {
          const auto f = net.predict(s, g0);
          double v = f.radius;
          for (double p : f.probabilities) v += p;
          return v;
        };
        const auto cols = t->value.cols();
        const double fd = testing::parameter_difference(*t, k / cols, k % cols, total);
        worst = std::max(worst, testing::relative_error(t->grad(k / cols, k % cols), fd));
      }
    }
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("backward contract") {
  const auto g = SphereGraph::build(0);
  MeshNet net(EstimatorParams::random(NetConfig{4, 3, 2, true, 0.01}, 2));
  std::vector<double> c(g.size(), 0.5);
  CHECK_THROWS_AS(net.backward(c, 1.0), std::logic_error);
  const auto s = random_sample(g, 4, 2, 1);
  net.forward(s, g);
  CHECK_THROWS_AS(net.backward(std::vector<double>(3, 1.0), 1.0), std::invalid_argument);

  net.params().zero_grad();
  net.forward(s, g);
  net.backward(c, 1.0);
  std::vector<Matrix> first;
  for (auto* t : net.params().tensors()) first.push_back(t->grad);
  net.params().zero_grad();
  net.forward(s, g);
  net.backward(c, 1.0);
  const auto ts = net.params().tensors();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    CHECK(ts[i]->grad == first[i]);
    CHECK(ts[i]->grad.allFinite());
  }
}

TEST_CASE("checkpoints round trip exactly") {
  const auto dir = testing::scratch_dir("checkpoint");
  NetConfig cfg{8, 5, 3, false, 0.02};
  auto params = EstimatorParams::random(cfg, 77);
  // float32 on disk: pre-round so the comparison is exact.
  for (auto* t : params.tensors())
    for (Eigen::Index i = 0; i < t->size(); ++i) t->value.data()[i] = static_cast<float>(t->value.data()[i]);
  write_checkpoint({params, 1234}, dir / "a.vtnet");
  const auto back = read_checkpoint(dir / "a.vtnet");
  CHECK(back.step == 1234);
  CHECK(back.params.config.depth == 3);
  CHECK(back.params.config.gating == false);
  CHECK(back.params.config.leaky_slope == 0.02);
  const auto a = params.tensors();
  const auto b = back.params.tensors();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->value == b[i]->value);

  write_checkpoint(back, dir / "b.vtnet");
  std::ifstream fa(dir / "a.vtnet", std::ios::binary), fb(dir / "b.vtnet", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
  CHECK(sa == sb);

  std::string bad = sa;
  bad[0] = 'X';
  std::ofstream(dir / "bad.vtnet", std::ios::binary) << bad;
  CHECK_THROWS_AS(read_checkpoint(dir / "bad.vtnet"), std::runtime_error);
  std::string ver = sa;
  ver[5] = 9;
  std::ofstream(dir / "ver.vtnet", std::ios::binary) << ver;
  CHECK_THROWS_AS(read_checkpoint(dir / "ver.vtnet"), UnsupportedError);
  std::ofstream(dir / "short.vtnet", std::ios::binary) << sa.substr(0, sa.size() - 5);
  CHECK_THROWS(read_checkpoint(dir / "short.vtnet"));
}
