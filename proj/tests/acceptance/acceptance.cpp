// End-to-end acceptance checks. One PASS/FAIL line per criterion; exit
// status 1 if any fails. Pipelines go through the CLI entry point so the
// same code paths as the `vtrack` executable are exercised.

#include "support.hpp"
#include "vtrack/cli.hpp"
#include "vtrack/metrics.hpp"
#include "vtrack/tracker.hpp"
#include "vtrack/training.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

using namespace vtrack;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Run {
  int code;
  std::string out, err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

void must(const Run& r, const std::string& what) {
  if (r.code != 0) throw std::runtime_error(what + " failed (exit " + std::to_string(r.code) + "): " + r.err);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// gen-phantom, retrying with a shifted seed when the spec is infeasible.
// Returns the seed actually used.
std::uint64_t make_phantom(const fs::path& dir, const std::string& preset, std::uint64_t seed, int branches) {
  for (int attempt = 0; attempt < 10; ++attempt, seed += 1000) {
    const auto r = cli({"--seed", std::to_string(seed), "gen-phantom", "--preset", preset, "--branches",
                        std::to_string(branches), "--out", dir.string()});
    if (r.code == 0) return seed;
  }
  throw std::runtime_error("no feasible phantom near seed " + std::to_string(seed));
}

EvalReport eval(const fs::path& pred, const fs::path& ref, const fs::path& out) {
  const auto r = cli({"eval", "--pred", pred.string(), "--ref", ref.string(), "--out", out.string()});
  must(r, "eval");
  return EvalReport::from_json(json::parse(r.out));
}

// Quick level-1 training run used by the plumbing checks.
json small_training(int steps) {
  return {{"steps", steps}, {"batch_size", 4}, {"sphere_level", 1}, {"s_max", 6.0},
          {"net", {{"hidden_width", 16}, {"depth", 2}}}};
}

// --- criteria -----------------------------------------------------------------

Outcome oracle_topology(const fs::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  int b1_zero = 0, b0_zero = 0;
  double ov = 0.0;
  const int cases = 20;
  for (int i = 0; i < cases; ++i) {
    const std::string preset = i % 2 == 0 ? "thin" : "wide";
    const fs::path dir = work / fmt("case%02d", i);
    make_phantom(dir, preset, 100 + i, 3 + i % 8);
    must(cli({"track", "--phantom", dir.string(), "--oracle", "--sphere-level", "4", "--out",
              (dir / "pred.json").string()}),
         "track --oracle");
    const auto rep = eval(dir / "pred.json", dir / "skeleton.json", dir / "report.json");
    b1_zero += rep.beta1_err == 0;
    b0_zero += rep.beta0_err == 0;
    ov += rep.ov;
  }
  ov /= cases;
  const double secs = seconds_since(t0);
  return {b1_zero == cases && b0_zero >= cases - 1 && ov >= 0.95 && secs <= 120.0,
          fmt("beta1_err=0 on %d/%d, beta0_err=0 on %d/%d, mean OV %.4f, %.1f s", b1_zero, cases, b0_zero, cases, ov,
              secs)};
}

Outcome learned_pipeline(const fs::path& work, int steps) {
  const fs::path cfg = work / "train.json";
  std::ofstream(cfg) << json{{"steps", steps},
                             {"batch_size", 8},
                             {"lr", 5e-4},
                             {"sphere_level", 2},
                             {"net", {{"hidden_width", 32}, {"depth", 4}}}}
                            .dump(2);
  std::vector<std::string> train{"--seed", "11", "train", "--config", cfg.string(), "--preset", "thin", "--log-every",
                                 "0", "--out", (work / "model").string()};
  for (int i = 0; i < 8; ++i) {
    const fs::path dir = work / fmt("train%d", i);
    make_phantom(dir, "thin", 500 + i, 3 + i % 5);
    train.insert(train.end(), {"--phantom", dir.string()});
  }
  const auto t0 = std::chrono::steady_clock::now();
  must(cli(train), "train");
  const double train_secs = seconds_since(t0);

  double ov = 0.0;
  int b1_zero = 0;
  long worst_b0 = 0;
  std::string per_case;
  for (int i = 0; i < 4; ++i) {
    const fs::path dir = work / fmt("test%d", i);
    make_phantom(dir, "thin", 900 + i, 4 + i);
    must(cli({"track", "--phantom", dir.string(), "--checkpoint", (work / "model" / "model.vtnet").string(),
              "--scales", "thin", "--sphere-level", "2", "--out", (dir / "pred.json").string()}),
         "track");
    const auto rep = eval(dir / "pred.json", dir / "skeleton.json", dir / "report.json");
    ov += rep.ov / 4.0;
    b1_zero += rep.beta1_err == 0;
    worst_b0 = std::max(worst_b0, rep.beta0_err);
    per_case += fmt(" [OV %.3f b0 %ld b1 %ld]", rep.ov, rep.beta0_err, rep.beta1_err);
  }
  return {ov >= 0.85 && b1_zero == 4 && worst_b0 <= 3 && train_secs <= 1800.0,
          fmt("%d steps in %.0f s; mean OV %.4f, beta1_err=0 on %d/4, max beta0_err %ld;", steps, train_secs, ov,
              b1_zero, worst_b0) +
              per_case};
}

Outcome gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto g = SphereGraph::build(1);
  MeshNet net(EstimatorParams::random(NetConfig{kDefaultRaySamples, 8, 2, true, 0.01}, 21));
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MultiScaleSample s;
  for (int m = 0; m < 3; ++m) {
    s.scales.push_back(1.0 + m);
    s.features.push_back(Matrix::NullaryExpr(static_cast<Eigen::Index>(g.size()), kDefaultRaySamples,
                                             [&] { return u(rng); }));
  }
  DirectionField y{std::vector<double>(g.size(), 0.0), 2.3};
  y.probabilities[g.nearest_node(Vec3(1, 0.2, 0))] = 1.0;
  y.probabilities[g.nearest_node(Vec3(-1, 0.1, 0.3))] = 1.0;
  const auto w = geometry_weights(y.probabilities, g, 10.0);

  net.params().zero_grad();
  const auto l = joint_loss(net.forward(s, g), y, w, 5.0);
  net.backward(l.d_probabilities, l.d_radius);
  auto total = [&] { return joint_loss(net.predict(s, g), y, w, 5.0).total; };
  double worst = 0.0;
  for (const auto& p : testing::random_probes(net.params(), 100, 77)) {
    auto* t = net.params().tensors()[p.tensor];
    const double fd = testing::parameter_difference(*t, p.row, p.col, total);
    worst = std::max(worst, testing::relative_error(t->grad(p.row, p.col), fd));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-4 && secs <= 30.0,
          fmt("%zu nodes, 100 probes, worst relative error %.2e, %.2f s", g.size(), worst, secs)};
}

Outcome weight_table() {
  const auto g = SphereGraph::build(2);
  std::vector<double> labels(g.size(), 0.0);
  const auto z = g.nearest_node(Vec3(0, 0, 1));
  const auto x = g.nearest_node(Vec3(1, 0, 0));
  labels[z] = 1.0;
  const auto w = geometry_weights(labels, g, 10.0);
  const double expect = std::tanh(M_PI / 2.0);
  const bool ok = w[z] == 10.0 && node_weight(true, 0.7, 10.0) == 10.0 && std::abs(w[x] - expect) <= 1e-12 &&
                  node_weight(false, 0.0, 10.0) == 0.0 && (g.node(x) - Vec3(1, 0, 0)).norm() < 1e-15 &&
                  (g.node(z) - Vec3(0, 0, 1)).norm() < 1e-15;
  return {ok, fmt("w(pos)=%.17g, w(H=pi/2)=%.17g (tanh %.17g), w(H=0)=%.17g", w[z], w[x], expect,
                  node_weight(false, 0.0, 10.0))};
}

Outcome occupancy_equivalence() {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> pos(-8.0, 8.0), rad(0.2, 4.0);
  int disagreements = 0;
  const int instances = 1000;
  for (int t = 0; t < instances; ++t) {
    SkeletonTree tree;
    std::vector<Vec3> p;
    std::vector<double> r;
    const int n = 1 + static_cast<int>(rng() % 30);
    for (int i = 0; i < n; ++i) {
      p.emplace_back(pos(rng), pos(rng), pos(rng));
      r.push_back(rad(rng));
      tree.add(p.back(), r.back(), i == 0 ? SkeletonTree::kNoParent : static_cast<int>(rng() % i), i == 0 ? 0 : 1);
    }
    const int parent = rng() % 4 == 0 ? SkeletonTree::kNoParent : static_cast<int>(rng() % n);
    const Vec3 c(pos(rng), pos(rng), pos(rng));
    disagreements += occupancy_filter(c, tree, parent) != testing::brute_occupancy(c, p, r, parent);
  }
  return {disagreements == 0, fmt("%d instances, %d disagreements", instances, disagreements)};
}

Outcome betti_equivalence() {
  std::mt19937_64 rng(41);
  int disagreements = 0;
  for (int t = 0; t < 500; ++t) {
    const auto g = testing::random_graph(rng, 20);
    const auto b = betti_numbers(g);
    const auto ref = testing::brute_betti(g.size(), g.edges);
    disagreements += b.beta0 != ref.beta0 || b.beta1 != ref.beta1;
  }
  return {disagreements == 0, fmt("500 graphs, %d disagreements", disagreements)};
}

Outcome equivariance() {
  const auto g = SphereGraph::build(2);
  const int n = 41;
  const Vec3 c = Vec3::Constant((n - 1) / 2.0);
  // Smooth random field: a handful of Gaussian blobs.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, n - 1.0);
  std::vector<Vec3> blobs;
  for (int b = 0; b < 12; ++b) blobs.emplace_back(u(rng), u(rng), u(rng));
  VolumeGrid v({n, n, n}, Vec3::Ones(), Vec3::Zero());
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (const auto& b : blobs) s += std::exp(-(Vec3(i, j, k) - b).squaredNorm() / 18.0);
        v.at(i, j, k) = static_cast<float>(s);
      }
  MeshNet net(EstimatorParams::random(NetConfig{kDefaultRaySamples, 16, 3, true, 0.01}, 9));
  const auto scales = online_scales("thin");
  const auto base = net.predict(sample_multiscale(v, c, scales, g), g);

  double worst_p = 0.0, worst_r = 0.0;
  for (const Mat3& rot : icosahedral_generators()) {
    VolumeGrid w({n, n, n}, Vec3::Ones(), Vec3::Zero());
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
          const Vec3 q = rot * (Vec3(i, j, k) - c) + c;
          w.at(int(std::lround(q.x())), int(std::lround(q.y())), int(std::lround(q.z()))) = v.at(i, j, k);
        }
    const auto perm = g.symmetry_permutation(rot);
    const auto out = net.predict(sample_multiscale(w, c, scales, g), g);
    for (std::size_t i = 0; i < g.size(); ++i)
      worst_p = std::max(worst_p, std::abs(base.probabilities[i] - out.probabilities[perm[i]]));
    worst_r = std::max(worst_r, std::abs(base.radius - out.radius));
  }
  return {worst_p <= 1e-5 && worst_r <= 1e-5,
          fmt("2 generators, max |dp| %.2e, max |dR| %.2e", worst_p, worst_r)};
}

Outcome ablation(const fs::path& work) {
  const fs::path ph = work / "phantom";
  make_phantom(ph, "thin", 77, 4);
  const fs::path cfg = work / "train.json";
  std::ofstream(cfg) << small_training(150).dump(2);
  std::set<std::string> train_hashes, track_hashes;
  int completed = 0;
  for (const char* gating : {"on", "off"})
    for (const char* weighting : {"on", "off"}) {
      const fs::path out = work / (std::string("g") + gating + "_w" + weighting);
      must(cli({"train", "--config", cfg.string(), "--phantom", ph.string(), "--gating", gating, "--weighting",
                weighting, "--log-every", "0", "--out", out.string()}),
           "train");
      const auto r = cli({"track", "--phantom", ph.string(), "--checkpoint", (out / "model.vtnet").string(),
                          "--sphere-level", "1", "--out", (out / "pred.json").string()});
      must(r, "track");
      completed += read_json(out / "pred.log.json")["status"] == "completed";
      train_hashes.insert(read_json(out / "manifest.json")["config_hash"]);
      track_hashes.insert(read_json(out / "pred.manifest.json")["config_hash"]);
    }
  return {completed == 4 && train_hashes.size() == 4 && track_hashes.size() == 4,
          fmt("%d/4 completed, %zu distinct training manifests, %zu distinct tracking manifests", completed,
              train_hashes.size(), track_hashes.size())};
}

Outcome determinism(const fs::path& work) {
  auto pipeline = [&](const fs::path& dir, const std::string& threads) {
    make_phantom(dir / "phantom", "thin", 61, 5);
    const fs::path cfg = dir / "train.json";
    std::ofstream(cfg) << small_training(150).dump(2);
    must(cli({"--seed", "3", "train", "--config", cfg.string(), "--phantom", (dir / "phantom").string(),
              "--log-every", "0", "--out", (dir / "model").string()}),
         "train");
    must(cli({"--threads", threads, "track", "--phantom", (dir / "phantom").string(), "--checkpoint",
              (dir / "model" / "model.vtnet").string(), "--sphere-level", "1", "--out", (dir / "pred.json").string()}),
         "track");
    eval(dir / "pred.json", dir / "phantom" / "skeleton.json", dir / "report.json");
  };
  pipeline(work / "a", "1");
  pipeline(work / "b", "3");
  const bool model = slurp(work / "a" / "model" / "model.vtnet") == slurp(work / "b" / "model" / "model.vtnet");
  const bool skel = slurp(work / "a" / "pred.json") == slurp(work / "b" / "pred.json");
  const bool report = slurp(work / "a" / "report.json") == slurp(work / "b" / "report.json");
  const auto nodes = read_skeleton(work / "a" / "pred.json").size();
  return {model && skel && report && nodes > 10, fmt("checkpoint %s, skeleton JSON %s (%zu nodes), EvalReport %s",
                                       model ? "identical" : "DIFFERS", skel ? "identical" : "DIFFERS", nodes,
                                       report ? "identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vtrack acceptance checks"};
  std::string workdir = (fs::temp_directory_path() / "vtrack_acceptance").string();
  std::vector<std::string> only;
  int steps = 1000;
  app.add_option("--workdir", workdir, "Scratch directory for pipeline runs");
  app.add_option("--only", only, "Run only the named criteria");
  app.add_option("--train-steps", steps, "Steps for the learned-pipeline run");
  CLI11_PARSE(app, argc, argv);

  const fs::path root(workdir);
  auto scratch = [&](const std::string& name) {
    const fs::path d = root / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  };
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"oracle_topology", [&] { return oracle_topology(scratch("oracle")); }},
      {"learned_pipeline", [&] { return learned_pipeline(scratch("learned"), steps); }},
      {"gradient_check", gradient_check},
      {"loss_weight_table", weight_table},
      {"occupancy_oracle", occupancy_equivalence},
      {"betti_oracle", betti_equivalence},
      {"icosahedral_equivariance", equivariance},
      {"ablation_plumbing", [&] { return ablation(scratch("ablation")); }},
      {"determinism", [&] { return determinism(scratch("determinism")); }},
  };

  int failed = 0;
  for (const auto& [name, check] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << fmt(" (%.1f s)", seconds_since(t0))
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
