#include "vtrack/phantom.hpp"

#include "vtrack/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace vtrack {

using nlohmann::json;

PhantomSpec PhantomSpec::thin(std::uint64_t seed, int n_branches) {
  PhantomSpec s;
  s.preset = "thin";
  s.seed = seed;
  s.n_branches = n_branches;
  return s;
}

PhantomSpec PhantomSpec::wide(std::uint64_t seed, int n_branches) {
  PhantomSpec s;
  s.preset = "wide";
  s.seed = seed;
  s.n_branches = n_branches;
  s.radius_range = {2.0, 20.0};
  s.root_radius = {9.0, 14.0};
  s.taper = 0.6;
  s.child_length = {25.0, 50.0};
  s.curvature_amplitude = {0.0, 4.0};
  s.curvature_period = {40.0, 80.0};
  s.dims = {120, 120, 120};
  s.spacing = 1.0;
  s.margin = 3.0;
  s.separation = 2.0;
  s.edge_softness = 1.0;
  s.point_spacing = 0.5;
  return s;
}

PhantomSpec PhantomSpec::preset_named(const std::string& name, std::uint64_t seed, int n_branches) {
  if (name == "thin") return thin(seed, n_branches);
  if (name == "wide") return wide(seed, n_branches);
  throw std::invalid_argument("unknown phantom preset '" + name + "' (expected thin or wide)");
}

void PhantomSpec::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("phantom spec: " + what); };
  if (n_branches < 1 || n_branches > 16) fail("n_branches must be in [1, 16]");
  if (!(radius_range[0] > 0.0 && radius_range[0] <= radius_range[1])) fail("radius_range must be positive and ordered");
  if (!(root_radius[0] >= radius_range[0] && root_radius[1] <= radius_range[1] && root_radius[0] <= root_radius[1])) {
    fail("root_radius must lie inside radius_range");
  }
  if (!(taper > 0.0 && taper <= 1.0)) fail("taper must be in (0, 1]");
  if (!(child_ratio > 0.0 && child_ratio <= 1.0)) fail("child_ratio must be in (0, 1]");
  if (!(branch_angle_range[0] > 0.0 && branch_angle_range[0] <= branch_angle_range[1] &&
        branch_angle_range[1] < std::numbers::pi / 2)) {
    fail("branch_angle_range must be ordered within (0, pi/2)");
  }
  if (!(child_length[0] > 0.0 && child_length[0] <= child_length[1])) fail("child_length must be positive and ordered");
  if (!(curvature_amplitude[0] >= 0.0 && curvature_amplitude[0] <= curvature_amplitude[1])) fail("curvature_amplitude");
  if (!(curvature_period[0] > 0.0 && curvature_period[0] <= curvature_period[1])) fail("curvature_period");
  for (int d : dims) {
    if (d < 8) fail("dims must be at least 8 voxels");
  }
  if (!(spacing > 0.0 && point_spacing > 0.0)) fail("spacing must be positive");
  if (!(edge_softness >= 0.0 && noise_sigma >= 0.0 && margin >= 0.0 && separation >= 0.0)) fail("negative tolerance");
}

json PhantomSpec::to_json() const {
  return {{"preset", preset},
          {"seed", seed},
          {"n_branches", n_branches},
          {"radius_range", radius_range},
          {"root_radius", root_radius},
          {"taper", taper},
          {"child_ratio", child_ratio},
          {"branch_angle_range", branch_angle_range},
          {"child_length", child_length},
          {"curvature_amplitude", curvature_amplitude},
          {"curvature_period", curvature_period},
          {"dims", dims},
          {"spacing", spacing},
          {"margin", margin},
          {"separation", separation},
          {"lumen_value", lumen_value},
          {"background_value", background_value},
          {"edge_softness", edge_softness},
          {"noise_sigma", noise_sigma},
          {"point_spacing", point_spacing}};
}

PhantomSpec PhantomSpec::from_json(const json& doc) {
  // Start from the named preset (if any) and override individual fields.
  PhantomSpec s;
  if (doc.contains("preset") && doc["preset"] != "custom") {
    s = preset_named(doc["preset"].get<std::string>(), doc.value("seed", std::uint64_t{1}),
                     doc.value("n_branches", 5));
  }
  auto take = [&](const char* key, auto& field) {
    if (doc.contains(key)) doc.at(key).get_to(field);
  };
  take("seed", s.seed);
  take("n_branches", s.n_branches);
  take("radius_range", s.radius_range);
  take("root_radius", s.root_radius);
  take("taper", s.taper);
  take("child_ratio", s.child_ratio);
  take("branch_angle_range", s.branch_angle_range);
  take("child_length", s.child_length);
  take("curvature_amplitude", s.curvature_amplitude);
  take("curvature_period", s.curvature_period);
  take("dims", s.dims);
  take("spacing", s.spacing);
  take("margin", s.margin);
  take("separation", s.separation);
  take("lumen_value", s.lumen_value);
  take("background_value", s.background_value);
  take("edge_softness", s.edge_softness);
  take("noise_sigma", s.noise_sigma);
  take("point_spacing", s.point_spacing);
  return s;
}

namespace {

constexpr int kPlacementAttempts = 1000;

struct Curve {
  std::vector<Vec3> points;
  std::vector<double> arc;
  std::vector<double> radius;
};

Vec3 any_perpendicular(const Vec3& d, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  while (true) {
    const Vec3 v(n(rng), n(rng), n(rng));
    const Vec3 p = d.cross(v);
    if (p.norm() > 1e-3) return p.normalized();
  }
}

// Straight run along `dir` with a sinusoidal bend in a random normal plane.
Curve make_curve(const Vec3& start, const Vec3& dir, double length, double r0, double r1, double amplitude,
                 double period, double phase, const Vec3& normal, double ds) {
  Curve c;
  const int n = std::max(2, static_cast<int>(std::ceil(length / ds)) + 1);
  const double base = std::sin(phase);
  for (int i = 0; i < n; ++i) {
    const double s = length * i / (n - 1);
    const double bend = amplitude * (std::sin(2.0 * std::numbers::pi * s / period + phase) - base);
    c.points.push_back(start + s * dir + bend * normal);
  }
  c.arc.assign(n, 0.0);
  for (int i = 1; i < n; ++i) c.arc[i] = c.arc[i - 1] + (c.points[i] - c.points[i - 1]).norm();
  for (int i = 0; i < n; ++i) c.radius.push_back(r0 + (r1 - r0) * c.arc[i] / c.arc.back());
  return c;
}

bool inside(const Vec3& p, double clearance, const Vec3& extent) {
  for (int a = 0; a < 3; ++a) {
    if (p[a] - clearance < 0.0 || p[a] + clearance > extent[a]) return false;
  }
  return true;
}

double smooth_membership(double signed_depth, double softness) {
  if (softness <= 0.0) return signed_depth >= 0.0 ? 1.0 : 0.0;
  const double s = std::clamp((signed_depth / softness + 1.0) / 2.0, 0.0, 1.0);
  return s * s * (3.0 - 2.0 * s);
}

void rasterize(const Phantom& ph, std::vector<float>& membership) {
  const auto& vol = ph.volume;
  const double soft = ph.spec.edge_softness;
  const auto& dims = vol.dims();
  const auto& pts = ph.skeleton.points;
  for (const auto& [ia, ib] : ph.skeleton.edges) {
    const Vec3& a = pts[ia].position;
    const Vec3& b = pts[ib].position;
    const double ra = pts[ia].radius, rb = pts[ib].radius;
    const double reach = std::max(ra, rb) + soft;
    std::array<int, 3> lo{}, hi{};
    for (int ax = 0; ax < 3; ++ax) {
      const double mn = std::min(a[ax], b[ax]) - reach, mx = std::max(a[ax], b[ax]) + reach;
      lo[ax] = std::max(0, static_cast<int>(std::floor((mn - vol.origin()[ax]) / vol.spacing()[ax])));
      hi[ax] = std::min(dims[ax] - 1, static_cast<int>(std::ceil((mx - vol.origin()[ax]) / vol.spacing()[ax])));
    }
    const Vec3 ab = b - a;
    const double len2 = ab.squaredNorm();
    for (int k = lo[2]; k <= hi[2]; ++k) {
      for (int j = lo[1]; j <= hi[1]; ++j) {
        for (int i = lo[0]; i <= hi[0]; ++i) {
          const Vec3 x = vol.voxel_center(i, j, k);
          const double t = len2 > 0.0 ? std::clamp((x - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
          const double d = (x - (a + t * ab)).norm();
          const double m = smooth_membership(ra + t * (rb - ra) - d, soft);
          float& cell = membership[vol.index(i, j, k)];
          cell = std::max(cell, static_cast<float>(m));
        }
      }
    }
  }
}

}  // namespace

Vec3 Phantom::default_seed() const {
  // Among root points between 15% and 50% of its length, the one farthest
  // from any junction, so that the seed sees a plain tube.
  const auto& root = branches.front();
  const double len = root.arc_length.back();
  std::vector<double> junctions;
  for (std::size_t b = 1; b < branches.size(); ++b) {
    if (branches[b].parent != 0) continue;
    const int attach = branches[b].points.front();
    const auto it = std::find(root.points.begin(), root.points.end(), attach);
    if (it != root.points.end()) junctions.push_back(root.arc_length[it - root.points.begin()]);
  }
  std::size_t best = root.points.size() / 4;
  double best_gap = -1.0;
  for (std::size_t i = 0; i < root.points.size(); ++i) {
    const double s = root.arc_length[i];
    if (s < 0.15 * len || s > 0.5 * len) continue;
    double gap = std::numeric_limits<double>::infinity();
    for (double j : junctions) gap = std::min(gap, std::abs(s - j));
    if (gap > best_gap + 1e-12) {
      best_gap = gap;
      best = i;
    }
  }
  return skeleton.points[root.points[best]].position;
}

Phantom generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  Phantom ph;
  ph.spec = spec;
  const Vec3 extent = Vec3(spec.dims[0] - 1, spec.dims[1] - 1, spec.dims[2] - 1) * spec.spacing;
  const double r_lo = spec.radius_range[0];

  std::vector<Curve> curves;

  // Root: crosses the volume along +x with a small tilt.
  bool placed = false;
  for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
    const double r0 = uniform(spec.root_radius[0], spec.root_radius[1]);
    const double r1 = std::max(r_lo, r0 * spec.taper);
    const double amp = uniform(spec.curvature_amplitude[0], spec.curvature_amplitude[1]);
    const Vec3 dir = Vec3(1.0, uniform(-0.15, 0.15), uniform(-0.15, 0.15)).normalized();
    const double clear = spec.margin + r0 + amp;
    const Vec3 start(clear, extent.y() / 2 + uniform(-0.1, 0.1) * extent.y(),
                     extent.z() / 2 + uniform(-0.1, 0.1) * extent.z());
    const double length = (extent.x() - 2.0 * clear) / dir.x();
    if (length <= 4.0 * r0) break;
    const Curve c = make_curve(start, dir, length, r0, r1, amp,
                               uniform(spec.curvature_period[0], spec.curvature_period[1]),
                               uniform(0.0, 2.0 * std::numbers::pi), any_perpendicular(dir, rng),
                               spec.point_spacing);
    placed = true;
    for (std::size_t i = 0; i < c.points.size() && placed; ++i) {
      placed = inside(c.points[i], c.radius[i] + spec.margin, extent);
    }
    if (placed) {
      PhantomBranch br;
      br.start_radius = r0;
      br.end_radius = r1;
      br.arc_length = c.arc;
      for (std::size_t i = 0; i < c.points.size(); ++i) {
        br.points.push_back(static_cast<int>(ph.skeleton.points.size()));
        ph.skeleton.points.push_back({c.points[i], c.radius[i]});
        if (i > 0) ph.skeleton.edges.push_back({br.points[i - 1], br.points[i]});
      }
      ph.branches.push_back(std::move(br));
      curves.push_back(c);
    }
  }
  if (!placed) throw InfeasibleSpecError("phantom spec: the root vessel does not fit inside the volume");

  std::vector<std::vector<char>> attached(1, std::vector<char>(curves[0].points.size(), 0));
  for (int b = 1; b < spec.n_branches; ++b) {
    placed = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
      const int parent = std::uniform_int_distribution<int>(0, b - 1)(rng);
      const Curve& pc = curves[parent];
      const double parent_len = pc.arc.back();
      const double at = uniform(0.2, 0.8) * parent_len;
      const auto vi = static_cast<std::size_t>(std::lower_bound(pc.arc.begin(), pc.arc.end(), at) - pc.arc.begin());
      if (vi == 0 || vi + 1 >= pc.points.size() || attached[parent][vi]) continue;

      const double rp = pc.radius[vi];
      const double r0 = spec.child_ratio * rp;
      if (r0 < r_lo) continue;
      const double r1 = std::max(r_lo, r0 * spec.taper);
      const Vec3 tangent = (pc.points[vi + 1] - pc.points[vi - 1]).normalized();
      const Vec3 axis = any_perpendicular(tangent, rng);
      const double theta = uniform(spec.branch_angle_range[0], spec.branch_angle_range[1]);
      const Vec3 dir = (tangent * std::cos(theta) + axis.cross(tangent) * std::sin(theta)).normalized();
      const double length = uniform(spec.child_length[0], spec.child_length[1]);
      const Curve c = make_curve(pc.points[vi], dir, length, r0, r1,
                                 uniform(spec.curvature_amplitude[0], spec.curvature_amplitude[1]),
                                 uniform(spec.curvature_period[0], spec.curvature_period[1]),
                                 uniform(0.0, 2.0 * std::numbers::pi), any_perpendicular(dir, rng),
                                 spec.point_spacing);

      // Near the junction the child necessarily overlaps its parent; it
      // clears the parent lumen after about (rp + r0 + sep) / sin(theta).
      const double junction = (rp + r0 + spec.separation) / std::sin(theta);
      bool ok = true;
      for (std::size_t i = 0; i < c.points.size() && ok; ++i) {
        ok = inside(c.points[i], c.radius[i] + spec.margin, extent);
        for (std::size_t o = 0; o < curves.size() && ok; ++o) {
          const Curve& oc = curves[o];
          for (std::size_t j = 0; j < oc.points.size(); ++j) {
            if (static_cast<int>(o) == parent &&
                (c.arc[i] < junction || std::abs(oc.arc[j] - pc.arc[vi]) < junction)) {
              continue;
            }
            if ((c.points[i] - oc.points[j]).norm() < c.radius[i] + oc.radius[j] + spec.separation) {
              ok = false;
              break;
            }
          }
        }
      }
      if (!ok) continue;

      // Keep junctions on one parent well apart.
      for (std::size_t j = 0; j < pc.points.size(); ++j) {
        if (std::abs(pc.arc[j] - pc.arc[vi]) < junction) attached[parent][j] = 1;
      }
      PhantomBranch br;
      br.parent = parent;
      br.start_radius = r0;
      br.end_radius = r1;
      br.arc_length = c.arc;
      br.points.push_back(ph.branches[parent].points[vi]);
      for (std::size_t i = 1; i < c.points.size(); ++i) {
        br.points.push_back(static_cast<int>(ph.skeleton.points.size()));
        ph.skeleton.points.push_back({c.points[i], c.radius[i]});
        ph.skeleton.edges.push_back({br.points[i - 1], br.points[i]});
      }
      ph.branches.push_back(std::move(br));
      curves.push_back(c);
      attached.emplace_back(c.points.size(), 0);
      placed = true;
    }
    if (!placed) {
      throw InfeasibleSpecError("phantom spec: could not place branch " + std::to_string(b + 1) + " of " +
                                std::to_string(spec.n_branches) + " inside the volume");
    }
  }

  ph.volume = VolumeGrid(spec.dims, Vec3::Constant(spec.spacing), Vec3::Zero(), spec.background_value);
  std::vector<float> membership(ph.volume.voxel_count(), 0.0f);
  rasterize(ph, membership);
  std::mt19937_64 noise_rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> noise(0.0, 1.0);
  auto data = ph.volume.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    double v = spec.background_value + (spec.lumen_value - spec.background_value) * membership[i];
    if (spec.noise_sigma > 0.0) v += spec.noise_sigma * noise(noise_rng);
    data[i] = static_cast<float>(v);
  }
  return ph;
}

OracleEstimator::OracleEstimator(const SkeletonGraph& reference, const SphereGraph& graph)
    : locator_(reference), graph_(graph) {}

DirectionField OracleEstimator::estimate(const Vec3& position) const {
  return build_direction_target(position, locator_, graph_).field;
}

}  // namespace vtrack
