#include "vtrack/cli.hpp"
#include "vtrack/metrics.hpp"
#include "vtrack/phantom.hpp"
#include "vtrack/tracker.hpp"
#include "vtrack/training.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace vtrack;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Volumes cross the boundary as (z, y, x) arrays, i.e. numpy's C order over
// the x-fastest storage.
FloatArray volume_array(const VolumeGrid& v) {
  const auto& d = v.dims();
  FloatArray out({d[2], d[1], d[0]});
  std::copy(v.data().begin(), v.data().end(), out.mutable_data());
  return out;
}

VolumeGrid volume_from_array(const FloatArray& data, const Vec3& spacing, const Vec3& origin, double pad) {
  if (data.ndim() != 3) throw std::invalid_argument("volume data must be a 3D array indexed [z, y, x]");
  const std::array<int, 3> dims{static_cast<int>(data.shape(2)), static_cast<int>(data.shape(1)),
                                static_cast<int>(data.shape(0))};
  std::vector<float> values(data.data(), data.data() + data.size());
  return VolumeGrid(dims, spacing, origin, std::move(values), pad);
}

SkeletonGraph graph_from_arrays(const DoubleArray& points, const DoubleArray& radii,
                                const std::vector<std::array<int, 2>>& edges) {
  if (points.ndim() != 2 || points.shape(1) != 3) throw std::invalid_argument("points must have shape (n, 3)");
  if (radii.ndim() != 1 || radii.shape(0) != points.shape(0)) throw std::invalid_argument("radii must have shape (n,)");
  SkeletonGraph g;
  auto p = points.unchecked<2>();
  auto r = radii.unchecked<1>();
  for (py::ssize_t i = 0; i < points.shape(0); ++i) g.points.push_back({Vec3(p(i, 0), p(i, 1), p(i, 2)), r(i)});
  g.edges = edges;
  g.validate();
  return g;
}

py::dict graph_dict(const SkeletonGraph& g) {
  DoubleArray points({static_cast<py::ssize_t>(g.size()), py::ssize_t{3}});
  DoubleArray radii(static_cast<py::ssize_t>(g.size()));
  auto p = points.mutable_unchecked<2>();
  auto r = radii.mutable_unchecked<1>();
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (int a = 0; a < 3; ++a) p(i, a) = g.points[i].position[a];
    r(i) = g.points[i].radius;
  }
  py::dict d;
  d["points"] = points;
  d["radii"] = radii;
  d["edges"] = g.edges;
  return d;
}

py::dict report_dict(const EvalReport& r) { return py::module_::import("json").attr("loads")(r.to_json().dump()); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Vessel skeleton tracking core (C++)";

  py::class_<SphereGraph>(m, "SphereGraph")
      .def_static("build", &SphereGraph::build, py::arg("level") = 2)
      .def_property_readonly("level", &SphereGraph::level)
      .def("__len__", &SphereGraph::size)
      .def_property_readonly("nodes",
                             [](const SphereGraph& g) {
                               DoubleArray out({static_cast<py::ssize_t>(g.size()), py::ssize_t{3}});
                               auto o = out.mutable_unchecked<2>();
                               for (std::size_t i = 0; i < g.size(); ++i)
                                 for (int a = 0; a < 3; ++a) o(i, a) = g.node(i)[a];
                               return out;
                             })
      .def_property_readonly("edges", &SphereGraph::edges)
      .def_property_readonly("faces", &SphereGraph::faces)
      .def("neighbors",
           [](const SphereGraph& g, std::size_t i) {
             if (i >= g.size()) throw py::index_error("node index out of range");
             const auto n = g.neighbors(i);
             return std::vector<int>(n.begin(), n.end());
           })
      .def("haversine", py::overload_cast<std::size_t, std::size_t>(&SphereGraph::haversine, py::const_))
      .def("nearest_node", &SphereGraph::nearest_node, py::arg("direction"))
      .def(
          "local_maxima",
          [](const SphereGraph& g, const std::vector<double>& field, double threshold) {
            if (field.size() != g.size()) throw std::invalid_argument("field length must equal the node count");
            return g.local_maxima(field, threshold);
          },
          py::arg("field"), py::arg("threshold") = 0.5);

  m.def("haversine", py::overload_cast<const Vec3&, const Vec3&>(&haversine));

  py::class_<VolumeGrid>(m, "VolumeGrid")
      .def(py::init(&volume_from_array), py::arg("data"), py::arg("spacing") = Vec3::Ones(),
           py::arg("origin") = Vec3::Zero(), py::arg("pad_value") = 0.0)
      .def_property_readonly("dims", &VolumeGrid::dims)
      .def_property_readonly("spacing", &VolumeGrid::spacing)
      .def_property_readonly("origin", &VolumeGrid::origin)
      .def("array", &volume_array, "Copy of the voxels as a [z, y, x] float32 array")
      .def("sample", &VolumeGrid::sample, py::arg("point"))
      .def("contains", &VolumeGrid::contains, py::arg("point"));

  m.def("read_volume", &read_volume, py::arg("path"));
  m.def("write_volr", &write_volr, py::arg("volume"), py::arg("path"));
  m.def(
      "sample_multiscale",
      [](const VolumeGrid& v, const Vec3& center, const std::vector<double>& scales, const SphereGraph& g,
         int ray_samples) {
        const auto s = sample_multiscale(v, center, scales, g, ray_samples);
        std::vector<Matrix> out = s.features;
        return out;
      },
      py::arg("volume"), py::arg("center"), py::arg("scales"), py::arg("graph"),
      py::arg("ray_samples") = kDefaultRaySamples, "Per-scale (nodes x samples) ray intensity matrices");

  m.def(
      "generate_phantom",
      [](const std::string& preset, std::uint64_t seed, int branches) {
        const Phantom ph = generate_phantom(PhantomSpec::preset_named(preset, seed, branches));
        py::dict d;
        d["volume"] = ph.volume;
        d["skeleton"] = graph_dict(ph.skeleton);
        d["default_seed"] = ph.default_seed();
        d["spec"] = py::module_::import("json").attr("loads")(ph.spec.to_json().dump());
        return d;
      },
      py::arg("preset") = "thin", py::arg("seed") = 1, py::arg("branches") = 5);

  m.def(
      "direction_target",
      [](const Vec3& position, const DoubleArray& points, const DoubleArray& radii,
         const std::vector<std::array<int, 2>>& edges, const SphereGraph& g) {
        const SkeletonLocator loc(graph_from_arrays(points, radii, edges));
        const auto t = build_direction_target(position, loc, g);
        return py::make_tuple(t.field.probabilities, t.field.radius, t.in_lumen);
      },
      py::arg("position"), py::arg("points"), py::arg("radii"), py::arg("edges"), py::arg("graph"),
      "Labels, radius and in-lumen flag for one position");

  m.def(
      "geometry_weights",
      [](const std::vector<double>& labels, const SphereGraph& g, double w_p, bool enabled) {
        return geometry_weights(labels, g, w_p, enabled);
      },
      py::arg("labels"), py::arg("graph"), py::arg("w_p") = 10.0, py::arg("enabled") = true);

  m.def(
      "track_oracle",
      [](const VolumeGrid& volume, const DoubleArray& points, const DoubleArray& radii,
         const std::vector<std::array<int, 2>>& edges, const std::vector<Vec3>& seeds, int level, int max_fronts) {
        const SkeletonGraph ref = graph_from_arrays(points, radii, edges);
        const SphereGraph g = SphereGraph::build(level);
        const OracleEstimator est(ref, g);
        TrackerConfig cfg;
        cfg.max_fronts = max_fronts;
        const auto result = propagate(seeds, est, volume, g, cfg);
        py::dict d = graph_dict(result.tree.to_graph());
        d["status"] = to_string(result.status);
        return d;
      },
      py::arg("volume"), py::arg("points"), py::arg("radii"), py::arg("edges"), py::arg("seeds"),
      py::arg("level") = 4, py::arg("max_fronts") = 20);

  m.def(
      "evaluate",
      [](const DoubleArray& pred_points, const DoubleArray& pred_radii,
         const std::vector<std::array<int, 2>>& pred_edges, const DoubleArray& ref_points,
         const DoubleArray& ref_radii, const std::vector<std::array<int, 2>>& ref_edges, double step) {
        return report_dict(evaluate(graph_from_arrays(pred_points, pred_radii, pred_edges),
                                    graph_from_arrays(ref_points, ref_radii, ref_edges), {step}));
      },
      py::arg("pred_points"), py::arg("pred_radii"), py::arg("pred_edges"), py::arg("ref_points"),
      py::arg("ref_radii"), py::arg("ref_edges"), py::arg("step") = kDefaultResampleStep);

  m.def(
      "betti_numbers",
      [](std::size_t n, const std::vector<std::array<int, 2>>& edges) {
        SkeletonGraph g;
        g.points.resize(n);
        g.edges = edges;
        g.validate();
        const auto b = betti_numbers(g);
        return py::make_tuple(b.beta0, b.beta1);
      },
      py::arg("node_count"), py::arg("edges"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run a vtrack command line; returns (exit_code, stdout, stderr)");

  m.attr("__version__") = "0.3.0";
}
