#include "vtrack/volume.hpp"

#include "vtrack/binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace vtrack {

double IntensityWindow::normalize(double v) const {
  return (std::clamp(v, lo, hi) - lo) / (hi - lo);
}

VolumeGrid::VolumeGrid(std::array<int, 3> dims, Vec3 spacing, Vec3 origin, double pad_value)
    : VolumeGrid(dims, spacing, origin,
                 std::vector<float>(static_cast<std::size_t>(std::max(dims[0], 0)) *
                                    std::max(dims[1], 0) * std::max(dims[2], 0)),
                 pad_value) {}

VolumeGrid::VolumeGrid(std::array<int, 3> dims, Vec3 spacing, Vec3 origin,
                       std::vector<float> data, double pad_value)
    : dims_(dims), spacing_(spacing), origin_(origin), data_(std::move(data)),
      pad_value_(pad_value) {
  for (int a = 0; a < 3; ++a) {
    if (dims_[a] <= 0) throw std::invalid_argument("volume dims must be positive");
    if (!(spacing_[a] > 0.0)) throw std::invalid_argument("volume spacing must be positive");
  }
  const std::size_t n = static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
  if (data_.size() != n) {
    throw std::invalid_argument("volume data has " + std::to_string(data_.size()) +
                                " values, dims require " + std::to_string(n));
  }
}

// Voxel-centre coordinates computed as origin + i * spacing can land a few
// ulps past the last centre once divided back.
constexpr double kGridSlack = 1e-9;

Vec3 VolumeGrid::upper_corner() const {
  return origin_ + Vec3(dims_[0] - 1, dims_[1] - 1, dims_[2] - 1).cwiseProduct(spacing_);
}

bool VolumeGrid::contains(const Vec3& p) const {
  const Vec3 u = (p - origin_).cwiseQuotient(spacing_);
  for (int a = 0; a < 3; ++a) {
    if (!(u[a] >= -kGridSlack && u[a] <= dims_[a] - 1 + kGridSlack)) return false;
  }
  return true;
}

double VolumeGrid::sample(const Vec3& p) const {
  Vec3 u = (p - origin_).cwiseQuotient(spacing_);
  std::array<int, 3> i0{};
  std::array<double, 3> f{};
  for (int a = 0; a < 3; ++a) {
    if (!(u[a] >= -kGridSlack && u[a] <= dims_[a] - 1 + kGridSlack)) return pad_value_;
    u[a] = std::clamp(u[a], 0.0, static_cast<double>(dims_[a] - 1));
    if (dims_[a] == 1) {
      i0[a] = 0;
      f[a] = 0.0;
      continue;
    }
    i0[a] = std::min(static_cast<int>(u[a]), dims_[a] - 2);
    f[a] = u[a] - i0[a];
  }
  const int dx = dims_[0] > 1 ? 1 : 0;
  const std::size_t sy = dims_[1] > 1 ? dims_[0] : 0;
  const std::size_t sz = dims_[2] > 1 ? static_cast<std::size_t>(dims_[0]) * dims_[1] : 0;
  const float* c = data_.data() + index(i0[0], i0[1], i0[2]);

  const double c00 = c[0] + f[0] * (c[dx] - c[0]);
  const double c10 = c[sy] + f[0] * (c[sy + dx] - c[sy]);
  const double c01 = c[sz] + f[0] * (c[sz + dx] - c[sz]);
  const double c11 = c[sz + sy] + f[0] * (c[sz + sy + dx] - c[sz + sy]);
  const double c0 = c00 + f[1] * (c10 - c00);
  const double c1 = c01 + f[1] * (c11 - c01);
  return c0 + f[2] * (c1 - c0);
}

MultiScaleSample sample_multiscale(const VolumeGrid& volume, const Vec3& center,
                                   std::span<const double> scales, const SphereGraph& graph,
                                   int ray_samples, const IntensityWindow& window) {
  if (scales.empty()) throw std::invalid_argument("sample_multiscale: empty scale list");
  if (ray_samples <= 0) throw std::invalid_argument("sample_multiscale: ray sample count must be positive");
  for (std::size_t m = 0; m < scales.size(); ++m) {
    if (!(scales[m] > 0.0) || (m > 0 && !(scales[m] > scales[m - 1]))) {
      throw std::invalid_argument("sample_multiscale: scales must be positive and strictly increasing");
    }
  }

  MultiScaleSample out;
  out.center = center;
  out.scales.assign(scales.begin(), scales.end());
  out.features.reserve(scales.size());
  const auto n = static_cast<Eigen::Index>(graph.size());
  for (double s : scales) {
    Matrix f(n, ray_samples);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vec3 step = graph.node(i) * (s / ray_samples);
      for (int k = 0; k < ray_samples; ++k) {
        f(i, k) = window.normalize(volume.sample(center + step * (k + 1)));
      }
    }
    out.features.push_back(std::move(f));
  }
  return out;
}

namespace {
constexpr char kVolrMagic[5] = {'V', 'O', 'L', 'R', '1'};
constexpr std::uint8_t kFloat32 = 1;
}  // namespace

void write_volr(const VolumeGrid& volume, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(kVolrMagic, sizeof(kVolrMagic));
  io::put_le<std::uint8_t>(out, kFloat32);
  io::put_le<std::uint16_t>(out, 0);
  for (int d : volume.dims()) io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  for (int a = 0; a < 3; ++a) io::put_le<double>(out, volume.spacing()[a]);
  for (int a = 0; a < 3; ++a) io::put_le<double>(out, volume.origin()[a]);
  io::put_le_array(out, volume.data());
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

VolumeGrid read_volr(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[5];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kVolrMagic, sizeof(magic)) != 0) {
    throw std::runtime_error(path.string() + ": not a VOLR1 file");
  }
  const auto type = io::get_le<std::uint8_t>(in);
  if (type != kFloat32) throw UnsupportedError(path.string() + ": unsupported VOLR scalar type");
  io::get_le<std::uint16_t>(in);
  std::array<int, 3> dims{};
  for (auto& d : dims) d = static_cast<int>(io::get_le<std::uint32_t>(in));
  Vec3 spacing, origin;
  for (int a = 0; a < 3; ++a) spacing[a] = io::get_le<double>(in);
  for (int a = 0; a < 3; ++a) origin[a] = io::get_le<double>(in);
  if (!in) throw std::runtime_error(path.string() + ": truncated VOLR header");
  std::vector<float> data(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]);
  io::get_le_array(in, std::span<float>(data));
  if (!in) throw std::runtime_error(path.string() + ": truncated VOLR data");
  return VolumeGrid(dims, spacing, origin, std::move(data));
}

VolumeGrid read_volume(const std::filesystem::path& path) {
  if (path.extension() == ".nii") return read_nifti(path);
  if (path.extension() == ".gz") throw UnsupportedError("compressed volumes are not supported: " + path.string());
  return read_volr(path);
}

}  // namespace vtrack
