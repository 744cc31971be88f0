#include "vtrack/volume.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace vtrack {

namespace {

constexpr int kHeaderSize = 348;
constexpr std::int16_t kInt16 = 4;
constexpr std::int16_t kFloat32 = 16;

template <typename T>
T field(const char* header, int offset) {
  T v;
  std::memcpy(&v, header + offset, sizeof(T));
  return v;
}

bool near_zero(double v, double scale) { return std::abs(v) <= 1e-6 * std::max(1.0, scale); }

}  // namespace

VolumeGrid read_nifti(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char h[kHeaderSize];
  in.read(h, kHeaderSize);
  if (!in) throw std::runtime_error(path.string() + ": truncated NIfTI header");
  if (field<std::int32_t>(h, 0) != kHeaderSize) {
    throw UnsupportedError(path.string() + ": not a little-endian NIfTI-1 file");
  }
  if (std::memcmp(h + 344, "n+1", 4) != 0) {
    throw UnsupportedError(path.string() + ": only single-file NIfTI-1 (.nii) is supported");
  }

  const auto ndim = field<std::int16_t>(h, 40);
  std::array<int, 3> dims{};
  for (int a = 0; a < 3; ++a) dims[a] = field<std::int16_t>(h, 42 + 2 * a);
  if (ndim < 3 || ndim > 4 || (ndim == 4 && field<std::int16_t>(h, 48) > 1)) {
    throw UnsupportedError(path.string() + ": only 3D volumes are supported");
  }
  const auto datatype = field<std::int16_t>(h, 70);
  if (datatype != kInt16 && datatype != kFloat32) {
    throw UnsupportedError(path.string() + ": unsupported NIfTI datatype " + std::to_string(datatype));
  }

  Vec3 spacing, origin = Vec3::Zero();
  std::array<bool, 3> flip{false, false, false};
  const auto qform = field<std::int16_t>(h, 252);
  const auto sform = field<std::int16_t>(h, 254);
  if (sform > 0) {
    Eigen::Matrix<double, 3, 4> affine;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) affine(r, c) = field<float>(h, 280 + 16 * r + 4 * c);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        if (r != c && !near_zero(affine(r, c), affine.block<3, 3>(0, 0).cwiseAbs().maxCoeff())) {
          throw UnsupportedError(path.string() + ": oblique sform affines are not supported");
        }
      }
      spacing[r] = std::abs(affine(r, r));
      flip[r] = affine(r, r) < 0;
      origin[r] = affine(r, 3);
    }
  } else if (qform > 0) {
    const double b = field<float>(h, 256), c = field<float>(h, 260), d = field<float>(h, 264);
    if (!near_zero(b, 1) || !near_zero(c, 1) || !near_zero(d, 1)) {
      throw UnsupportedError(path.string() + ": rotated qform affines are not supported");
    }
    const double qfac = field<float>(h, 76) < 0 ? -1.0 : 1.0;
    for (int a = 0; a < 3; ++a) {
      spacing[a] = std::abs(field<float>(h, 80 + 4 * a));
      origin[a] = field<float>(h, 268 + 4 * a);
    }
    flip[2] = qfac * field<float>(h, 88) < 0;
  } else {
    for (int a = 0; a < 3; ++a) spacing[a] = std::abs(field<float>(h, 80 + 4 * a));
  }
  // Flipped axes are stored reversed so that spacing stays positive.
  for (int a = 0; a < 3; ++a) {
    if (flip[a]) origin[a] -= spacing[a] * (dims[a] - 1);
  }

  const auto offset = static_cast<std::streamoff>(field<float>(h, 108));
  in.seekg(std::max<std::streamoff>(offset, kHeaderSize));
  const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  std::vector<float> raw(n);
  if (datatype == kFloat32) {
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * sizeof(float)));
  } else {
    std::vector<std::int16_t> s(n);
    in.read(reinterpret_cast<char*>(s.data()), static_cast<std::streamsize>(n * sizeof(std::int16_t)));
    for (std::size_t i = 0; i < n; ++i) raw[i] = s[i];
  }
  if (!in) throw std::runtime_error(path.string() + ": truncated NIfTI data");

  const double slope = field<float>(h, 112), inter = field<float>(h, 116);
  if (slope != 0.0 && (slope != 1.0 || inter != 0.0)) {
    for (auto& v : raw) v = static_cast<float>(v * slope + inter);
  }

  VolumeGrid volume(dims, spacing, origin);
  for (int k = 0; k < dims[2]; ++k) {
    for (int j = 0; j < dims[1]; ++j) {
      for (int i = 0; i < dims[0]; ++i) {
        const int si = flip[0] ? dims[0] - 1 - i : i;
        const int sj = flip[1] ? dims[1] - 1 - j : j;
        const int sk = flip[2] ? dims[2] - 1 - k : k;
        volume.at(i, j, k) = raw[volume.index(si, sj, sk)];
      }
    }
  }
  return volume;
}

}  // namespace vtrack
