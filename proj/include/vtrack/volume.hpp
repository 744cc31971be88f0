#pragma once

#include "vtrack/sphere_graph.hpp"
#include "vtrack/types.hpp"

#include <array>
#include <filesystem>
#include <span>
#include <vector>

namespace vtrack {

/// Intensity window applied before features reach the network: values are
/// clamped to [lo, hi] and mapped affinely onto [0, 1].
struct IntensityWindow {
  double lo = 0.0;
  double hi = 1.0;

  double normalize(double v) const;
};

/// Dense 3D scalar image in physical (mm) coordinates. Voxel (i, j, k) has
/// its centre at origin + (i, j, k) * spacing; data is stored x-fastest.
class VolumeGrid {
 public:
  VolumeGrid() = default;
  VolumeGrid(std::array<int, 3> dims, Vec3 spacing, Vec3 origin, double pad_value = 0.0);
  VolumeGrid(std::array<int, 3> dims, Vec3 spacing, Vec3 origin, std::vector<float> data,
             double pad_value = 0.0);

  const std::array<int, 3>& dims() const { return dims_; }
  const Vec3& spacing() const { return spacing_; }
  const Vec3& origin() const { return origin_; }
  double pad_value() const { return pad_value_; }
  void set_pad_value(double v) { pad_value_ = v; }

  std::size_t voxel_count() const { return data_.size(); }
  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims_[0]) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims_[1]) * k);
  }
  float at(int i, int j, int k) const { return data_[index(i, j, k)]; }
  float& at(int i, int j, int k) { return data_[index(i, j, k)]; }

  Vec3 voxel_center(int i, int j, int k) const {
    return origin_ + Vec3(i, j, k).cwiseProduct(spacing_);
  }
  /// Physical extent spanned by voxel centres.
  Vec3 lower_corner() const { return origin_; }
  Vec3 upper_corner() const;
  bool contains(const Vec3& p) const;

  /// Trilinear interpolation; pad_value outside the voxel-centre lattice.
  double sample(const Vec3& p) const;

 private:
  std::array<int, 3> dims_{0, 0, 0};
  Vec3 spacing_ = Vec3::Ones();
  Vec3 origin_ = Vec3::Zero();
  std::vector<float> data_;
  double pad_value_ = 0.0;
};

/// Ray intensities around one position: for every scale S_m a
/// (node count x C) matrix whose row i samples the segment from the centre
/// towards node i at t_k = (k + 1) / C * S_m.
struct MultiScaleSample {
  Vec3 center = Vec3::Zero();
  std::vector<double> scales;
  std::vector<Matrix> features;

  std::size_t scale_count() const { return scales.size(); }
  std::size_t width() const { return features.empty() ? 0 : features.front().cols(); }
};

inline constexpr int kDefaultRaySamples = 64;

MultiScaleSample sample_multiscale(const VolumeGrid& volume, const Vec3& center,
                                   std::span<const double> scales, const SphereGraph& graph,
                                   int ray_samples = kDefaultRaySamples,
                                   const IntensityWindow& window = {});

// "VOLR1" files: 5-byte magic, u8 scalar type (1 = float32), u16 reserved,
// u32 dims[3], f64 spacing[3], f64 origin[3], then float32 voxels. All
// little-endian.
void write_volr(const VolumeGrid& volume, const std::filesystem::path& path);
VolumeGrid read_volr(const std::filesystem::path& path);

/// Minimal single-file NIfTI-1 reader (float32 / int16, axis-aligned affine).
VolumeGrid read_nifti(const std::filesystem::path& path);

/// Dispatches on extension: .nii -> NIfTI, anything else -> VOLR.
VolumeGrid read_volume(const std::filesystem::path& path);

}  // namespace vtrack
