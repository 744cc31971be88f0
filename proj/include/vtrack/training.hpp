#pragma once

#include "vtrack/mesh_net.hpp"
#include "vtrack/skeleton.hpp"
#include "vtrack/sphere_graph.hpp"
#include "vtrack/volume.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace vtrack {

class TrainingDivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DirectionTarget {
  DirectionField field;  // 0/1 labels and the reference radius
  bool in_lumen = false;
};

/// Labels the nodes pointing at the crossings of the reference skeleton with
/// the sphere whose radius is the local reference radius. Positions outside
/// every lumen get an all-negative field.
DirectionTarget build_direction_target(const Vec3& position, const SkeletonLocator& reference,
                                       const SphereGraph& graph);

/// Weight of one node: w_p if positive, else tanh(H) with H the haversine
/// distance to the nearest positive.
double node_weight(bool positive, double haversine_to_positive, double w_p);

/// Loss weights: w_p on positive nodes, tanh of the haversine distance to
/// the nearest positive on negative nodes, 1 everywhere when there is no
/// positive (or when weighting is disabled).
std::vector<double> geometry_weights(std::span<const double> labels, const SphereGraph& graph, double w_p,
                                     bool enabled = true);

struct LossTerms {
  double direction = 0.0;
  double radius = 0.0;
  double total = 0.0;
  std::vector<double> d_probabilities;
  double d_radius = 0.0;
};

inline constexpr double kProbabilityClamp = 1e-7;

/// lambda * weighted cross-entropy + 0.5 (R_target - R_pred)^2 * radius_mask,
/// with analytic gradients with respect to the prediction.
LossTerms joint_loss(const DirectionField& pred, const DirectionField& target, std::span<const double> weights,
                     double lambda, double radius_mask = 1.0);

enum class SampleCategory { on_skeleton, in_ball, outside_lumen };
const char* to_string(SampleCategory c);

struct TrainingSample {
  std::size_t source = 0;  // index of the training case the sample was drawn from
  Vec3 position = Vec3::Zero();
  std::vector<double> scales;
  DirectionField target;
  SampleCategory category = SampleCategory::on_skeleton;
  double radius_mask = 1.0;
};

struct SamplerConfig {
  double s_min = 0.2;
  double s_max = 15.0;
  int min_scales = 3;
  int max_scales = 15;
  double in_ball_fraction = 0.3;
  double outside_fraction = 0.1;
  double outside_min = 1.5;  // displacement in units of the local radius
  double outside_max = 3.0;

  void validate() const;
};

/// Draws training positions uniformly by arc length over all reference
/// skeletons, with off-centre and off-lumen augmentation and random scale
/// sets bracketing the target radius.
class SampleGenerator {
 public:
  SampleGenerator(std::vector<SkeletonGraph> skeletons, const SphereGraph& graph, SamplerConfig config,
                  std::uint64_t seed);

  TrainingSample next();

  const SphereGraph& graph() const { return graph_; }

 private:
  struct Segment {
    std::size_t source;
    int a, b;
  };
  std::vector<double> draw_scales(double target_radius, bool bracket);

  std::vector<SkeletonLocator> locators_;
  const SphereGraph& graph_;
  SamplerConfig config_;
  std::mt19937_64 rng_;
  std::vector<Segment> segments_;
  std::vector<double> cumulative_;  // cumulative segment length
};

/// Adaptive-moment optimiser.
class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::span<ad::Tensor* const> tensors);
  std::uint64_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<Matrix> m_, v_;
};

struct TrainConfig {
  std::uint64_t seed = 1;
  int batch_size = 8;
  double lr = 5e-4;
  int steps = 2000;
  double w_p = 10.0;
  double lambda = 5.0;
  bool gating = true;
  bool weighting = true;
  SamplerConfig sampler;
  IntensityWindow window;
  NetConfig net;
  int sphere_level = 2;
  int checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::filesystem::path checkpoint_path;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& doc);
};

struct TrainingCase {
  const VolumeGrid* volume = nullptr;
  const SkeletonGraph* skeleton = nullptr;
};

struct LossRecord {
  std::uint64_t step = 0;
  double direction = 0.0;
  double radius = 0.0;
  double total = 0.0;
};

struct TrainResult {
  std::vector<LossRecord> trace;
  std::uint64_t final_step = 0;
};

/// Mini-batch training of `params` in place. `start_step` continues the step
/// numbering of a resumed run; `on_step` (optional) sees every record.
TrainResult train(EstimatorParams& params, std::span<const TrainingCase> cases, const TrainConfig& config,
                  std::uint64_t start_step = 0, const std::function<void(const LossRecord&)>& on_step = {});

void write_loss_csv(std::span<const LossRecord> trace, const std::filesystem::path& path);

}  // namespace vtrack
