#pragma once

#include "vtrack/autodiff.hpp"
#include "vtrack/direction_field.hpp"
#include "vtrack/sphere_graph.hpp"
#include "vtrack/volume.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace vtrack {

struct NetConfig {
  int input_width = kDefaultRaySamples;
  int hidden_width = 32;
  int depth = 4;
  bool gating = true;
  double leaky_slope = 0.01;

  nlohmann::json to_json() const;
  static NetConfig from_json(const nlohmann::json& doc);
};

/// One mesh convolution: out(v) = act(W_self f(v) + W_nbr mean_{u in N(v)} f(u) + b).
/// Features are carried in the trivial representation, so transport between
/// neighbouring tangent frames is the identity.
struct ConvLayer {
  ad::Tensor self_weight;      // in x out
  ad::Tensor neighbor_weight;  // in x out
  ad::Tensor bias;             // 1 x out
};

struct EstimatorParams {
  NetConfig config;
  std::vector<ConvLayer> conv;
  ad::Tensor gate_weight;    // hidden x hidden
  ad::Tensor gate_bias;      // 1 x hidden
  ad::Tensor dir_weight;     // hidden x 1
  ad::Tensor dir_bias;       // 1 x 1
  ad::Tensor radius_weight;  // hidden x 1
  ad::Tensor radius_bias;    // 1 x 1

  /// All-zero parameters of the right shapes.
  static EstimatorParams zeros(const NetConfig& config);
  /// He-style uniform initialisation from a seeded generator.
  static EstimatorParams random(const NetConfig& config, std::uint64_t seed);

  /// Stable order used for optimisation and checkpoints.
  std::vector<ad::Tensor*> tensors();
  std::vector<const ad::Tensor*> tensors() const;
  std::size_t parameter_count() const;
  void zero_grad();
  bool finite() const;
};

enum class Activation { leaky_relu, none };

/// Tape-level building blocks, exposed for testing.
struct ConvVars {
  ad::Var self_weight, neighbor_weight, bias;
};
ConvVars bind(ad::Tape& tape, ConvLayer& layer);
ad::Var mesh_conv(ad::Tape& tape, ad::Var features, const SphereGraph& graph, const ConvVars& layer,
                  Activation activation = Activation::leaky_relu, double slope = 0.01);
/// sum_m sigmoid(f_m W + b) * f_m, gate computed per node and channel.
ad::Var gated_fusion(ad::Tape& tape, std::span<const ad::Var> per_scale, ad::Var gate_weight, ad::Var gate_bias);
/// Arithmetic mean over scales (gating disabled).
ad::Var mean_fusion(ad::Tape& tape, std::span<const ad::Var> per_scale);

/// The direction/radius estimator. forward() records a tape that a
/// following backward() consumes; predict() is the read-only variant safe to
/// call from several threads at once.
class MeshNet {
 public:
  explicit MeshNet(EstimatorParams params) : params_(std::move(params)) {}

  DirectionField forward(const MultiScaleSample& sample, const SphereGraph& graph);
  /// Accumulates d(loss)/d(params) given the loss gradient with respect to
  /// the per-node probabilities and the radius of the last forward().
  void backward(std::span<const double> d_probabilities, double d_radius);
  DirectionField predict(const MultiScaleSample& sample, const SphereGraph& graph) const;

  EstimatorParams& params() { return params_; }
  const EstimatorParams& params() const { return params_; }

 private:
  struct Outputs {
    ad::Var probabilities, radius;
  };
  static Outputs record(ad::Tape& tape, EstimatorParams& params, const MultiScaleSample& sample,
                        const SphereGraph& graph);

  EstimatorParams params_;
  ad::Tape tape_;
  Outputs outputs_;
};

struct Checkpoint {
  EstimatorParams params;
  std::uint64_t step = 0;
};

// Checkpoint files: "VTNET" magic, u32 version, u32 input/hidden/depth,
// u32 gating, f64 leaky slope, u64 step, u32 tensor count, then per tensor
// u32 rows, u32 cols and float32 values in row-major order (little-endian).
void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace vtrack
