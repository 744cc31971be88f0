#include "vtrack/mesh_net.hpp"

#include <cmath>
#include <random>

namespace vtrack {

using nlohmann::json;

json NetConfig::to_json() const {
  return {{"input_width", input_width},
          {"hidden_width", hidden_width},
          {"depth", depth},
          {"gating", gating},
          {"leaky_slope", leaky_slope}};
}

NetConfig NetConfig::from_json(const json& doc) {
  NetConfig c;
  c.input_width = doc.value("input_width", c.input_width);
  c.hidden_width = doc.value("hidden_width", c.hidden_width);
  c.depth = doc.value("depth", c.depth);
  c.gating = doc.value("gating", c.gating);
  c.leaky_slope = doc.value("leaky_slope", c.leaky_slope);
  if (c.input_width <= 0 || c.hidden_width <= 0 || c.depth <= 0) {
    throw std::invalid_argument("network widths and depth must be positive");
  }
  return c;
}

EstimatorParams EstimatorParams::zeros(const NetConfig& config) {
  if (config.input_width <= 0 || config.hidden_width <= 0 || config.depth <= 0) {
    throw std::invalid_argument("network widths and depth must be positive");
  }
  EstimatorParams p;
  p.config = config;
  const int h = config.hidden_width;
  for (int l = 0; l < config.depth; ++l) {
    const int in = l == 0 ? config.input_width : h;
    p.conv.push_back({ad::Tensor(in, h), ad::Tensor(in, h), ad::Tensor(1, h)});
  }
  p.gate_weight = ad::Tensor(h, h);
  p.gate_bias = ad::Tensor(1, h);
  p.dir_weight = ad::Tensor(h, 1);
  p.dir_bias = ad::Tensor(1, 1);
  p.radius_weight = ad::Tensor(h, 1);
  p.radius_bias = ad::Tensor(1, 1);
  return p;
}

EstimatorParams EstimatorParams::random(const NetConfig& config, std::uint64_t seed) {
  EstimatorParams p = zeros(config);
  std::mt19937_64 rng(seed);
  auto fill = [&](ad::Tensor& t, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < t.value.size(); ++i) t.value.data()[i] = u(rng);
  };
  const double h = config.hidden_width;
  for (auto& layer : p.conv) {
    const double fan_in = 2.0 * static_cast<double>(layer.self_weight.value.rows());
    fill(layer.self_weight, std::sqrt(6.0 / fan_in));
    fill(layer.neighbor_weight, std::sqrt(6.0 / fan_in));
  }
  fill(p.gate_weight, std::sqrt(6.0 / (2.0 * h)));
  fill(p.dir_weight, std::sqrt(6.0 / (h + 1.0)));
  fill(p.radius_weight, std::sqrt(6.0 / (h + 1.0)));
  p.radius_bias.value(0, 0) = 1.0;
  return p;
}

std::vector<ad::Tensor*> EstimatorParams::tensors() {
  std::vector<ad::Tensor*> out;
  for (auto& l : conv) {
    out.push_back(&l.self_weight);
    out.push_back(&l.neighbor_weight);
    out.push_back(&l.bias);
  }
  for (auto* t : {&gate_weight, &gate_bias, &dir_weight, &dir_bias, &radius_weight, &radius_bias}) out.push_back(t);
  return out;
}

std::vector<const ad::Tensor*> EstimatorParams::tensors() const {
  auto mut = const_cast<EstimatorParams*>(this)->tensors();
  return {mut.begin(), mut.end()};
}

std::size_t EstimatorParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto* t : tensors()) n += static_cast<std::size_t>(t->size());
  return n;
}

void EstimatorParams::zero_grad() {
  for (auto* t : tensors()) t->zero_grad();
}

bool EstimatorParams::finite() const {
  for (const auto* t : tensors()) {
    if (!t->value.allFinite()) return false;
  }
  return true;
}

ConvVars bind(ad::Tape& tape, ConvLayer& layer) {
  return {tape.parameter(layer.self_weight), tape.parameter(layer.neighbor_weight), tape.parameter(layer.bias)};
}

ad::Var mesh_conv(ad::Tape& tape, ad::Var features, const SphereGraph& graph, const ConvVars& layer,
                  Activation activation, double slope) {
  const ad::Var own = tape.matmul(features, layer.self_weight);
  const ad::Var nbr = tape.matmul(tape.neighbor_mean(features, graph), layer.neighbor_weight);
  const ad::Var pre = tape.add_row(tape.add(own, nbr), layer.bias);
  return activation == Activation::leaky_relu ? tape.leaky_relu(pre, slope) : pre;
}

ad::Var gated_fusion(ad::Tape& tape, std::span<const ad::Var> per_scale, ad::Var gate_weight, ad::Var gate_bias) {
  if (per_scale.empty()) throw std::invalid_argument("gated_fusion: no scales to fuse");
  ad::Var total;
  for (const ad::Var f : per_scale) {
    const ad::Var gate = tape.sigmoid(tape.add_row(tape.matmul(f, gate_weight), gate_bias));
    const ad::Var term = tape.mul(gate, f);
    total = total.valid() ? tape.add(total, term) : term;
  }
  return total;
}

ad::Var mean_fusion(ad::Tape& tape, std::span<const ad::Var> per_scale) {
  if (per_scale.empty()) throw std::invalid_argument("mean_fusion: no scales to fuse");
  ad::Var total = per_scale.front();
  for (std::size_t m = 1; m < per_scale.size(); ++m) total = tape.add(total, per_scale[m]);
  return tape.scale(total, 1.0 / static_cast<double>(per_scale.size()));
}

MeshNet::Outputs MeshNet::record(ad::Tape& tape, EstimatorParams& params, const MultiScaleSample& sample,
                                 const SphereGraph& graph) {
  const auto& cfg = params.config;
  if (sample.features.empty()) throw std::invalid_argument("forward: sample has no scales");
  if (static_cast<int>(sample.width()) != cfg.input_width) {
    throw std::invalid_argument("forward: sample width " + std::to_string(sample.width()) +
                                " does not match network input width " + std::to_string(cfg.input_width));
  }
  std::vector<ConvVars> layers;
  layers.reserve(params.conv.size());
  for (auto& l : params.conv) layers.push_back(bind(tape, l));

  // One shared encoder for every scale.
  std::vector<ad::Var> encoded;
  encoded.reserve(sample.features.size());
  for (const auto& f : sample.features) {
    ad::Var h = tape.input(f);
    for (const auto& l : layers) h = mesh_conv(tape, h, graph, l, Activation::leaky_relu, cfg.leaky_slope);
    encoded.push_back(h);
  }
  const ad::Var fused = cfg.gating ? gated_fusion(tape, encoded, tape.parameter(params.gate_weight),
                                                  tape.parameter(params.gate_bias))
                                   : mean_fusion(tape, encoded);

  const ad::Var logits =
      tape.add_row(tape.matmul(fused, tape.parameter(params.dir_weight)), tape.parameter(params.dir_bias));
  const ad::Var pooled = tape.mean_rows(fused);
  const ad::Var radius = tape.softplus(
      tape.add_row(tape.matmul(pooled, tape.parameter(params.radius_weight)), tape.parameter(params.radius_bias)));
  return {tape.sigmoid(logits), radius};
}

namespace {

DirectionField read_outputs(const ad::Tape& tape, ad::Var probabilities, ad::Var radius) {
  DirectionField out;
  const Matrix& p = tape.value(probabilities);
  out.probabilities.assign(p.data(), p.data() + p.size());
  out.radius = tape.value(radius)(0, 0);
  return out;
}

}  // namespace

DirectionField MeshNet::forward(const MultiScaleSample& sample, const SphereGraph& graph) {
  tape_.clear();
  outputs_ = record(tape_, params_, sample, graph);
  return read_outputs(tape_, outputs_.probabilities, outputs_.radius);
}

void MeshNet::backward(std::span<const double> d_probabilities, double d_radius) {
  if (tape_.empty()) throw std::logic_error("MeshNet::backward called without a recorded forward pass");
  const Matrix& p = tape_.value(outputs_.probabilities);
  if (static_cast<Eigen::Index>(d_probabilities.size()) != p.size()) {
    throw std::invalid_argument("MeshNet::backward: gradient size does not match the node count");
  }
  Matrix dp(p.rows(), 1);
  for (Eigen::Index i = 0; i < p.rows(); ++i) dp(i, 0) = d_probabilities[i];
  Matrix dr(1, 1);
  dr(0, 0) = d_radius;
  const std::pair<ad::Var, Matrix> seeds[] = {{outputs_.probabilities, std::move(dp)}, {outputs_.radius, std::move(dr)}};
  tape_.backward(seeds);
}

DirectionField MeshNet::predict(const MultiScaleSample& sample, const SphereGraph& graph) const {
  // Gradients are never read here, so binding the shared parameters is safe.
  ad::Tape tape;
  const auto out = record(tape, const_cast<EstimatorParams&>(params_), sample, graph);
  return read_outputs(tape, out.probabilities, out.radius);
}

}  // namespace vtrack
