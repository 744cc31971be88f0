#include "vtrack/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

namespace vtrack {

using nlohmann::json;

DirectionTarget build_direction_target(const Vec3& position, const SkeletonLocator& reference,
                                       const SphereGraph& graph) {
  DirectionTarget out;
  out.field.probabilities.assign(graph.size(), 0.0);
  const auto near = reference.nearest(position);
  out.field.radius = near.radius;
  if (!(near.distance <= near.radius)) return out;
  out.in_lumen = true;
  for (const Vec3& c : reference.sphere_crossings(position, near.radius)) {
    const Vec3 d = c - position;
    if (d.norm() <= 1e-12 * std::max(1.0, near.radius)) continue;
    out.field.probabilities[graph.nearest_node(d)] = 1.0;
  }
  return out;
}

double node_weight(bool positive, double haversine_to_positive, double w_p) {
  return positive ? w_p : std::tanh(haversine_to_positive);
}

std::vector<double> geometry_weights(std::span<const double> labels, const SphereGraph& graph, double w_p,
                                     bool enabled) {
  if (labels.size() != graph.size()) throw std::invalid_argument("geometry_weights: label count != node count");
  std::vector<int> positives;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= 0.5) positives.push_back(static_cast<int>(i));
  }
  std::vector<double> w(labels.size(), 1.0);
  if (!enabled || positives.empty()) return w;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= 0.5) {
      w[i] = node_weight(true, 0.0, w_p);
      continue;
    }
    double h = std::numeric_limits<double>::infinity();
    for (int p : positives) h = std::min(h, graph.haversine(i, static_cast<std::size_t>(p)));
    w[i] = node_weight(false, h, w_p);
  }
  return w;
}

LossTerms joint_loss(const DirectionField& pred, const DirectionField& target, std::span<const double> weights,
                     double lambda, double radius_mask) {
  const std::size_t n = target.probabilities.size();
  if (pred.probabilities.size() != n || weights.size() != n || n == 0) {
    throw std::invalid_argument("joint_loss: prediction, target and weights must have the same nonzero length");
  }
  auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(pred.radius) || !finite(target.radius) || !finite(lambda) || !finite(radius_mask) ||
      !std::all_of(pred.probabilities.begin(), pred.probabilities.end(), finite) ||
      !std::all_of(target.probabilities.begin(), target.probabilities.end(), finite) ||
      !std::all_of(weights.begin(), weights.end(), finite)) {
    throw std::invalid_argument("joint_loss: non-finite input");
  }
  LossTerms out;
  out.d_probabilities.assign(n, 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);
  double dir = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double raw = pred.probabilities[i];
    const double p = std::clamp(raw, kProbabilityClamp, 1.0 - kProbabilityClamp);
    const double y = target.probabilities[i];
    dir -= weights[i] * (y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    // The clamp is flat outside its range, so no gradient flows there.
    if (raw > kProbabilityClamp && raw < 1.0 - kProbabilityClamp) {
      out.d_probabilities[i] = -lambda * inv_n * weights[i] * (y / p - (1.0 - y) / (1.0 - p));
    }
  }
  out.direction = dir * inv_n;
  const double err = target.radius - pred.radius;
  out.radius = 0.5 * err * err * radius_mask;
  out.d_radius = -err * radius_mask;
  out.total = lambda * out.direction + out.radius;
  return out;
}

const char* to_string(SampleCategory c) {
  switch (c) {
    case SampleCategory::on_skeleton: return "on_skeleton";
    case SampleCategory::in_ball: return "in_ball";
    case SampleCategory::outside_lumen: return "outside_lumen";
  }
  return "?";
}

void SamplerConfig::validate() const {
  if (!(s_min > 0.0) || !(s_min < s_max)) throw std::invalid_argument("sampler: need 0 < s_min < s_max");
  if (min_scales < 2 || max_scales < min_scales) throw std::invalid_argument("sampler: need 2 <= min_scales <= max_scales");
  if (in_ball_fraction < 0 || outside_fraction < 0 || in_ball_fraction + outside_fraction > 1.0) {
    throw std::invalid_argument("sampler: category fractions must be non-negative and sum to at most 1");
  }
  if (!(outside_min > 1.0) || outside_max < outside_min) {
    throw std::invalid_argument("sampler: need 1 < outside_min <= outside_max");
  }
}

SampleGenerator::SampleGenerator(std::vector<SkeletonGraph> skeletons, const SphereGraph& graph,
                                 SamplerConfig config, std::uint64_t seed)
    : graph_(graph), config_(config), rng_(seed) {
  config_.validate();
  double total = 0.0;
  for (std::size_t s = 0; s < skeletons.size(); ++s) {
    const auto& sk = skeletons[s];
    sk.validate();
    for (const auto& e : sk.edges) {
      const double len = (sk.points[e[1]].position - sk.points[e[0]].position).norm();
      if (len <= 0.0) continue;
      total += len;
      segments_.push_back({s, e[0], e[1]});
      cumulative_.push_back(total);
    }
    locators_.emplace_back(sk);
  }
  if (segments_.empty()) throw std::invalid_argument("sample generator: skeletons have no positive-length segment");
}

std::vector<double> SampleGenerator::draw_scales(double target_radius, bool bracket) {
  std::uniform_int_distribution<int> count(config_.min_scales, config_.max_scales);
  std::uniform_real_distribution<double> u(config_.s_min, config_.s_max);
  const int n = count(rng_);
  std::vector<double> s(static_cast<std::size_t>(n));
  for (auto& v : s) v = u(rng_);
  std::sort(s.begin(), s.end());
  if (bracket) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double r = target_radius;
    if (s.front() >= r) {
      const double lo = std::min(config_.s_min, 0.5 * r);
      s.front() = lo + unit(rng_) * (r - lo) * 0.999;
    }
    if (s.back() <= r) {
      const double hi = std::max(config_.s_max, 2.0 * r);
      s.back() = r + (hi - r) * (0.001 + 0.999 * unit(rng_));
    }
    std::sort(s.begin(), s.end());
  }
  // Ties have probability zero but would break strict ordering downstream.
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (s[i] <= s[i - 1]) s[i] = std::nextafter(s[i - 1], std::numeric_limits<double>::infinity());
  }
  return s;
}

TrainingSample SampleGenerator::next() {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto random_direction = [&] {
    Vec3 d;
    do {
      d = Vec3(gauss(rng_), gauss(rng_), gauss(rng_));
    } while (d.norm() < 1e-9);
    return Vec3(d.normalized());
  };

  const double c = unit(rng_);
  TrainingSample sample;
  sample.category = c < config_.outside_fraction ? SampleCategory::outside_lumen
                    : c < config_.outside_fraction + config_.in_ball_fraction ? SampleCategory::in_ball
                                                                              : SampleCategory::on_skeleton;

  constexpr int kMaxAttempts = 1000;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const double at = unit(rng_) * cumulative_.back();
    const std::size_t k = static_cast<std::size_t>(
        std::upper_bound(cumulative_.begin(), cumulative_.end(), at) - cumulative_.begin());
    const Segment& seg = segments_[std::min(k, segments_.size() - 1)];
    const auto& sk = locators_[seg.source].graph();
    const auto& pa = sk.points[seg.a];
    const auto& pb = sk.points[seg.b];
    const double t = unit(rng_);
    const Vec3 base = pa.position + t * (pb.position - pa.position);
    const double r = pa.radius + t * (pb.radius - pa.radius);
    const SkeletonLocator& loc = locators_[seg.source];

    Vec3 pos = base;
    if (sample.category == SampleCategory::in_ball) {
      pos = base + random_direction() * (r * std::cbrt(unit(rng_)));
    } else if (sample.category == SampleCategory::outside_lumen) {
      std::uniform_real_distribution<double> band(config_.outside_min, config_.outside_max);
      pos = base + random_direction() * (band(rng_) * r);
      if (loc.in_lumen(pos)) continue;
    }
    const auto target = build_direction_target(pos, loc, graph_);
    if (sample.category != SampleCategory::outside_lumen) {
      if (!target.in_lumen || target.field.positives() == 0 || !(target.field.radius > 0.0)) continue;
    }
    sample.source = seg.source;
    sample.position = pos;
    sample.target = target.field;
    if (sample.category == SampleCategory::outside_lumen) {
      std::fill(sample.target.probabilities.begin(), sample.target.probabilities.end(), 0.0);
      sample.radius_mask = 0.0;
      sample.scales = draw_scales(r, false);
    } else {
      sample.radius_mask = 1.0;
      sample.scales = draw_scales(sample.target.radius, true);
    }
    return sample;
  }
  throw std::runtime_error(std::string("sample generator: no valid ") + to_string(sample.category) +
                           " sample after many attempts");
}

void Adam::step(std::span<ad::Tensor* const> tensors) {
  if (m_.empty()) {
    for (const auto* t : tensors) {
      m_.push_back(Matrix::Zero(t->value.rows(), t->value.cols()));
      v_.push_back(Matrix::Zero(t->value.rows(), t->value.cols()));
    }
  }
  if (m_.size() != tensors.size()) throw std::logic_error("Adam: tensor list changed between steps");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& t = *tensors[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * t.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * t.grad.cwiseProduct(t.grad);
    t.value.array() -= lr_ * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + eps_);
  }
}

namespace {

bool read_switch(const json& doc, const char* key, bool fallback) {
  if (!doc.contains(key)) return fallback;
  const auto& v = doc.at(key);
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "on") return true;
    if (s == "off") return false;
  }
  throw std::invalid_argument(std::string(key) + ": expected true/false or \"on\"/\"off\"");
}

}  // namespace

json TrainConfig::to_json() const {
  return {{"seed", seed},
          {"batch_size", batch_size},
          {"lr", lr},
          {"steps", steps},
          {"w_p", w_p},
          {"lambda", lambda},
          {"gating", gating ? "on" : "off"},
          {"weighting", weighting ? "on" : "off"},
          {"s_min", sampler.s_min},
          {"s_max", sampler.s_max},
          {"min_scales", sampler.min_scales},
          {"max_scales", sampler.max_scales},
          {"window", {{"lo", window.lo}, {"hi", window.hi}}},
          {"net", net.to_json()},
          {"sphere_level", sphere_level},
          {"checkpoint_every", checkpoint_every}};
}

TrainConfig TrainConfig::from_json(const json& doc) {
  if (!doc.is_object()) throw std::invalid_argument("training config must be a JSON object");
  TrainConfig c;
  c.seed = doc.value("seed", c.seed);
  c.batch_size = doc.value("batch_size", c.batch_size);
  c.lr = doc.value("lr", c.lr);
  c.steps = doc.value("steps", c.steps);
  c.w_p = doc.value("w_p", c.w_p);
  c.lambda = doc.value("lambda", c.lambda);
  c.gating = read_switch(doc, "gating", c.gating);
  c.weighting = read_switch(doc, "weighting", c.weighting);
  c.sampler.s_min = doc.value("s_min", c.sampler.s_min);
  c.sampler.s_max = doc.value("s_max", c.sampler.s_max);
  c.sampler.min_scales = doc.value("min_scales", c.sampler.min_scales);
  c.sampler.max_scales = doc.value("max_scales", c.sampler.max_scales);
  if (doc.contains("window")) {
    const auto& w = doc.at("window");
    c.window.lo = w.value("lo", c.window.lo);
    c.window.hi = w.value("hi", c.window.hi);
  }
  if (doc.contains("net")) c.net = NetConfig::from_json(doc.at("net"));
  c.net.gating = c.gating;
  c.sphere_level = doc.value("sphere_level", c.sphere_level);
  c.checkpoint_every = doc.value("checkpoint_every", c.checkpoint_every);
  if (c.batch_size <= 0 || c.steps < 0 || !(c.lr > 0) || !(c.w_p > 0) || !(c.lambda > 0)) {
    throw std::invalid_argument("training config: batch_size, lr, w_p and lambda must be positive, steps >= 0");
  }
  if (!(c.window.hi > c.window.lo)) throw std::invalid_argument("training config: window.hi must exceed window.lo");
  c.sampler.validate();
  return c;
}

TrainResult train(EstimatorParams& params, std::span<const TrainingCase> cases, const TrainConfig& config,
                  std::uint64_t start_step, const std::function<void(const LossRecord&)>& on_step) {
  if (cases.empty()) throw std::invalid_argument("train: no training cases");
  if (params.config.gating != config.gating) {
    throw std::invalid_argument("train: network gating flag does not match the training config");
  }
  std::vector<SkeletonGraph> skeletons;
  for (const auto& c : cases) {
    if (c.volume == nullptr || c.skeleton == nullptr) throw std::invalid_argument("train: incomplete case");
    skeletons.push_back(*c.skeleton);
  }
  const SphereGraph graph = SphereGraph::build(config.sphere_level);
  // A resumed run draws a fresh sample stream rather than replaying the first.
  SampleGenerator generator(std::move(skeletons), graph, config.sampler,
                            config.seed ^ (start_step * 0x9e3779b97f4a7c15ULL));
  MeshNet net(std::move(params));
  Adam adam(config.lr);
  const auto tensors = net.params().tensors();

  TrainResult result;
  const double inv_batch = 1.0 / config.batch_size;
  try {
    for (int s = 0; s < config.steps; ++s) {
      net.params().zero_grad();
      LossRecord rec;
      rec.step = start_step + static_cast<std::uint64_t>(s) + 1;
      for (int b = 0; b < config.batch_size; ++b) {
        const TrainingSample sample = generator.next();
        const auto features = sample_multiscale(*cases[sample.source].volume, sample.position, sample.scales, graph,
                                                config.net.input_width, config.window);
        const DirectionField pred = net.forward(features, graph);
        const auto weights = geometry_weights(sample.target.probabilities, graph, config.w_p, config.weighting);
        LossTerms loss;
        try {
          loss = joint_loss(pred, sample.target, weights, config.lambda, sample.radius_mask);
        } catch (const std::invalid_argument& e) {
          throw TrainingDivergedError("training diverged at step " + std::to_string(rec.step) + ": " + e.what());
        }
        if (!std::isfinite(loss.total)) {
          throw TrainingDivergedError("training diverged at step " + std::to_string(rec.step) + ": loss is not finite");
        }
        for (auto& g : loss.d_probabilities) g *= inv_batch;
        net.backward(loss.d_probabilities, loss.d_radius * inv_batch);
        rec.direction += loss.direction * inv_batch;
        rec.radius += loss.radius * inv_batch;
        rec.total += loss.total * inv_batch;
      }
      adam.step(tensors);
      if (!net.params().finite()) {
        throw TrainingDivergedError("training diverged at step " + std::to_string(rec.step) +
                                    ": parameters became non-finite");
      }
      result.trace.push_back(rec);
      result.final_step = rec.step;
      if (on_step) on_step(rec);
      if (config.checkpoint_every > 0 && !config.checkpoint_path.empty() && rec.step % config.checkpoint_every == 0) {
        write_checkpoint({net.params(), rec.step}, config.checkpoint_path);
      }
    }
  } catch (...) {
    params = std::move(net.params());
    throw;
  }
  params = std::move(net.params());
  return result;
}

void write_loss_csv(std::span<const LossRecord> trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.precision(17);
  out << "step,L_dir,L_R,L\n";
  for (const auto& r : trace) out << r.step << ',' << r.direction << ',' << r.radius << ',' << r.total << '\n';
}

}  // namespace vtrack
