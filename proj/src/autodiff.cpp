#include "vtrack/autodiff.hpp"

#include "vtrack/sphere_graph.hpp"

#include <cmath>

namespace vtrack::ad {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  }
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var Tape::push(Matrix value, std::function<void(Tape&, const Node&)> backward) {
  nodes_.push_back({std::move(value), Matrix(), std::move(backward)});
  return {static_cast<int>(nodes_.size()) - 1};
}

Var Tape::input(Matrix value) { return push(std::move(value), nullptr); }

Var Tape::parameter(Tensor& tensor) {
  Tensor* t = &tensor;
  return push(tensor.value, [t](Tape&, const Node& self) { t->grad += self.grad; });
}

Var Tape::matmul(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  if (av.cols() != bv.rows()) {
    throw std::invalid_argument("matmul: inner dimensions differ (" + std::to_string(av.cols()) + " vs " +
                                std::to_string(bv.rows()) + ")");
  }
  return push(av * bv, [a, b](Tape& t, const Node& self) {
    t.grad_of(a).noalias() += self.grad * t.value(b).transpose();
    t.grad_of(b).noalias() += t.value(a).transpose() * self.grad;
  });
}

Var Tape::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  return push(value(a) + value(b), [a, b](Tape& t, const Node& self) {
    t.grad_of(a) += self.grad;
    t.grad_of(b) += self.grad;
  });
}

Var Tape::add_row(Var a, Var bias) {
  const Matrix& av = value(a);
  const Matrix& bv = value(bias);
  if (bv.rows() != 1 || bv.cols() != av.cols()) throw std::invalid_argument("add_row: bias must be 1 x cols");
  Matrix out = av.rowwise() + bv.row(0);
  return push(std::move(out), [a, bias](Tape& t, const Node& self) {
    t.grad_of(a) += self.grad;
    t.grad_of(bias) += self.grad.colwise().sum();
  });
}

Var Tape::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "mul");
  return push(value(a).cwiseProduct(value(b)), [a, b](Tape& t, const Node& self) {
    t.grad_of(a) += self.grad.cwiseProduct(t.value(b));
    t.grad_of(b) += self.grad.cwiseProduct(t.value(a));
  });
}

Var Tape::scale(Var a, double factor) {
  return push(value(a) * factor, [a, factor](Tape& t, const Node& self) { t.grad_of(a) += self.grad * factor; });
}

Var Tape::leaky_relu(Var a, double slope) {
  Matrix out = value(a).unaryExpr([slope](double x) { return x > 0.0 ? x : slope * x; });
  return push(std::move(out), [a, slope](Tape& t, const Node& self) {
    t.grad_of(a) += self.grad.binaryExpr(t.value(a), [slope](double g, double x) { return x > 0.0 ? g : slope * g; });
  });
}

Var Tape::sigmoid(Var a) {
  Matrix out = value(a).unaryExpr([](double x) { return stable_sigmoid(x); });
  return push(std::move(out), [a](Tape& t, const Node& self) {
    t.grad_of(a) += self.grad.binaryExpr(self.value, [](double g, double s) { return g * s * (1.0 - s); });
  });
}

Var Tape::softplus(Var a) {
  Matrix out = value(a).unaryExpr([](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); });
  return push(std::move(out), [a](Tape& t, const Node& self) {
    t.grad_of(a) += self.grad.binaryExpr(t.value(a), [](double g, double x) { return g * stable_sigmoid(x); });
  });
}

Var Tape::neighbor_mean(Var a, const SphereGraph& graph) {
  const Matrix& av = value(a);
  if (static_cast<std::size_t>(av.rows()) != graph.size()) {
    throw std::invalid_argument("neighbor_mean: feature rows (" + std::to_string(av.rows()) +
                                ") do not match graph nodes (" + std::to_string(graph.size()) + ")");
  }
  Matrix out(av.rows(), av.cols());
  for (Eigen::Index i = 0; i < av.rows(); ++i) {
    const auto nb = graph.neighbors(i);
    out.row(i).setZero();
    for (int j : nb) out.row(i) += av.row(j);
    out.row(i) /= static_cast<double>(nb.size());
  }
  const SphereGraph* g = &graph;
  return push(std::move(out), [a, g](Tape& t, const Node& self) {
    Matrix& ga = t.grad_of(a);
    for (Eigen::Index i = 0; i < self.grad.rows(); ++i) {
      const auto nb = g->neighbors(i);
      const double w = 1.0 / static_cast<double>(nb.size());
      for (int j : nb) ga.row(j) += w * self.grad.row(i);
    }
  });
}

Var Tape::mean_rows(Var a) {
  const Matrix& av = value(a);
  const double n = static_cast<double>(av.rows());
  Matrix out = av.colwise().sum() / n;
  return push(std::move(out), [a, n](Tape& t, const Node& self) {
    t.grad_of(a).rowwise() += self.grad.row(0) / n;
  });
}

Var Tape::sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = value(a).sum();
  return push(std::move(out), [a](Tape& t, const Node& self) { t.grad_of(a).array() += self.grad(0, 0); });
}

void Tape::backward(std::span<const std::pair<Var, Matrix>> seeds) {
  if (nodes_.empty()) throw std::logic_error("backward called before any forward pass was recorded");
  for (auto& n : nodes_) n.grad.setZero(n.value.rows(), n.value.cols());
  for (const auto& [v, seed] : seeds) {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) throw std::invalid_argument("backward: unknown output");
    require_same_shape(nodes_[v.id].value, seed, "backward seed");
    nodes_[v.id].grad += seed;
  }
  for (auto i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    const Node& n = nodes_[i];
    if (n.backward) n.backward(*this, n);
  }
}

void Tape::backward(Var scalar) {
  if (nodes_.empty()) throw std::logic_error("backward called before any forward pass was recorded");
  const Matrix& v = value(scalar);
  if (v.size() != 1) throw std::invalid_argument("backward: output is not a scalar");
  const std::pair<Var, Matrix> seed{scalar, Matrix::Ones(1, 1)};
  backward(std::span(&seed, 1));
}

}  // namespace vtrack::ad
