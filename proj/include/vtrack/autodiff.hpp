#pragma once

#include "vtrack/types.hpp"

#include <array>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace vtrack {
class SphereGraph;
}

namespace vtrack::ad {

/// A 2-D parameter tensor with its accumulated gradient.
struct Tensor {
  Matrix value;
  Matrix grad;

  Tensor() = default;
  Tensor(Eigen::Index rows, Eigen::Index cols)
      : value(Matrix::Zero(rows, cols)), grad(Matrix::Zero(rows, cols)) {}
  explicit Tensor(Matrix v) : value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  std::array<Eigen::Index, 2> shape() const { return {value.rows(), value.cols()}; }
  Eigen::Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Handle to a value recorded on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Records matrix operations in execution order and replays them backwards
/// to accumulate gradients. Operations work on whole matrices; a "row" is
/// one graph node and a "column" one feature channel.
class Tape {
 public:
  /// Leaf whose gradient is available after backward().
  Var input(Matrix value);
  /// Leaf bound to a parameter; backward() adds into tensor.grad. The
  /// tensor must outlive the tape's backward pass.
  Var parameter(Tensor& tensor);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  /// a (n x m) + bias (1 x m) broadcast over rows.
  Var add_row(Var a, Var bias);
  Var mul(Var a, Var b);
  Var scale(Var a, double factor);
  Var leaky_relu(Var a, double slope);
  Var sigmoid(Var a);
  Var softplus(Var a);
  /// Row i becomes the mean of the rows of i's 1-ring neighbours.
  Var neighbor_mean(Var a, const SphereGraph& graph);
  /// Column means as a 1 x m row.
  Var mean_rows(Var a);
  Var sum(Var a);

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
  const Matrix& grad(Var v) const { return nodes_.at(v.id).grad; }

  /// Seeds d(loss)/d(output) for each listed output, then propagates to every
  /// recorded value and bound parameter.
  void backward(std::span<const std::pair<Var, Matrix>> seeds);
  /// backward() for a 1 x 1 output with seed 1.
  void backward(Var scalar);

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void(Tape&, const Node&)> backward;
  };
  Var push(Matrix value, std::function<void(Tape&, const Node&)> backward);
  Matrix& grad_of(Var v) { return nodes_[v.id].grad; }

  std::vector<Node> nodes_;
};

}  // namespace vtrack::ad
