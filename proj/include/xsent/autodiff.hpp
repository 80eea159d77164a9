#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xsent/rng.hpp"
#include "xsent/types.hpp"

namespace xsent {

/// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  void fill(double v);
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool operator==(const Tensor&) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

namespace detail {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return parents.empty(); }
};

}  // namespace detail

/// Handle to a node of the computation graph. Copies share the node.
class Var {
 public:
  Var() = default;

  /// Trainable leaf; gradients accumulate across backward calls.
  static Var parameter(Tensor value);
  /// Leaf that takes no gradient (inputs, features).
  static Var constant(Tensor value);

  const Tensor& value() const { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  const std::vector<std::size_t>& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool defined() const { return node_ != nullptr; }

  void zero_grad();

  std::shared_ptr<detail::Node> node() const { return node_; }

 private:
  explicit Var(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  friend Var make_var(Tensor, std::vector<Var>, std::function<void(detail::Node&)>);

  std::shared_ptr<detail::Node> node_;
};

enum class Mode { Train, Eval };

// Operators. Shapes: 2-D tensors are (rows, cols), bias vectors are (n).

Var matmul(const Var& a, const Var& b);
Var add_bias(const Var& x, const Var& bias);
Var relu(const Var& x);
/// Inverted dropout; identity in Mode::Eval.
Var dropout(const Var& x, double p, Mode mode, Rng& rng);
/// Identity forward; backward multiplies the incoming gradient by `factor`.
Var scale_gradient(const Var& x, double factor);
/// Batch-mean cross-entropy of softmax(logits) against class indices.
Var softmax_cross_entropy(const Var& logits, std::span<const std::size_t> labels);
Var scale_and_sum(const std::vector<std::pair<double, Var>>& terms);
Var mean(const Var& x);

/// Reverse-mode sweep from a scalar root. Parameter gradients accumulate;
/// intermediate gradients are recomputed on every call.
void backward(const Var& root);

}  // namespace xsent
