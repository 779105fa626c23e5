#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace gtn {

/// Row-major dense matrix; the whole library works in this layout.
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Array = Eigen::ArrayXd;

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

/// One node of the autodiff tape. `backprop` reads this node's grad and
/// accumulates into the parents' grads; it is only recorded when some
/// ancestor requires gradients.
struct Node {
  Shape shape;
  Array value;
  Array grad;  // size 0 until first accumulation
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;
};

void accumulate_grad(Node& node, const Array& g);

}  // namespace detail

/// Dense n-dimensional tensor with reverse-mode autodiff lineage.
///
/// A Tensor is a cheap shared handle: copies alias the same node. Values are
/// immutable once a tensor has lineage; only leaves expose mutable storage
/// (the optimizer update path) and only grads accumulate during backward().
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor scalar(double v);
  static Tensor from_data(Shape shape, std::vector<double> data);
  static Tensor from_array(Shape shape, Array values, bool requires_grad = false);
  static Tensor from_matrix(const RowMat& m);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return static_cast<std::size_t>(node_->value.size()); }

  const Array& values() const { return node_->value; }
  double operator[](std::size_t i) const { return node_->value[static_cast<Eigen::Index>(i)]; }
  double at(std::size_t i, std::size_t j) const;
  double scalar_value() const;
  RowMat matrix() const;  // rank-1 tensors are read as a single row

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf; }

  bool has_grad() const { return node_->grad.size() > 0; }
  const Array& grad() const;
  void zero_grad() { node_->grad.resize(0); }

  /// Mutable value storage. Leaves only: anything with lineage is frozen.
  Array& leaf_values();

  std::shared_ptr<detail::Node> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_op(Shape, Array, std::vector<Tensor>,
                        std::function<void(detail::Node&)>);
};

/// Builds an op-result node. Lineage is recorded only when a parent requires
/// gradients, so no-grad forwards stay tape-free.
Tensor make_op(Shape shape, Array value, std::vector<Tensor> parents,
               std::function<void(detail::Node&)> backprop);

/// Reverse-mode sweep from a scalar loss. Gradients accumulate on
/// requires_grad leaves across calls; use zero_grad() to reset.
void backward(const Tensor& loss);

}  // namespace gtn
