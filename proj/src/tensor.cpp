#include "gtn/tensor.hpp"

#include <sstream>
#include <stdexcept>
#include <unordered_set>
#include <utility>

namespace gtn {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (const std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

void accumulate_grad(Node& node, const Array& g) {
  if (!node.requires_grad) return;
  if (node.grad.size() == 0) {
    node.grad = Array::Zero(node.value.size());
  }
  node.grad += g;
}

}  // namespace detail

static void check_shape(const Shape& shape, const Array& values) {
  for (const std::size_t d : shape) {
    if (d == 0) throw std::invalid_argument("tensor: zero extent in shape " + shape_str(shape));
  }
  if (static_cast<std::size_t>(values.size()) != numel(shape)) {
    throw std::invalid_argument("tensor: shape " + shape_str(shape) + " does not match " +
                                std::to_string(values.size()) + " values");
  }
}

Tensor Tensor::from_array(Shape shape, Array values, bool requires_grad) {
  check_shape(shape, values);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape) {
  const std::size_t n = numel(shape);
  return from_array(std::move(shape), Array::Zero(static_cast<Eigen::Index>(n)));
}

Tensor Tensor::full(Shape shape, double v) {
  const std::size_t n = numel(shape);
  return from_array(std::move(shape), Array::Constant(static_cast<Eigen::Index>(n), v));
}

Tensor Tensor::scalar(double v) { return full({1}, v); }

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
  Array a = Eigen::Map<const Array>(data.data(), static_cast<Eigen::Index>(data.size()));
  return from_array(std::move(shape), std::move(a));
}

Tensor Tensor::from_matrix(const RowMat& m) {
  Array a = Eigen::Map<const Array>(m.data(), m.size());
  return from_array({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                    std::move(a));
}

double Tensor::at(std::size_t i, std::size_t j) const {
  if (rank() != 2) throw std::invalid_argument("at(i,j) needs a rank-2 tensor, got " + shape_str(shape()));
  return node_->value[static_cast<Eigen::Index>(i * shape()[1] + j)];
}

double Tensor::scalar_value() const {
  if (size() != 1) throw std::invalid_argument("scalar_value: tensor has shape " + shape_str(shape()));
  return node_->value[0];
}

RowMat Tensor::matrix() const {
  std::size_t rows = 1, cols = size();
  if (rank() == 2) {
    rows = shape()[0];
    cols = shape()[1];
  } else if (rank() > 2) {
    throw std::invalid_argument("matrix(): tensor has shape " + shape_str(shape()));
  }
  return Eigen::Map<const RowMat>(node_->value.data(), static_cast<Eigen::Index>(rows),
                                  static_cast<Eigen::Index>(cols));
}

const Array& Tensor::grad() const {
  if (!has_grad()) throw std::runtime_error("grad: no gradient present; call backward() first");
  return node_->grad;
}

Array& Tensor::leaf_values() {
  if (!node_->is_leaf) throw std::runtime_error("leaf_values: tensor has lineage and is immutable");
  return node_->value;
}

Tensor make_op(Shape shape, Array value, std::vector<Tensor> parents,
               std::function<void(detail::Node&)> backprop) {
  check_shape(shape, value);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->is_leaf = false;
  bool needs_grad = false;
  for (const Tensor& p : parents) needs_grad = needs_grad || p.requires_grad();
  node->requires_grad = needs_grad;
  if (needs_grad) {
    node->parents.reserve(parents.size());
    for (const Tensor& p : parents) node->parents.push_back(p.node());
    node->backprop = std::move(backprop);
  }
  return Tensor(std::move(node));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar tensor");
  }
  if (!loss.requires_grad()) return;

  // Iterative DFS post-order: children before parents in `topo`.
  std::vector<detail::Node*> topo;
  std::unordered_set<detail::Node*> visited;
  struct Frame {
    detail::Node* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.node().get(), 0});
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      detail::Node* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
    } else {
      topo.push_back(f.node);
      stack.pop_back();
    }
  }

  // Op-node grads are scratch for this sweep; leaf grads persist so repeated
  // backward calls accumulate.
  for (detail::Node* n : topo) {
    if (!n->is_leaf) n->grad.resize(0);
  }
  detail::accumulate_grad(*loss.node(), Array::Ones(1));
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backprop && n->grad.size() > 0) n->backprop(*n);
  }
}

}  // namespace gtn
