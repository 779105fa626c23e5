#pragma once

#include "gtn/mask.hpp"
#include "gtn/rng.hpp"
#include "gtn/tensor.hpp"

namespace gtn {

// Differentiable tensor operations. Free functions, value in / value out;
// every op records its backward pass on the tape when an input requires
// gradients. Shape errors throw std::invalid_argument naming both shapes.

/// [M x K] . [K x N] -> [M x N]. Backward: dA = dY.B^T, dB = A^T.dY.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

/// Multiply every element of `a` by a size-1 tensor, differentiable in both.
Tensor scale_by(const Tensor& a, const Tensor& s);

/// Add a length-C vector to every row of an [R x C] matrix.
Tensor add_rowvec(const Tensor& m, const Tensor& v);

Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

Tensor transpose(const Tensor& x);                          // rank 2
Tensor transpose(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len);

/// Max-subtracted softmax along `axis`. Masked-out entries are exactly 0 in
/// the output; a fully masked slice is an error. `mask` may match x's shape,
/// or be rank 1 with the axis extent (a key mask broadcast over slices).
Tensor softmax(const Tensor& x, std::size_t axis, const Mask* mask = nullptr);

/// Normalization over the last axis, then affine by gamma/beta (rank 1).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

/// Inverted dropout: zero with probability p and scale survivors by 1/(1-p)
/// in training mode; identity in eval mode.
Tensor dropout(const Tensor& x, double p, Rng& rng, bool training);

/// Mean over the batch of -log softmax(logits)[label]; log-sum-exp stable.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace gtn
