#include "gtn/mask.hpp"

#include <stdexcept>

namespace gtn {

Mask causal_mask(std::size_t n) {
  if (n == 0) throw std::invalid_argument("causal_mask: n must be >= 1");
  Mask m;
  m.shape = {n, n};
  m.allowed.assign(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) m.allowed[i * n + j] = 1;
  }
  return m;
}

Mask padding_mask(std::size_t true_len, std::size_t padded_len) {
  if (true_len == 0) throw std::invalid_argument("padding_mask: true_len must be >= 1");
  if (true_len > padded_len) {
    throw std::invalid_argument("padding_mask: true_len " + std::to_string(true_len) +
                                " exceeds padded_len " + std::to_string(padded_len));
  }
  Mask m;
  m.shape = {padded_len};
  m.allowed.assign(padded_len, 0);
  for (std::size_t j = 0; j < true_len; ++j) m.allowed[j] = 1;
  return m;
}

Mask mask_and(const Mask& a, const Mask& b) {
  if (a.shape == b.shape) {
    Mask m = a;
    for (std::size_t i = 0; i < m.allowed.size(); ++i) m.allowed[i] &= b.allowed[i];
    return m;
  }
  // n x n against length-n key mask, either order.
  const Mask* sq = &a;
  const Mask* key = &b;
  if (sq->shape.size() == 1) std::swap(sq, key);
  if (sq->shape.size() != 2 || key->shape.size() != 1 || sq->shape[1] != key->shape[0]) {
    throw std::invalid_argument("mask_and: incompatible shapes " + shape_str(a.shape) + " and " +
                                shape_str(b.shape));
  }
  Mask m = *sq;
  const std::size_t rows = m.shape[0], cols = m.shape[1];
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) m.allowed[i * cols + j] &= key->allowed[j];
  }
  return m;
}

}  // namespace gtn
