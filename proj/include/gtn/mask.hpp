#pragma once

#include "gtn/tensor.hpp"

#include <cstdint>

namespace gtn {

/// Boolean attention mask; true = position allowed.
///
/// Rank 1 masks act as key masks: softmax along an axis of matching extent
/// broadcasts them over every slice. Rank 2 masks must match the scored
/// matrix exactly.
struct Mask {
  Shape shape;
  std::vector<std::uint8_t> allowed;

  std::size_t size() const { return allowed.size(); }
  bool at(std::size_t i) const { return allowed[i] != 0; }
  bool at(std::size_t i, std::size_t j) const { return allowed[i * shape[1] + j] != 0; }
};

/// Lower-triangular mask: position i may attend to positions j <= i.
Mask causal_mask(std::size_t n);

/// Key mask hiding padded positions: keys at index >= true_len are disallowed
/// for every query.
Mask padding_mask(std::size_t true_len, std::size_t padded_len);

/// Logical AND. A rank-1 key mask combines with an n x n mask by broadcasting
/// over rows.
Mask mask_and(const Mask& a, const Mask& b);

}  // namespace gtn
