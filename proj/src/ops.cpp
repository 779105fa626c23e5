#include "gtn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace gtn {

namespace {

using detail::Node;
using detail::accumulate_grad;

using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

ConstMatMap as_matrix(const Array& a, std::size_t rows, std::size_t cols) {
  return ConstMatMap(a.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

// Extents around `axis`: the tensor viewed as [outer, extent, inner].
void split_at_axis(const Shape& shape, std::size_t axis, std::size_t& outer,
                   std::size_t& extent, std::size_t& inner) {
  outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  extent = shape[axis];
  inner = 1;
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                                shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Array out(m * n);
  MatMap(out.data(), m, n).noalias() = as_matrix(a.values(), m, k) * as_matrix(b.values(), k, n);
  return make_op({m, n}, std::move(out), {a, b}, [m, k, n](Node& y) {
    const ConstMatMap g(y.grad.data(), m, n);
    Node& pa = *y.parents[0];
    Node& pb = *y.parents[1];
    if (pa.requires_grad) {
      Array da(m * k);
      MatMap(da.data(), m, k).noalias() = g * as_matrix(pb.value, k, n).transpose();
      accumulate_grad(pa, da);
    }
    if (pb.requires_grad) {
      Array db(k * n);
      MatMap(db.data(), k, n).noalias() = as_matrix(pa.value, m, k).transpose() * g;
      accumulate_grad(pb, db);
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  return make_op(a.shape(), a.values() + b.values(), {a, b}, [](Node& y) {
    accumulate_grad(*y.parents[0], y.grad);
    accumulate_grad(*y.parents[1], y.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  return make_op(a.shape(), a.values() - b.values(), {a, b}, [](Node& y) {
    accumulate_grad(*y.parents[0], y.grad);
    accumulate_grad(*y.parents[1], -y.grad);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  return make_op(a.shape(), a.values() * b.values(), {a, b}, [](Node& y) {
    accumulate_grad(*y.parents[0], y.grad * y.parents[1]->value);
    accumulate_grad(*y.parents[1], y.grad * y.parents[0]->value);
  });
}

Tensor scale(const Tensor& a, double s) {
  return make_op(a.shape(), a.values() * s, {a},
                 [s](Node& y) { accumulate_grad(*y.parents[0], y.grad * s); });
}

Tensor scale_by(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) {
    throw std::invalid_argument("scale_by: scale must be a size-1 tensor, got " +
                                shape_str(s.shape()));
  }
  return make_op(a.shape(), a.values() * s.values()[0], {a, s}, [](Node& y) {
    Node& pa = *y.parents[0];
    Node& ps = *y.parents[1];
    accumulate_grad(pa, y.grad * ps.value[0]);
    Array ds(1);
    ds[0] = (y.grad * pa.value).sum();
    accumulate_grad(ps, ds);
  });
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  if (m.rank() != 2 || v.rank() != 1 || m.shape()[1] != v.shape()[0]) {
    throw std::invalid_argument("add_rowvec: incompatible shapes " + shape_str(m.shape()) +
                                " and " + shape_str(v.shape()));
  }
  const std::size_t rows = m.shape()[0], cols = m.shape()[1];
  Array out = m.values();
  MatMap outm(out.data(), rows, cols);
  outm.rowwise() += as_matrix(v.values(), 1, cols).row(0);
  return make_op(m.shape(), std::move(out), {m, v}, [rows, cols](Node& y) {
    accumulate_grad(*y.parents[0], y.grad);
    Array dv(cols);
    Eigen::Map<Eigen::RowVectorXd>(dv.data(), cols) =
        ConstMatMap(y.grad.data(), rows, cols).colwise().sum();
    accumulate_grad(*y.parents[1], dv);
  });
}

Tensor tanh(const Tensor& x) {
  return make_op(x.shape(), x.values().tanh(), {x}, [](Node& y) {
    accumulate_grad(*y.parents[0], y.grad * (1.0 - y.value.square()));
  });
}

Tensor relu(const Tensor& x) {
  return make_op(x.shape(), x.values().max(0.0), {x}, [](Node& y) {
    accumulate_grad(*y.parents[0],
                    y.grad * (y.parents[0]->value > 0.0).cast<double>());
  });
}

Tensor sigmoid(const Tensor& x) {
  Array out(x.size());
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const double v = x.values()[i];
    if (v >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      out[i] = e / (1.0 + e);
    }
  }
  return make_op(x.shape(), std::move(out), {x}, [](Node& y) {
    accumulate_grad(*y.parents[0], y.grad * y.value * (1.0 - y.value));
  });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) {
    throw std::invalid_argument("transpose: expected rank 2, got " + shape_str(x.shape()));
  }
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  Array out(x.size());
  MatMap(out.data(), c, r) = as_matrix(x.values(), r, c).transpose();
  return make_op({c, r}, std::move(out), {x}, [r, c](Node& y) {
    Array dx(y.grad.size());
    MatMap(dx.data(), r, c) = ConstMatMap(y.grad.data(), c, r).transpose();
    accumulate_grad(*y.parents[0], dx);
  });
}

Tensor transpose(const Tensor& x, const std::vector<std::size_t>& axes) {
  const std::size_t r = x.rank();
  if (axes.size() != r) throw std::invalid_argument("transpose: axes/rank mismatch");
  if (r == 2 && axes[0] == 1 && axes[1] == 0) return transpose(x);

  Shape out_shape(r);
  std::vector<bool> seen(r, false);
  for (std::size_t i = 0; i < r; ++i) {
    if (axes[i] >= r || seen[axes[i]]) throw std::invalid_argument("transpose: invalid axes");
    seen[axes[i]] = true;
    out_shape[i] = x.shape()[axes[i]];
  }

  // in_strides permuted into the output's index order
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r - 1; i > 0; --i) in_strides[i - 1] = in_strides[i] * x.shape()[i];
  std::vector<std::size_t> strides(r);
  for (std::size_t i = 0; i < r; ++i) strides[i] = in_strides[axes[i]];

  const std::size_t n = x.size();
  auto permute = [r, n, out_shape, strides](const Array& src, Array& dst, bool inverse) {
    std::vector<std::size_t> idx(r, 0);
    for (std::size_t flat = 0; flat < n; ++flat) {
      std::size_t src_flat = 0;
      for (std::size_t i = 0; i < r; ++i) src_flat += idx[i] * strides[i];
      if (inverse) {
        dst[src_flat] = src[flat];
      } else {
        dst[flat] = src[src_flat];
      }
      for (std::size_t i = r; i-- > 0;) {
        if (++idx[i] < out_shape[i]) break;
        idx[i] = 0;
      }
    }
  };

  Array out(n);
  permute(x.values(), out, false);
  return make_op(out_shape, std::move(out), {x}, [permute](Node& y) {
    Array dx(y.grad.size());
    permute(y.grad, dx, true);
    accumulate_grad(*y.parents[0], dx);
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " +
                                shape_str(shape));
  }
  return make_op(std::move(shape), x.values(), {x},
                 [](Node& y) { accumulate_grad(*y.parents[0], y.grad); });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no parts");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw std::invalid_argument("concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    Shape s = p.shape();
    if (s.size() != first.size()) {
      throw std::invalid_argument("concat: rank mismatch " + shape_str(first) + " vs " +
                                  shape_str(s));
    }
    s[axis] = first[axis];
    if (s != first) {
      throw std::invalid_argument("concat: shape mismatch " + shape_str(first) + " vs " +
                                  shape_str(p.shape()));
    }
    out_shape[axis] += p.shape()[axis];
  }

  std::size_t outer, total_extent, inner;
  split_at_axis(out_shape, axis, outer, total_extent, inner);

  Array out(numel(out_shape));
  std::vector<std::size_t> extents;
  extents.reserve(parts.size());
  {
    std::size_t offset = 0;  // extent offset within the output axis
    for (const Tensor& p : parts) {
      const std::size_t e = p.shape()[axis];
      extents.push_back(e);
      for (std::size_t o = 0; o < outer; ++o) {
        out.segment(static_cast<Eigen::Index>((o * total_extent + offset) * inner),
                    static_cast<Eigen::Index>(e * inner)) =
            p.values().segment(static_cast<Eigen::Index>(o * e * inner),
                               static_cast<Eigen::Index>(e * inner));
      }
      offset += e;
    }
  }
  std::vector<Tensor> parents = parts;
  return make_op(out_shape, std::move(out), std::move(parents),
                 [outer, total_extent, inner, extents](Node& y) {
                   std::size_t offset = 0;
                   for (std::size_t pi = 0; pi < extents.size(); ++pi) {
                     const std::size_t e = extents[pi];
                     Node& p = *y.parents[pi];
                     if (p.requires_grad) {
                       Array dp(e * inner * outer);
                       for (std::size_t o = 0; o < outer; ++o) {
                         dp.segment(static_cast<Eigen::Index>(o * e * inner),
                                    static_cast<Eigen::Index>(e * inner)) =
                             y.grad.segment(
                                 static_cast<Eigen::Index>((o * total_extent + offset) * inner),
                                 static_cast<Eigen::Index>(e * inner));
                       }
                       accumulate_grad(p, dp);
                     }
                     offset += e;
                   }
                 });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len) {
  if (axis >= x.rank()) throw std::invalid_argument("slice: axis out of range");
  if (len == 0 || start + len > x.shape()[axis]) {
    throw std::invalid_argument("slice: range [" + std::to_string(start) + ", " +
                                std::to_string(start + len) + ") out of bounds for " +
                                shape_str(x.shape()));
  }
  std::size_t outer, extent, inner;
  split_at_axis(x.shape(), axis, outer, extent, inner);

  Shape out_shape = x.shape();
  out_shape[axis] = len;
  Array out(numel(out_shape));
  for (std::size_t o = 0; o < outer; ++o) {
    out.segment(static_cast<Eigen::Index>(o * len * inner),
                static_cast<Eigen::Index>(len * inner)) =
        x.values().segment(static_cast<Eigen::Index>((o * extent + start) * inner),
                           static_cast<Eigen::Index>(len * inner));
  }
  return make_op(out_shape, std::move(out), {x}, [outer, extent, inner, start, len](Node& y) {
    Node& p = *y.parents[0];
    if (!p.requires_grad) return;
    Array dx = Array::Zero(p.value.size());
    for (std::size_t o = 0; o < outer; ++o) {
      dx.segment(static_cast<Eigen::Index>((o * extent + start) * inner),
                 static_cast<Eigen::Index>(len * inner)) =
          y.grad.segment(static_cast<Eigen::Index>(o * len * inner),
                         static_cast<Eigen::Index>(len * inner));
    }
    accumulate_grad(p, dx);
  });
}

Tensor softmax(const Tensor& x, std::size_t axis, const Mask* mask) {
  if (axis >= x.rank()) throw std::invalid_argument("softmax: axis out of range");
  std::size_t outer, extent, inner;
  split_at_axis(x.shape(), axis, outer, extent, inner);

  bool key_mask = false;
  if (mask) {
    if (mask->shape.size() == 1 && mask->shape[0] == extent) {
      key_mask = true;
    } else if (mask->shape != x.shape()) {
      throw std::invalid_argument("softmax: mask shape " + shape_str(mask->shape) +
                                  " incompatible with " + shape_str(x.shape()));
    }
  }

  Array out = Array::Zero(x.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      auto elem = [&](std::size_t k) { return (o * extent + k) * inner + i; };
      auto is_allowed = [&](std::size_t k) {
        if (!mask) return true;
        return key_mask ? mask->at(k) : mask->at(elem(k));
      };
      double mx = -std::numeric_limits<double>::infinity();
      bool any_allowed = false;
      for (std::size_t k = 0; k < extent; ++k) {
        if (is_allowed(k)) {
          any_allowed = true;
          mx = std::max(mx, x.values()[elem(k)]);
        }
      }
      if (!any_allowed) {
        throw std::invalid_argument("softmax: all entries of a slice are masked out");
      }
      double s = 0.0;
      for (std::size_t k = 0; k < extent; ++k) {
        if (is_allowed(k)) {
          const double e = std::exp(x.values()[elem(k)] - mx);
          out[elem(k)] = e;
          s += e;
        }
      }
      for (std::size_t k = 0; k < extent; ++k) out[elem(k)] /= s;
    }
  }
  // Masked entries are exactly 0, so dx = y * (g - <g, y>) per slice handles
  // them uniformly.
  return make_op(x.shape(), std::move(out), {x}, [outer, extent, inner](Node& y) {
    Array dx(y.value.size());
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        auto elem = [&](std::size_t k) { return (o * extent + k) * inner + i; };
        double dot = 0.0;
        for (std::size_t k = 0; k < extent; ++k) dot += y.grad[elem(k)] * y.value[elem(k)];
        for (std::size_t k = 0; k < extent; ++k) {
          dx[elem(k)] = y.value[elem(k)] * (y.grad[elem(k)] - dot);
        }
      }
    }
    accumulate_grad(*y.parents[0], dx);
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() == 0) throw std::invalid_argument("layer_norm: scalar input");
  const std::size_t width = x.shape().back();
  if (gamma.rank() != 1 || beta.rank() != 1 || gamma.shape()[0] != width ||
      beta.shape()[0] != width) {
    throw std::invalid_argument("layer_norm: gamma/beta must be rank-1 of extent " +
                                std::to_string(width));
  }
  if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be > 0");

  const std::size_t slices = x.size() / width;
  Array normed(x.size());
  Array inv_std(slices);
  for (std::size_t s = 0; s < slices; ++s) {
    const auto seg = x.values().segment(static_cast<Eigen::Index>(s * width),
                                        static_cast<Eigen::Index>(width));
    const double mu = seg.mean();
    const double var = (seg - mu).square().mean();
    inv_std[static_cast<Eigen::Index>(s)] = 1.0 / std::sqrt(var + eps);
    normed.segment(static_cast<Eigen::Index>(s * width), static_cast<Eigen::Index>(width)) =
        (seg - mu) * inv_std[static_cast<Eigen::Index>(s)];
  }
  Array out(x.size());
  for (std::size_t s = 0; s < slices; ++s) {
    out.segment(static_cast<Eigen::Index>(s * width), static_cast<Eigen::Index>(width)) =
        normed.segment(static_cast<Eigen::Index>(s * width), static_cast<Eigen::Index>(width)) *
            gamma.values() +
        beta.values();
  }
  return make_op(x.shape(), std::move(out), {x, gamma, beta},
                 [width, slices, normed, inv_std](Node& y) {
                   Node& px = *y.parents[0];
                   Node& pg = *y.parents[1];
                   Node& pb = *y.parents[2];
                   const Eigen::Index w = static_cast<Eigen::Index>(width);
                   if (pg.requires_grad || pb.requires_grad) {
                     Array dg = Array::Zero(w), db = Array::Zero(w);
                     for (std::size_t s = 0; s < slices; ++s) {
                       const auto g = y.grad.segment(static_cast<Eigen::Index>(s * width), w);
                       const auto nh = normed.segment(static_cast<Eigen::Index>(s * width), w);
                       dg += g * nh;
                       db += g;
                     }
                     accumulate_grad(pg, dg);
                     accumulate_grad(pb, db);
                   }
                   if (px.requires_grad) {
                     Array dx(y.value.size());
                     for (std::size_t s = 0; s < slices; ++s) {
                       const auto g = y.grad.segment(static_cast<Eigen::Index>(s * width), w);
                       const auto nh = normed.segment(static_cast<Eigen::Index>(s * width), w);
                       const Array gh = g * pg.value;  // dL/dnormed
                       const double m1 = gh.mean();
                       const double m2 = (gh * nh).mean();
                       dx.segment(static_cast<Eigen::Index>(s * width), w) =
                           (gh - m1 - nh * m2) * inv_std[static_cast<Eigen::Index>(s)];
                     }
                     accumulate_grad(px, dx);
                   }
                 });
}

Tensor dropout(const Tensor& x, double p, Rng& rng, bool training) {
  if (p < 0.0 || p >= 1.0) {
    throw std::invalid_argument("dropout: p must be in [0, 1), got " + std::to_string(p));
  }
  if (!training || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  Array factor(x.size());
  for (Eigen::Index i = 0; i < factor.size(); ++i) {
    factor[i] = rng.uniform() >= p ? keep_scale : 0.0;
  }
  return make_op(x.shape(), x.values() * factor, {x}, [factor](Node& y) {
    accumulate_grad(*y.parents[0], y.grad * factor);
  });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) {
    throw std::invalid_argument("cross_entropy: logits must be [B x K], got " +
                                shape_str(logits.shape()));
  }
  const std::size_t batch = logits.shape()[0], classes = logits.shape()[1];
  if (labels.size() != batch) {
    throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) +
                                " labels for batch of " + std::to_string(batch));
  }
  Array probs(logits.size());
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= classes) {
      throw std::invalid_argument("cross_entropy: label " + std::to_string(labels[b]) +
                                  " out of range [0, " + std::to_string(classes) + ")");
    }
    const auto row = logits.values().segment(static_cast<Eigen::Index>(b * classes),
                                             static_cast<Eigen::Index>(classes));
    const double mx = row.maxCoeff();
    const Array e = (row - mx).exp();
    const double s = e.sum();
    probs.segment(static_cast<Eigen::Index>(b * classes), static_cast<Eigen::Index>(classes)) =
        e / s;
    const double lse = mx + std::log(s);
    loss += lse - row[labels[b]];
  }
  loss /= static_cast<double>(batch);
  Array out(1);
  out[0] = loss;
  return make_op({1}, std::move(out), {logits}, [batch, classes, probs, labels](Node& y) {
    Array dl = probs;
    for (std::size_t b = 0; b < batch; ++b) {
      dl[static_cast<Eigen::Index>(b * classes + static_cast<std::size_t>(labels[b]))] -= 1.0;
    }
    dl *= y.grad[0] / static_cast<double>(batch);
    accumulate_grad(*y.parents[0], dl);
  });
}

Tensor sum(const Tensor& x) {
  Array out(1);
  out[0] = x.values().sum();
  return make_op({1}, std::move(out), {x}, [](Node& y) {
    accumulate_grad(*y.parents[0], Array::Constant(y.parents[0]->value.size(), y.grad[0]));
  });
}

Tensor mean(const Tensor& x) {
  Array out(1);
  out[0] = x.values().mean();
  return make_op({1}, std::move(out), {x}, [](Node& y) {
    const double n = static_cast<double>(y.parents[0]->value.size());
    accumulate_grad(*y.parents[0], Array::Constant(y.parents[0]->value.size(), y.grad[0] / n));
  });
}

}  // namespace gtn
