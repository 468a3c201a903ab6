#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "ghost/autograd/tensor.hpp"

namespace ghost::ag {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// a [..., m, k] · b [..., k, n] with identical batch dims, or b [k, n]
/// shared across the batch.
Tensor matmul(const Tensor& a, const Tensor& b);
/// Same shape, or b's shape a suffix of a's (broadcast over leading dims).
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor transpose(const Tensor& a, int dim0, int dim1);
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
/// Rows of table [V, d] picked by ids; result shape is prefix + [d].
Tensor embedding(const Tensor& table, std::span<const std::int64_t> ids, Shape prefix);
/// Positions where mask != 0 are set to value. The mask covers a suffix of
/// a's shape and broadcasts over the leading dims.
Tensor masked_fill(const Tensor& a, std::span<const std::uint8_t> mask, const Shape& mask_shape, double value);
/// Softmax over the last axis. A row that is entirely -inf yields zeros.
Tensor softmax(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
Tensor relu(const Tensor& a);
/// x [..., in] · w [in, out] + b [out].
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor sum(const Tensor& a);

/// Mean over positions whose target != ignore_id of −log softmax(logits)[target].
/// logits is [..., V]; targets has one entry per leading position.
Tensor cross_entropy_masked(const Tensor& logits, std::span<const std::int64_t> targets, std::int64_t ignore_id);

}  // namespace ghost::ag
