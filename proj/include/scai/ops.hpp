#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "scai/tensor.hpp"

namespace scai::ops {

/// Per-column selector over a width-W feature map (1 = selected).
using ColumnMask = std::span<const std::uint8_t>;

/// Output width of a 1-D convolution.
std::size_t conv1d_out_width(std::size_t width, std::size_t kernel, std::size_t stride, std::size_t padding);

/// Zero-padded 1-D cross-correlation.
///
/// input [C_in x W], kernel [C_out x C_in x K], bias [C_out] or undefined.
/// When `out_mask` is non-empty it must have W' entries; unselected output
/// columns are not computed and hold exactly 0 (bias included). Gradients
/// flow only through selected columns.
Tensor conv1d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
              std::size_t padding, ColumnMask out_mask = {});

/// weight [O x D] . input [D] + bias [O]; bias may be undefined.
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

/// [C x W] -> [C] channel means; [W] -> [1].
Tensor global_avg_pool(const Tensor& x);

/// Max-subtracted softmax over a rank-1 tensor.
Tensor softmax(const Tensor& logits);

/// Floor applied to probabilities before any logarithm.
inline constexpr double kProbClamp = 1e-12;

/// -log(clamp(probs[label])). Throws std::out_of_range on a bad label.
Tensor cross_entropy(const Tensor& probs, std::size_t label);

/// sum_i t_i (log t_i - log s_i) with both sides clamped. The teacher is
/// treated as a constant: no gradient reaches it.
Tensor kl_div(const Tensor& teacher, const Tensor& student);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// a + s where s is a single-element tensor broadcast over every entry.
Tensor add_broadcast(const Tensor& a, const Tensor& s);

/// x [C x W] scaled column-wise by w [W].
Tensor mul_columns(const Tensor& x, const Tensor& w);

/// out[c, i] = mask[i] ? a[c, i] : b[c, i]. Unselected entries are copied
/// bit-for-bit from b.
Tensor where_columns(ColumnMask mask, const Tensor& a, const Tensor& b);

/// Same values under a new shape with equal element count.
Tensor reshape(const Tensor& a, Shape shape);

}  // namespace scai::ops
