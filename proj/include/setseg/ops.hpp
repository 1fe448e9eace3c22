#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "setseg/tensor.hpp"

namespace setseg::ops {

/// Dilated 1-d convolution (cross-correlation) over rows of `input` (T x Cin).
/// `weight` is k x Cin x Cout with odd k; the input is zero-padded
/// symmetrically by dilation*(k-1)/2 so the output keeps T rows.
Tensor conv1d_dilated(const Tensor& input, const Tensor& weight, const Tensor& bias,
                      std::int64_t dilation);

/// Temporal max pooling, kernel 2 stride 2; a trailing odd row is dropped.
/// Backward routes to the arg-max element, ties to the earlier row.
Tensor maxpool1d(const Tensor& input);

Tensor relu(const Tensor& x);
Tensor softmax(const Tensor& x, std::int64_t axis);
Tensor log_softmax(const Tensor& x, std::int64_t axis);

/// Inverted dropout; active only when `training`, survivors scaled by 1/(1-p).
Tensor dropout(const Tensor& x, double p, bool training, RngStream& rng);

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a = false,
              bool transpose_b = false);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// Adds a length-C row vector to every row of a T x C matrix.
Tensor add_rowvec(const Tensor& mat, const Tensor& vec);
Tensor abs(const Tensor& x);
/// a*x + b elementwise with scalar a, b.
Tensor affine(const Tensor& x, double a, double b);
Tensor neg(const Tensor& x);
Tensor log(const Tensor& x);
Tensor clamp_min(const Tensor& x, double lo);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_axis(const Tensor& x, std::int64_t axis);
Tensor mean_axis(const Tensor& x, std::int64_t axis);
/// Global max over one axis of a 2-d tensor; ties to the earlier index.
Tensor reduce_max(const Tensor& x, std::int64_t axis);

/// Linear resize of the row dimension T' -> rows with align-corners
/// interpolation.
Tensor resize_linear(const Tensor& x, std::int64_t rows);

Tensor gather_cols(const Tensor& x, const std::vector<std::int64_t>& cols);
Tensor gather(const Tensor& x, const std::vector<std::int64_t>& idx);
/// Picks entries (r, c) of a 2-d tensor into a 1-d tensor.
Tensor pick(const Tensor& x, const std::vector<std::pair<std::int64_t, std::int64_t>>& coords);
Tensor slice_rows(const Tensor& x, std::int64_t row_begin, std::int64_t row_end);

/// Elementwise p * log(p / max(q, eps)), defined as 0 where p <= 0.
Tensor xlogy_ratio(const Tensor& p, const Tensor& q, double eps);

/// Copying reshape to a same-size shape.
Tensor reshape(const Tensor& x, Shape shape);

}  // namespace setseg::ops
