#pragma once

#include <cstdint>
#include <vector>

#include "setseg/tensor.hpp"

namespace setseg {

/// Region lengths projected onto an exact T-frame partition. `lprime` is the
/// differentiable real-valued view (T * softmax of the raw lengths); `lint`
/// is the integerized partition used for cropping, never differentiated.
struct AbsoluteLengths {
    Tensor lprime;                    // K, sums to T up to fp error
    std::vector<std::int64_t> lint;   // K, sums to T exactly, every entry >= 1
};

/// Projects raw region lengths onto absolute lengths summing to
/// `total_frames`. Gradients flow through lprime only.
AbsoluteLengths normalize_lengths(const Tensor& raw_lengths, std::int64_t total_frames);

/// Largest-remainder rounding with a floor of one frame per region.
std::vector<std::int64_t> integerize_lengths(const std::vector<double>& lprime,
                                             std::int64_t total_frames);

/// Per-output-row sampling geometry for one region: the bilinear weight mass
/// the row collects from the expanded source, and its derivative chain
/// d(weight)/d(coord) * d(coord)/d(length).
struct SampleRowPlan {
    double source_index;  // position on the expanded source grid, 1..J(+fade)
    double wsum;          // bilinear weight mass; 1 in the interior
    double dw_du;         // derivative of wsum w.r.t. source_index (0 or -1)
    double du_dlen;       // derivative of source_index w.r.t. the real length
};

/// Source-grid coordinate of output row h (1-based) for a region of real
/// length `len`: 1 at h=1 and exactly J at h=len for integer len >= 2.
double affine_source_index(std::int64_t h, double len, std::int64_t expansion);

/// Same map in normalized [-1, 1] coordinates (for endpoint checks).
double normalized_source_coord(std::int64_t h, double len, std::int64_t expansion);

std::vector<SampleRowPlan> plan_region_rows(double real_len, std::int64_t rows,
                                            std::int64_t expansion);

/// Adjoint of the region sampling map. `row_scale` (optional, per row)
/// multiplies both the value and gradient paths; the production upsampler
/// passes the detached per-row normalizers through it.
void sample_backward(const std::vector<SampleRowPlan>& plan, const double* probs,
                     std::int64_t num_classes, const double* grad_out,
                     const double* row_scale, double* grad_probs, double* grad_len);

/// Samples one region's class distribution into `scratch_rows` output rows;
/// rows beyond `n_valid` are scratch and must be cropped by the caller.
/// Raw (un-normalized) block; differentiable w.r.t. probs and length.
Tensor temporal_sample(const Tensor& probs, const Tensor& length, std::int64_t n_valid,
                       std::int64_t scratch_rows, std::int64_t expansion);

/// Expands region distributions (K x C) to frame posteriors (T x C) by
/// concatenating the cropped per-region samples in order. Rows are
/// normalized against the (detached) source-row mass, so interior rows sum
/// to one exactly while region-tail fade rows keep their reduced mass --
/// that mass is the value channel carrying gradients into the lengths.
Tensor upsample(const Tensor& region_probs, const AbsoluteLengths& lengths,
                std::int64_t total_frames, std::int64_t expansion);

}  // namespace setseg
