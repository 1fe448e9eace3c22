#include "setseg/upsampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "setseg/ops.hpp"

namespace setseg {

namespace {
// Rows mapped past the source fade linearly against zero padding; the fade
// is clamped so no row ever loses more than this much of its weight mass.
constexpr double kMaxFade = 0.95;
constexpr double kMinLenGap = 1e-9;
}  // namespace

std::vector<std::int64_t> integerize_lengths(const std::vector<double>& lprime,
                                             std::int64_t total_frames) {
    const std::int64_t k = static_cast<std::int64_t>(lprime.size());
    check(k >= 1, "integerize_lengths: empty length vector");
    check(total_frames >= k, "integerize_lengths: cannot give every region one frame (T=" +
                                 std::to_string(total_frames) + " < K=" + std::to_string(k) + ")");

    std::vector<std::int64_t> out(lprime.size());
    std::vector<std::pair<double, std::int64_t>> fracs(lprime.size());
    std::int64_t base_sum = 0;
    for (std::int64_t i = 0; i < k; ++i) {
        const double v = std::max(lprime[static_cast<std::size_t>(i)], 0.0);
        const double fl = std::floor(v);
        out[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(fl);
        fracs[static_cast<std::size_t>(i)] = {v - fl, i};
        base_sum += out[static_cast<std::size_t>(i)];
    }

    std::int64_t deficit = total_frames - base_sum;
    // Largest fractional parts absorb the remainder; ties to the lower index.
    std::stable_sort(fracs.begin(), fracs.end(), [](const auto& a, const auto& b) {
        return a.first > b.first;
    });
    for (std::int64_t i = 0; deficit > 0 && i < k; ++i, --deficit)
        ++out[static_cast<std::size_t>(fracs[static_cast<std::size_t>(i)].second)];
    for (std::int64_t i = k - 1; deficit < 0 && i >= 0; --i) {
        auto& v = out[static_cast<std::size_t>(fracs[static_cast<std::size_t>(i)].second)];
        if (v > 0) {
            --v;
            ++deficit;
        }
    }

    // Floor of one frame per region, funded by the currently largest entries.
    for (auto& v : out) {
        if (v >= 1) continue;
        while (v < 1) {
            auto it = std::max_element(out.begin(), out.end());
            if (*it <= 1) throw std::runtime_error("integerize_lengths: no frames left to move");
            --(*it);
            ++v;
        }
    }
    return out;
}

AbsoluteLengths normalize_lengths(const Tensor& raw_lengths, std::int64_t total_frames) {
    check(raw_lengths.ndim() == 1, "normalize_lengths: raw lengths must be 1-d");
    const std::int64_t k = raw_lengths.dim(0);
    check(k >= 1, "normalize_lengths: need at least one region");
    check(total_frames >= k, "normalize_lengths: cannot give every region one frame (T=" +
                                 std::to_string(total_frames) + " < K=" + std::to_string(k) + ")");
    AbsoluteLengths out;
    out.lprime = ops::affine(ops::softmax(raw_lengths, 0), static_cast<double>(total_frames), 0.0);
    out.lint = integerize_lengths(out.lprime.values(), total_frames);
    return out;
}

double affine_source_index(std::int64_t h, double len, std::int64_t expansion) {
    const double span = static_cast<double>(expansion - 1);
    const double gap = std::max(len - 1.0, kMinLenGap);
    const double u = 1.0 + static_cast<double>(h - 1) * span / gap;
    return std::min(u, static_cast<double>(expansion) + kMaxFade);
}

double normalized_source_coord(std::int64_t h, double len, std::int64_t expansion) {
    const double u = affine_source_index(h, len, expansion);
    return (u - 1.0) * 2.0 / static_cast<double>(expansion - 1) - 1.0;
}

std::vector<SampleRowPlan> plan_region_rows(double real_len, std::int64_t rows,
                                            std::int64_t expansion) {
    check(rows >= 1, "plan_region_rows: need at least one row");
    check(expansion >= 2, "plan_region_rows: expansion must be at least 2");
    const double span = static_cast<double>(expansion - 1);
    const double gap = std::max(real_len - 1.0, kMinLenGap);
    const double limit = static_cast<double>(expansion) + kMaxFade;

    std::vector<SampleRowPlan> plan(static_cast<std::size_t>(rows));
    for (std::int64_t h = 1; h <= rows; ++h) {
        SampleRowPlan& row = plan[static_cast<std::size_t>(h - 1)];
        const double u_raw = 1.0 + static_cast<double>(h - 1) * span / gap;
        const bool clamped = u_raw > limit;
        row.source_index = clamped ? limit : u_raw;
        row.du_dlen = (clamped || real_len - 1.0 <= kMinLenGap)
                          ? 0.0
                          : -static_cast<double>(h - 1) * span / (gap * gap);
        if (row.source_index <= static_cast<double>(expansion)) {
            // Interior of the expanded source: the bilinear weights form a
            // partition of unity, so the row keeps full mass. At an exact
            // grid point the left cell is used, giving the interior
            // (zero, for a constant source) subgradient.
            row.wsum = 1.0;
            row.dw_du = 0.0;
        } else {
            // Fade zone past the last source row: mass tapers against the
            // zero padding. This is the channel that carries length
            // gradients out of the sampler.
            const double f = row.source_index - static_cast<double>(expansion);
            row.wsum = 1.0 - f;
            row.dw_du = -1.0;
        }
    }
    return plan;
}

void sample_backward(const std::vector<SampleRowPlan>& plan, const double* probs,
                     std::int64_t num_classes, const double* grad_out,
                     const double* row_scale, double* grad_probs, double* grad_len) {
    check(grad_out != nullptr && probs != nullptr, "sample_backward: missing saved state");
    for (std::size_t r = 0; r < plan.size(); ++r) {
        const SampleRowPlan& row = plan[r];
        const double scale = row_scale ? row_scale[r] : 1.0;
        const double* g = grad_out + r * static_cast<std::size_t>(num_classes);
        if (grad_probs) {
            const double w = row.wsum * scale;
            for (std::int64_t c = 0; c < num_classes; ++c) grad_probs[c] += w * g[c];
        }
        if (grad_len && row.dw_du != 0.0 && row.du_dlen != 0.0) {
            double dot = 0.0;
            for (std::int64_t c = 0; c < num_classes; ++c) dot += g[c] * probs[c];
            *grad_len += dot * scale * row.dw_du * row.du_dlen;
        }
    }
}

Tensor temporal_sample(const Tensor& probs, const Tensor& length, std::int64_t n_valid,
                       std::int64_t scratch_rows, std::int64_t expansion) {
    check(probs.ndim() == 1, "temporal_sample: probs must be a 1-d class distribution");
    check(length.defined() && length.numel() == 1, "temporal_sample: length must be scalar");
    check(n_valid >= 1, "temporal_sample: region must keep at least one row");
    check(n_valid <= scratch_rows, "temporal_sample: valid rows exceed scratch height");

    const std::int64_t c = probs.dim(0);
    const double len = length.item();
    auto plan = plan_region_rows(len, scratch_rows, expansion);

    Tensor out = Tensor::zeros({scratch_rows, c});
    for (std::int64_t h = 0; h < scratch_rows; ++h) {
        const double w = plan[static_cast<std::size_t>(h)].wsum;
        for (std::int64_t j = 0; j < c; ++j) out.at(h, j) = w * probs.at(j);
    }

    if (active_tape() && (probs.requires_grad() || length.requires_grad())) {
        out.set_requires_grad(true);
        Tensor tp = probs, tl = length, o = out;
        active_tape()->record("temporal_sample", {probs, length}, out,
                              [tp, tl, o, plan = std::move(plan), c]() mutable {
            sample_backward(plan, tp.data(), c, o.grad().data(), nullptr,
                            tp.requires_grad() ? tp.grad().data() : nullptr,
                            tl.requires_grad() ? tl.grad().data() : nullptr);
        });
    }
    return out;
}

Tensor upsample(const Tensor& region_probs, const AbsoluteLengths& lengths,
                std::int64_t total_frames, std::int64_t expansion) {
    check(region_probs.ndim() == 2, "upsample: region probabilities must be K x C");
    const std::int64_t k = region_probs.dim(0);
    const std::int64_t c = region_probs.dim(1);
    check(static_cast<std::int64_t>(lengths.lint.size()) == k,
          "upsample: length count does not match region count");
    const std::int64_t lint_sum =
        std::accumulate(lengths.lint.begin(), lengths.lint.end(), std::int64_t{0});
    check(lint_sum == total_frames, "upsample: integer lengths sum to " +
                                        std::to_string(lint_sum) + ", expected " +
                                        std::to_string(total_frames));

    struct FrameInfo {
        std::int64_t region;
        double scale;       // wsum / detached source-row mass
        double dval_scale;  // dw_du * du_dlen / source-row mass
    };
    std::vector<FrameInfo> frames(static_cast<std::size_t>(total_frames));

    Tensor out = Tensor::zeros({total_frames, c});
    std::int64_t t = 0;
    for (std::int64_t region = 0; region < k; ++region) {
        const std::int64_t n = lengths.lint[static_cast<std::size_t>(region)];
        const double real_len = lengths.lprime.at(region);
        const auto plan = plan_region_rows(real_len, n, expansion);
        // Rows are normalized against the source distribution's mass (1 for
        // softmax outputs, detached), NOT against the per-row weight sum:
        // dividing out the weight sum would erase the fade that carries the
        // length gradients. Interior rows sum to one; region-tail fade rows
        // keep their reduced mass.
        double row_mass = 0.0;
        for (std::int64_t j = 0; j < c; ++j) row_mass += region_probs.at(region, j);
        const double inv_mass = 1.0 / std::max(row_mass, 1e-12);
        for (std::int64_t h = 0; h < n; ++h, ++t) {
            const SampleRowPlan& row = plan[static_cast<std::size_t>(h)];
            const double scale = row.wsum * inv_mass;
            for (std::int64_t j = 0; j < c; ++j)
                out.at(t, j) = region_probs.at(region, j) * scale;
            frames[static_cast<std::size_t>(t)] = {region, scale,
                                                   row.dw_du * row.du_dlen * inv_mass};
        }
    }

    const bool rec = active_tape() &&
                     (region_probs.requires_grad() || lengths.lprime.requires_grad());
    if (rec) {
        out.set_requires_grad(true);
        Tensor ta = region_probs, tl = lengths.lprime, o = out;
        active_tape()->record("upsample", {region_probs, lengths.lprime}, out,
                              [ta, tl, o, frames = std::move(frames), c, total_frames]() mutable {
            const auto& gy = o.grad();
            const bool want_a = ta.requires_grad();
            const bool want_l = tl.requires_grad();
            auto* ga = want_a ? ta.grad().data() : nullptr;
            auto* gl = want_l ? tl.grad().data() : nullptr;
            for (std::int64_t t = 0; t < total_frames; ++t) {
                const FrameInfo& fi = frames[static_cast<std::size_t>(t)];
                const double* g = gy.data() + t * c;
                if (want_a) {
                    double* garow = ga + fi.region * c;
                    for (std::int64_t j = 0; j < c; ++j) garow[j] += fi.scale * g[j];
                }
                if (want_l && fi.dval_scale != 0.0) {
                    double dot = 0.0;
                    for (std::int64_t j = 0; j < c; ++j) dot += g[j] * ta.at(fi.region, j);
                    gl[fi.region] += dot * fi.dval_scale;
                }
            }
        });
    }
    return out;
}

}  // namespace setseg
