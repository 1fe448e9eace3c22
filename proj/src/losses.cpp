#include "setseg/losses.hpp"

#include <atomic>
#include <cmath>
#include <iostream>

#include "setseg/ops.hpp"

namespace setseg {

namespace {

constexpr double kLogEps = 1e-7;

void check_action_set(const std::vector<std::int64_t>& action_set, std::int64_t num_classes) {
    check(!action_set.empty(), "action set must not be empty");
    for (std::size_t i = 0; i < action_set.size(); ++i) {
        check(action_set[i] >= 0 && action_set[i] < num_classes,
              "action id " + std::to_string(action_set[i]) + " outside [0, " +
                  std::to_string(num_classes) + ")");
        if (i > 0) check(action_set[i] > action_set[i - 1], "action set must be sorted and unique");
    }
}

}  // namespace

void LossWeights::validate() const {
    const double all[] = {set, region, sparsity, consistency, self_supervision, length, jsd};
    double total = 0.0;
    for (double w : all) {
        check(w >= 0.0, "loss weights must be non-negative");
        total += w;
    }
    check(total > 0.0, "at least one loss term must be enabled");
    check(!(self_supervision > 0.0 && jsd > 0.0),
          "self-supervision and JSD terms are mutually exclusive");
}

Tensor set_loss(const Tensor& region_probs, const std::vector<std::int64_t>& action_set,
                std::int64_t num_classes) {
    check(region_probs.ndim() == 2 && region_probs.dim(1) == num_classes,
          "set_loss: region probabilities must be K x C");
    check_action_set(action_set, num_classes);

    Tensor class_max = ops::reduce_max(region_probs, 0);  // C
    std::vector<std::int64_t> outside;
    {
        std::size_t j = 0;
        for (std::int64_t c = 0; c < num_classes; ++c) {
            if (j < action_set.size() && action_set[j] == c)
                ++j;
            else
                outside.push_back(c);
        }
    }
    Tensor present = ops::sum(ops::log(ops::clamp_min(ops::gather(class_max, action_set), kLogEps)));
    Tensor total = present;
    if (!outside.empty()) {
        Tensor absent = ops::sum(ops::log(
            ops::clamp_min(ops::affine(ops::gather(class_max, outside), -1.0, 1.0), kLogEps)));
        total = ops::add(total, absent);
    }
    return ops::affine(total, -1.0 / static_cast<double>(num_classes), 0.0);
}

Tensor region_loss(const Tensor& region_probs, const std::vector<std::int64_t>& action_set) {
    check(region_probs.ndim() == 2, "region_loss: region probabilities must be K x C");
    check_action_set(action_set, region_probs.dim(1));
    Tensor in_set = ops::gather_cols(region_probs, action_set);  // K x M
    Tensor row_max = ops::reduce_max(in_set, 1);                 // K
    return ops::neg(ops::mean(ops::log(ops::clamp_min(row_max, kLogEps))));
}

Tensor inverse_sparsity(const Tensor& region_probs, const std::vector<std::int64_t>& action_set) {
    check(region_probs.ndim() == 2, "inverse_sparsity: region probabilities must be K x C");
    check_action_set(action_set, region_probs.dim(1));
    if (static_cast<std::int64_t>(action_set.size()) == region_probs.dim(1)) {
        static std::atomic<bool> noticed{false};
        if (!noticed.exchange(true))
            std::cerr << "notice: every class is present; the sparsity term is constant\n";
    }
    Tensor in_set = ops::gather_cols(region_probs, action_set);
    Tensor class_mean = ops::mean_axis(in_set, 0);  // M
    return ops::mean(ops::affine(class_mean, -1.0, 1.0));
}

Tensor temporal_consistency(const Tensor& region_probs,
                            const std::vector<std::int64_t>& action_set) {
    check(region_probs.ndim() == 2, "temporal_consistency: region probabilities must be K x C");
    check_action_set(action_set, region_probs.dim(1));
    const std::int64_t k = region_probs.dim(0);
    if (k < 2) {
        static std::atomic<bool> warned{false};
        if (!warned.exchange(true))
            std::cerr << "warning: single temporal region, consistency term is zero\n";
        return Tensor::scalar(0.0);
    }
    Tensor in_set = ops::gather_cols(region_probs, action_set);  // K x M
    Tensor delta = ops::sub(ops::slice_rows(in_set, 1, k), ops::slice_rows(in_set, 0, k - 1));
    const double scale = 1.0 / (static_cast<double>(action_set.size()) * static_cast<double>(k));
    return ops::affine(ops::sum(ops::abs(delta)), scale, 0.0);
}

Tensor mask_pool(const Tensor& region_posterior, const Tensor& frame_posterior,
                 const std::vector<std::int64_t>& action_set) {
    check(region_posterior.ndim() == 2 && frame_posterior.ndim() == 2,
          "mask_pool: posteriors must be T x C");
    check(region_posterior.shape() == frame_posterior.shape(),
          "mask_pool: posterior shapes differ, " + shape_str(region_posterior.shape()) + " vs " +
              shape_str(frame_posterior.shape()));
    check_action_set(action_set, region_posterior.dim(1));
    const double inv_t = 1.0 / static_cast<double>(region_posterior.dim(0));
    Tensor masks = ops::gather_cols(region_posterior, action_set);  // T x M
    return ops::affine(ops::matmul(masks, frame_posterior, true, false), inv_t, 0.0);
}

Tensor self_supervision_loss(const Tensor& pooled, const std::vector<std::int64_t>& action_set) {
    check(pooled.ndim() == 2, "self_supervision_loss: pooled scores must be M x C");
    check(pooled.dim(0) == static_cast<std::int64_t>(action_set.size()),
          "self_supervision_loss: one pooled row per action expected");
    check_action_set(action_set, pooled.dim(1));
    for (std::int64_t i = 0; i < pooled.numel(); ++i)
        if (!std::isfinite(pooled.at(i))) throw NumericError("self_supervision_loss: non-finite input");
    Tensor log_probs = ops::log_softmax(pooled, 1);
    std::vector<std::pair<std::int64_t, std::int64_t>> coords;
    coords.reserve(action_set.size());
    for (std::size_t m = 0; m < action_set.size(); ++m)
        coords.emplace_back(static_cast<std::int64_t>(m), action_set[m]);
    return ops::neg(ops::mean(ops::pick(log_probs, coords)));
}

Tensor length_regularizer(const Tensor& raw_lengths, double delta) {
    check(raw_lengths.ndim() == 1, "length_regularizer: raw lengths must be 1-d");
    Tensor over = ops::relu(ops::affine(raw_lengths, 1.0, -delta));
    Tensor under = ops::relu(ops::affine(raw_lengths, -1.0, -delta));
    return ops::mean(ops::add(over, under));
}

Tensor jsd_loss(const Tensor& region_posterior, const Tensor& frame_posterior) {
    check(region_posterior.ndim() == 2 && region_posterior.shape() == frame_posterior.shape(),
          "jsd_loss: posteriors must share a T x C shape");
    const std::int64_t t = region_posterior.dim(0);
    Tensor mid = ops::affine(ops::add(region_posterior, frame_posterior), 0.5, 0.0);
    Tensor kl_y = ops::sum(ops::xlogy_ratio(region_posterior, mid, 1e-12));
    Tensor kl_s = ops::sum(ops::xlogy_ratio(frame_posterior, mid, 1e-12));
    return ops::affine(ops::add(kl_y, kl_s), 0.5 / static_cast<double>(t), 0.0);
}

double LossReport::term(const std::string& name) const {
    for (const auto& [key, value] : terms)
        if (key == name) return value;
    throw std::invalid_argument("unknown loss term '" + name + "'");
}

LossReport total_loss(const LossInputs& in, const LossWeights& weights) {
    weights.validate();
    const bool needs_posteriors = weights.self_supervision > 0.0 || weights.jsd > 0.0;
    if (needs_posteriors) {
        check(in.region_posterior.defined() && in.frame_posterior.defined(),
              "total_loss: posterior matrices required for the enabled terms");
    }

    LossReport report;
    Tensor total;
    auto take = [&](const std::string& name, double weight, Tensor term) {
        report.terms.emplace_back(name, term.item());
        Tensor weighted = ops::affine(term, weight, 0.0);
        total = total.defined() ? ops::add(total, weighted) : weighted;
    };

    if (weights.set > 0.0)
        take("set", weights.set, set_loss(in.region_probs, in.action_set, in.num_classes));
    if (weights.region > 0.0)
        take("region", weights.region, region_loss(in.region_probs, in.action_set));
    if (weights.sparsity > 0.0)
        take("sparsity", weights.sparsity, inverse_sparsity(in.region_probs, in.action_set));
    if (weights.consistency > 0.0)
        take("consistency", weights.consistency,
             temporal_consistency(in.region_probs, in.action_set));
    if (weights.self_supervision > 0.0) {
        Tensor pooled = mask_pool(in.region_posterior, in.frame_posterior, in.action_set);
        take("self", weights.self_supervision, self_supervision_loss(pooled, in.action_set));
    }
    if (weights.length > 0.0)
        take("length", weights.length, length_regularizer(in.raw_lengths, in.delta));
    if (weights.jsd > 0.0)
        take("jsd", weights.jsd, jsd_loss(in.region_posterior, in.frame_posterior));

    report.total = total;
    return report;
}

}  // namespace setseg
