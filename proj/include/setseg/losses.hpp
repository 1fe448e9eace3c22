#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "setseg/tensor.hpp"

namespace setseg {

/// Per-term weights of the training objective; a term is enabled iff its
/// weight is positive. The self-supervision and divergence terms are
/// mutually exclusive.
struct LossWeights {
    double set = 1.0;
    double region = 1.0;
    double sparsity = 1.0;
    double consistency = 1.0;
    double self_supervision = 1.0;
    double length = 1.0;
    double jsd = 0.0;

    void validate() const;
};

/// Binary cross entropy between the per-class max over regions and the
/// video's action set.
Tensor set_loss(const Tensor& region_probs, const std::vector<std::int64_t>& action_set,
                std::int64_t num_classes);

/// Cross entropy pushing every region towards exactly one in-set action.
Tensor region_loss(const Tensor& region_probs, const std::vector<std::int64_t>& action_set);

/// Prefers balanced in-set class mass across regions.
Tensor inverse_sparsity(const Tensor& region_probs, const std::vector<std::int64_t>& action_set);

/// Total variation of in-set probabilities across neighboring regions.
Tensor temporal_consistency(const Tensor& region_probs,
                            const std::vector<std::int64_t>& action_set);

/// Pools the frame posteriors S under the per-action masks taken from the
/// region posteriors Y: V = W^T S / T with W = Y[:, action_set].
Tensor mask_pool(const Tensor& region_posterior, const Tensor& frame_posterior,
                 const std::vector<std::int64_t>& action_set);

/// Softmax cross entropy of each pooled row against its own action.
Tensor self_supervision_loss(const Tensor& pooled, const std::vector<std::int64_t>& action_set);

/// Hinge penalty keeping raw lengths inside [-delta, delta].
Tensor length_regularizer(const Tensor& raw_lengths, double delta);

/// Frame-averaged Jensen-Shannon divergence between the two posteriors.
Tensor jsd_loss(const Tensor& region_posterior, const Tensor& frame_posterior);

struct LossInputs {
    Tensor region_probs;      // K x C
    Tensor raw_lengths;       // K
    Tensor region_posterior;  // Y, T x C; required when self_supervision or jsd is on
    Tensor frame_posterior;   // S, T x C; required when self_supervision or jsd is on
    std::vector<std::int64_t> action_set;
    std::int64_t num_classes = 0;
    double delta = 1.0;
};

struct LossReport {
    std::vector<std::pair<std::string, double>> terms;  // unweighted values, logging order
    Tensor total;

    double term(const std::string& name) const;
};

/// Weighted sum of the enabled terms.
LossReport total_loss(const LossInputs& in, const LossWeights& weights);

}  // namespace setseg
