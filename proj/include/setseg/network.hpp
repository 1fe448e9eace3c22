#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "setseg/tensor.hpp"

namespace setseg {

/// Architecture hyperparameters. The temporal stack halves the frame rate
/// at every pool, so a video must span at least downsample_factor() frames
/// (after padding) to yield one region.
struct ModelConfig {
    std::int64_t input_dim = 0;
    std::int64_t num_classes = 0;
    std::int64_t hidden = 128;
    std::int64_t embed_blocks = 6;
    std::int64_t region_blocks = 4;
    std::vector<std::int64_t> embed_pools = {1, 2, 4};  // pool after these block indices
    std::vector<std::int64_t> region_pools = {2, 4};
    double dropout = 0.25;
    std::int64_t expansion = 100;  // source copies used by the region upsampler
    double delta = 1.0;            // raw-length hinge width

    std::int64_t embed_factor() const;      // 2^#embed_pools
    std::int64_t region_factor() const;     // 2^#region_pools
    std::int64_t downsample_factor() const;
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

/// Named learnable tensors in a stable insertion order (the checkpoint and
/// optimizer iteration order).
class ParameterStore {
  public:
    Tensor& add(const std::string& name, Tensor t);
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    const std::vector<std::string>& names() const { return names_; }
    std::size_t size() const { return names_.size(); }

  private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<Tensor> tensors_;
};

struct RegionOutput {
    Tensor probs;        // K x C, row-stochastic
    Tensor raw_lengths;  // K, unconstrained reals
};

/// The three subnetworks: temporal embedding, region estimator with class
/// and length heads, and the frame branch.
class Model {
  public:
    explicit Model(ModelConfig config);

    const ModelConfig& config() const { return config_; }
    ParameterStore& params() { return params_; }
    const ParameterStore& params() const { return params_; }

    /// Fan-in uniform weights, zero biases.
    void init_params(RngStream& rng);

    /// features (T x D) -> embedding (T/embed_factor x hidden). Requires
    /// T to be a multiple of downsample_factor(); see pad_rows_edge.
    Tensor embed(const Tensor& features, bool training, RngStream& dropout_rng) const;

    /// embedding -> per-region class probabilities and raw lengths,
    /// K = T' / region_factor().
    RegionOutput region_forward(const Tensor& embedding, bool training,
                                RngStream& dropout_rng) const;

    /// embedding -> frame posteriors at `total_frames` rows.
    Tensor frame_branch(const Tensor& embedding, std::int64_t total_frames) const;

    bool is_length_head_param(const std::string& name) const;

  private:
    Tensor tcb(const Tensor& x, const std::string& prefix, std::int64_t dilation, bool training,
               RngStream& dropout_rng) const;

    ModelConfig config_;
    ParameterStore params_;
};

/// Right-pads with copies of the last row up to `target_rows`.
Tensor pad_rows_edge(const Tensor& x, std::int64_t target_rows);

/// Smallest multiple of `factor` that is >= rows.
std::int64_t round_up(std::int64_t rows, std::int64_t factor);

void save_checkpoint(const std::string& path, const Model& model, std::uint64_t rng_counter);
Model load_checkpoint(const std::string& path, std::uint64_t* rng_counter = nullptr);

}  // namespace setseg
