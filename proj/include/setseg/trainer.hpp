#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "setseg/data.hpp"
#include "setseg/losses.hpp"
#include "setseg/network.hpp"
#include "setseg/upsampler.hpp"

namespace setseg {

/// Everything needed to reproduce a run: architecture, loss weights,
/// optimizer settings and the seed.
struct RunConfig {
    ModelConfig model;
    LossWeights weights;
    double learning_rate = 0.01;
    double weight_decay = 0.005;
    std::int64_t epochs = 1;
    std::int64_t eval_every = 0;  // 0: checkpoint only at the end
    std::uint64_t seed = 1;
    std::string data_root;
    std::string out_dir;
};

/// Flat key=value config file; unknown keys are rejected.
RunConfig parse_run_config(const std::string& path);
RunConfig parse_run_config_lines(const std::vector<std::string>& lines);
void write_run_config(const std::string& path, const RunConfig& config);

struct SynthRequest {
    SynthConfig synth;
    std::int64_t train_videos = 8;
    std::int64_t test_videos = 2;
};
SynthRequest parse_synth_config(const std::string& path);

/// One full forward pass over a video. Frames are edge-padded to the
/// model's downsample factor; the posteriors are cropped back.
struct VideoForward {
    Tensor embedding;
    RegionOutput region;
    AbsoluteLengths lengths;
    Tensor region_posterior;  // Y, T x C
    Tensor frame_posterior;   // S, T x C
};

VideoForward forward_video(const Model& model, const Tensor& features, bool training,
                           RngStream& dropout_rng,
                           const std::vector<std::int64_t>* fixed_lint = nullptr);

struct TrainResult {
    std::string checkpoint_path;
    std::string trainlog_path;
    double final_total = 0.0;
};

TrainResult train(const RunConfig& config);
TrainResult train_on(const RunConfig& config, const Corpus& corpus);

struct EvalVideoRow {
    std::string id;
    double mof = 0.0;
    double jaccard = 0.0;
    double midpoint = 0.0;
};

struct EvalResult {
    double mof = 0.0;
    double jaccard = 0.0;
    double midpoint = 0.0;
    std::vector<EvalVideoRow> per_video;
};

/// Frame predictions are argmax over the upsampled region posteriors in
/// eval mode; class 0 is treated as background by the midpoint criterion.
EvalResult evaluate_model(const Model& model, const std::vector<VideoRecord>& videos);
EvalResult evaluate_labelings(const std::vector<std::vector<std::int64_t>>& predictions,
                              const std::vector<VideoRecord>& videos);
void write_eval_report(const EvalResult& result, const std::string& csv_path,
                       const std::string& text_path);

struct Prediction {
    std::vector<std::int64_t> labels;
    std::vector<std::int64_t> region_length;
    std::vector<std::int64_t> region_class;
    std::vector<double> region_prob;
    Tensor posterior;  // Y, T x C
};

Prediction predict_video(const Model& model, const Tensor& features);
std::vector<std::int64_t> predict_labels(const Model& model, const Tensor& features);

struct GradCheckConfig {
    std::int64_t frames = 64;
    std::int64_t input_dim = 6;
    std::int64_t num_classes = 5;
    std::int64_t set_size = 3;
    std::int64_t hidden = 16;
    double step = 1e-4;
    double threshold = 1e-3;
    std::uint64_t seed = 7;
    LossWeights weights;
    std::vector<std::int64_t> embed_pools = {1, 2, 4};
};

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    double max_abs_grad = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double worst = 0.0;
    bool passed = false;
};

/// Central finite differences of the full objective against the analytic
/// gradients, per parameter tensor. Dropout is disabled and the integer
/// length partition is frozen at the base point so the compared function
/// is smooth. `corrupt` (test hook) may tamper with the analytic grads.
GradCheckReport gradcheck(
    const GradCheckConfig& config,
    const std::function<void(const std::string&, std::vector<double>&)>& corrupt = nullptr);

}  // namespace setseg
