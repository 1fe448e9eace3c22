#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "setseg/tensor.hpp"

namespace setseg {

struct VideoRecord {
    std::string id;
    Tensor features;                        // T x D
    std::vector<std::int64_t> action_set;   // sorted unique class ids
    std::vector<std::int64_t> frame_labels; // empty when not annotated (evaluation only)
};

struct Corpus {
    std::vector<VideoRecord> train;
    std::vector<VideoRecord> test;

    std::int64_t feature_dim() const;
};

/// Synthetic corpus recipe: class-conditional Gaussian features over a
/// random segmentation, smoothed along time. The class means are scaled
/// one-hot rows, separable when mean_scale * sqrt(2) > 2 * noise_sigma.
struct SynthConfig {
    std::int64_t num_classes = 5;  // class 0 acts as background
    std::int64_t feature_dim = 16;
    std::int64_t frames = 256;
    std::int64_t min_segments = 3;
    std::int64_t max_segments = 6;
    std::int64_t min_segment_frames = 8;
    double dirichlet_alpha = 1.5;
    double mean_scale = 3.0;
    double noise_sigma = 1.0;
    std::int64_t smoothing = 5;
    std::uint64_t seed = 1;

    void validate() const;
};

std::vector<VideoRecord> gen_synthetic(const SynthConfig& config, std::int64_t n_videos,
                                       const std::string& id_prefix = "v");

Corpus gen_synthetic_corpus(const SynthConfig& config, std::int64_t n_train, std::int64_t n_test);

/// Corpus directory layout:
///   root/features/ID.bin   16-byte header (magic "FSEQ", u32 version, u32 T,
///                          u32 D, little-endian) + row-major float32 values
///   root/labels/ID.txt     one class id per line (optional per video)
///   root/sets/ID.txt       one class id per line
///   root/split_train.txt, root/split_test.txt   one video id per line
void save_corpus(const Corpus& corpus, const std::string& root);
Corpus load_corpus(const std::string& root);
std::vector<VideoRecord> load_split(const std::string& root, const std::string& split);

void save_features(const std::string& path, const Tensor& features);
Tensor load_features(const std::string& path);

}  // namespace setseg
