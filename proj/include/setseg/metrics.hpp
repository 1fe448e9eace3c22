#pragma once

#include <cstdint>
#include <vector>

namespace setseg {

/// Maximal run of equal labels, frames [begin, end] inclusive, 0-based.
struct Segment {
    std::int64_t begin;
    std::int64_t end;
    std::int64_t label;

    bool operator==(const Segment&) const = default;
};

using SegmentList = std::vector<Segment>;

SegmentList frames_to_segments(const std::vector<std::int64_t>& labels);
std::vector<std::int64_t> segments_to_frames(const SegmentList& segments);

/// Fraction of frames whose predicted label matches ground truth.
double mof(const std::vector<std::int64_t>& pred, const std::vector<std::int64_t>& gt);

/// Frame-pooled accuracy across a corpus.
struct MofAccumulator {
    std::int64_t correct = 0;
    std::int64_t total = 0;

    void add(const std::vector<std::int64_t>& pred, const std::vector<std::int64_t>& gt);
    double value() const;
};

/// Intersection-over-union per class present in gt, averaged over those
/// classes; the corpus value is the mean over videos.
double jaccard(const std::vector<std::int64_t>& pred, const std::vector<std::int64_t>& gt);

/// A gt segment counts as hit when a same-class predicted segment has its
/// midpoint frame inside it; every predicted segment hits at most one gt
/// segment and every gt segment counts once. Background segments are
/// excluded on both sides. Returns hits / #gt segments.
double midpoint_hit(const SegmentList& pred, const SegmentList& gt, std::int64_t background);

/// Count-pooled midpoint criterion across a corpus.
struct MidpointAccumulator {
    std::int64_t hits = 0;
    std::int64_t gt_segments = 0;

    void add(const SegmentList& pred, const SegmentList& gt, std::int64_t background);
    double value() const;
};

}  // namespace setseg
