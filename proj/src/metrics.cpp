#include "setseg/metrics.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace setseg {

namespace {

void check_lengths(const std::vector<std::int64_t>& pred, const std::vector<std::int64_t>& gt) {
    if (pred.size() != gt.size())
        throw std::invalid_argument("metrics: prediction has " + std::to_string(pred.size()) +
                                    " frames, ground truth has " + std::to_string(gt.size()));
    if (pred.empty()) throw std::invalid_argument("metrics: empty label sequence");
}

}  // namespace

SegmentList frames_to_segments(const std::vector<std::int64_t>& labels) {
    if (labels.empty()) throw std::invalid_argument("frames_to_segments: empty label sequence");
    SegmentList out;
    std::int64_t begin = 0;
    for (std::size_t t = 1; t <= labels.size(); ++t) {
        if (t == labels.size() || labels[t] != labels[t - 1]) {
            out.push_back({begin, static_cast<std::int64_t>(t) - 1, labels[t - 1]});
            begin = static_cast<std::int64_t>(t);
        }
    }
    return out;
}

std::vector<std::int64_t> segments_to_frames(const SegmentList& segments) {
    std::vector<std::int64_t> out;
    for (const auto& s : segments) {
        if (s.begin > s.end) throw std::invalid_argument("segments_to_frames: inverted segment");
        for (std::int64_t t = s.begin; t <= s.end; ++t) out.push_back(s.label);
    }
    return out;
}

void MofAccumulator::add(const std::vector<std::int64_t>& pred,
                         const std::vector<std::int64_t>& gt) {
    check_lengths(pred, gt);
    for (std::size_t t = 0; t < pred.size(); ++t)
        if (pred[t] == gt[t]) ++correct;
    total += static_cast<std::int64_t>(pred.size());
}

double MofAccumulator::value() const {
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

double mof(const std::vector<std::int64_t>& pred, const std::vector<std::int64_t>& gt) {
    MofAccumulator acc;
    acc.add(pred, gt);
    return acc.value();
}

double jaccard(const std::vector<std::int64_t>& pred, const std::vector<std::int64_t>& gt) {
    check_lengths(pred, gt);
    std::vector<std::int64_t> classes(gt);
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

    double sum = 0.0;
    for (std::int64_t c : classes) {
        std::int64_t inter = 0, uni = 0;
        for (std::size_t t = 0; t < gt.size(); ++t) {
            const bool in_pred = pred[t] == c;
            const bool in_gt = gt[t] == c;
            inter += in_pred && in_gt;
            uni += in_pred || in_gt;
        }
        sum += uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
    }
    return sum / static_cast<double>(classes.size());
}

void MidpointAccumulator::add(const SegmentList& pred, const SegmentList& gt,
                              std::int64_t background) {
    std::vector<bool> gt_hit(gt.size(), false);
    for (const auto& p : pred) {
        if (p.label == background) continue;
        const std::int64_t mid = (p.begin + p.end) / 2;
        for (std::size_t i = 0; i < gt.size(); ++i) {
            const auto& g = gt[i];
            if (g.label == background || gt_hit[i]) continue;
            if (g.label == p.label && mid >= g.begin && mid <= g.end) {
                gt_hit[i] = true;
                ++hits;
                break;  // a predicted segment hits at most one gt segment
            }
        }
    }
    for (const auto& g : gt)
        if (g.label != background) ++gt_segments;
}

double MidpointAccumulator::value() const {
    return gt_segments == 0 ? 1.0 : static_cast<double>(hits) / static_cast<double>(gt_segments);
}

double midpoint_hit(const SegmentList& pred, const SegmentList& gt, std::int64_t background) {
    MidpointAccumulator acc;
    acc.add(pred, gt, background);
    return acc.value();
}

}  // namespace setseg
