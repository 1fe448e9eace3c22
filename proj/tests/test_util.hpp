#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "setseg/tensor.hpp"

namespace testutil {

using setseg::Graph;
using setseg::RngStream;
using setseg::Shape;
using setseg::TapeScope;
using setseg::Tensor;

struct FdResult {
    double max_rel_err = 0.0;
    double max_abs_grad = 0.0;
};

/// Central finite differences of a rebuildable scalar function against one
/// reverse sweep. Relative error uses |a - n| / max(1, |n|).
inline FdResult finite_diff(const std::function<Tensor()>& loss_fn, std::vector<Tensor> params,
                            double h = 1e-4) {
    Graph graph;
    {
        TapeScope scope(graph);
        Tensor loss = loss_fn();
        graph.backward(loss);
    }
    std::vector<std::vector<double>> analytic;
    for (auto& p : params) {
        analytic.push_back(p.has_grad()
                               ? p.grad()
                               : std::vector<double>(static_cast<std::size_t>(p.numel()), 0.0));
        p.zero_grad();
    }

    FdResult result;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = params[pi];
        for (std::int64_t i = 0; i < p.numel(); ++i) {
            const double saved = p.at(i);
            p.at(i) = saved + h;
            const double up = loss_fn().item();
            p.at(i) = saved - h;
            const double down = loss_fn().item();
            p.at(i) = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[pi][static_cast<std::size_t>(i)];
            result.max_rel_err =
                std::max(result.max_rel_err, std::fabs(a - numeric) / std::max(1.0, std::fabs(numeric)));
            result.max_abs_grad = std::max(result.max_abs_grad, std::fabs(a));
        }
    }
    return result;
}

inline Tensor random_tensor(Shape shape, RngStream& rng, double scale = 1.0,
                            bool requires_grad = true) {
    Tensor t = Tensor::zeros(std::move(shape), requires_grad);
    for (auto& v : t.values()) v = scale * rng.next_normal();
    return t;
}

inline Tensor random_simplex_rows(std::int64_t rows, std::int64_t cols, RngStream& rng) {
    Tensor t = Tensor::zeros({rows, cols});
    for (std::int64_t r = 0; r < rows; ++r) {
        double sum = 0.0;
        for (std::int64_t c = 0; c < cols; ++c) {
            const double v = -std::log(std::max(rng.next_uniform(), 1e-12));
            t.at(r, c) = v;
            sum += v;
        }
        for (std::int64_t c = 0; c < cols; ++c) t.at(r, c) /= sum;
    }
    return t;
}

}  // namespace testutil
