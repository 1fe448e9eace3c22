#include <doctest.h>

#include <cmath>
#include <vector>

#include "setseg/ops.hpp"
#include "setseg/tensor.hpp"
#include "test_util.hpp"

using namespace setseg;
using testutil::finite_diff;
using testutil::random_tensor;

namespace {

// independent direct-summation oracle over the zero-padded sequence
std::vector<double> conv_oracle(const std::vector<double>& x, std::int64_t t,
                                const std::vector<double>& w, std::int64_t k,
                                std::int64_t dilation) {
    const std::int64_t half = (k - 1) / 2;
    std::vector<double> y(static_cast<std::size_t>(t), 0.0);
    for (std::int64_t i = 0; i < t; ++i)
        for (std::int64_t j = 0; j < k; ++j) {
            const std::int64_t s = i + (j - half) * dilation;
            if (s >= 0 && s < t)
                y[static_cast<std::size_t>(i)] +=
                    w[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(s)];
        }
    return y;
}

}  // namespace

TEST_CASE("conv1d identity kernel maps input to itself") {
    RngStream rng(11);
    Tensor x = random_tensor({7, 3}, rng, 1.0, false);
    Tensor w = Tensor::zeros({1, 3, 3});
    for (std::int64_t c = 0; c < 3; ++c) w.at(c * 3 + c) = 1.0;
    Tensor b = Tensor::zeros({3});
    Tensor y = ops::conv1d_dilated(x, w, b, 1);
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(y.at(i) == x.at(i));
}

TEST_CASE("conv1d zero kernel emits the bias on every row") {
    RngStream rng(12);
    Tensor x = random_tensor({5, 4}, rng, 1.0, false);
    Tensor w = Tensor::zeros({3, 4, 2});
    Tensor b = Tensor::from({2}, {0.5, -1.25});
    Tensor y = ops::conv1d_dilated(x, w, b, 2);
    for (std::int64_t t = 0; t < 5; ++t) {
        CHECK(y.at(t, 0) == 0.5);
        CHECK(y.at(t, 1) == -1.25);
    }
}

TEST_CASE("conv1d dilated example matches the direct-summation oracle") {
    const std::vector<double> x = {1, 2, 3, 4, 5};
    const std::vector<double> w = {1, 1, 1};
    const auto expect = conv_oracle(x, 5, w, 3, 2);
    // frozen oracle output under symmetric zero padding
    CHECK(expect == std::vector<double>{4, 6, 9, 6, 8});

    Tensor xt = Tensor::from({5, 1}, x);
    Tensor wt = Tensor::from({3, 1, 1}, w);
    Tensor y = ops::conv1d_dilated(xt, wt, Tensor::zeros({1}), 2);
    for (std::int64_t i = 0; i < 5; ++i) CHECK(y.at(i) == expect[static_cast<std::size_t>(i)]);
}

TEST_CASE("conv1d rejects channel mismatches") {
    Tensor x = Tensor::zeros({4, 3});
    Tensor w = Tensor::zeros({3, 2, 5});
    CHECK_THROWS_AS(ops::conv1d_dilated(x, w, Tensor::zeros({5}), 1), std::invalid_argument);
}

TEST_CASE("maxpool basics") {
    Tensor x = Tensor::from({4, 1}, {1, 3, 2, 2});
    Tensor y = ops::maxpool1d(x);
    CHECK(y.dim(0) == 2);
    CHECK(y.at(0) == 3);
    CHECK(y.at(1) == 2);

    Tensor c = Tensor::full({6, 2}, 0.75);
    Tensor yc = ops::maxpool1d(c);
    CHECK(yc.dim(0) == 3);
    for (std::int64_t i = 0; i < yc.numel(); ++i) CHECK(yc.at(i) == 0.75);

    // trailing odd frame dropped
    Tensor odd = Tensor::from({5, 1}, {1, 2, 3, 4, 99});
    CHECK(ops::maxpool1d(odd).dim(0) == 2);

    CHECK_THROWS_AS(ops::maxpool1d(Tensor::zeros({1, 2})), std::invalid_argument);
}

TEST_CASE("maxpool equals brute-force pairwise max on random input") {
    RngStream rng(21);
    Tensor x = random_tensor({10, 3}, rng, 2.0, false);
    Tensor y = ops::maxpool1d(x);
    for (std::int64_t p = 0; p < 5; ++p)
        for (std::int64_t c = 0; c < 3; ++c)
            CHECK(y.at(p, c) == std::max(x.at(2 * p, c), x.at(2 * p + 1, c)));
}

TEST_CASE("maxpool backward routes ties to the earlier row") {
    Graph g;
    Tensor x = Tensor::from({2, 1}, {1.0, 1.0}, true);
    {
        TapeScope scope(g);
        g.backward(ops::sum(ops::maxpool1d(x)));
    }
    CHECK(x.grad()[0] == 1.0);
    CHECK(x.grad()[1] == 0.0);
}

TEST_CASE("softmax of an all-equal row is uniform, rows sum to one") {
    Tensor x = Tensor::full({1, 4}, 3.7);
    Tensor y = ops::softmax(x, 1);
    for (std::int64_t i = 0; i < 4; ++i) CHECK(y.at(i) == doctest::Approx(0.25).epsilon(1e-12));

    RngStream rng(31);
    Tensor r = random_tensor({6, 5}, rng, 3.0, false);
    Tensor s = ops::softmax(r, 1);
    for (std::int64_t t = 0; t < 6; ++t) {
        double sum = 0.0;
        for (std::int64_t c = 0; c < 5; ++c) {
            CHECK(s.at(t, c) > 0.0);
            sum += s.at(t, c);
        }
        CHECK(std::fabs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("linear resize stretches (0,1) to five align-corner samples") {
    Tensor x = Tensor::from({2, 1}, {0.0, 1.0});
    Tensor y = ops::resize_linear(x, 5);
    const double expect[] = {0.0, 0.25, 0.5, 0.75, 1.0};
    for (std::int64_t i = 0; i < 5; ++i)
        CHECK(y.at(i) == doctest::Approx(expect[i]).epsilon(1e-15));

    // identity when sizes match
    RngStream rng(32);
    Tensor r = random_tensor({4, 3}, rng, 1.0, false);
    Tensor same = ops::resize_linear(r, 4);
    for (std::int64_t i = 0; i < r.numel(); ++i) CHECK(same.at(i) == r.at(i));
}

TEST_CASE("reduce_max equals per-line brute force") {
    RngStream rng(33);
    Tensor x = random_tensor({7, 4}, rng, 2.0, false);
    Tensor colmax = ops::reduce_max(x, 0);
    for (std::int64_t c = 0; c < 4; ++c) {
        double best = x.at(0, c);
        for (std::int64_t r = 1; r < 7; ++r) best = std::max(best, x.at(r, c));
        CHECK(colmax.at(c) == best);
    }
    Tensor rowmax = ops::reduce_max(x, 1);
    for (std::int64_t r = 0; r < 7; ++r) {
        double best = x.at(r, 0);
        for (std::int64_t c = 1; c < 4; ++c) best = std::max(best, x.at(r, c));
        CHECK(rowmax.at(r) == best);
    }
}

TEST_CASE("backward of sum gives all-ones; relu kills negative branches") {
    Graph g;
    Tensor x = Tensor::from({2, 3}, {1, -2, 3, -4, 5, -6}, true);
    {
        TapeScope scope(g);
        g.backward(ops::sum(x));
    }
    for (double v : x.grad()) CHECK(v == 1.0);

    Tensor neg = Tensor::from({4}, {-1, -2, -3, -4}, true);
    Graph g2;
    {
        TapeScope scope(g2);
        g2.backward(ops::mean(ops::relu(neg)));
    }
    for (double v : neg.grad()) CHECK(v == 0.0);
}

TEST_CASE("repeated backward accumulates leaf gradients") {
    Tensor x = Tensor::from({3}, {1, 2, 3}, true);
    Graph g;
    Tensor loss;
    {
        TapeScope scope(g);
        loss = ops::sum(x);
    }
    g.backward(loss);
    g.backward(loss);
    for (double v : x.grad()) CHECK(v == 2.0);
}

TEST_CASE("backward through a node without a rule is a hard error") {
    Tensor x = Tensor::from({1}, {2.0}, true);
    Tensor y = Tensor::from({1}, {4.0}, true);
    Graph g;
    g.record("broken", {x}, y, nullptr);
    CHECK_THROWS_AS(g.backward(y), std::runtime_error);
}

TEST_CASE("dropout is the identity in eval mode and scales survivors in train mode") {
    RngStream rng(41);
    Tensor x = random_tensor({8, 4}, rng, 1.0, false);
    RngStream drop(7);
    Tensor eval_out = ops::dropout(x, 0.25, false, drop);
    CHECK(eval_out.impl() == x.impl());  // same storage, no node

    RngStream drop_a(7), drop_b(7);
    Tensor a = ops::dropout(x, 0.5, true, drop_a);
    Tensor b = ops::dropout(x, 0.5, true, drop_b);
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        CHECK(a.at(i) == b.at(i));  // same stream, same mask
        const bool zero = a.at(i) == 0.0;
        const bool scaled = a.at(i) == doctest::Approx(2.0 * x.at(i)).epsilon(1e-12);
        CHECK((zero || scaled));
    }
    CHECK_THROWS_AS(ops::dropout(x, 1.0, true, drop_a), std::invalid_argument);
}

TEST_CASE("matmul matches a naive product for every transpose flag") {
    RngStream rng(51);
    Tensor a = random_tensor({3, 4}, rng, 1.0, false);
    Tensor b = random_tensor({4, 2}, rng, 1.0, false);
    Tensor c = ops::matmul(a, b);
    for (std::int64_t i = 0; i < 3; ++i)
        for (std::int64_t j = 0; j < 2; ++j) {
            double acc = 0.0;
            for (std::int64_t p = 0; p < 4; ++p) acc += a.at(i, p) * b.at(p, j);
            CHECK(c.at(i, j) == doctest::Approx(acc).epsilon(1e-12));
        }

    Tensor at = random_tensor({4, 3}, rng, 1.0, false);
    Tensor c2 = ops::matmul(at, b, true, false);
    for (std::int64_t i = 0; i < 3; ++i)
        for (std::int64_t j = 0; j < 2; ++j) {
            double acc = 0.0;
            for (std::int64_t p = 0; p < 4; ++p) acc += at.at(p, i) * b.at(p, j);
            CHECK(c2.at(i, j) == doctest::Approx(acc).epsilon(1e-12));
        }

    Tensor bt = random_tensor({2, 4}, rng, 1.0, false);
    Tensor c3 = ops::matmul(a, bt, false, true);
    for (std::int64_t i = 0; i < 3; ++i)
        for (std::int64_t j = 0; j < 2; ++j) {
            double acc = 0.0;
            for (std::int64_t p = 0; p < 4; ++p) acc += a.at(i, p) * bt.at(j, p);
            CHECK(c3.at(i, j) == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("finite differences agree with every operator's backward rule") {
    RngStream rng(61);
    const double tol = 1e-5;

    SUBCASE("conv1d_dilated") {
        Tensor x = random_tensor({9, 3}, rng);
        Tensor w = random_tensor({3, 3, 4}, rng, 0.5);
        Tensor b = random_tensor({4}, rng, 0.1);
        auto loss = [&] { return ops::mean(ops::relu(ops::conv1d_dilated(x, w, b, 2))); };
        CHECK(finite_diff(loss, {x, w, b}).max_rel_err < tol);
    }
    SUBCASE("maxpool + softmax + matmul") {
        Tensor x = random_tensor({8, 3}, rng);
        Tensor w = random_tensor({3, 5}, rng, 0.7);
        auto loss = [&] {
            return ops::mean(ops::softmax(ops::matmul(ops::maxpool1d(x), w), 1));
        };
        CHECK(finite_diff(loss, {x, w}).max_rel_err < tol);
    }
    SUBCASE("log_softmax both axes") {
        Tensor x = random_tensor({4, 5}, rng);
        auto loss0 = [&] { return ops::mean(ops::log_softmax(x, 0)); };
        auto loss1 = [&] { return ops::mean(ops::log_softmax(x, 1)); };
        CHECK(finite_diff(loss0, {x}).max_rel_err < tol);
        CHECK(finite_diff(loss1, {x}).max_rel_err < tol);
    }
    SUBCASE("elementwise add/sub/mul/abs/affine") {
        Tensor a = random_tensor({6}, rng);
        Tensor b = random_tensor({6}, rng);
        // keep |.| differentiable: move entries away from zero
        for (auto& v : a.values()) v += (v >= 0 ? 0.5 : -0.5);
        auto loss = [&] {
            Tensor s = ops::add(ops::mul(a, b), ops::sub(a, b));
            return ops::sum(ops::abs(ops::affine(s, 1.3, -0.2)));
        };
        CHECK(finite_diff(loss, {a, b}).max_rel_err < tol);
    }
    SUBCASE("reductions and reduce_max") {
        Tensor x = random_tensor({5, 4}, rng);
        auto loss = [&] {
            Tensor pieces = ops::add(ops::sum_axis(x, 0), ops::reduce_max(x, 0));
            return ops::add(ops::mean(pieces), ops::mean(ops::mean_axis(x, 1)));
        };
        CHECK(finite_diff(loss, {x}).max_rel_err < tol);
    }
    SUBCASE("resize, gather, pick, slice, rowvec") {
        Tensor x = random_tensor({4, 3}, rng);
        Tensor v = random_tensor({3}, rng);
        auto loss = [&] {
            Tensor r = ops::resize_linear(ops::add_rowvec(x, v), 9);
            Tensor g = ops::gather_cols(r, {0, 2, 2});
            Tensor p = ops::pick(g, {{0, 0}, {3, 1}, {8, 2}});
            return ops::add(ops::sum(p), ops::mean(ops::slice_rows(r, 2, 7)));
        };
        CHECK(finite_diff(loss, {x, v}).max_rel_err < tol);
    }
    SUBCASE("log, clamp_min, xlogy_ratio") {
        Tensor p = testutil::random_simplex_rows(3, 4, rng);
        Tensor q = testutil::random_simplex_rows(3, 4, rng);
        p.set_requires_grad(true);
        q.set_requires_grad(true);
        auto loss = [&] {
            Tensor l = ops::sum(ops::log(ops::clamp_min(p, 1e-7)));
            return ops::add(l, ops::sum(ops::xlogy_ratio(p, q, 1e-12)));
        };
        CHECK(finite_diff(loss, {p, q}).max_rel_err < tol);
    }
    SUBCASE("dropout with a frozen mask") {
        Tensor x = random_tensor({6, 2}, rng);
        auto loss = [&] {
            RngStream drop(99);  // same mask every evaluation
            return ops::mean(ops::dropout(x, 0.25, true, drop));
        };
        CHECK(finite_diff(loss, {x}).max_rel_err < tol);
    }
}

TEST_CASE("fixed seed gives bitwise-identical forward and backward") {
    auto run = [] {
        RngStream rng(123);
        Tensor x = random_tensor({10, 4}, rng);
        Tensor w = random_tensor({3, 4, 4}, rng, 0.4);
        Tensor b = random_tensor({4}, rng, 0.1);
        Graph g;
        Tensor y;
        {
            TapeScope scope(g);
            RngStream drop(5);
            y = ops::mean(
                ops::dropout(ops::relu(ops::conv1d_dilated(x, w, b, 2)), 0.25, true, drop));
            g.backward(y);
        }
        std::vector<double> out = {y.item()};
        out.insert(out.end(), x.grad().begin(), x.grad().end());
        out.insert(out.end(), w.grad().begin(), w.grad().end());
        return out;
    };
    CHECK(run() == run());
}
