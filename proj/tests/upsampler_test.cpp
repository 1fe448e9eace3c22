#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "setseg/ops.hpp"
#include "setseg/upsampler.hpp"
#include "test_util.hpp"

using namespace setseg;
using testutil::finite_diff;
using testutil::random_simplex_rows;
using testutil::random_tensor;

namespace {

constexpr std::int64_t kExpansion = 100;

// reference rounding: floor, then hand out the remainder by largest fraction
std::vector<std::int64_t> rounding_oracle(const std::vector<double>& lp, std::int64_t total) {
    std::vector<std::int64_t> out(lp.size());
    std::vector<std::pair<double, std::size_t>> fr;
    std::int64_t sum = 0;
    for (std::size_t i = 0; i < lp.size(); ++i) {
        out[i] = static_cast<std::int64_t>(std::floor(lp[i]));
        fr.emplace_back(lp[i] - std::floor(lp[i]), i);
        sum += out[i];
    }
    std::stable_sort(fr.begin(), fr.end(), [](auto& a, auto& b) { return a.first > b.first; });
    for (std::int64_t i = 0; i < total - sum; ++i) ++out[fr[static_cast<std::size_t>(i)].second];
    return out;
}

Tensor raw_lengths_for(const std::vector<std::int64_t>& lint) {
    std::vector<double> logs;
    for (auto v : lint) logs.push_back(std::log(static_cast<double>(v)));
    return Tensor::from({static_cast<std::int64_t>(lint.size())}, std::move(logs));
}

}  // namespace

TEST_CASE("normalize_lengths symmetric and closed-form cases") {
    AbsoluteLengths a = normalize_lengths(Tensor::from({4}, {0, 0, 0, 0}), 100);
    for (std::int64_t i = 0; i < 4; ++i)
        CHECK(a.lprime.at(i) == doctest::Approx(25.0).epsilon(1e-12));
    CHECK(a.lint == std::vector<std::int64_t>{25, 25, 25, 25});

    AbsoluteLengths b = normalize_lengths(Tensor::from({2}, {std::log(3.0), 0.0}), 4);
    CHECK(b.lprime.at(0) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(b.lprime.at(1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(b.lint == std::vector<std::int64_t>{3, 1});
}

TEST_CASE("normalize_lengths rejects T < K") {
    CHECK_THROWS_AS(normalize_lengths(Tensor::zeros({5}), 4), std::invalid_argument);
}

TEST_CASE("integerized lengths partition T with floor one and stay near lprime") {
    RngStream rng(101);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor raw = random_tensor({7}, rng, 0.5, false);
        AbsoluteLengths a = normalize_lengths(raw, 101);
        const std::int64_t sum = std::accumulate(a.lint.begin(), a.lint.end(), std::int64_t{0});
        CHECK(sum == 101);
        double max_dev = 0.0;
        for (std::size_t i = 0; i < a.lint.size(); ++i) {
            CHECK(a.lint[i] >= 1);
            max_dev = std::max(max_dev, std::fabs(static_cast<double>(a.lint[i]) -
                                                  a.lprime.at(static_cast<std::int64_t>(i))));
        }
        CHECK(max_dev <= 1.0);
        CHECK(a.lint == rounding_oracle(a.lprime.values(), 101));
    }
}

TEST_CASE("integerize keeps every region at one frame even for extreme inputs") {
    auto lint = integerize_lengths({0.2, 0.2, 0.2, 99.4}, 100);
    CHECK(std::accumulate(lint.begin(), lint.end(), std::int64_t{0}) == 100);
    for (auto v : lint) CHECK(v >= 1);
}

TEST_CASE("raising one raw length never shrinks its absolute length") {
    RngStream rng(102);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor raw = random_tensor({5}, rng, 1.0, false);
        AbsoluteLengths base = normalize_lengths(raw, 64);
        const std::int64_t k = static_cast<std::int64_t>(rng.next_u64() % 5);
        Tensor bumped = Tensor::from({5}, raw.values());
        bumped.at(k) += 0.3;
        AbsoluteLengths moved = normalize_lengths(bumped, 64);
        CHECK(moved.lprime.at(k) >= base.lprime.at(k));
    }
}

TEST_CASE("affine map endpoints are exact") {
    RngStream rng(103);
    for (int trial = 0; trial < 200; ++trial) {
        const std::int64_t n = 2 + static_cast<std::int64_t>(rng.next_u64() % 200);
        CHECK(normalized_source_coord(1, static_cast<double>(n), kExpansion) == -1.0);
        CHECK(std::fabs(normalized_source_coord(n, static_cast<double>(n), kExpansion) - 1.0) <
              1e-12);
    }
    // a one-frame region keeps only the -1 endpoint
    CHECK(normalized_source_coord(1, 1.0, kExpansion) == -1.0);
}

TEST_CASE("temporal_sample reproduces the source distribution on valid rows") {
    Tensor a = Tensor::from({4}, {0.1, 0.2, 0.3, 0.4});
    SUBCASE("integral length: every valid row is exact") {
        const std::int64_t n = 7;
        Tensor block = temporal_sample(a, Tensor::scalar(7.0), n, 9, kExpansion);
        CHECK(block.dim(0) == 9);
        for (std::int64_t h = 0; h < n; ++h)
            for (std::int64_t c = 0; c < 4; ++c) CHECK(block.at(h, c) == a.at(c));
    }
    SUBCASE("first row is exact for any real length") {
        for (double len : {0.4, 1.0, 2.7, 55.0}) {
            Tensor block = temporal_sample(a, Tensor::scalar(len), 1, 3, kExpansion);
            for (std::int64_t c = 0; c < 4; ++c) CHECK(block.at(0, c) == a.at(c));
        }
    }
    SUBCASE("fifty random pairs match the repeat oracle") {
        RngStream rng(104);
        for (int trial = 0; trial < 50; ++trial) {
            const std::int64_t n = 1 + static_cast<std::int64_t>(rng.next_u64() % 40);
            Tensor probs = random_simplex_rows(1, 5, rng);
            Tensor row = ops::reshape(probs, {5});
            Tensor block =
                temporal_sample(row, Tensor::scalar(static_cast<double>(n)), n, n, kExpansion);
            for (std::int64_t h = 0; h < n; ++h)
                for (std::int64_t c = 0; c < 5; ++c)
                    CHECK(std::fabs(block.at(h, c) - row.at(c)) < 1e-3);
        }
    }
    CHECK_THROWS_AS(temporal_sample(a, Tensor::scalar(3.0), 0, 4, kExpansion),
                    std::invalid_argument);
}

TEST_CASE("upsample expands regions into frame posteriors") {
    SUBCASE("single region fills the whole video") {
        Tensor a = Tensor::from({1, 3}, {0.2, 0.5, 0.3});
        AbsoluteLengths len = normalize_lengths(Tensor::zeros({1}), 12);
        Tensor y = upsample(a, len, 12, kExpansion);
        for (std::int64_t t = 0; t < 12; ++t)
            for (std::int64_t c = 0; c < 3; ++c)
                CHECK(y.at(t, c) == doctest::Approx(a.at(0, c)).epsilon(1e-9));
    }
    SUBCASE("unit-length regions reproduce the region matrix") {
        RngStream rng(105);
        const std::int64_t k = 9;
        Tensor a = random_simplex_rows(k, 4, rng);
        AbsoluteLengths len = normalize_lengths(Tensor::zeros({k}), k);
        Tensor y = upsample(a, len, k, kExpansion);
        for (std::int64_t i = 0; i < a.numel(); ++i) CHECK(std::fabs(y.at(i) - a.at(i)) < 1e-9);
    }
    SUBCASE("rows sum to one and argmax matches the repeat oracle") {
        RngStream rng(106);
        for (int trial = 0; trial < 20; ++trial) {
            const std::int64_t k = 2 + static_cast<std::int64_t>(rng.next_u64() % 7);
            const std::int64_t t = 64 + static_cast<std::int64_t>(rng.next_u64() % 128);
            Tensor a = random_simplex_rows(k, 5, rng);
            AbsoluteLengths len = normalize_lengths(random_tensor({k}, rng, 0.6, false), t);
            Tensor y = upsample(a, len, t, kExpansion);

            std::int64_t agree = 0, frame = 0;
            for (std::int64_t region = 0; region < k; ++region) {
                std::int64_t best = 0;
                for (std::int64_t c = 1; c < 5; ++c)
                    if (a.at(region, c) > a.at(region, best)) best = c;
                for (std::int64_t h = 0; h < len.lint[static_cast<std::size_t>(region)];
                     ++h, ++frame) {
                    double sum = 0.0;
                    std::int64_t got = 0;
                    for (std::int64_t c = 0; c < 5; ++c) {
                        sum += y.at(frame, c);
                        if (y.at(frame, c) > y.at(frame, got)) got = c;
                    }
                    CHECK(std::fabs(sum - 1.0) < 1e-12);
                    agree += got == best;
                }
            }
            CHECK(frame == t);
            CHECK(agree == t);  // identical-copy sampling keeps rows proportional to a_k
        }
    }
    SUBCASE("length mismatch is a hard error") {
        Tensor a = Tensor::from({2, 2}, {0.5, 0.5, 0.5, 0.5});
        AbsoluteLengths len;
        len.lprime = Tensor::from({2}, {3.0, 3.0});
        len.lint = {3, 3};
        CHECK_THROWS_AS(upsample(a, len, 7, kExpansion), std::invalid_argument);
    }
}

TEST_CASE("sampling map is self-adjoint under the inner product test") {
    RngStream rng(107);
    for (int trial = 0; trial < 10; ++trial) {
        const std::int64_t n = 3 + static_cast<std::int64_t>(rng.next_u64() % 20);
        const std::int64_t h = n + 2;
        Tensor a = random_tensor({6}, rng, 1.0, true);
        Tensor g = random_tensor({h, 6}, rng, 1.0, false);
        const double len = static_cast<double>(n) + rng.next_uniform() - 0.5;

        Graph graph;
        Tensor fa;
        {
            TapeScope scope(graph);
            fa = temporal_sample(a, Tensor::scalar(len), n, h, kExpansion);
            graph.backward(ops::sum(ops::mul(fa, g)));
        }
        double lhs = 0.0;
        for (std::int64_t i = 0; i < fa.numel(); ++i) lhs += fa.at(i) * g.at(i);
        double rhs = 0.0;
        for (std::int64_t i = 0; i < a.numel(); ++i)
            rhs += a.grad()[static_cast<std::size_t>(i)] * a.at(i);
        CHECK(std::fabs(lhs - rhs) < 1e-9);
    }
}

TEST_CASE("integral lengths give exactly zero length gradient for any source") {
    Tensor a = Tensor::from({3}, {0.2, 0.5, 0.3});
    Tensor len = Tensor::scalar(8.0, true);
    Graph graph;
    {
        TapeScope scope(graph);
        Tensor block = temporal_sample(a, len, 8, 8, kExpansion);
        graph.backward(ops::sum(block));
    }
    CHECK(len.grad()[0] == 0.0);
}

TEST_CASE("analytic length gradients match finite differences on the smoothed path") {
    // lengths chosen so the ceil-rounded region keeps a live fade row
    const std::int64_t total = 30;
    Tensor raw = Tensor::from({3}, {std::log(9.98), std::log(10.04), std::log(9.98)});
    raw.set_requires_grad(true);
    RngStream rng(108);
    Tensor a = random_simplex_rows(3, 4, rng);
    Tensor coeff = random_tensor({total, 4}, rng, 1.0, false);

    const std::vector<std::int64_t> base_lint = normalize_lengths(raw, total).lint;
    CHECK(base_lint == std::vector<std::int64_t>{10, 10, 10});

    auto loss = [&] {
        AbsoluteLengths len = normalize_lengths(raw, total);
        len.lint = base_lint;  // smoothed path: the crop is frozen
        Tensor y = upsample(a, len, total, kExpansion);
        return ops::sum(ops::mul(y, coeff));
    };
    auto fd = finite_diff(loss, {raw});
    CHECK(fd.max_abs_grad > 0.0);
    CHECK(fd.max_rel_err < 1e-3);
}

TEST_CASE("region boundaries tile the video exactly") {
    RngStream rng(109);
    for (int trial = 0; trial < 50; ++trial) {
        const std::int64_t k = 1 + static_cast<std::int64_t>(rng.next_u64() % 12);
        const std::int64_t t = k + static_cast<std::int64_t>(rng.next_u64() % 300);
        AbsoluteLengths len = normalize_lengths(random_tensor({k}, rng, 1.0, false), t);
        std::int64_t cursor = 0;
        for (auto n : len.lint) {
            CHECK(n >= 1);
            cursor += n;
        }
        CHECK(cursor == t);
    }
}

TEST_CASE("production path from raw lengths keeps the oracle geometry") {
    // integer lengths fed through log produce lprime == lint up to fp error
    std::vector<std::int64_t> lint = {5, 12, 7, 8};
    Tensor raw = raw_lengths_for(lint);
    AbsoluteLengths len = normalize_lengths(raw, 32);
    CHECK(len.lint == lint);
    for (std::size_t i = 0; i < lint.size(); ++i)
        CHECK(len.lprime.at(static_cast<std::int64_t>(i)) ==
              doctest::Approx(static_cast<double>(lint[i])).epsilon(1e-12));
}
