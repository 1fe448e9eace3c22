#include "setseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace setseg::ops {

namespace {

bool should_record(std::initializer_list<const Tensor*> inputs) {
    if (!active_tape()) return false;
    for (const Tensor* t : inputs) {
        if (t->requires_grad()) return true;
    }
    return false;
}

void accumulate(Tensor& t, const std::vector<double>& contribution) {
    auto& g = t.grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += contribution[i];
}

// Data-level matmul with transpose flags; logical op(A) is M x K, op(B) is K x N.
std::vector<double> mm(const double* a, std::int64_t ar, std::int64_t ac, bool ta,
                       const double* b, std::int64_t br, std::int64_t bc, bool tb) {
    const std::int64_t m = ta ? ac : ar;
    const std::int64_t k = ta ? ar : ac;
    const std::int64_t k2 = tb ? bc : br;
    const std::int64_t n = tb ? br : bc;
    check(k == k2, "matmul: inner dimensions disagree");
    std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t p = 0; p < k; ++p) {
            const double av = ta ? a[p * ac + i] : a[i * ac + p];
            if (av == 0.0) continue;
            double* orow = out.data() + i * n;
            if (!tb) {
                const double* brow = b + p * bc;
                for (std::int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
            } else {
                for (std::int64_t j = 0; j < n; ++j) orow[j] += av * b[j * bc + p];
            }
        }
    }
    return out;
}

}  // namespace

Tensor conv1d_dilated(const Tensor& input, const Tensor& weight, const Tensor& bias,
                      std::int64_t dilation) {
    check(input.ndim() == 2, "conv1d: input must be T x Cin");
    check(weight.ndim() == 3, "conv1d: weight must be k x Cin x Cout");
    check(dilation >= 1, "conv1d: dilation must be positive");
    const std::int64_t T = input.dim(0), cin = input.dim(1);
    const std::int64_t k = weight.dim(0), cout = weight.dim(2);
    check(k % 2 == 1, "conv1d: kernel size must be odd");
    check(weight.dim(1) == cin, "conv1d: weight expects " + std::to_string(weight.dim(1)) +
                                    " input channels, input has " + std::to_string(cin));
    check(bias.ndim() == 1 && bias.dim(0) == cout, "conv1d: bias must have Cout entries");

    const std::int64_t half = (k - 1) / 2;
    Tensor out = Tensor::zeros({T, cout});
    const double* x = input.data();
    const double* w = weight.data();
    const double* b = bias.data();
    double* y = out.data();
    for (std::int64_t t = 0; t < T; ++t) {
        double* yrow = y + t * cout;
        for (std::int64_t co = 0; co < cout; ++co) yrow[co] = b[co];
        for (std::int64_t i = 0; i < k; ++i) {
            const std::int64_t s = t + (i - half) * dilation;
            if (s < 0 || s >= T) continue;  // zero padding
            const double* xrow = x + s * cin;
            const double* wbase = w + i * cin * cout;
            for (std::int64_t ci = 0; ci < cin; ++ci) {
                const double xv = xrow[ci];
                const double* wrow = wbase + ci * cout;
                for (std::int64_t co = 0; co < cout; ++co) yrow[co] += xv * wrow[co];
            }
        }
    }

    if (should_record({&input, &weight, &bias})) {
        out.set_requires_grad(true);
        Tensor in = input, wt = weight, bs = bias;
        Tensor o = out;
        active_tape()->record("conv1d_dilated", {input, weight, bias}, out,
                              [in, wt, bs, o, T, cin, k, cout, half, dilation]() mutable {
            const auto& gy = o.grad();
            const double* x = in.data();
            const double* w = wt.data();
            if (in.requires_grad()) {
                auto& gx = in.grad();
                for (std::int64_t t = 0; t < T; ++t) {
                    const double* gyrow = gy.data() + t * cout;
                    for (std::int64_t i = 0; i < k; ++i) {
                        const std::int64_t s = t + (i - half) * dilation;
                        if (s < 0 || s >= T) continue;
                        const double* wbase = w + i * cin * cout;
                        double* gxrow = gx.data() + s * cin;
                        for (std::int64_t ci = 0; ci < cin; ++ci) {
                            const double* wrow = wbase + ci * cout;
                            double acc = 0.0;
                            for (std::int64_t co = 0; co < cout; ++co) acc += gyrow[co] * wrow[co];
                            gxrow[ci] += acc;
                        }
                    }
                }
            }
            if (wt.requires_grad()) {
                auto& gw = wt.grad();
                for (std::int64_t t = 0; t < T; ++t) {
                    const double* gyrow = gy.data() + t * cout;
                    for (std::int64_t i = 0; i < k; ++i) {
                        const std::int64_t s = t + (i - half) * dilation;
                        if (s < 0 || s >= T) continue;
                        const double* xrow = x + s * cin;
                        double* gwbase = gw.data() + i * cin * cout;
                        for (std::int64_t ci = 0; ci < cin; ++ci) {
                            const double xv = xrow[ci];
                            if (xv == 0.0) continue;
                            double* gwrow = gwbase + ci * cout;
                            for (std::int64_t co = 0; co < cout; ++co) gwrow[co] += xv * gyrow[co];
                        }
                    }
                }
            }
            if (bs.requires_grad()) {
                auto& gb = bs.grad();
                for (std::int64_t t = 0; t < T; ++t) {
                    const double* gyrow = gy.data() + t * cout;
                    for (std::int64_t co = 0; co < cout; ++co) gb[co] += gyrow[co];
                }
            }
        });
    }
    return out;
}

Tensor maxpool1d(const Tensor& input) {
    check(input.ndim() == 2, "maxpool1d: input must be T x C");
    const std::int64_t T = input.dim(0), C = input.dim(1);
    check(T >= 2, "maxpool1d: need at least 2 rows, got " + std::to_string(T));
    const std::int64_t P = T / 2;
    Tensor out = Tensor::zeros({P, C});
    std::vector<std::int64_t> winner(static_cast<std::size_t>(P * C));
    const double* x = input.data();
    double* y = out.data();
    for (std::int64_t p = 0; p < P; ++p) {
        const double* r0 = x + (2 * p) * C;
        const double* r1 = r0 + C;
        for (std::int64_t c = 0; c < C; ++c) {
            // ties go to the earlier row
            if (r0[c] >= r1[c]) {
                y[p * C + c] = r0[c];
                winner[static_cast<std::size_t>(p * C + c)] = 2 * p;
            } else {
                y[p * C + c] = r1[c];
                winner[static_cast<std::size_t>(p * C + c)] = 2 * p + 1;
            }
        }
    }

    if (should_record({&input})) {
        out.set_requires_grad(true);
        Tensor in = input, o = out;
        active_tape()->record("maxpool1d", {input}, out, [in, o, winner, P, C]() mutable {
            const auto& gy = o.grad();
            auto& gx = in.grad();
            for (std::int64_t p = 0; p < P; ++p) {
                for (std::int64_t c = 0; c < C; ++c) {
                    gx[winner[static_cast<std::size_t>(p * C + c)] * C + c] += gy[p * C + c];
                }
            }
        });
    }
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const double* in = x.data();
    double* y = out.data();
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) y[i] = in[i] > 0.0 ? in[i] : 0.0;
    if (should_record({&x})) {
        out.set_requires_grad(true);
        Tensor xin = x, o = out;
        active_tape()->record("relu", {x}, out, [xin, o, n]() mutable {
            const auto& gy = o.grad();
            auto& gx = xin.grad();
            const double* in = xin.data();
            for (std::int64_t i = 0; i < n; ++i) {
                if (in[i] > 0.0) gx[i] += gy[i];
            }
        });
    }
    return out;
}

namespace {

// Applies fn(line pointer strided view) over the lines of a 1-d or 2-d tensor
// along `axis`. For 2-d, axis==1 iterates rows, axis==0 iterates columns.
struct LineIter {
    std::int64_t lines, len, base_stride, elem_stride;
};

LineIter line_iter(const Tensor& x, std::int64_t axis) {
    if (x.ndim() == 1) {
        check(axis == 0, "axis out of range for 1-d tensor");
        return {1, x.dim(0), 0, 1};
    }
    check(x.ndim() == 2, "softmax/reductions support 1-d and 2-d tensors");
    check(axis == 0 || axis == 1, "axis out of range for 2-d tensor");
    const std::int64_t R = x.dim(0), C = x.dim(1);
    if (axis == 1) return {R, C, C, 1};
    return {C, R, 1, C};
}

}  // namespace

Tensor softmax(const Tensor& x, std::int64_t axis) {
    const LineIter it = line_iter(x, axis);
    Tensor out = Tensor::zeros(x.shape());
    const double* in = x.data();
    double* y = out.data();
    for (std::int64_t l = 0; l < it.lines; ++l) {
        const std::int64_t base = l * it.base_stride;
        double m = in[base];
        for (std::int64_t i = 1; i < it.len; ++i) m = std::max(m, in[base + i * it.elem_stride]);
        double s = 0.0;
        for (std::int64_t i = 0; i < it.len; ++i) {
            const double e = std::exp(in[base + i * it.elem_stride] - m);
            y[base + i * it.elem_stride] = e;
            s += e;
        }
        for (std::int64_t i = 0; i < it.len; ++i) y[base + i * it.elem_stride] /= s;
    }
    if (should_record({&x})) {
        out.set_requires_grad(true);
        Tensor xin = x, o = out;
        active_tape()->record("softmax", {x}, out, [xin, o, it]() mutable {
            const auto& gy = o.grad();
            const double* y = o.data();
            auto& gx = xin.grad();
            for (std::int64_t l = 0; l < it.lines; ++l) {
                const std::int64_t base = l * it.base_stride;
                double dot = 0.0;
                for (std::int64_t i = 0; i < it.len; ++i) {
                    const std::int64_t idx = base + i * it.elem_stride;
                    dot += gy[idx] * y[idx];
                }
                for (std::int64_t i = 0; i < it.len; ++i) {
                    const std::int64_t idx = base + i * it.elem_stride;
                    gx[idx] += y[idx] * (gy[idx] - dot);
                }
            }
        });
    }
    return out;
}

Tensor log_softmax(const Tensor& x, std::int64_t axis) {
    const LineIter it = line_iter(x, axis);
    Tensor out = Tensor::zeros(x.shape());
    const double* in = x.data();
    double* y = out.data();
    for (std::int64_t l = 0; l < it.lines; ++l) {
        const std::int64_t base = l * it.base_stride;
        double m = in[base];
        for (std::int64_t i = 1; i < it.len; ++i) m = std::max(m, in[base + i * it.elem_stride]);
        double s = 0.0;
        for (std::int64_t i = 0; i < it.len; ++i) s += std::exp(in[base + i * it.elem_stride] - m);
        const double lse = m + std::log(s);
        for (std::int64_t i = 0; i < it.len; ++i) {
            const std::int64_t idx = base + i * it.elem_stride;
            y[idx] = in[idx] - lse;
        }
    }
    if (should_record({&x})) {
        out.set_requires_grad(true);
        Tensor xin = x, o = out;
        active_tape()->record("log_softmax", {x}, out, [xin, o, it]() mutable {
            const auto& gy = o.grad();
            const double* y = o.data();
            auto& gx = xin.grad();
            for (std::int64_t l = 0; l < it.lines; ++l) {
                const std::int64_t base = l * it.base_stride;
                double gsum = 0.0;
                for (std::int64_t i = 0; i < it.len; ++i) gsum += gy[base + i * it.elem_stride];
                for (std::int64_t i = 0; i < it.len; ++i) {
                    const std::int64_t idx = base + i * it.elem_stride;
                    gx[idx] += gy[idx] - std::exp(y[idx]) * gsum;
                }
            }
        });
    }
    return out;
}

Tensor dropout(const Tensor& x, double p, bool training, RngStream& rng) {
    check(p >= 0.0 && p < 1.0, "dropout: p must lie in [0, 1)");
    if (!training || p == 0.0) return x;  // identity in eval mode
    const std::int64_t n = x.numel();
    std::vector<double> mask(static_cast<std::size_t>(n));
    const double scale = 1.0 / (1.0 - p);
    for (auto& m : mask) m = rng.next_uniform() >= p ? scale : 0.0;
    Tensor out = Tensor::zeros(x.shape());
    const double* in = x.data();
    double* y = out.data();
    for (std::int64_t i = 0; i < n; ++i) y[i] = in[i] * mask[static_cast<std::size_t>(i)];
    if (should_record({&x})) {
        out.set_requires_grad(true);
        Tensor xin = x, o = out;
        active_tape()->record("dropout", {x}, out, [xin, o, mask, n]() mutable {
            const auto& gy = o.grad();
            auto& gx = xin.grad();
            for (std::int64_t i = 0; i < n; ++i) gx[i] += gy[i] * mask[static_cast<std::size_t>(i)];
        });
    }
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a, bool transpose_b) {
    check(a.ndim() == 2 && b.ndim() == 2, "matmul: operands must be 2-d");
    const std::int64_t ar = a.dim(0), ac = a.dim(1), br = b.dim(0), bc = b.dim(1);
    const std::int64_t m = transpose_a ? ac : ar;
    const std::int64_t n = transpose_b ? br : bc;
    std::vector<double> out_data = mm(a.data(), ar, ac, transpose_a, b.data(), br, bc, transpose_b);
    Tensor out = Tensor::from({m, n}, std::move(out_data));
    if (should_record({&a, &b})) {
        out.set_requires_grad(true);
        Tensor ta = a, tb = b, o = out;
        active_tape()->record("matmul", {a, b}, out,
                              [ta, tb, o, ar, ac, br, bc, m, n, transpose_a, transpose_b]() mutable {
            const auto& gy = o.grad();
            if (ta.requires_grad()) {
                std::vector<double> ga =
                    transpose_a ? mm(tb.data(), br, bc, transpose_b, gy.data(), m, n, true)
                                : mm(gy.data(), m, n, false, tb.data(), br, bc, !transpose_b);
                accumulate(ta, ga);
            }
            if (tb.requires_grad()) {
                std::vector<double> gb =
                    transpose_b ? mm(gy.data(), m, n, true, ta.data(), ar, ac, transpose_a)
                                : mm(ta.data(), ar, ac, !transpose_a, gy.data(), m, n, false);
                accumulate(tb, gb);
            }
        });
    }
    return out;
}

namespace {

Tensor elementwise_binary(const char* name, const Tensor& a, const Tensor& b,
                          double (*fwd)(double, double), double (*da)(double, double),
                          double (*db)(double, double)) {
    check(a.shape() == b.shape(), std::string(name) + ": shapes differ, " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
    const std::int64_t n = a.numel();
    Tensor out = Tensor::zeros(a.shape());
    for (std::int64_t i = 0; i < n; ++i) out.at(i) = fwd(a.at(i), b.at(i));
    if (should_record({&a, &b})) {
        out.set_requires_grad(true);
        Tensor ta = a, tb = b, o = out;
        active_tape()->record(name, {a, b}, out, [ta, tb, o, n, da, db]() mutable {
            const auto& gy = o.grad();
            if (ta.requires_grad()) {
                auto& gx = ta.grad();
                for (std::int64_t i = 0; i < n; ++i) gx[i] += gy[i] * da(ta.at(i), tb.at(i));
            }
            if (tb.requires_grad()) {
                auto& gx = tb.grad();
                for (std::int64_t i = 0; i < n; ++i) gx[i] += gy[i] * db(ta.at(i), tb.at(i));
            }
        });
    }
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return elementwise_binary(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return elementwise_binary(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return elementwise_binary(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor add_rowvec(const Tensor& mat, const Tensor& vec) {
    check(mat.ndim() == 2 && vec.ndim() == 1 && mat.dim(1) == vec.dim(0),
          "add_rowvec: need T x C matrix and length-C vector");
    const std::int64_t T = mat.dim(0), C = mat.dim(1);
    Tensor out = Tensor::zeros(mat.shape());
    for (std::int64_t t = 0; t < T; ++t)
        for (std::int64_t c = 0; c < C; ++c) out.at(t, c) = mat.at(t, c) + vec.at(c);
    if (should_record({&mat, &vec})) {
        out.set_requires_grad(true);
        Tensor tm = mat, tv = vec, o = out;
        active_tape()->record("add_rowvec", {mat, vec}, out, [tm, tv, o, T, C]() mutable {
            const auto& gy = o.grad();
            if (tm.requires_grad()) accumulate(tm, gy);
            if (tv.requires_grad()) {
                auto& gv = tv.grad();
                for (std::int64_t t = 0; t < T; ++t)
                    for (std::int64_t c = 0; c < C; ++c) gv[c] += gy[t * C + c];
            }
        });
    }
    return out;
}

Tensor abs(const Tensor& x) {
    const std::int64_t n = x.numel();
    Tensor out = Tensor::zeros(x.shape());
    for (std::int64_t i = 0; i < n; ++i) out.at(i) = std::fabs(x.at(i));
    if (should_record({&x})) {
        out.set_requires_grad(true);
        Tensor xin = x, o = out;
        active_tape()->record("abs", {x}, out, [xin, o, n]() mutable {
            const auto& gy = o.grad();
            auto& gx = xin.grad();
            for (std::int64_t i = 0; i < n; ++i) {
                const double v = xin.at(i);
                if (v > 0.0)
                    gx[i] += gy[i];
                else if (v < 0.0)
                    gx[i] -= gy[i];
            }
        });
    }
    return out;
}

Tensor affine(const Tensor& x, double a, double b) {
    const std::int64_t n = x.numel();
    Tensor out = Tensor::zeros(x.shape());
    for (std::int64_t i = 0; i < n; ++i) out.at(i) = a * x.at(i) + b;
    if (should_record({&x})) {
        out.set_requires_grad(true);
        Tensor xin = x, o = out;
        active_tape()->record("affine", {x}, out, [xin, o, n, a]() mutable {
            const auto& gy = o.grad();
            auto& gx = xin.grad();
            for (std::int64_t i = 0; i < n; ++i) gx[i] += a * gy[i];
        });
    }
    return out;
}

Tensor neg(const Tensor& x) { return affine(x, -1.0, 0.0); }

Tensor log(const Tensor& x) {
    const std::int64_t n = x.numel();
    Tensor out = Tensor::zeros(x.shape());
    for (std::int64_t i = 0; i < n; ++i) out.at(i) = std::log(x.at(i));
    if (should_record({&x})) {
        out.set_requires_grad(true);
        Tensor xin = x, o = out;
        active_tape()->record("log", {x}, out, [xin, o, n]() mutable {
            const auto& gy = o.grad();
            auto& gx = xin.grad();
            for (std::int64_t i = 0; i < n; ++i) gx[i] += gy[i] / xin.at(i);
        });
    }
    return out;
}

Tensor clamp_min(const Tensor& x, double lo) {
    const std::int64_t n = x.numel();
    Tensor out = Tensor::zeros(x.shape());
    for (std::int64_t i = 0; i < n; ++i) out.at(i) = std::max(x.at(i), lo);
    if (should_record({&x})) {
        out.set_requires_grad(true);
        Tensor xin = x, o = out;
        active_tape()->record("clamp_min", {x}, out, [xin, o, n, lo]() mutable {
            const auto& gy = o.grad();
            auto& gx = xin.grad();
            for (std::int64_t i = 0; i < n; ++i) {
                if (xin.at(i) > lo) gx[i] += gy[i];
            }
        });
    }
    return out;
}

namespace {

Tensor reduce_full(const Tensor& x, bool take_mean) {
    const std::int64_t n = x.numel();
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i) s += x.at(i);
    const double denom = take_mean ? static_cast<double>(n) : 1.0;
    Tensor out = Tensor::scalar(s / denom);
    if (should_record({&x})) {
        out.set_requires_grad(true);
        Tensor xin = x, o = out;
        active_tape()->record(take_mean ? "mean" : "sum", {x}, out, [xin, o, n, denom]() mutable {
            const double g = o.grad()[0] / denom;
            auto& gx = xin.grad();
            for (std::int64_t i = 0; i < n; ++i) gx[i] += g;
        });
    }
    return out;
}

}  // namespace

Tensor sum(const Tensor& x) { return reduce_full(x, false); }
Tensor mean(const Tensor& x) { return reduce_full(x, true); }

namespace {

Tensor reduce_axis(const Tensor& x, std::int64_t axis, bool take_mean) {
    const LineIter it = line_iter(x, axis);
    check(x.ndim() == 2, "axis reduction expects a 2-d tensor");
    Tensor out = Tensor::zeros({it.lines});
    const double denom = take_mean ? static_cast<double>(it.len) : 1.0;
    for (std::int64_t l = 0; l < it.lines; ++l) {
        double s = 0.0;
        for (std::int64_t i = 0; i < it.len; ++i) s += x.at(l * it.base_stride + i * it.elem_stride);
        out.at(l) = s / denom;
    }
    if (should_record({&x})) {
        out.set_requires_grad(true);
        Tensor xin = x, o = out;
        active_tape()->record(take_mean ? "mean_axis" : "sum_axis", {x}, out,
                              [xin, o, it, denom]() mutable {
            const auto& gy = o.grad();
            auto& gx = xin.grad();
            for (std::int64_t l = 0; l < it.lines; ++l) {
                const double g = gy[l] / denom;
                for (std::int64_t i = 0; i < it.len; ++i)
                    gx[l * it.base_stride + i * it.elem_stride] += g;
            }
        });
    }
    return out;
}

}  // namespace

Tensor sum_axis(const Tensor& x, std::int64_t axis) { return reduce_axis(x, axis, false); }
Tensor mean_axis(const Tensor& x, std::int64_t axis) { return reduce_axis(x, axis, true); }

Tensor reduce_max(const Tensor& x, std::int64_t axis) {
    check(x.ndim() == 2, "reduce_max expects a 2-d tensor");
    const LineIter it = line_iter(x, axis);
    Tensor out = Tensor::zeros({it.lines});
    std::vector<std::int64_t> arg(static_cast<std::size_t>(it.lines));
    for (std::int64_t l = 0; l < it.lines; ++l) {
        double best = x.at(l * it.base_stride);
        std::int64_t best_i = 0;
        for (std::int64_t i = 1; i < it.len; ++i) {
            const double v = x.at(l * it.base_stride + i * it.elem_stride);
            if (v > best) {  // strict: ties keep the earlier index
                best = v;
                best_i = i;
            }
        }
        out.at(l) = best;
        arg[static_cast<std::size_t>(l)] = best_i;
    }
    if (should_record({&x})) {
        out.set_requires_grad(true);
        Tensor xin = x, o = out;
        active_tape()->record("reduce_max", {x}, out, [xin, o, it, arg]() mutable {
            const auto& gy = o.grad();
            auto& gx = xin.grad();
            for (std::int64_t l = 0; l < it.lines; ++l) {
                gx[l * it.base_stride + arg[static_cast<std::size_t>(l)] * it.elem_stride] += gy[l];
            }
        });
    }
    return out;
}

Tensor resize_linear(const Tensor& x, std::int64_t rows) {
    check(x.ndim() == 2, "resize_linear expects a 2-d tensor");
    check(rows >= 1, "resize_linear: target rows must be positive");
    const std::int64_t S = x.dim(0), C = x.dim(1);
    Tensor out = Tensor::zeros({rows, C});
    // align-corners positions: t -> t * (S-1) / (rows-1)
    auto pos_of = [S, rows](std::int64_t t) -> double {
        if (rows == 1 || S == 1) return 0.0;
        return static_cast<double>(t) * static_cast<double>(S - 1) / static_cast<double>(rows - 1);
    };
    for (std::int64_t t = 0; t < rows; ++t) {
        const double p = pos_of(t);
        const std::int64_t i0 = std::min<std::int64_t>(static_cast<std::int64_t>(p), S - 1);
        const std::int64_t i1 = std::min<std::int64_t>(i0 + 1, S - 1);
        const double f = p - static_cast<double>(i0);
        for (std::int64_t c = 0; c < C; ++c)
            out.at(t, c) = (1.0 - f) * x.at(i0, c) + f * x.at(i1, c);
    }
    if (should_record({&x})) {
        out.set_requires_grad(true);
        Tensor xin = x, o = out;
        active_tape()->record("resize_linear", {x}, out, [xin, o, S, C, rows, pos_of]() mutable {
            const auto& gy = o.grad();
            auto& gx = xin.grad();
            for (std::int64_t t = 0; t < rows; ++t) {
                const double p = pos_of(t);
                const std::int64_t i0 = std::min<std::int64_t>(static_cast<std::int64_t>(p), S - 1);
                const std::int64_t i1 = std::min<std::int64_t>(i0 + 1, S - 1);
                const double f = p - static_cast<double>(i0);
                for (std::int64_t c = 0; c < C; ++c) {
                    gx[i0 * C + c] += (1.0 - f) * gy[t * C + c];
                    gx[i1 * C + c] += f * gy[t * C + c];
                }
            }
        });
    }
    return out;
}

Tensor gather_cols(const Tensor& x, const std::vector<std::int64_t>& cols) {
    check(x.ndim() == 2, "gather_cols expects a 2-d tensor");
    const std::int64_t T = x.dim(0), C = x.dim(1);
    const std::int64_t M = static_cast<std::int64_t>(cols.size());
    check(M >= 1, "gather_cols: empty column list");
    for (auto c : cols) check(c >= 0 && c < C, "gather_cols: column index out of range");
    Tensor out = Tensor::zeros({T, M});
    for (std::int64_t t = 0; t < T; ++t)
        for (std::int64_t m = 0; m < M; ++m)
            out.at(t, m) = x.at(t, cols[static_cast<std::size_t>(m)]);
    if (should_record({&x})) {
        out.set_requires_grad(true);
        Tensor xin = x, o = out;
        active_tape()->record("gather_cols", {x}, out, [xin, o, cols, T, C, M]() mutable {
            const auto& gy = o.grad();
            auto& gx = xin.grad();
            for (std::int64_t t = 0; t < T; ++t)
                for (std::int64_t m = 0; m < M; ++m)
                    gx[t * C + cols[static_cast<std::size_t>(m)]] += gy[t * M + m];
        });
    }
    return out;
}

Tensor gather(const Tensor& x, const std::vector<std::int64_t>& idx) {
    check(x.ndim() == 1, "gather expects a 1-d tensor");
    const std::int64_t n = x.dim(0);
    check(!idx.empty(), "gather: empty index list");
    for (auto i : idx) check(i >= 0 && i < n, "gather: index out of range");
    Tensor out = Tensor::zeros({static_cast<std::int64_t>(idx.size())});
    for (std::size_t i = 0; i < idx.size(); ++i) out.at(static_cast<std::int64_t>(i)) = x.at(idx[i]);
    if (should_record({&x})) {
        out.set_requires_grad(true);
        Tensor xin = x, o = out;
        active_tape()->record("gather", {x}, out, [xin, o, idx]() mutable {
            const auto& gy = o.grad();
            auto& gx = xin.grad();
            for (std::size_t i = 0; i < idx.size(); ++i) gx[idx[i]] += gy[i];
        });
    }
    return out;
}

Tensor pick(const Tensor& x, const std::vector<std::pair<std::int64_t, std::int64_t>>& coords) {
    check(x.ndim() == 2, "pick expects a 2-d tensor");
    const std::int64_t R = x.dim(0), C = x.dim(1);
    check(!coords.empty(), "pick: empty coordinate list");
    for (auto [r, c] : coords)
        check(r >= 0 && r < R && c >= 0 && c < C, "pick: coordinate out of range");
    Tensor out = Tensor::zeros({static_cast<std::int64_t>(coords.size())});
    for (std::size_t i = 0; i < coords.size(); ++i)
        out.at(static_cast<std::int64_t>(i)) = x.at(coords[i].first, coords[i].second);
    if (should_record({&x})) {
        out.set_requires_grad(true);
        Tensor xin = x, o = out;
        active_tape()->record("pick", {x}, out, [xin, o, coords, C]() mutable {
            const auto& gy = o.grad();
            auto& gx = xin.grad();
            for (std::size_t i = 0; i < coords.size(); ++i)
                gx[coords[i].first * C + coords[i].second] += gy[i];
        });
    }
    return out;
}

Tensor slice_rows(const Tensor& x, std::int64_t row_begin, std::int64_t row_end) {
    check(x.ndim() == 2, "slice_rows expects a 2-d tensor");
    const std::int64_t T = x.dim(0), C = x.dim(1);
    check(row_begin >= 0 && row_end <= T && row_begin < row_end, "slice_rows: bad range");
    const std::int64_t R = row_end - row_begin;
    Tensor out = Tensor::zeros({R, C});
    std::memcpy(out.data(), x.data() + row_begin * C, static_cast<std::size_t>(R * C) * sizeof(double));
    if (should_record({&x})) {
        out.set_requires_grad(true);
        Tensor xin = x, o = out;
        active_tape()->record("slice_rows", {x}, out, [xin, o, row_begin, R, C]() mutable {
            const auto& gy = o.grad();
            auto& gx = xin.grad();
            for (std::int64_t i = 0; i < R * C; ++i) gx[row_begin * C + i] += gy[i];
        });
    }
    return out;
}

Tensor xlogy_ratio(const Tensor& p, const Tensor& q, double eps) {
    check(p.shape() == q.shape(), "xlogy_ratio: shapes differ");
    check(eps > 0.0, "xlogy_ratio: eps must be positive");
    const std::int64_t n = p.numel();
    Tensor out = Tensor::zeros(p.shape());
    for (std::int64_t i = 0; i < n; ++i) {
        const double pv = p.at(i);
        if (!std::isfinite(pv) || !std::isfinite(q.at(i)))
            throw NumericError("xlogy_ratio: non-finite input");
        if (pv > 0.0) out.at(i) = pv * std::log(pv / std::max(q.at(i), eps));
    }
    if (should_record({&p, &q})) {
        out.set_requires_grad(true);
        Tensor tp = p, tq = q, o = out;
        active_tape()->record("xlogy_ratio", {p, q}, out, [tp, tq, o, n, eps]() mutable {
            const auto& gy = o.grad();
            for (std::int64_t i = 0; i < n; ++i) {
                const double pv = tp.at(i);
                if (pv <= 0.0) continue;
                const double qc = std::max(tq.at(i), eps);
                if (tp.requires_grad()) tp.grad()[i] += gy[i] * (std::log(pv / qc) + 1.0);
                if (tq.requires_grad() && tq.at(i) > eps) tq.grad()[i] += gy[i] * (-pv / qc);
            }
        });
    }
    return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
    check(shape_numel(shape) == x.numel(), "reshape: element count mismatch");
    Tensor out = Tensor::from(std::move(shape), x.values());
    if (should_record({&x})) {
        out.set_requires_grad(true);
        Tensor xin = x, o = out;
        active_tape()->record("reshape", {x}, out, [xin, o]() mutable {
            accumulate(xin, o.grad());
        });
    }
    return out;
}

}  // namespace setseg::ops
