#include "setseg/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace setseg {

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto e : shape) {
        check(e > 0, "tensor extents must be positive, got " + shape_str(shape));
        n *= e;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto impl = std::make_shared<TensorImpl>();
    std::int64_t n = shape_numel(shape);
    impl->shape = std::move(shape);
    impl->data.assign(static_cast<std::size_t>(n), 0.0);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& v : t.values()) v = value;
    return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    std::int64_t n = shape_numel(shape);
    check(static_cast<std::int64_t>(values.size()) == n,
          "data length " + std::to_string(values.size()) + " does not match shape " + shape_str(shape));
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from({1}, {value}, requires_grad);
}

double Tensor::item() const {
    check(numel() == 1, "item() requires a scalar tensor, got " + shape_str(shape()));
    return impl_->data[0];
}

void Tensor::set_requires_grad(bool v) { impl_->requires_grad = v; }

std::vector<double>& Tensor::grad() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    return impl_->grad;
}

const std::vector<double>& Tensor::grad() const {
    check(!impl_->grad.empty(), "gradient not populated");
    return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.clear(); }

namespace {
thread_local Graph* g_active_tape = nullptr;
}

Graph* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Graph& graph) : previous_(g_active_tape) { g_active_tape = &graph; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

void Graph::record(std::string op, const std::vector<Tensor>& inputs, const Tensor& output,
                   std::function<void()> backward_fn) {
    Node node;
    node.op = std::move(op);
    node.inputs.reserve(inputs.size());
    for (const auto& t : inputs) node.inputs.push_back(t.impl_ptr());
    node.output = output.impl_ptr();
    node.backward_fn = std::move(backward_fn);
    nodes_.push_back(std::move(node));
}

void Graph::backward(const Tensor& seed) {
    check(seed.defined() && seed.numel() == 1, "backward seed must be a scalar");

    // Intermediates (anything produced by a node) get fresh gradients each
    // sweep; only leaves keep accumulating.
    for (auto& node : nodes_) {
        node.output->grad.clear();
    }
    TensorImpl* seed_impl = seed.impl();
    if (seed_impl->grad.empty()) seed_impl->grad.assign(seed_impl->data.size(), 0.0);
    seed_impl->grad[0] += 1.0;

    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->output->grad.empty()) continue;  // not reachable from the seed
        if (!it->backward_fn) {
            throw std::runtime_error("backward: node '" + it->op + "' has no backward rule");
        }
        it->backward_fn();
    }
}

std::uint64_t RngStream::next_u64() {
    // splitmix64 finalizer over seed + counter * golden gamma
    std::uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

double RngStream::next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_normal() {
    if (have_cached_normal_) {
        have_cached_normal_ = false;
        return cached_normal_;
    }
    double u1 = next_uniform();
    double u2 = next_uniform();
    while (u1 <= 0.0) u1 = next_uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    cached_normal_ = r * std::sin(a);
    have_cached_normal_ = true;
    return r * std::cos(a);
}

}  // namespace setseg
