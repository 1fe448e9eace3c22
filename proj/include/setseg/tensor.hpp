#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace setseg {

/// Errors that map to CLI exit codes.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
    Shape shape;
    std::vector<double> data;   // row-major
    std::vector<double> grad;   // empty until a gradient is accumulated
    bool requires_grad = false;
};

/// Value-like handle to a dense double tensor. Copies share storage;
/// all operators allocate fresh outputs, nothing mutates in place.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::int64_t ndim() const { return static_cast<std::int64_t>(impl_->shape.size()); }
    std::int64_t numel() const { return static_cast<std::int64_t>(impl_->data.size()); }
    std::int64_t dim(std::int64_t i) const { return impl_->shape.at(static_cast<std::size_t>(i)); }

    double* data() { return impl_->data.data(); }
    const double* data() const { return impl_->data.data(); }
    std::vector<double>& values() { return impl_->data; }
    const std::vector<double>& values() const { return impl_->data; }

    double item() const;
    double at(std::int64_t i) const { return impl_->data[static_cast<std::size_t>(i)]; }
    double at(std::int64_t r, std::int64_t c) const {
        return impl_->data[static_cast<std::size_t>(r * dim(1) + c)];
    }
    double& at(std::int64_t i) { return impl_->data[static_cast<std::size_t>(i)]; }
    double& at(std::int64_t r, std::int64_t c) {
        return impl_->data[static_cast<std::size_t>(r * dim(1) + c)];
    }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool v);
    bool has_grad() const { return impl_ && !impl_->grad.empty(); }
    /// Gradient accumulator; allocates zeros on first access.
    std::vector<double>& grad();
    const std::vector<double>& grad() const;
    void zero_grad();

    TensorImpl* impl() const { return impl_.get(); }
    std::shared_ptr<TensorImpl> impl_ptr() const { return impl_; }

  private:
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<TensorImpl> impl_;
};

/// Reverse-mode tape. Operators append nodes in execution order, so the
/// node list is already topologically sorted; backward() runs it in
/// reverse from the seed. Intermediate gradients are transient, leaf
/// gradients accumulate across backward() calls until zero_grad().
class Graph {
  public:
    struct Node {
        std::string op;
        std::vector<std::shared_ptr<TensorImpl>> inputs;
        std::shared_ptr<TensorImpl> output;
        std::function<void()> backward_fn;
    };

    void record(std::string op, const std::vector<Tensor>& inputs, const Tensor& output,
                std::function<void()> backward_fn);

    /// Seeds d(seed)/d(seed) = 1 and sweeps the tape in reverse.
    void backward(const Tensor& seed);

    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

  private:
    std::vector<Node> nodes_;
};

/// Activates a tape for the current thread for the lifetime of the scope.
/// Operators record onto the active tape when an input requires grad;
/// with no active tape they run eagerly and produce detached outputs.
class TapeScope {
  public:
    explicit TapeScope(Graph& graph);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

  private:
    Graph* previous_;
};

Graph* active_tape();

/// Counter-based deterministic RNG (splitmix64 finalizer over seed+counter).
/// The counter is part of checkpoints so dropout streams are reproducible.
class RngStream {
  public:
    explicit RngStream(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t next_u64();
    double next_uniform();  // [0, 1)
    double next_normal();   // standard normal, Box-Muller

    std::uint64_t counter() const { return counter_; }
    void set_counter(std::uint64_t c) {
        counter_ = c;
        have_cached_normal_ = false;
    }
    std::uint64_t seed() const { return seed_; }

  private:
    std::uint64_t seed_ = 0;
    std::uint64_t counter_ = 0;
    bool have_cached_normal_ = false;
    double cached_normal_ = 0.0;
};

}  // namespace setseg
