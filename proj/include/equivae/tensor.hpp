#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "equivae/errors.hpp"

namespace equivae {

using Shape = std::vector<int64_t>;

int64_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorNode {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until the first accumulation
    bool requires_grad = false;

    void accumulate_grad(const std::vector<double>& g);
    std::vector<double>& grad_buffer();  // zero-filled on first use
};

}  // namespace detail

/// Dense n-dimensional array of 64-bit floats, row-major. A Tensor is a
/// cheap handle onto a shared node; nodes are treated as immutable while a
/// gradient tape is being recorded. Values are validated to be finite at
/// creation; with debug checks enabled every op re-validates its output.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(const Shape& shape, bool requires_grad = false);
    static Tensor full(const Shape& shape, double value, bool requires_grad = false);
    static Tensor from_values(const Shape& shape, std::vector<double> values,
                              bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    int64_t size() const;
    int64_t ndim() const;
    int64_t extent(int axis) const;

    const std::vector<double>& values() const;
    /// Raw write access, for initialisation and the optimizer only; never
    /// call while a tape holds a reference to this tensor.
    std::vector<double>& mutable_values();

    bool requires_grad() const;
    bool has_grad() const;
    const std::vector<double>& grad() const;  // throws ContractError if absent
    void clear_grad();

    double item() const;  // scalar tensors only

    std::shared_ptr<detail::TensorNode> node() const { return node_; }
    static Tensor wrap(std::shared_ptr<detail::TensorNode> node);

private:
    explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::TensorNode> node_;
};

/// Ordered record of executed operations. Entries are appended in execution
/// order, which makes the record topologically sorted by construction; the
/// backward pass walks it once, in reverse.
class Tape {
public:
    struct Entry {
        std::shared_ptr<detail::TensorNode> output;
        std::function<void(const std::vector<double>&)> backward;  // receives output grad
    };

    void record(std::shared_ptr<detail::TensorNode> output,
                std::function<void(const std::vector<double>&)> backward);
    size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    void clear() { entries_.clear(); }
    const std::vector<Entry>& entries() const { return entries_; }

private:
    std::vector<Entry> entries_;
};

Tape& active_tape();

bool grad_enabled();

/// Disables tape recording for its scope.
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

/// Runs the reverse pass from a scalar loss: seeds d(loss)/d(loss) = 1,
/// visits every recorded operation exactly once in reverse order, leaves the
/// accumulated gradient on each requires_grad tensor, and clears the tape.
void backward(const Tensor& loss);

void set_debug_checks(bool enabled);
bool debug_checks();

namespace detail {
void check_finite(const std::vector<double>& values, const char* what);
/// Node allocation without the finiteness scan; op kernels use this and
/// re-validate only when debug checks are on.
std::shared_ptr<TensorNode> alloc_node(Shape shape, std::vector<double> values,
                                       bool requires_grad);
}

}  // namespace equivae
