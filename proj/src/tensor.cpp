#include "equivae/tensor.hpp"

#include <cmath>
#include <sstream>

namespace equivae {

int64_t shape_size(const Shape& shape) {
    int64_t n = 1;
    for (int64_t e : shape) {
        n *= e;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

namespace detail {

void TensorNode::accumulate_grad(const std::vector<double>& g) {
    auto& buf = grad_buffer();
    for (size_t i = 0; i < buf.size(); ++i) {
        buf[i] += g[i];
    }
}

std::vector<double>& TensorNode::grad_buffer() {
    if (grad.empty()) {
        grad.assign(values.size(), 0.0);
    }
    return grad;
}

void check_finite(const std::vector<double>& values, const char* what) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw NonFiniteError(std::string("non-finite value in ") + what);
        }
    }
}

std::shared_ptr<TensorNode> alloc_node(Shape shape, std::vector<double> values,
                                       bool requires_grad) {
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    node->requires_grad = requires_grad;
    return node;
}

}  // namespace detail

namespace {

bool g_debug_checks = false;
thread_local bool g_grad_enabled = true;
thread_local Tape g_tape;

std::shared_ptr<detail::TensorNode> make_node(const Shape& shape, std::vector<double> values,
                                              bool requires_grad) {
    for (int64_t e : shape) {
        if (e <= 0) {
            throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
        }
    }
    if (shape_size(shape) != static_cast<int64_t>(values.size())) {
        throw ShapeError("shape " + shape_str(shape) + " does not match buffer of " +
                         std::to_string(values.size()) + " values");
    }
    detail::check_finite(values, "tensor creation");
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = shape;
    node->values = std::move(values);
    node->requires_grad = requires_grad;
    return node;
}

}  // namespace

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
    return full(shape, 0.0, requires_grad);
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
    std::vector<double> values(static_cast<size_t>(shape_size(shape)), value);
    return Tensor(make_node(shape, std::move(values), requires_grad));
}

Tensor Tensor::from_values(const Shape& shape, std::vector<double> values, bool requires_grad) {
    return Tensor(make_node(shape, std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor(make_node(Shape{}, std::vector<double>{value}, requires_grad));
}

Tensor Tensor::wrap(std::shared_ptr<detail::TensorNode> node) {
    return Tensor(std::move(node));
}

const Shape& Tensor::shape() const {
    return node_->shape;
}

int64_t Tensor::size() const {
    return static_cast<int64_t>(node_->values.size());
}

int64_t Tensor::ndim() const {
    return static_cast<int64_t>(node_->shape.size());
}

int64_t Tensor::extent(int axis) const {
    if (axis < 0 || axis >= static_cast<int>(node_->shape.size())) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                         shape_str(node_->shape));
    }
    return node_->shape[static_cast<size_t>(axis)];
}

const std::vector<double>& Tensor::values() const {
    return node_->values;
}

std::vector<double>& Tensor::mutable_values() {
    return node_->values;
}

bool Tensor::requires_grad() const {
    return node_ && node_->requires_grad;
}

bool Tensor::has_grad() const {
    return node_ && !node_->grad.empty();
}

const std::vector<double>& Tensor::grad() const {
    if (!has_grad()) {
        throw ContractError("tensor has no gradient");
    }
    return node_->grad;
}

void Tensor::clear_grad() {
    if (node_) {
        node_->grad.clear();
    }
}

double Tensor::item() const {
    if (size() != 1) {
        throw ContractError("item() requires a scalar tensor, got shape " +
                            shape_str(node_->shape));
    }
    return node_->values[0];
}

void Tape::record(std::shared_ptr<detail::TensorNode> output,
                  std::function<void(const std::vector<double>&)> backward) {
    entries_.push_back(Entry{std::move(output), std::move(backward)});
}

Tape& active_tape() {
    return g_tape;
}

bool grad_enabled() {
    return g_grad_enabled;
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) {
    g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() {
    g_grad_enabled = prev_;
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw ContractError("backward() requires a scalar loss");
    }
    Tape& tape = active_tape();
    if (tape.empty()) {
        throw ContractError("backward() on an empty tape");
    }
    loss.node()->grad_buffer()[0] += 1.0;
    const auto& entries = tape.entries();
    for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
        if (it->output->grad.empty()) {
            continue;  // nothing flowed into this value
        }
        it->backward(it->output->grad);
    }
    tape.clear();
}

void set_debug_checks(bool enabled) {
    g_debug_checks = enabled;
}

bool debug_checks() {
    return g_debug_checks;
}

}  // namespace equivae
