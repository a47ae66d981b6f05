#include "equivae/ops.hpp"

#include <algorithm>
#include <cmath>

namespace equivae {

namespace {

constexpr double kLogGuard = 1e-12;

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

Tensor finish(Shape shape, std::vector<double> values, bool requires_grad, const char* name) {
    auto node = detail::alloc_node(std::move(shape), std::move(values), requires_grad);
    if (debug_checks()) {
        detail::check_finite(node->values, name);
    }
    return Tensor::wrap(node);
}

bool is_suffix(const Shape& big, const Shape& small) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// Operand layout for a binary op: either the shapes match, or exactly one
// side is repeated over the other's leading extents (suffix rule; a scalar
// is the degenerate suffix).
struct BinaryPlan {
    Shape out_shape;
    int64_t out_size;
    bool a_repeats;  // a is the smaller operand, indexed modulo its size
    bool b_repeats;
};

BinaryPlan plan_binary(const char* name, const Tensor& a, const Tensor& b) {
    BinaryPlan plan;
    plan.a_repeats = false;
    plan.b_repeats = false;
    if (a.shape() == b.shape()) {
        plan.out_shape = a.shape();
    } else if (b.size() == 1 || is_suffix(a.shape(), b.shape())) {
        plan.out_shape = a.shape();
        plan.b_repeats = true;
    } else if (a.size() == 1 || is_suffix(b.shape(), a.shape())) {
        plan.out_shape = b.shape();
        plan.a_repeats = true;
    } else {
        throw ShapeError(std::string(name) + ": incompatible shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
    }
    plan.out_size = shape_size(plan.out_shape);
    return plan;
}

// f(av, bv) -> out; dfa/dfb (g, av, bv) -> gradient contributions.
template <typename F, typename Dfa, typename Dfb>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, F f, Dfa dfa, Dfb dfb) {
    const BinaryPlan plan = plan_binary(name, a, b);
    const auto& av = a.values();
    const auto& bv = b.values();
    const int64_t an = a.size();
    const int64_t bn = b.size();

    std::vector<double> out(static_cast<size_t>(plan.out_size));
    for (int64_t i = 0; i < plan.out_size; ++i) {
        const double x = av[static_cast<size_t>(plan.a_repeats ? i % an : i)];
        const double y = bv[static_cast<size_t>(plan.b_repeats ? i % bn : i)];
        out[static_cast<size_t>(i)] = f(x, y);
    }

    const bool rg = grad_enabled() && (a.requires_grad() || b.requires_grad());
    Tensor result = finish(plan.out_shape, std::move(out), rg, name);
    if (rg) {
        NodePtr na = a.node();
        NodePtr nb = b.node();
        active_tape().record(result.node(), [na, nb, plan, an, bn, dfa, dfb](
                                                const std::vector<double>& g) {
            const auto& av2 = na->values;
            const auto& bv2 = nb->values;
            if (na->requires_grad) {
                auto& da = na->grad_buffer();
                for (int64_t i = 0; i < plan.out_size; ++i) {
                    const size_t ia = static_cast<size_t>(plan.a_repeats ? i % an : i);
                    const size_t ib = static_cast<size_t>(plan.b_repeats ? i % bn : i);
                    da[ia] += dfa(g[static_cast<size_t>(i)], av2[ia], bv2[ib]);
                }
            }
            if (nb->requires_grad) {
                auto& db = nb->grad_buffer();
                for (int64_t i = 0; i < plan.out_size; ++i) {
                    const size_t ia = static_cast<size_t>(plan.a_repeats ? i % an : i);
                    const size_t ib = static_cast<size_t>(plan.b_repeats ? i % bn : i);
                    db[ib] += dfb(g[static_cast<size_t>(i)], av2[ia], bv2[ib]);
                }
            }
        });
    }
    return result;
}

// df(g, x, y) where x is the input value and y the output value.
template <typename F, typename Df>
Tensor unary_op(const char* name, const Tensor& a, F f, Df df) {
    const auto& av = a.values();
    std::vector<double> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) {
        out[i] = f(av[i]);
    }
    const bool rg = grad_enabled() && a.requires_grad();
    Tensor result = finish(a.shape(), std::move(out), rg, name);
    if (rg) {
        NodePtr na = a.node();
        NodePtr no = result.node();
        active_tape().record(no, [na, no, df](const std::vector<double>& g) {
            auto& da = na->grad_buffer();
            const auto& xs = na->values;
            const auto& ys = no->values;
            for (size_t i = 0; i < g.size(); ++i) {
                da[i] += df(g[i], xs[i], ys[i]);
            }
        });
    }
    return result;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double g, double, double) { return g; }, [](double g, double, double) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double g, double, double) { return g; }, [](double g, double, double) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double g, double, double y) { return g * y; },
        [](double g, double x, double) { return g * x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    for (double y : b.values()) {
        if (y == 0.0) {
            throw DomainError("div: division by zero");
        }
    }
    return binary_op(
        "div", a, b, [](double x, double y) { return x / y; },
        [](double g, double, double y) { return g / y; },
        [](double g, double x, double y) { return -g * x / (y * y); });
}

Tensor exp(const Tensor& a) {
    return unary_op(
        "exp", a, [](double x) { return std::exp(x); },
        [](double g, double, double y) { return g * y; });
}

Tensor log(const Tensor& a) {
    for (double x : a.values()) {
        if (x <= 0.0) {
            throw DomainError("log: non-positive input " + std::to_string(x));
        }
    }
    return unary_op(
        "log", a, [](double x) { return std::log(x); },
        [](double g, double x, double) { return g / x; });
}

Tensor log_guarded(const Tensor& a) {
    return unary_op(
        "log_guarded", a, [](double x) { return std::log(std::max(x, kLogGuard)); },
        [](double g, double x, double) { return x > kLogGuard ? g / x : 0.0; });
}

Tensor relu(const Tensor& a) {
    return unary_op(
        "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double g, double x, double) { return x > 0.0 ? g : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
    return unary_op(
        "sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
        [](double g, double, double y) { return g * y * (1.0 - y); });
}

Tensor square(const Tensor& a) {
    return unary_op(
        "square", a, [](double x) { return x * x; },
        [](double g, double x, double) { return 2.0 * g * x; });
}

Tensor negate(const Tensor& a) {
    return unary_op(
        "negate", a, [](double x) { return -x; }, [](double g, double, double) { return -g; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.extent(1) != b.extent(0)) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const int64_t m = a.extent(0);
    const int64_t k = a.extent(1);
    const int64_t n = b.extent(1);
    const double* ap = a.values().data();
    const double* bp = b.values().data();

    std::vector<double> out(static_cast<size_t>(m * n), 0.0);
    double* cp = out.data();
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t p = 0; p < k; ++p) {
            const double aip = ap[i * k + p];
            const double* brow = bp + p * n;
            double* crow = cp + i * n;
            for (int64_t j = 0; j < n; ++j) {
                crow[j] += aip * brow[j];
            }
        }
    }

    const bool rg = grad_enabled() && (a.requires_grad() || b.requires_grad());
    Tensor result = finish(Shape{m, n}, std::move(out), rg, "matmul");
    if (rg) {
        NodePtr na = a.node();
        NodePtr nb = b.node();
        active_tape().record(result.node(), [na, nb, m, k, n](const std::vector<double>& g) {
            const double* gp = g.data();
            if (na->requires_grad) {
                // dA = g . B^T
                auto& da = na->grad_buffer();
                const double* bp2 = nb->values.data();
                for (int64_t i = 0; i < m; ++i) {
                    for (int64_t p = 0; p < k; ++p) {
                        const double* grow = gp + i * n;
                        const double* brow = bp2 + p * n;
                        double acc = 0.0;
                        for (int64_t j = 0; j < n; ++j) {
                            acc += grow[j] * brow[j];
                        }
                        da[static_cast<size_t>(i * k + p)] += acc;
                    }
                }
            }
            if (nb->requires_grad) {
                // dB = A^T . g
                auto& db = nb->grad_buffer();
                const double* ap2 = na->values.data();
                for (int64_t i = 0; i < m; ++i) {
                    const double* grow = gp + i * n;
                    for (int64_t p = 0; p < k; ++p) {
                        const double aip = ap2[i * k + p];
                        double* drow = db.data() + p * n;
                        for (int64_t j = 0; j < n; ++j) {
                            drow[j] += aip * grow[j];
                        }
                    }
                }
            }
        });
    }
    return result;
}

namespace {

struct ReducePlan {
    Shape out_shape;
    std::vector<int64_t> in_strides;
    std::vector<int64_t> out_stride_per_axis;  // 0 for reduced axes
    int64_t count = 1;                         // number of elements folded together
};

ReducePlan plan_reduce(const char* name, const Tensor& a, const std::vector<int>& axes) {
    const auto& shape = a.shape();
    const int nd = static_cast<int>(shape.size());
    std::vector<bool> reduced(static_cast<size_t>(nd), false);
    for (int axis : axes) {
        if (axis < 0 || axis >= nd) {
            throw ShapeError(std::string(name) + ": axis " + std::to_string(axis) +
                             " out of range for " + shape_str(shape));
        }
        if (reduced[static_cast<size_t>(axis)]) {
            throw ShapeError(std::string(name) + ": duplicate axis " + std::to_string(axis));
        }
        reduced[static_cast<size_t>(axis)] = true;
    }

    ReducePlan plan;
    plan.in_strides.assign(static_cast<size_t>(nd), 1);
    for (int d = nd - 2; d >= 0; --d) {
        plan.in_strides[static_cast<size_t>(d)] =
            plan.in_strides[static_cast<size_t>(d + 1)] * shape[static_cast<size_t>(d + 1)];
    }
    for (int d = 0; d < nd; ++d) {
        if (reduced[static_cast<size_t>(d)]) {
            plan.count *= shape[static_cast<size_t>(d)];
        } else {
            plan.out_shape.push_back(shape[static_cast<size_t>(d)]);
        }
    }
    int64_t out_stride = 1;
    plan.out_stride_per_axis.assign(static_cast<size_t>(nd), 0);
    for (int d = nd - 1; d >= 0; --d) {
        if (!reduced[static_cast<size_t>(d)]) {
            plan.out_stride_per_axis[static_cast<size_t>(d)] = out_stride;
            out_stride *= shape[static_cast<size_t>(d)];
        }
    }
    return plan;
}

int64_t out_index(const ReducePlan& plan, const Shape& in_shape, int64_t flat) {
    int64_t idx = 0;
    for (size_t d = 0; d < in_shape.size(); ++d) {
        const int64_t coord = (flat / plan.in_strides[d]) % in_shape[d];
        idx += coord * plan.out_stride_per_axis[d];
    }
    return idx;
}

Tensor reduce_impl(const char* name, const Tensor& a, const std::vector<int>& axes, bool mean) {
    if (axes.empty()) {
        return a;  // identity
    }
    const ReducePlan plan = plan_reduce(name, a, axes);
    const auto& av = a.values();
    const int64_t in_size = a.size();
    const Shape in_shape = a.shape();

    std::vector<double> out(static_cast<size_t>(shape_size(plan.out_shape)), 0.0);
    for (int64_t i = 0; i < in_size; ++i) {
        out[static_cast<size_t>(out_index(plan, in_shape, i))] += av[static_cast<size_t>(i)];
    }
    const double scale = mean ? 1.0 / static_cast<double>(plan.count) : 1.0;
    if (mean) {
        for (double& v : out) {
            v *= scale;
        }
    }

    const bool rg = grad_enabled() && a.requires_grad();
    Tensor result = finish(plan.out_shape, std::move(out), rg, name);
    if (rg) {
        NodePtr na = a.node();
        active_tape().record(result.node(),
                             [na, plan, in_shape, in_size, scale](const std::vector<double>& g) {
                                 auto& da = na->grad_buffer();
                                 for (int64_t i = 0; i < in_size; ++i) {
                                     const int64_t o = out_index(plan, in_shape, i);
                                     da[static_cast<size_t>(i)] +=
                                         scale * g[static_cast<size_t>(o)];
                                 }
                             });
    }
    return result;
}

std::vector<int> all_axes(const Tensor& a) {
    std::vector<int> axes(static_cast<size_t>(a.ndim()));
    for (size_t i = 0; i < axes.size(); ++i) {
        axes[i] = static_cast<int>(i);
    }
    return axes;
}

}  // namespace

Tensor reduce_sum(const Tensor& a, const std::vector<int>& axes) {
    return reduce_impl("sum", a, axes, false);
}

Tensor reduce_mean(const Tensor& a, const std::vector<int>& axes) {
    return reduce_impl("mean", a, axes, true);
}

Tensor sum_all(const Tensor& a) {
    return reduce_sum(a, all_axes(a));
}

Tensor mean_all(const Tensor& a) {
    return reduce_mean(a, all_axes(a));
}

Tensor sum_per_row(const Tensor& a) {
    std::vector<int> axes;
    for (int d = 1; d < a.ndim(); ++d) {
        axes.push_back(d);
    }
    return reduce_sum(a, axes);
}

Tensor stop_gradient(const Tensor& a) {
    return finish(a.shape(), a.values(), false, "stop_gradient");
}

Tensor softmax_rows(const Tensor& a) {
    if (a.ndim() != 2) {
        throw ShapeError("softmax_rows: expected a rank-2 tensor, got " + shape_str(a.shape()));
    }
    const int64_t rows = a.extent(0);
    const int64_t cols = a.extent(1);
    const auto& av = a.values();
    std::vector<double> out(av.size());
    for (int64_t r = 0; r < rows; ++r) {
        const double* zi = av.data() + r * cols;
        double* oi = out.data() + r * cols;
        double zmax = zi[0];
        for (int64_t j = 1; j < cols; ++j) {
            zmax = std::max(zmax, zi[j]);
        }
        double total = 0.0;
        for (int64_t j = 0; j < cols; ++j) {
            oi[j] = std::exp(zi[j] - zmax);
            total += oi[j];
        }
        for (int64_t j = 0; j < cols; ++j) {
            oi[j] /= total;
        }
    }
    const bool rg = grad_enabled() && a.requires_grad();
    Tensor result = finish(a.shape(), std::move(out), rg, "softmax");
    if (rg) {
        NodePtr na = a.node();
        NodePtr no = result.node();
        active_tape().record(no, [na, no, rows, cols](const std::vector<double>& g) {
            auto& da = na->grad_buffer();
            const auto& s = no->values;
            for (int64_t r = 0; r < rows; ++r) {
                const double* gr = g.data() + r * cols;
                const double* sr = s.data() + r * cols;
                double dot = 0.0;
                for (int64_t j = 0; j < cols; ++j) {
                    dot += gr[j] * sr[j];
                }
                for (int64_t j = 0; j < cols; ++j) {
                    da[static_cast<size_t>(r * cols + j)] += sr[j] * (gr[j] - dot);
                }
            }
        });
    }
    return result;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.extent(0) != b.extent(0)) {
        throw ShapeError("concat_cols: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const int64_t rows = a.extent(0);
    const int64_t an = a.extent(1);
    const int64_t bn = b.extent(1);
    std::vector<double> out(static_cast<size_t>(rows * (an + bn)));
    for (int64_t r = 0; r < rows; ++r) {
        std::copy_n(a.values().data() + r * an, an, out.data() + r * (an + bn));
        std::copy_n(b.values().data() + r * bn, bn, out.data() + r * (an + bn) + an);
    }
    const bool rg = grad_enabled() && (a.requires_grad() || b.requires_grad());
    Tensor result = finish(Shape{rows, an + bn}, std::move(out), rg, "concat_cols");
    if (rg) {
        NodePtr na = a.node();
        NodePtr nb = b.node();
        active_tape().record(result.node(), [na, nb, rows, an, bn](const std::vector<double>& g) {
            if (na->requires_grad) {
                auto& da = na->grad_buffer();
                for (int64_t r = 0; r < rows; ++r) {
                    for (int64_t j = 0; j < an; ++j) {
                        da[static_cast<size_t>(r * an + j)] +=
                            g[static_cast<size_t>(r * (an + bn) + j)];
                    }
                }
            }
            if (nb->requires_grad) {
                auto& db = nb->grad_buffer();
                for (int64_t r = 0; r < rows; ++r) {
                    for (int64_t j = 0; j < bn; ++j) {
                        db[static_cast<size_t>(r * bn + j)] +=
                            g[static_cast<size_t>(r * (an + bn) + an + j)];
                    }
                }
            }
        });
    }
    return result;
}

Tensor tile_rows(const Tensor& a, int64_t rows) {
    if (a.ndim() != 2 || a.extent(0) != 1) {
        throw ShapeError("tile_rows: expected [1, n], got " + shape_str(a.shape()));
    }
    if (rows < 1) {
        throw ShapeError("tile_rows: rows must be >= 1");
    }
    const int64_t n = a.extent(1);
    std::vector<double> out(static_cast<size_t>(rows * n));
    for (int64_t r = 0; r < rows; ++r) {
        std::copy_n(a.values().data(), n, out.data() + r * n);
    }
    const bool rg = grad_enabled() && a.requires_grad();
    Tensor result = finish(Shape{rows, n}, std::move(out), rg, "tile_rows");
    if (rg) {
        NodePtr na = a.node();
        active_tape().record(result.node(), [na, rows, n](const std::vector<double>& g) {
            auto& da = na->grad_buffer();
            for (int64_t r = 0; r < rows; ++r) {
                for (int64_t j = 0; j < n; ++j) {
                    da[static_cast<size_t>(j)] += g[static_cast<size_t>(r * n + j)];
                }
            }
        });
    }
    return result;
}

Tensor gather_cols(const Tensor& a, const std::vector<int>& cols) {
    if (a.ndim() != 2) {
        throw ShapeError("gather_cols: expected a rank-2 tensor, got " + shape_str(a.shape()));
    }
    const int64_t rows = a.extent(0);
    const int64_t n = a.extent(1);
    if (static_cast<int64_t>(cols.size()) != rows) {
        throw ShapeError("gather_cols: need one column index per row");
    }
    std::vector<double> out(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        const int c = cols[static_cast<size_t>(r)];
        if (c < 0 || c >= n) {
            throw ShapeError("gather_cols: column " + std::to_string(c) + " out of range");
        }
        out[static_cast<size_t>(r)] = a.values()[static_cast<size_t>(r * n + c)];
    }
    const bool rg = grad_enabled() && a.requires_grad();
    Tensor result = finish(Shape{rows}, std::move(out), rg, "gather_cols");
    if (rg) {
        NodePtr na = a.node();
        active_tape().record(result.node(), [na, cols, n](const std::vector<double>& g) {
            auto& da = na->grad_buffer();
            for (size_t r = 0; r < cols.size(); ++r) {
                da[r * static_cast<size_t>(n) + static_cast<size_t>(cols[r])] += g[r];
            }
        });
    }
    return result;
}

Tensor reshape(const Tensor& a, const Shape& shape) {
    if (shape_size(shape) != a.size()) {
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape));
    }
    const bool rg = grad_enabled() && a.requires_grad();
    Tensor result = finish(shape, a.values(), rg, "reshape");
    if (rg) {
        NodePtr na = a.node();
        active_tape().record(result.node(), [na](const std::vector<double>& g) {
            auto& da = na->grad_buffer();
            for (size_t i = 0; i < g.size(); ++i) {
                da[i] += g[i];
            }
        });
    }
    return result;
}

}  // namespace equivae
