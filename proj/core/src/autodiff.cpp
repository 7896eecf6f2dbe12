// SPDX-License-Identifier: Apache-2.0
#include "mekd/autodiff.hpp"

#include <cmath>
#include <utility>

#include <Eigen/Core>

namespace mekd::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

MapC view(const Tensor& t) { return MapC(t.values().data(), Eigen::Index(t.rows()), Eigen::Index(t.cols())); }
Map view(Tensor& t) { return Map(t.values().data(), Eigen::Index(t.rows()), Eigen::Index(t.cols())); }

Tensor from_eigen(const RowMat& m) {
    Tensor out(Shape{std::size_t(m.rows()), std::size_t(m.cols())});
    view(out) = m;
    return out;
}

void require_same_graph(const Var& a, const Var& b) {
    if (&a.graph() != &b.graph()) throw ContractError("operands belong to different graphs");
}

enum class Broadcast { none, row, scalar };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
    if (a.size() == b.size() && a.rows() == b.rows()) return Broadcast::none;
    if (b.size() == 1) return Broadcast::scalar;
    if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::row;
    throw ShapeError(std::string(op) + ": cannot combine " + shape_string(a.shape()) + " with " +
                     shape_string(b.shape()));
}

// Reduces an a-shaped gradient to b's shape according to the broadcast kind.
void accumulate_broadcast(Tensor& slot, const Tensor& grad, Broadcast kind, double sign) {
    switch (kind) {
        case Broadcast::none:
            for (std::size_t i = 0; i < grad.size(); ++i) slot[i] += sign * grad[i];
            break;
        case Broadcast::row: {
            const std::size_t c = grad.cols();
            for (std::size_t r = 0; r < grad.rows(); ++r)
                for (std::size_t j = 0; j < c; ++j) slot[j] += sign * grad[r * c + j];
            break;
        }
        case Broadcast::scalar: {
            double s = 0.0;
            for (double v : grad.values()) s += v;
            slot[0] += sign * s;
            break;
        }
    }
}

template <class Fwd, class Bwd>
Var unary(Var a, std::string op, Fwd fwd, Bwd dydx) {
    Graph& g = a.graph();
    const std::size_t ia = g.node_of(a);
    const Tensor& x = g.value(ia);
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
    return g.record(std::move(op), std::move(y), {ia}, [ia, dydx](Graph& gr, std::size_t self) {
        if (!gr.requires_grad(ia)) return;
        const Tensor& xv = gr.value(ia);
        const Tensor& yv = gr.value(self);
        const Tensor& gy = gr.grad(self);
        Tensor& slot = gr.grad_slot(ia);
        for (std::size_t i = 0; i < xv.size(); ++i) slot[i] += gy[i] * dydx(xv[i], yv[i]);
    });
}

}  // namespace

// ---------------------------------------------------------------------------
// Var / Graph

const Tensor& Var::value() const { return graph_->value(graph_->node_of(*this)); }
const Tensor& Var::grad() const { return graph_->grad(graph_->node_of(*this)); }

Graph& Var::graph() const {
    if (!graph_) throw ContractError("use of an unbound Var");
    return *graph_;
}

std::size_t Graph::node_of(const Var& v) const {
    if (v.graph_ != this || v.generation_ != generation_ || v.id_ >= nodes_.size())
        throw ContractError("Var does not refer to a live node of this graph");
    return v.id_;
}

Var Graph::leaf(std::string op, Tensor value, bool requires_grad, Parameter* p) {
    if (value.empty()) throw ShapeError(op + ": empty tensor");
    if (!value.all_finite()) throw NonFiniteError(op + ": non-finite leaf value");
    Node n;
    n.op = std::move(op);
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.param = p;
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1, generation_);
}

Var Graph::constant(Tensor value, std::string name) { return leaf(std::move(name), std::move(value), false, nullptr); }

Var Graph::variable(Tensor value, std::string name) { return leaf(std::move(name), std::move(value), true, nullptr); }

Var Graph::param(Parameter& p) { return leaf("param:" + p.name, p.value, true, &p); }

Var Graph::record(std::string op, Tensor value, std::vector<std::size_t> parents, BackwardFn backward) {
    if (!value.all_finite())
        throw NonFiniteError("non-finite value produced by node #" + std::to_string(nodes_.size()) + " (" + op + ")");
    Node n;
    n.op = std::move(op);
    n.value = std::move(value);
    for (std::size_t p : parents) n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
    n.parents = std::move(parents);
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1, generation_);
}

Tensor& Graph::grad_slot(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
    return n.grad;
}

void Graph::backward(Var loss) {
    if (nodes_.empty() || loss.graph_ != this || loss.generation_ != generation_)
        throw ContractError("backward called before forward");
    const std::size_t root = node_of(loss);
    if (nodes_[root].value.size() != 1)
        throw ShapeError("backward requires a scalar loss, got shape " + shape_string(nodes_[root].value.shape()));
    run_backward(root, Tensor(nodes_[root].value.shape(), 1.0));
}

void Graph::backward_from(Var output, const Tensor& seed) {
    if (nodes_.empty() || output.graph_ != this || output.generation_ != generation_)
        throw ContractError("backward called before forward");
    const std::size_t root = node_of(output);
    if (seed.size() != nodes_[root].value.size()) throw ShapeError("backward seed does not match output shape");
    run_backward(root, seed.reshaped(nodes_[root].value.shape()));
}

void Graph::run_backward(std::size_t root, Tensor seed) {
    for (Node& n : nodes_) n.grad = Tensor();
    nodes_[root].grad = std::move(seed);
    for (std::size_t i = root + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad || n.grad.empty()) continue;
        if (n.backward) n.backward(*this, i);
    }
    for (Node& n : nodes_) {
        if (!n.param) continue;
        if (!n.param->has_grad()) n.param->zero_grad();
        if (n.grad.empty()) continue;
        for (std::size_t k = 0; k < n.grad.size(); ++k) n.param->grad[k] += n.grad[k];
    }
}

void Graph::clear() {
    nodes_.clear();
    ++generation_;
}

// ---------------------------------------------------------------------------
// Arithmetic

namespace {
Var add_sub(Var a, Var b, double sign, const char* op) {
    require_same_graph(a, b);
    Graph& g = a.graph();
    const std::size_t ia = g.node_of(a), ib = g.node_of(b);
    const Tensor& x = g.value(ia);
    const Tensor& y = g.value(ib);
    const Broadcast kind = broadcast_kind(x, y, op);
    Tensor out(x.shape());
    const std::size_t c = x.cols();
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double bv = kind == Broadcast::none ? y[i] : kind == Broadcast::row ? y[i % c] : y[0];
        out[i] = x[i] + sign * bv;
    }
    return g.record(op, std::move(out), {ia, ib}, [ia, ib, kind, sign](Graph& gr, std::size_t self) {
        const Tensor& gy = gr.grad(self);
        if (gr.requires_grad(ia)) accumulate_broadcast(gr.grad_slot(ia), gy, Broadcast::none, 1.0);
        if (gr.requires_grad(ib)) accumulate_broadcast(gr.grad_slot(ib), gy, kind, sign);
    });
}
}  // namespace

Var add(Var a, Var b) { return add_sub(a, b, 1.0, "add"); }
Var sub(Var a, Var b) { return add_sub(a, b, -1.0, "sub"); }

Var mul(Var a, Var b) {
    require_same_graph(a, b);
    Graph& g = a.graph();
    const std::size_t ia = g.node_of(a), ib = g.node_of(b);
    const Tensor& x = g.value(ia);
    const Tensor& y = g.value(ib);
    if (x.size() != y.size() || x.rows() != y.rows())
        throw ShapeError("mul: shape " + shape_string(x.shape()) + " vs " + shape_string(y.shape()));
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
    return g.record("mul", std::move(out), {ia, ib}, [ia, ib](Graph& gr, std::size_t self) {
        const Tensor& gy = gr.grad(self);
        const Tensor& xv = gr.value(ia);
        const Tensor& yv = gr.value(ib);
        if (gr.requires_grad(ia)) {
            Tensor& s = gr.grad_slot(ia);
            for (std::size_t i = 0; i < gy.size(); ++i) s[i] += gy[i] * yv[i];
        }
        if (gr.requires_grad(ib)) {
            Tensor& s = gr.grad_slot(ib);
            for (std::size_t i = 0; i < gy.size(); ++i) s[i] += gy[i] * xv[i];
        }
    });
}

Var affine(Var a, double factor, double offset) {
    return unary(
        a, "affine", [factor, offset](double x) { return factor * x + offset; },
        [factor](double, double) { return factor; });
}

Var scale(Var a, double factor) { return affine(a, factor, 0.0); }
Var add_scalar(Var a, double offset) { return affine(a, 1.0, offset); }
Var neg(Var a) { return affine(a, -1.0, 0.0); }

Var matmul(Var a, Var b) {
    require_same_graph(a, b);
    Graph& g = a.graph();
    const std::size_t ia = g.node_of(a), ib = g.node_of(b);
    const Tensor& x = g.value(ia);
    const Tensor& y = g.value(ib);
    if (x.cols() != y.rows())
        throw ShapeError("matmul: " + shape_string(x.shape()) + " x " + shape_string(y.shape()));
    RowMat prod = view(x) * view(y);
    return g.record("matmul", from_eigen(prod), {ia, ib}, [ia, ib](Graph& gr, std::size_t self) {
        const Tensor& gy = gr.grad(self);
        if (gr.requires_grad(ia)) {
            Tensor& s = gr.grad_slot(ia);
            view(s).noalias() += view(gy) * view(gr.value(ib)).transpose();
        }
        if (gr.requires_grad(ib)) {
            Tensor& s = gr.grad_slot(ib);
            view(s).noalias() += view(gr.value(ia)).transpose() * view(gy);
        }
    });
}

Var transpose(Var a) {
    Graph& g = a.graph();
    const std::size_t ia = g.node_of(a);
    RowMat t = view(g.value(ia)).transpose();
    return g.record("transpose", from_eigen(t), {ia}, [ia](Graph& gr, std::size_t self) {
        if (!gr.requires_grad(ia)) return;
        Tensor& s = gr.grad_slot(ia);
        view(s) += view(gr.grad(self)).transpose();
    });
}

Var linear(Var x, Var weight, Var bias) {
    if (bias.value().size() != weight.cols())
        throw ShapeError("linear: bias " + shape_string(bias.shape()) + " vs weight " + shape_string(weight.shape()));
    return add(matmul(x, weight), bias);
}

// ---------------------------------------------------------------------------
// Elementwise nonlinearities

Var relu(Var a) {
    return unary(
        a, "relu", [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var a, double slope) {
    return unary(
        a, "leaky_relu", [slope](double x) { return x > 0.0 ? x : slope * x; },
        [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var tanh(Var a) {
    return unary(
        a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
    return unary(
        a, "sigmoid",
        [](double x) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Var log(Var a) {
    return unary(
        a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var exp(Var a) {
    return unary(
        a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var abs(Var a) {
    return unary(
        a, "abs", [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var square(Var a) {
    return unary(
        a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var clamp(Var a, double lo, double hi) {
    if (!(lo <= hi)) throw ContractError("clamp: lo must not exceed hi");
    return unary(
        a, "clamp", [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
        [lo, hi](double x, double) { return (x < lo || x > hi) ? 0.0 : 1.0; });
}

// ---------------------------------------------------------------------------
// Row-wise softmax

Var softmax(Var a) {
    Graph& g = a.graph();
    const std::size_t ia = g.node_of(a);
    const Tensor& x = g.value(ia);
    Tensor y(x.shape());
    const std::size_t c = x.cols();
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const double* xr = x.values().data() + r * c;
        double* yr = y.values().data() + r * c;
        double mx = xr[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, xr[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += (yr[j] = std::exp(xr[j] - mx));
        for (std::size_t j = 0; j < c; ++j) yr[j] /= z;
    }
    return g.record("softmax", std::move(y), {ia}, [ia](Graph& gr, std::size_t self) {
        if (!gr.requires_grad(ia)) return;
        const Tensor& yv = gr.value(self);
        const Tensor& gy = gr.grad(self);
        Tensor& s = gr.grad_slot(ia);
        const std::size_t cc = yv.cols();
        for (std::size_t r = 0; r < yv.rows(); ++r) {
            double dot = 0.0;
            for (std::size_t j = 0; j < cc; ++j) dot += gy[r * cc + j] * yv[r * cc + j];
            for (std::size_t j = 0; j < cc; ++j) s[r * cc + j] += yv[r * cc + j] * (gy[r * cc + j] - dot);
        }
    });
}

Var log_softmax(Var a) {
    Graph& g = a.graph();
    const std::size_t ia = g.node_of(a);
    const Tensor& x = g.value(ia);
    Tensor y(x.shape());
    const std::size_t c = x.cols();
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const double* xr = x.values().data() + r * c;
        double mx = xr[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, xr[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(xr[j] - mx);
        const double lse = mx + std::log(z);
        for (std::size_t j = 0; j < c; ++j) y[r * c + j] = xr[j] - lse;
    }
    return g.record("log_softmax", std::move(y), {ia}, [ia](Graph& gr, std::size_t self) {
        if (!gr.requires_grad(ia)) return;
        const Tensor& yv = gr.value(self);
        const Tensor& gy = gr.grad(self);
        Tensor& s = gr.grad_slot(ia);
        const std::size_t cc = yv.cols();
        for (std::size_t r = 0; r < yv.rows(); ++r) {
            double total = 0.0;
            for (std::size_t j = 0; j < cc; ++j) total += gy[r * cc + j];
            for (std::size_t j = 0; j < cc; ++j) s[r * cc + j] += gy[r * cc + j] - std::exp(yv[r * cc + j]) * total;
        }
    });
}

// ---------------------------------------------------------------------------
// Reductions

Var sum(Var a) {
    Graph& g = a.graph();
    const std::size_t ia = g.node_of(a);
    double s = 0.0;
    for (double v : g.value(ia).values()) s += v;
    return g.record("sum", Tensor::scalar(s), {ia}, [ia](Graph& gr, std::size_t self) {
        if (!gr.requires_grad(ia)) return;
        const double gy = gr.grad(self)[0];
        for (double& v : gr.grad_slot(ia).values()) v += gy;
    });
}

Var mean(Var a) {
    const double n = double(a.value().size());
    return scale(sum(a), 1.0 / n);
}

Var row_sum(Var a) {
    Graph& g = a.graph();
    const std::size_t ia = g.node_of(a);
    const Tensor& x = g.value(ia);
    Tensor out(Shape{x.rows(), 1});
    const std::size_t c = x.cols();
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += x[r * c + j];
        out[r] = s;
    }
    return g.record("row_sum", std::move(out), {ia}, [ia](Graph& gr, std::size_t self) {
        if (!gr.requires_grad(ia)) return;
        const Tensor& gy = gr.grad(self);
        Tensor& s = gr.grad_slot(ia);
        const std::size_t cc = s.cols();
        for (std::size_t r = 0; r < s.rows(); ++r)
            for (std::size_t j = 0; j < cc; ++j) s[r * cc + j] += gy[r];
    });
}

Var row_l2_norm(Var a) {
    Graph& g = a.graph();
    const std::size_t ia = g.node_of(a);
    const Tensor& x = g.value(ia);
    Tensor out(Shape{x.rows(), 1});
    const std::size_t c = x.cols();
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += x[r * c + j] * x[r * c + j];
        out[r] = std::sqrt(s);
    }
    return g.record("row_l2_norm", std::move(out), {ia}, [ia](Graph& gr, std::size_t self) {
        if (!gr.requires_grad(ia)) return;
        const Tensor& xv = gr.value(ia);
        const Tensor& nv = gr.value(self);
        const Tensor& gy = gr.grad(self);
        Tensor& s = gr.grad_slot(ia);
        const std::size_t cc = xv.cols();
        for (std::size_t r = 0; r < xv.rows(); ++r) {
            if (nv[r] == 0.0) continue;
            const double k = gy[r] / nv[r];
            for (std::size_t j = 0; j < cc; ++j) s[r * cc + j] += k * xv[r * cc + j];
        }
    });
}

Var concat(Var a, Var b, int axis) {
    require_same_graph(a, b);
    Graph& g = a.graph();
    const std::size_t ia = g.node_of(a), ib = g.node_of(b);
    const Tensor& x = g.value(ia);
    const Tensor& y = g.value(ib);
    if (axis != 0 && axis != 1) throw ContractError("concat: axis must be 0 or 1");
    if (axis == 0 ? x.cols() != y.cols() : x.rows() != y.rows())
        throw ShapeError("concat: " + shape_string(x.shape()) + " with " + shape_string(y.shape()));
    const std::size_t rows = axis == 0 ? x.rows() + y.rows() : x.rows();
    const std::size_t cols = axis == 0 ? x.cols() : x.cols() + y.cols();
    Tensor out(Shape{rows, cols});
    auto place = [&](const Tensor& src, std::size_t r0, std::size_t c0) {
        for (std::size_t r = 0; r < src.rows(); ++r)
            for (std::size_t j = 0; j < src.cols(); ++j) out.at(r0 + r, c0 + j) = src.at(r, j);
    };
    place(x, 0, 0);
    axis == 0 ? place(y, x.rows(), 0) : place(y, 0, x.cols());
    return g.record("concat", std::move(out), {ia, ib}, [ia, ib, axis](Graph& gr, std::size_t self) {
        const Tensor& gy = gr.grad(self);
        const std::size_t xr = gr.value(ia).rows(), xc = gr.value(ia).cols();
        auto take = [&](std::size_t id, std::size_t r0, std::size_t c0) {
            if (!gr.requires_grad(id)) return;
            Tensor& s = gr.grad_slot(id);
            for (std::size_t r = 0; r < s.rows(); ++r)
                for (std::size_t j = 0; j < s.cols(); ++j) s.at(r, j) += gy.at(r0 + r, c0 + j);
        };
        take(ia, 0, 0);
        axis == 0 ? take(ib, xr, 0) : take(ib, 0, xc);
    });
}

}  // namespace mekd::ad
