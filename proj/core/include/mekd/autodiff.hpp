// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "mekd/tensor.hpp"

/// Tape-based reverse-mode differentiation.
///
/// A Graph records every operation as it is evaluated (the forward pass), so
/// the node vector is already in topological order and backward simply walks
/// it in reverse. Values are double precision throughout.
namespace mekd::ad {

/// A named trainable tensor together with its accumulated gradient.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;  // empty until the first backward pass reaches it

    bool has_grad() const { return !grad.empty(); }
    void zero_grad() { grad = Tensor(value.shape(), 0.0); }
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives
/// and has not been cleared.
class Var {
public:
    Var() = default;

    const Tensor& value() const;
    /// Gradient of the last backward pass with respect to this node.
    const Tensor& grad() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }

    Graph& graph() const;
    std::size_t id() const { return id_; }
    bool valid() const { return graph_ != nullptr; }

private:
    friend class Graph;
    Var(Graph* g, std::size_t id, std::size_t generation) : graph_(g), id_(id), generation_(generation) {}

    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
    std::size_t generation_ = 0;
};

class Graph {
public:
    using BackwardFn = std::function<void(Graph&, std::size_t self)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    /// Leaf that does not receive gradients.
    Var constant(Tensor value, std::string name = "const");
    /// Leaf that receives a gradient (inputs whose sensitivity is needed).
    Var variable(Tensor value, std::string name = "var");
    /// Leaf bound to a Parameter; backward accumulates into `p.grad`.
    Var param(Parameter& p);

    /// Reverse pass from a scalar loss. Every Parameter reachable from the
    /// loss ends with a populated gradient (zeros where it has no influence).
    void backward(Var loss);
    /// Vector-Jacobian product: seeds `output` with `seed` instead of 1.
    void backward_from(Var output, const Tensor& seed);

    /// Drops every node. Handles issued before are invalidated.
    void clear();
    std::size_t size() const { return nodes_.size(); }

    // Op-authoring interface used by the functions below.
    Var record(std::string op, Tensor value, std::vector<std::size_t> parents, BackwardFn backward);
    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
    /// Gradient slot of node `id`, allocated as zeros on first use.
    Tensor& grad_slot(std::size_t id);
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    std::size_t node_of(const Var& v) const;
    const std::string& op_name(std::size_t id) const { return nodes_[id].op; }

private:
    struct Node {
        std::string op;
        Tensor value;
        Tensor grad;
        std::vector<std::size_t> parents;
        BackwardFn backward;
        Parameter* param = nullptr;
        bool requires_grad = false;
    };

    Var leaf(std::string op, Tensor value, bool requires_grad, Parameter* p);
    void run_backward(std::size_t root, Tensor seed);

    std::vector<Node> nodes_;
    std::size_t generation_ = 1;
};

// Elementwise / broadcasting arithmetic. `b` may match `a` exactly or be a
// single row broadcast across the rows of `a`.
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product of equally shaped operands.
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
/// factor * a + offset
Var affine(Var a, double factor, double offset);
Var neg(Var a);

Var matmul(Var a, Var b);
Var transpose(Var a);
/// x W + b for x:[m,in], W:[in,out], b:[out].
Var linear(Var x, Var weight, Var bias);

Var relu(Var a);
Var leaky_relu(Var a, double slope);
Var tanh(Var a);
Var sigmoid(Var a);
Var log(Var a);
Var exp(Var a);
Var abs(Var a);
Var square(Var a);
/// Clamps into [lo, hi]; gradient is zero where the clamp is active.
Var clamp(Var a, double lo, double hi);

/// Row-wise softmax and its logarithm.
Var softmax(Var a);
Var log_softmax(Var a);

/// Full reductions to a rank-0 scalar.
Var sum(Var a);
Var mean(Var a);
/// Row reductions to an [m,1] column.
Var row_sum(Var a);
/// Euclidean norm of each row; the subgradient at a zero row is zero.
Var row_l2_norm(Var a);

/// Concatenation along axis 0 (rows) or 1 (columns).
Var concat(Var a, Var b, int axis);

}  // namespace mekd::ad
