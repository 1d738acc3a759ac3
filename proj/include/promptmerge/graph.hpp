#pragma once

// Reverse-mode automatic differentiation over 2-D double matrices.
//
// A Graph is a tape: every op appends a node holding its value and a closure
// that pushes the node's gradient into its parents. Nodes are evaluated
// eagerly, so a Graph doubles as the inference engine when built with
// gradients disabled (closures are then never stored).

#include "promptmerge/tensor.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

namespace pm {

class Graph;

class Var {
public:
    Var() = default;

    bool valid() const { return graph_ != nullptr; }
    const Matrix& value() const;
    Index rows() const { return value().rows(); }
    Index cols() const { return value().cols(); }
    double item() const { return value()(0, 0); }
    Graph& graph() const { return *graph_; }
    int id() const { return id_; }

private:
    friend class Graph;
    Var(Graph* g, int id) : graph_(g), id_(id) {}

    Graph* graph_ = nullptr;
    int id_ = -1;
};

class Graph {
public:
    explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool grad_enabled() const { return grad_enabled_; }

    Var constant(Matrix value);
    // Leaf that receives a gradient; used to differentiate w.r.t. inputs.
    Var variable(Matrix value);
    // Leaf bound to a parameter. Gradients are added into Parameter::grad by
    // backward(); frozen parameters never require a gradient.
    Var param(Parameter& p);

    // Seeds d(loss)/d(loss) = 1 for a 1x1 loss and runs the tape backwards.
    void backward(const Var& loss);

    const Matrix& value(const Var& v) const { return node(v).value(); }
    const Matrix& grad(const Var& v) const { return node(v).grad; }
    bool requires_grad(const Var& v) const { return node(v).requires_grad; }
    std::size_t size() const { return nodes_.size(); }

    using Backward = std::function<void(Graph&, int self)>;

    // Op plumbing.
    Var emit(Matrix value, std::initializer_list<Var> parents, Backward backward);
    const Matrix& grad_of(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
    const Matrix& value_of(int id) const { return nodes_[static_cast<std::size_t>(id)].value(); }
    bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

    template <typename Expr>
    void accumulate(int id, const Expr& delta) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.requires_grad) return;
        if (n.grad.size() == 0)
            n.grad = delta;
        else
            n.grad += delta;
    }
    // Gradient buffer allocated to the node's shape (for scattered updates).
    Matrix& grad_buffer(int id);

private:
    struct Node {
        Matrix owned;
        const Matrix* view = nullptr;
        Matrix grad;
        bool requires_grad = false;
        Parameter* param = nullptr;
        Backward backward;

        const Matrix& value() const { return view ? *view : owned; }
    };

    const Node& node(const Var& v) const { return nodes_[static_cast<std::size_t>(v.id_)]; }

    std::deque<Node> nodes_;
    bool grad_enabled_;
};

inline const Matrix& Var::value() const { return graph_->value(*this); }

// --- ops -------------------------------------------------------------------

Var add(const Var& a, const Var& b);
Var scale(const Var& a, double s);
// x [n, in] * weight [in, out] (+ bias [1, out])
Var linear(const Var& x, const Var& weight, const Var& bias = {});
Var layer_norm(const Var& x, const Var& gain, const Var& shift, double eps = 1e-5);
Var gelu(const Var& x);
Var gather_rows(const Var& x, std::span<const Index> rows);
Var slice_rows(const Var& x, Index start, Index count);
Var concat_rows(std::span<const Var> parts);
// Groups each 2x2 neighbourhood of an h x w token grid (row-major) into one
// token with 4c channels, ordered (r,c), (r+1,c), (r,c+1), (r+1,c+1).
Var merge_2x2(const Var& x, Index h, Index w);
// Mean token cross-entropy over positions whose target differs from
// ignore_id. Returns a 1x1 node.
Var cross_entropy(const Var& logits, std::span<const int> targets, int ignore_id);
// sum(x .* weights); a random projection used by gradient checks.
Var weighted_sum(const Var& x, const Matrix& weights);
Var sum(const Var& x);

// Multi-head scaled dot-product attention with optional grouping. Rows of q
// are split into groups of query_group rows (after applying query_order),
// each attending only to the matching group of key rows. query_group == 0
// means a single group spanning all rows.
struct AttentionSpec {
    int heads = 1;
    Index query_group = 0;
    Index key_group = 0;
    std::vector<Index> query_order;
    std::vector<Index> key_order;
    bool causal = false;
    // One flag per key row; empty means every key is visible.
    std::vector<std::uint8_t> key_valid;
    // Additive logit bias, shape (query_group * key_group) x heads, shared by
    // all groups.
    Var bias;
    // When set, receives the softmax weights, one query_group x key_group
    // matrix per (group, head), group-major.
    std::vector<Matrix>* capture = nullptr;
};

Var attention(const Var& q, const Var& k, const Var& v, const AttentionSpec& spec);

} // namespace pm
