#pragma once

#include <cstddef>
#include <map>
#include <vector>

#include "tdae/tensor.hpp"

namespace tdae::nd {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; only valid while its Graph lives.
class Var {
public:
    Var() = default;

    Graph& graph() const { return *graph_; }
    std::size_t id() const noexcept { return id_; }
    const Tensor& value() const;
    Shape shape() const { return value().shape(); }

private:
    friend class Graph;
    Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

/// Gradients of a scalar output with respect to every leaf of the graph.
class Gradients {
public:
    /// Throws std::out_of_range when `leaf` is not a differentiable input of the graph.
    const Tensor& at(const Var& leaf) const;
    std::size_t size() const noexcept { return grads_.size(); }

private:
    friend class Graph;
    const Graph* graph_ = nullptr;
    std::map<std::size_t, Tensor> grads_;
};

enum class Op {
    Leaf,
    Constant,
    Add,
    Sub,
    Mul,
    Scale,
    MatMul,
    Conv2d,
    Tanh,
    Softplus,
    Sum,
    Mean,
    Broadcast,
    Reshape,
};

/// Tape of operations, topologically ordered by construction. Single-threaded.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    /// Differentiable input.
    Var input(Tensor value);
    Var constant(Tensor value);

    const Tensor& value(const Var& v) const;
    bool requires_grad(const Var& v) const;
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Reverse sweep from a scalar output. Each node is visited once, in reverse order.
    Gradients backward(const Var& output) const;

    // Recording entry point for the op functions below.
    Var record(Op op, Tensor value, std::vector<std::size_t> inputs, double scalar = 0.0, std::size_t pad = 0);

private:
    struct Node {
        Op op;
        Tensor value;
        std::vector<std::size_t> inputs;
        bool requires_grad;
        double scalar;
        std::size_t pad;
    };

    void check_owner(const Var& v) const;
    void propagate(const Node& node, const Tensor& grad, std::vector<Tensor>& grads,
                   std::vector<bool>& has_grad) const;

    std::vector<Node> nodes_;
};

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// [M,K] x [K,N] -> [M,N].
Var matmul(const Var& a, const Var& b);
/// Stride-1 correlation of an [H,W,Cin] input with a [KH,KW,Cin,Cout] kernel and `pad` zeros on
/// every side. Output is [H+2*pad-KH+1, W+2*pad-KW+1, Cout].
Var conv2d(const Var& input, const Var& kernel, std::size_t pad);
Var tanh(const Var& a);
Var softplus(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);
/// Numpy-style broadcast (trailing alignment, size-1 dims stretch).
Var broadcast(const Var& a, const Shape& shape);
Var reshape(const Var& a, const Shape& shape);

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator*(double s, const Var& a);

}  // namespace tdae::nd
