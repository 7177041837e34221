#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "hsomrl/matrix.h"

namespace hsomrl
{
    using NodeId = std::size_t;

    class Graph;

    /// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
    class Var
    {
    public:
        Var() = default;
        Var(Graph *graph, NodeId id) : graph_{graph}, id_{id} {}

        NodeId id() const noexcept { return id_; }
        Graph &graph() const noexcept { return *graph_; }
        const Matrix &value() const;
        std::size_t rows() const { return value().rows(); }
        std::size_t cols() const { return value().cols(); }

    private:
        Graph *graph_ = nullptr;
        NodeId id_ = 0;
    };

    /// Accumulates gradients for the inputs of a node during backward.
    class GradientSink
    {
    public:
        GradientSink(const Graph &graph, std::vector<Matrix> &grads) : graph_{graph}, grads_{grads} {}

        /// True when gradient flowing into `id` can reach a trainable parameter.
        bool wants(NodeId id) const;
        void add(NodeId id, const Matrix &grad);
        void add(NodeId id, Matrix &&grad);

    private:
        const Graph &graph_;
        std::vector<Matrix> &grads_;
    };

    using BackwardFn = std::function<void(const Graph &, NodeId self, const Matrix &grad_out, GradientSink &)>;

    /// d(loss)/d(parameter) for every trainable leaf of a graph.
    class Gradients
    {
    public:
        Gradients(std::vector<NodeId> ids, std::vector<Matrix> grads)
            : ids_{std::move(ids)}, grads_{std::move(grads)}
        {
        }

        const Matrix &of(Var v) const { return of(v.id()); }
        const Matrix &of(NodeId id) const;
        std::size_t size() const noexcept { return ids_.size(); }
        const std::vector<NodeId> &ids() const noexcept { return ids_; }

    private:
        std::vector<NodeId> ids_;
        std::vector<Matrix> grads_;
    };

    /// Append-only record of a computation. Inputs always precede outputs, so the
    /// graph is acyclic and backward is a single reverse sweep.
    class Graph
    {
    public:
        Graph() = default;
        Graph(const Graph &) = delete;
        Graph &operator=(const Graph &) = delete;

        Var constant(Matrix value);
        Var parameter(Matrix value);

        /// Records an op output. `backward` may be empty for ops without a gradient.
        Var record(std::string_view op, Matrix value, std::vector<NodeId> inputs, BackwardFn backward);

        /// Same value, no gradient through this edge.
        Var stop_gradient(Var v);

        const Matrix &value(NodeId id) const { return nodes_.at(id).value; }
        bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
        bool is_parameter(NodeId id) const { return nodes_.at(id).parameter; }
        std::string_view op(NodeId id) const { return nodes_.at(id).op; }
        const std::vector<NodeId> &parameters() const noexcept { return parameters_; }
        std::size_t size() const noexcept { return nodes_.size(); }

        /// Reverse-mode sweep from a 1x1 loss node. Does not modify the graph.
        Gradients backward(Var loss) const;

    private:
        struct Node
        {
            std::string op;
            Matrix value;
            std::vector<NodeId> inputs;
            BackwardFn backward;
            bool requires_grad = false;
            bool parameter = false;
        };

        std::vector<Node> nodes_;
        std::vector<NodeId> parameters_;
    };
}
