#include "hsomrl/graph.h"

#include <algorithm>

#include "hsomrl/errors.h"

namespace hsomrl
{
    const Matrix &Var::value() const
    {
        return graph_->value(id_);
    }

    bool GradientSink::wants(NodeId id) const
    {
        return graph_.requires_grad(id);
    }

    void GradientSink::add(NodeId id, const Matrix &grad)
    {
        if (!graph_.requires_grad(id)) {
            return;
        }
        Matrix &slot = grads_[id];
        if (slot.empty() && !grad.empty()) {
            slot = grad;
            return;
        }
        auto dst = slot.data();
        auto src = grad.data();
        for (std::size_t i = 0; i < dst.size(); ++i) {
            dst[i] += src[i];
        }
    }

    void GradientSink::add(NodeId id, Matrix &&grad)
    {
        if (!graph_.requires_grad(id)) {
            return;
        }
        Matrix &slot = grads_[id];
        if (slot.empty()) {
            slot = std::move(grad);
            return;
        }
        auto dst = slot.data();
        auto src = grad.data();
        for (std::size_t i = 0; i < dst.size(); ++i) {
            dst[i] += src[i];
        }
    }

    const Matrix &Gradients::of(NodeId id) const
    {
        const auto it = std::find(ids_.begin(), ids_.end(), id);
        if (it == ids_.end()) {
            throw PreconditionError("Gradients::of: node " + std::to_string(id) + " is not a trainable parameter");
        }
        return grads_[static_cast<std::size_t>(it - ids_.begin())];
    }

    Var Graph::constant(Matrix value)
    {
        nodes_.push_back(Node{"constant", std::move(value), {}, {}, false, false});
        return Var(this, nodes_.size() - 1);
    }

    Var Graph::parameter(Matrix value)
    {
        nodes_.push_back(Node{"parameter", std::move(value), {}, {}, true, true});
        parameters_.push_back(nodes_.size() - 1);
        return Var(this, nodes_.size() - 1);
    }

    Var Graph::record(std::string_view op, Matrix value, std::vector<NodeId> inputs, BackwardFn backward)
    {
        if (!value.all_finite()) {
            throw DomainError(std::string(op) + ": produced non-finite values");
        }
        bool needs_grad = false;
        for (NodeId in : inputs) {
            if (in >= nodes_.size()) {
                throw PreconditionError(std::string(op) + ": input node " + std::to_string(in) + " does not exist");
            }
            needs_grad = needs_grad || nodes_[in].requires_grad;
        }
        if (!needs_grad || !backward) {
            backward = nullptr;
            needs_grad = false;
        }
        nodes_.push_back(Node{std::string(op), std::move(value), std::move(inputs), std::move(backward), needs_grad, false});
        return Var(this, nodes_.size() - 1);
    }

    Var Graph::stop_gradient(Var v)
    {
        nodes_.push_back(Node{"stop_gradient", nodes_.at(v.id()).value, {v.id()}, {}, false, false});
        return Var(this, nodes_.size() - 1);
    }

    Gradients Graph::backward(Var loss) const
    {
        const Matrix &lv = value(loss.id());
        if (lv.rows() != 1 || lv.cols() != 1) {
            throw ShapeError("backward: loss node must be 1x1, got " + shape_string(lv));
        }
        std::vector<Matrix> grads(nodes_.size());
        GradientSink sink(*this, grads);
        if (nodes_[loss.id()].requires_grad) {
            grads[loss.id()] = Matrix(1, 1, 1.0);
        }
        for (NodeId id = loss.id() + 1; id-- > 0;) {
            const Node &node = nodes_[id];
            if (!node.backward || grads[id].empty()) {
                continue;
            }
            node.backward(*this, id, grads[id], sink);
        }

        std::vector<Matrix> out;
        out.reserve(parameters_.size());
        for (NodeId p : parameters_) {
            if (grads[p].empty()) {
                out.emplace_back(nodes_[p].value.rows(), nodes_[p].value.cols(), 0.0);
            }
            else {
                out.push_back(std::move(grads[p]));
            }
        }
        return Gradients(parameters_, std::move(out));
    }
}
