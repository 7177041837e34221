#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hsomrl/graph.h"
#include "hsomrl/matrix.h"
#include "hsomrl/rng.h"

namespace hsomrl
{
    enum class Activation
    {
        Tanh,
        Relu,
    };

    /// Named, ordered parameter matrices of one model. Declaration order is the
    /// serialization order.
    class ParamSet
    {
    public:
        std::size_t add(std::string name, Matrix value);

        std::size_t size() const noexcept { return values_.size(); }
        std::vector<Matrix> &values() noexcept { return values_; }
        const std::vector<Matrix> &values() const noexcept { return values_; }
        const std::vector<std::string> &names() const noexcept { return names_; }
        const Matrix &operator[](std::size_t i) const { return values_.at(i); }

        /// Inserts every matrix as a leaf: trainable parameters or constants.
        std::vector<Var> bind(Graph &graph, bool trainable) const;

        /// Copies values from `other`, which must have identical names and shapes.
        void assign(const ParamSet &other);

        friend bool operator==(const ParamSet &, const ParamSet &) = default;

    private:
        std::vector<std::string> names_;
        std::vector<Matrix> values_;
    };

    /// Fully connected stack: hidden layers use `activation`, the last layer is linear.
    class Mlp
    {
    public:
        Mlp() = default;
        Mlp(ParamSet &params, const std::string &prefix, std::size_t in, std::span<const std::size_t> hidden,
            std::size_t out, Activation activation, Rng &rng);

        Var forward(std::span<const Var> bound, Var x) const;
        /// Graph-free evaluation; bit-identical to `forward`.
        Matrix evaluate(const ParamSet &params, const Matrix &x) const;

        std::size_t in_dim() const noexcept { return in_; }
        std::size_t out_dim() const noexcept { return out_; }

    private:
        struct Layer
        {
            std::size_t weight;
            std::size_t bias;
        };

        std::vector<Layer> layers_;
        Activation activation_ = Activation::Tanh;
        std::size_t in_ = 0;
        std::size_t out_ = 0;
    };

    /// Row-wise concatenation of plain matrices with equal row counts.
    Matrix hconcat(std::span<const Matrix *const> parts);
}
