#include "hsomrl/nn.h"

#include <algorithm>
#include <cmath>

#include "hsomrl/errors.h"
#include "hsomrl/kernels.h"
#include "hsomrl/ops.h"

namespace hsomrl
{
    std::size_t ParamSet::add(std::string name, Matrix value)
    {
        names_.push_back(std::move(name));
        values_.push_back(std::move(value));
        return values_.size() - 1;
    }

    std::vector<Var> ParamSet::bind(Graph &graph, bool trainable) const
    {
        std::vector<Var> out;
        out.reserve(values_.size());
        for (const Matrix &m : values_) {
            out.push_back(trainable ? graph.parameter(m) : graph.constant(m));
        }
        return out;
    }

    void ParamSet::assign(const ParamSet &other)
    {
        if (other.names_ != names_) {
            throw ShapeError("ParamSet::assign: parameter names differ");
        }
        for (std::size_t i = 0; i < values_.size(); ++i) {
            if (!values_[i].same_shape(other.values_[i])) {
                throw ShapeError("ParamSet::assign: " + names_[i] + " has shape " + shape_string(values_[i])
                                 + " but source has " + shape_string(other.values_[i]));
            }
        }
        values_ = other.values_;
    }

    Mlp::Mlp(ParamSet &params, const std::string &prefix, std::size_t in, std::span<const std::size_t> hidden,
             std::size_t out, Activation activation, Rng &rng)
        : activation_{activation}, in_{in}, out_{out}
    {
        std::vector<std::size_t> dims{in};
        dims.insert(dims.end(), hidden.begin(), hidden.end());
        dims.push_back(out);
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
            Matrix w(dims[l], dims[l + 1]);
            for (double &v : w.data()) {
                v = uniform(rng, -bound, bound);
            }
            Matrix b(1, dims[l + 1]);
            for (double &v : b.data()) {
                v = uniform(rng, -bound, bound);
            }
            const std::string tag = prefix + "." + std::to_string(l);
            const std::size_t wi = params.add(tag + ".weight", std::move(w));
            const std::size_t bi = params.add(tag + ".bias", std::move(b));
            layers_.push_back({wi, bi});
        }
    }

    Var Mlp::forward(std::span<const Var> bound, Var x) const
    {
        Var h = x;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            h = ops::add_bias(ops::matmul(h, bound[layers_[l].weight]), bound[layers_[l].bias]);
            if (l + 1 < layers_.size()) {
                h = activation_ == Activation::Tanh ? ops::tanh(h) : ops::relu(h);
            }
        }
        return h;
    }

    Matrix Mlp::evaluate(const ParamSet &params, const Matrix &x) const
    {
        Matrix h = x;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            h = kernels::add_bias(kernels::matmul(h, params[layers_[l].weight]), params[layers_[l].bias]);
            if (l + 1 < layers_.size()) {
                if (activation_ == Activation::Tanh) {
                    h = kernels::tanh(h);
                }
                else {
                    for (double &v : h.data()) {
                        v = v > 0.0 ? v : 0.0;
                    }
                }
            }
        }
        return h;
    }

    Matrix hconcat(std::span<const Matrix *const> parts)
    {
        if (parts.empty()) {
            return {};
        }
        const std::size_t rows = parts.front()->rows();
        std::size_t cols = 0;
        for (const Matrix *p : parts) {
            if (p->rows() != rows) {
                throw ShapeError("hconcat: incompatible shapes " + shape_string(*parts.front()) + " and "
                                 + shape_string(*p));
            }
            cols += p->cols();
        }
        Matrix out(rows, cols);
        for (std::size_t i = 0; i < rows; ++i) {
            auto dst = out.row(i).begin();
            for (const Matrix *p : parts) {
                dst = std::copy(p->row(i).begin(), p->row(i).end(), dst);
            }
        }
        return out;
    }
}
