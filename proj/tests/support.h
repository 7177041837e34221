#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "hsomrl/graph.h"
#include "hsomrl/matrix.h"
#include "hsomrl/rng.h"

namespace testing
{
    using hsomrl::Graph;
    using hsomrl::Matrix;
    using hsomrl::Var;

    inline Matrix random_matrix(hsomrl::Rng &rng, std::size_t rows, std::size_t cols, double lo = -1.0,
                                double hi = 1.0)
    {
        Matrix m(rows, cols);
        for (double &v : m.data()) {
            v = hsomrl::uniform(rng, lo, hi);
        }
        return m;
    }

    inline Matrix random_unit_rows(hsomrl::Rng &rng, std::size_t rows, std::size_t cols)
    {
        Matrix m = random_matrix(rng, rows, cols);
        for (std::size_t i = 0; i < rows; ++i) {
            double n = 0.0;
            for (double v : m.row(i)) {
                n += v * v;
            }
            n = std::sqrt(n);
            for (double &v : m.row(i)) {
                v /= n;
            }
        }
        return m;
    }

    /// Builds a scalar loss from parameter leaves inserted in the same order as `params`.
    using LossBuilder = std::function<Var(Graph &, const std::vector<Var> &)>;

    struct GradCheck
    {
        double max_rel_error = 0.0;
        double max_abs_error = 0.0;
        std::size_t entries = 0;
    };

    /// Relative error |a - n| / max(|a|, |n|, floor), floor guarding near-zero entries.
    inline GradCheck check_gradients(const LossBuilder &build, std::vector<Matrix> params, double h = 1e-5,
                                     double floor = 1e-4)
    {
        std::vector<Matrix> analytic;
        {
            Graph g;
            std::vector<Var> leaves;
            for (const auto &p : params) {
                leaves.push_back(g.parameter(p));
            }
            const auto grads = g.backward(build(g, leaves));
            for (const auto &leaf : leaves) {
                analytic.push_back(grads.of(leaf));
            }
        }
        auto evaluate = [&](const std::vector<Matrix> &values) {
            Graph g;
            std::vector<Var> leaves;
            for (const auto &p : values) {
                leaves.push_back(g.constant(p));
            }
            return build(g, leaves).value().scalar();
        };
        GradCheck out;
        for (std::size_t k = 0; k < params.size(); ++k) {
            for (std::size_t i = 0; i < params[k].size(); ++i) {
                const double x = params[k].data()[i];
                params[k].data()[i] = x + h;
                const double up = evaluate(params);
                params[k].data()[i] = x - h;
                const double down = evaluate(params);
                params[k].data()[i] = x;
                const double numeric = (up - down) / (2.0 * h);
                const double a = analytic[k].data()[i];
                const double err = std::abs(a - numeric);
                out.max_abs_error = std::max(out.max_abs_error, err);
                out.max_rel_error =
                    std::max(out.max_rel_error, err / std::max({std::abs(a), std::abs(numeric), floor}));
                ++out.entries;
            }
        }
        return out;
    }
}
