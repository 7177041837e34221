#include "hsomrl/ops.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "hsomrl/errors.h"
#include "hsomrl/kernels.h"

namespace hsomrl::ops
{
    namespace
    {
        [[noreturn]] void shape_error(const char *op, const Matrix &a, const Matrix &b)
        {
            throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
        }

        void require_same_graph(const char *op, Var a, Var b)
        {
            if (&a.graph() != &b.graph()) {
                throw PreconditionError(std::string(op) + ": operands belong to different graphs");
            }
        }

        void require_same_shape(const char *op, Var a, Var b)
        {
            require_same_graph(op, a, b);
            if (!a.value().same_shape(b.value())) {
                shape_error(op, a.value(), b.value());
            }
        }

        template <typename F>
        Matrix map(const Matrix &in, F f)
        {
            Matrix out(in.rows(), in.cols());
            auto src = in.data();
            auto dst = out.data();
            for (std::size_t i = 0; i < src.size(); ++i) {
                dst[i] = f(src[i]);
            }
            return out;
        }

        template <typename F>
        Matrix zip(const Matrix &a, const Matrix &b, F f)
        {
            Matrix out(a.rows(), a.cols());
            auto pa = a.data();
            auto pb = b.data();
            auto dst = out.data();
            for (std::size_t i = 0; i < dst.size(); ++i) {
                dst[i] = f(pa[i], pb[i]);
            }
            return out;
        }

        Matrix transposed(const Matrix &m)
        {
            Matrix out(m.cols(), m.rows());
            for (std::size_t i = 0; i < m.rows(); ++i) {
                for (std::size_t j = 0; j < m.cols(); ++j) {
                    out(j, i) = m(i, j);
                }
            }
            return out;
        }
    }

    Var matmul(Var a, Var b)
    {
        require_same_graph("matmul", a, b);
        if (a.cols() != b.rows()) {
            shape_error("matmul", a.value(), b.value());
        }
        const NodeId ia = a.id();
        const NodeId ib = b.id();
        return a.graph().record(
            "matmul", kernels::matmul(a.value(), b.value()), {ia, ib},
            [ia, ib](const Graph &g, NodeId, const Matrix &grad, GradientSink &sink) {
                if (sink.wants(ia)) {
                    sink.add(ia, kernels::matmul_nt(grad, g.value(ib)));
                }
                if (sink.wants(ib)) {
                    sink.add(ib, kernels::matmul_tn(g.value(ia), grad));
                }
            });
    }

    Var matmul_nt(Var a, Var b)
    {
        require_same_graph("matmul_nt", a, b);
        if (a.cols() != b.cols()) {
            shape_error("matmul_nt", a.value(), b.value());
        }
        const NodeId ia = a.id();
        const NodeId ib = b.id();
        return a.graph().record(
            "matmul_nt", kernels::matmul_nt(a.value(), b.value()), {ia, ib},
            [ia, ib](const Graph &g, NodeId, const Matrix &grad, GradientSink &sink) {
                if (sink.wants(ia)) {
                    sink.add(ia, kernels::matmul(grad, g.value(ib)));
                }
                if (sink.wants(ib)) {
                    sink.add(ib, kernels::matmul_tn(grad, g.value(ia)));
                }
            });
    }

    Var transpose(Var a)
    {
        const NodeId ia = a.id();
        return a.graph().record("transpose", transposed(a.value()), {ia},
                                [ia](const Graph &, NodeId, const Matrix &grad, GradientSink &sink) {
                                    sink.add(ia, transposed(grad));
                                });
    }

    Var add(Var a, Var b)
    {
        require_same_shape("add", a, b);
        const NodeId ia = a.id();
        const NodeId ib = b.id();
        return a.graph().record("add", zip(a.value(), b.value(), std::plus<>{}), {ia, ib},
                                [ia, ib](const Graph &, NodeId, const Matrix &grad, GradientSink &sink) {
                                    sink.add(ia, grad);
                                    sink.add(ib, grad);
                                });
    }

    Var sub(Var a, Var b)
    {
        require_same_shape("sub", a, b);
        const NodeId ia = a.id();
        const NodeId ib = b.id();
        return a.graph().record("sub", zip(a.value(), b.value(), std::minus<>{}), {ia, ib},
                                [ia, ib](const Graph &, NodeId, const Matrix &grad, GradientSink &sink) {
                                    sink.add(ia, grad);
                                    if (sink.wants(ib)) {
                                        sink.add(ib, map(grad, [](double v) { return -v; }));
                                    }
                                });
    }

    Var add_bias(Var x, Var bias)
    {
        require_same_graph("add_bias", x, bias);
        if (bias.rows() != 1 || bias.cols() != x.cols()) {
            shape_error("add_bias", x.value(), bias.value());
        }
        const NodeId ix = x.id();
        const NodeId ib = bias.id();
        return x.graph().record("add_bias", kernels::add_bias(x.value(), bias.value()), {ix, ib},
                                [ix, ib](const Graph &, NodeId, const Matrix &grad, GradientSink &sink) {
                                    sink.add(ix, grad);
                                    if (sink.wants(ib)) {
                                        sink.add(ib, kernels::column_sums(grad));
                                    }
                                });
    }

    Var add_scalar(Var x, double c)
    {
        const NodeId ix = x.id();
        return x.graph().record("add_scalar", map(x.value(), [c](double v) { return v + c; }), {ix},
                                [ix](const Graph &, NodeId, const Matrix &grad, GradientSink &sink) {
                                    sink.add(ix, grad);
                                });
    }

    Var elementwise_mul(Var a, Var b)
    {
        require_same_shape("elementwise_mul", a, b);
        const NodeId ia = a.id();
        const NodeId ib = b.id();
        return a.graph().record("elementwise_mul", zip(a.value(), b.value(), std::multiplies<>{}), {ia, ib},
                                [ia, ib](const Graph &g, NodeId, const Matrix &grad, GradientSink &sink) {
                                    if (sink.wants(ia)) {
                                        sink.add(ia, zip(grad, g.value(ib), std::multiplies<>{}));
                                    }
                                    if (sink.wants(ib)) {
                                        sink.add(ib, zip(grad, g.value(ia), std::multiplies<>{}));
                                    }
                                });
    }

    Var scalar_mul(Var x, double c)
    {
        const NodeId ix = x.id();
        return x.graph().record("scalar_mul", map(x.value(), [c](double v) { return c * v; }), {ix},
                                [ix, c](const Graph &, NodeId, const Matrix &grad, GradientSink &sink) {
                                    sink.add(ix, map(grad, [c](double v) { return c * v; }));
                                });
    }

    Var tanh(Var x)
    {
        const NodeId ix = x.id();
        return x.graph().record("tanh", kernels::tanh(x.value()), {ix},
                                [ix](const Graph &g, NodeId self, const Matrix &grad, GradientSink &sink) {
                                    sink.add(ix, zip(grad, g.value(self),
                                                     [](double gr, double y) { return gr * (1.0 - y * y); }));
                                });
    }

    Var relu(Var x)
    {
        const NodeId ix = x.id();
        return x.graph().record("relu", map(x.value(), [](double v) { return v > 0.0 ? v : 0.0; }), {ix},
                                [ix](const Graph &g, NodeId, const Matrix &grad, GradientSink &sink) {
                                    sink.add(ix, zip(grad, g.value(ix),
                                                     [](double gr, double v) { return v > 0.0 ? gr : 0.0; }));
                                });
    }

    Var exp(Var x)
    {
        const NodeId ix = x.id();
        return x.graph().record("exp", map(x.value(), [](double v) { return std::exp(v); }), {ix},
                                [ix](const Graph &g, NodeId self, const Matrix &grad, GradientSink &sink) {
                                    sink.add(ix, zip(grad, g.value(self), std::multiplies<>{}));
                                });
    }

    Var log(Var x)
    {
        for (double v : x.value().data()) {
            if (!(v > 0.0)) {
                throw DomainError("log: non-positive input " + std::to_string(v));
            }
        }
        const NodeId ix = x.id();
        return x.graph().record("log", map(x.value(), [](double v) { return std::log(v); }), {ix},
                                [ix](const Graph &g, NodeId, const Matrix &grad, GradientSink &sink) {
                                    sink.add(ix, zip(grad, g.value(ix), std::divides<>{}));
                                });
    }

    Var square(Var x)
    {
        const NodeId ix = x.id();
        return x.graph().record("square", map(x.value(), [](double v) { return v * v; }), {ix},
                                [ix](const Graph &g, NodeId, const Matrix &grad, GradientSink &sink) {
                                    sink.add(ix, zip(grad, g.value(ix), [](double gr, double v) { return 2.0 * v * gr; }));
                                });
    }

    Var row_softmax(Var x)
    {
        const Matrix &in = x.value();
        Matrix out(in.rows(), in.cols());
        for (std::size_t i = 0; i < in.rows(); ++i) {
            const auto row = in.row(i);
            auto dst = out.row(i);
            const double m = *std::max_element(row.begin(), row.end());
            double z = 0.0;
            for (std::size_t j = 0; j < row.size(); ++j) {
                dst[j] = std::exp(row[j] - m);
                z += dst[j];
            }
            for (double &v : dst) {
                v /= z;
            }
        }
        const NodeId ix = x.id();
        return x.graph().record("row_softmax", std::move(out), {ix},
                                [ix](const Graph &g, NodeId self, const Matrix &grad, GradientSink &sink) {
                                    const Matrix &y = g.value(self);
                                    Matrix dx(y.rows(), y.cols());
                                    for (std::size_t i = 0; i < y.rows(); ++i) {
                                        double dot = 0.0;
                                        for (std::size_t j = 0; j < y.cols(); ++j) {
                                            dot += grad(i, j) * y(i, j);
                                        }
                                        for (std::size_t j = 0; j < y.cols(); ++j) {
                                            dx(i, j) = y(i, j) * (grad(i, j) - dot);
                                        }
                                    }
                                    sink.add(ix, std::move(dx));
                                });
    }

    Var l2_normalize_rows(Var x)
    {
        const Matrix &in = x.value();
        Matrix out(in.rows(), in.cols());
        std::vector<double> norms(in.rows());
        for (std::size_t i = 0; i < in.rows(); ++i) {
            const auto row = in.row(i);
            double s = 0.0;
            bool all_zero = true;
            for (double v : row) {
                s += v * v;
                all_zero = all_zero && v == 0.0;
            }
            if (all_zero) {
                throw DomainError("l2_normalize_rows: row " + std::to_string(i) + " is exactly zero");
            }
            norms[i] = std::sqrt(s + kNormalizeEpsilon);
            auto dst = out.row(i);
            for (std::size_t j = 0; j < row.size(); ++j) {
                dst[j] = row[j] / norms[i];
            }
        }
        const NodeId ix = x.id();
        return x.graph().record(
            "l2_normalize_rows", std::move(out), {ix},
            [ix, norms = std::move(norms)](const Graph &g, NodeId, const Matrix &grad, GradientSink &sink) {
                const Matrix &in = g.value(ix);
                Matrix dx(in.rows(), in.cols());
                for (std::size_t i = 0; i < in.rows(); ++i) {
                    const double n = norms[i];
                    double gx = 0.0;
                    for (std::size_t j = 0; j < in.cols(); ++j) {
                        gx += grad(i, j) * in(i, j);
                    }
                    const double n3 = n * n * n;
                    for (std::size_t j = 0; j < in.cols(); ++j) {
                        dx(i, j) = grad(i, j) / n - in(i, j) * gx / n3;
                    }
                }
                sink.add(ix, std::move(dx));
            });
    }

    Var sum(Var x)
    {
        const Matrix &in = x.value();
        double s = 0.0;
        for (double v : in.data()) {
            s += v;
        }
        const NodeId ix = x.id();
        return x.graph().record("sum", Matrix(1, 1, s), {ix},
                                [ix](const Graph &g, NodeId, const Matrix &grad, GradientSink &sink) {
                                    const Matrix &in = g.value(ix);
                                    sink.add(ix, Matrix(in.rows(), in.cols(), grad(0, 0)));
                                });
    }

    Var mean(Var x)
    {
        const Matrix &in = x.value();
        if (in.empty()) {
            throw PreconditionError("mean: empty input");
        }
        double s = 0.0;
        for (double v : in.data()) {
            s += v;
        }
        const double n = static_cast<double>(in.size());
        const NodeId ix = x.id();
        return x.graph().record("mean", Matrix(1, 1, s / n), {ix},
                                [ix, n](const Graph &g, NodeId, const Matrix &grad, GradientSink &sink) {
                                    const Matrix &in = g.value(ix);
                                    sink.add(ix, Matrix(in.rows(), in.cols(), grad(0, 0) / n));
                                });
    }

    Var row_sum(Var x)
    {
        const Matrix &in = x.value();
        Matrix out(in.rows(), 1);
        for (std::size_t i = 0; i < in.rows(); ++i) {
            double s = 0.0;
            for (double v : in.row(i)) {
                s += v;
            }
            out(i, 0) = s;
        }
        const NodeId ix = x.id();
        return x.graph().record("row_sum", std::move(out), {ix},
                                [ix](const Graph &g, NodeId, const Matrix &grad, GradientSink &sink) {
                                    const Matrix &in = g.value(ix);
                                    Matrix dx(in.rows(), in.cols());
                                    for (std::size_t i = 0; i < in.rows(); ++i) {
                                        for (double &v : dx.row(i)) {
                                            v = grad(i, 0);
                                        }
                                    }
                                    sink.add(ix, std::move(dx));
                                });
    }

    Var concat_cols(std::span<const Var> parts)
    {
        if (parts.empty()) {
            throw PreconditionError("concat_cols: no inputs");
        }
        const std::size_t rows = parts.front().rows();
        std::size_t cols = 0;
        std::vector<NodeId> ids;
        std::vector<std::size_t> widths;
        for (const Var &p : parts) {
            require_same_graph("concat_cols", parts.front(), p);
            if (p.rows() != rows) {
                shape_error("concat_cols", parts.front().value(), p.value());
            }
            ids.push_back(p.id());
            widths.push_back(p.cols());
            cols += p.cols();
        }
        Matrix out(rows, cols);
        std::size_t offset = 0;
        for (const Var &p : parts) {
            const Matrix &v = p.value();
            for (std::size_t i = 0; i < rows; ++i) {
                std::copy(v.row(i).begin(), v.row(i).end(), out.row(i).begin() + static_cast<std::ptrdiff_t>(offset));
            }
            offset += v.cols();
        }
        return parts.front().graph().record(
            "concat_cols", std::move(out), ids,
            [ids, widths](const Graph &, NodeId, const Matrix &grad, GradientSink &sink) {
                std::size_t offset = 0;
                for (std::size_t k = 0; k < ids.size(); ++k) {
                    if (sink.wants(ids[k])) {
                        Matrix part(grad.rows(), widths[k]);
                        for (std::size_t i = 0; i < grad.rows(); ++i) {
                            const auto src = grad.row(i).subspan(offset, widths[k]);
                            std::copy(src.begin(), src.end(), part.row(i).begin());
                        }
                        sink.add(ids[k], std::move(part));
                    }
                    offset += widths[k];
                }
            });
    }

    Var segment_attention_pool(Var scores, Var values, std::span<const std::size_t> offsets)
    {
        require_same_graph("segment_attention_pool", scores, values);
        const Matrix &s = scores.value();
        const Matrix &h = values.value();
        if (s.cols() != 1 || s.rows() != h.rows()) {
            shape_error("segment_attention_pool", s, h);
        }
        if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != h.rows()) {
            throw PreconditionError("segment_attention_pool: offsets must run from 0 to " + std::to_string(h.rows()));
        }
        const std::size_t n_seg = offsets.size() - 1;
        const std::size_t width = h.cols();
        Matrix pooled(n_seg, width);
        std::vector<double> weights(h.rows());
        std::vector<std::size_t> order;

        for (std::size_t seg = 0; seg < n_seg; ++seg) {
            const std::size_t begin = offsets[seg];
            const std::size_t end = offsets[seg + 1];
            if (end <= begin) {
                throw PreconditionError("segment_attention_pool: segment " + std::to_string(seg) + " is empty");
            }
            order.resize(end - begin);
            std::iota(order.begin(), order.end(), begin);
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                const auto ra = h.row(a);
                const auto rb = h.row(b);
                const int cmp = std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end()) ? -1
                                : std::lexicographical_compare(rb.begin(), rb.end(), ra.begin(), ra.end()) ? 1
                                                                                                            : 0;
                return cmp != 0 ? cmp < 0 : s(a, 0) < s(b, 0);
            });
            double m = s(order.front(), 0);
            for (std::size_t t : order) {
                m = std::max(m, s(t, 0));
            }
            double z = 0.0;
            for (std::size_t t : order) {
                weights[t] = std::exp(s(t, 0) - m);
                z += weights[t];
            }
            auto dst = pooled.row(seg);
            for (std::size_t t : order) {
                weights[t] /= z;
                const auto row = h.row(t);
                for (std::size_t j = 0; j < width; ++j) {
                    dst[j] += weights[t] * row[j];
                }
            }
        }

        const NodeId is = scores.id();
        const NodeId ih = values.id();
        std::vector<std::size_t> offs(offsets.begin(), offsets.end());
        return scores.graph().record(
            "segment_attention_pool", std::move(pooled), {is, ih},
            [is, ih, offs = std::move(offs), weights = std::move(weights)](const Graph &g, NodeId self,
                                                                           const Matrix &grad, GradientSink &sink) {
                const Matrix &h = g.value(ih);
                const Matrix &pooled = g.value(self);
                const std::size_t width = h.cols();
                Matrix ds(h.rows(), 1);
                Matrix dh(h.rows(), width);
                for (std::size_t seg = 0; seg + 1 < offs.size(); ++seg) {
                    const auto gseg = grad.row(seg);
                    double g_pooled = 0.0;
                    for (std::size_t j = 0; j < width; ++j) {
                        g_pooled += gseg[j] * pooled(seg, j);
                    }
                    for (std::size_t t = offs[seg]; t < offs[seg + 1]; ++t) {
                        const auto row = h.row(t);
                        double g_row = 0.0;
                        for (std::size_t j = 0; j < width; ++j) {
                            g_row += gseg[j] * row[j];
                            dh(t, j) = weights[t] * gseg[j];
                        }
                        ds(t, 0) = weights[t] * (g_row - g_pooled);
                    }
                }
                sink.add(is, std::move(ds));
                sink.add(ih, std::move(dh));
            });
    }
}
