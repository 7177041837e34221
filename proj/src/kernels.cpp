#include "hsomrl/kernels.h"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include <omp.h>

#include "hsomrl/errors.h"

namespace hsomrl::kernels
{
    namespace
    {
        // Below this many multiply-adds a parallel region costs more than it saves.
        constexpr std::int64_t kParallelWork = 1 << 15;

        void check_matmul(const char *op, std::size_t inner_a, std::size_t inner_b, const Matrix &a, const Matrix &b)
        {
            if (inner_a != inner_b) {
                throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and "
                                 + shape_string(b));
            }
        }

        void check_bias(const Matrix &in, const Matrix &bias)
        {
            if (bias.rows() != 1 || bias.cols() != in.cols()) {
                throw ShapeError("add_bias: incompatible shapes " + shape_string(in) + " and " + shape_string(bias));
            }
        }
    }

    int max_threads()
    {
        return omp_get_max_threads();
    }

    void set_max_threads(int n)
    {
        if (n > 0) {
            omp_set_num_threads(n);
        }
    }

    Matrix matmul(const Matrix &a, const Matrix &b)
    {
        check_matmul("matmul", a.cols(), b.rows(), a, b);
        const std::int64_t m = static_cast<std::int64_t>(a.rows());
        const std::size_t k_dim = a.cols();
        const std::size_t n = b.cols();
        Matrix c(a.rows(), n);
        const double *pa = a.data().data();
        const double *pb = b.data().data();
        double *pc = c.data().data();
        const std::int64_t work = m * static_cast<std::int64_t>(k_dim * n);

#pragma omp parallel for schedule(static) if (work > kParallelWork)
        for (std::int64_t i = 0; i < m; ++i) {
            double *crow = pc + i * n;
            const double *arow = pa + i * k_dim;
            for (std::size_t k = 0; k < k_dim; ++k) {
                const double aik = arow[k];
                const double *brow = pb + k * n;
#pragma omp simd
                for (std::size_t j = 0; j < n; ++j) {
                    crow[j] += aik * brow[j];
                }
            }
        }
        return c;
    }

    Matrix matmul_tn(const Matrix &a, const Matrix &b)
    {
        check_matmul("matmul_tn", a.rows(), b.rows(), a, b);
        const std::size_t t_dim = a.rows();
        const std::size_t m = a.cols();
        const std::size_t n = b.cols();
        Matrix c(m, n);
        const double *pa = a.data().data();
        const double *pb = b.data().data();
        double *pc = c.data().data();
        const std::int64_t work = static_cast<std::int64_t>(m * t_dim * n);

        // Each thread owns a block of output rows and streams over t once, so
        // every output element still accumulates in ascending t.
        constexpr std::int64_t kBlock = 16;
        const std::int64_t blocks = (static_cast<std::int64_t>(m) + kBlock - 1) / kBlock;
#pragma omp parallel for schedule(static) if (work > kParallelWork)
        for (std::int64_t blk = 0; blk < blocks; ++blk) {
            const std::size_t lo = static_cast<std::size_t>(blk * kBlock);
            const std::size_t hi = std::min(m, lo + static_cast<std::size_t>(kBlock));
            for (std::size_t t = 0; t < t_dim; ++t) {
                const double *arow = pa + t * m;
                const double *brow = pb + t * n;
                for (std::size_t i = lo; i < hi; ++i) {
                    const double ati = arow[i];
                    double *crow = pc + i * n;
#pragma omp simd
                    for (std::size_t j = 0; j < n; ++j) {
                        crow[j] += ati * brow[j];
                    }
                }
            }
        }
        return c;
    }

    Matrix matmul_nt(const Matrix &a, const Matrix &b)
    {
        check_matmul("matmul_nt", a.cols(), b.cols(), a, b);
        Matrix bt(b.cols(), b.rows());
        for (std::size_t i = 0; i < b.rows(); ++i) {
            for (std::size_t j = 0; j < b.cols(); ++j) {
                bt(j, i) = b(i, j);
            }
        }
        return matmul(a, bt);
    }

    Matrix add_bias(const Matrix &in, const Matrix &bias)
    {
        check_bias(in, bias);
        Matrix out = in;
        const std::int64_t m = static_cast<std::int64_t>(in.rows());
        const std::size_t n = in.cols();
        const double *pb = bias.data().data();
        double *po = out.data().data();

#pragma omp parallel for schedule(static) if (static_cast<std::int64_t>(in.size()) > kParallelWork)
        for (std::int64_t i = 0; i < m; ++i) {
#pragma omp simd
            for (std::size_t j = 0; j < n; ++j) {
                po[i * n + j] += pb[j];
            }
        }
        return out;
    }

    Matrix column_sums(const Matrix &in)
    {
        // Row-sequential on purpose: the reduction order over rows must stay fixed.
        Matrix out(1, in.cols());
        for (std::size_t i = 0; i < in.rows(); ++i) {
            const auto row = in.row(i);
            for (std::size_t j = 0; j < in.cols(); ++j) {
                out(0, j) += row[j];
            }
        }
        return out;
    }

    Matrix tanh(const Matrix &in)
    {
        Matrix out(in.rows(), in.cols());
        const std::int64_t size = static_cast<std::int64_t>(in.size());
        const double *pi = in.data().data();
        double *po = out.data().data();

#pragma omp parallel for schedule(static) if (size > kParallelWork)
        for (std::int64_t i = 0; i < size; ++i) {
            po[i] = std::tanh(pi[i]);
        }
        return out;
    }

    namespace serial
    {
        Matrix matmul(const Matrix &a, const Matrix &b)
        {
            check_matmul("matmul", a.cols(), b.rows(), a, b);
            Matrix c(a.rows(), b.cols());
            for (std::size_t i = 0; i < a.rows(); ++i) {
                for (std::size_t j = 0; j < b.cols(); ++j) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < a.cols(); ++k) {
                        acc += a(i, k) * b(k, j);
                    }
                    c(i, j) = acc;
                }
            }
            return c;
        }

        Matrix matmul_tn(const Matrix &a, const Matrix &b)
        {
            check_matmul("matmul_tn", a.rows(), b.rows(), a, b);
            Matrix c(a.cols(), b.cols());
            for (std::size_t i = 0; i < a.cols(); ++i) {
                for (std::size_t j = 0; j < b.cols(); ++j) {
                    double acc = 0.0;
                    for (std::size_t t = 0; t < a.rows(); ++t) {
                        acc += a(t, i) * b(t, j);
                    }
                    c(i, j) = acc;
                }
            }
            return c;
        }

        Matrix matmul_nt(const Matrix &a, const Matrix &b)
        {
            check_matmul("matmul_nt", a.cols(), b.cols(), a, b);
            Matrix c(a.rows(), b.rows());
            for (std::size_t i = 0; i < a.rows(); ++i) {
                for (std::size_t j = 0; j < b.rows(); ++j) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < a.cols(); ++k) {
                        acc += a(i, k) * b(j, k);
                    }
                    c(i, j) = acc;
                }
            }
            return c;
        }

        Matrix add_bias(const Matrix &in, const Matrix &bias)
        {
            check_bias(in, bias);
            Matrix out = in;
            for (std::size_t i = 0; i < in.rows(); ++i) {
                for (std::size_t j = 0; j < in.cols(); ++j) {
                    out(i, j) += bias(0, j);
                }
            }
            return out;
        }

        Matrix column_sums(const Matrix &in)
        {
            Matrix out(1, in.cols());
            for (std::size_t j = 0; j < in.cols(); ++j) {
                double acc = 0.0;
                for (std::size_t i = 0; i < in.rows(); ++i) {
                    acc += in(i, j);
                }
                out(0, j) = acc;
            }
            return out;
        }

        Matrix tanh(const Matrix &in)
        {
            Matrix out(in.rows(), in.cols());
            for (std::size_t i = 0; i < in.size(); ++i) {
                out.data()[i] = std::tanh(in.data()[i]);
            }
            return out;
        }
    }
}
