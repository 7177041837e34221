#pragma once

#include "hsomrl/matrix.h"

// Dense kernels behind the differentiable ops. The default namespace holds the
// OpenMP versions; `serial` holds straight-loop references used by tests and
// the benchmark. Both accumulate every output entry in ascending reduction
// index order, so results do not depend on the thread count.
namespace hsomrl::kernels
{
    /// c = a * b
    Matrix matmul(const Matrix &a, const Matrix &b);
    /// c = a^T * b
    Matrix matmul_tn(const Matrix &a, const Matrix &b);
    /// c = a * b^T
    Matrix matmul_nt(const Matrix &a, const Matrix &b);

    /// out(i, :) = in(i, :) + bias(0, :)
    Matrix add_bias(const Matrix &in, const Matrix &bias);
    /// 1 x cols column sums
    Matrix column_sums(const Matrix &in);

    Matrix tanh(const Matrix &in);

    /// Threads used by the parallel kernels (respects HSOMRL_THREADS via set_max_threads).
    int max_threads();
    void set_max_threads(int n);

    namespace serial
    {
        Matrix matmul(const Matrix &a, const Matrix &b);
        Matrix matmul_tn(const Matrix &a, const Matrix &b);
        Matrix matmul_nt(const Matrix &a, const Matrix &b);
        Matrix add_bias(const Matrix &in, const Matrix &bias);
        Matrix column_sums(const Matrix &in);
        Matrix tanh(const Matrix &in);
    }
}
