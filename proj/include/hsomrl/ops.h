#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hsomrl/graph.h"

// Differentiable ops. Each records its output in the operand's graph and throws
// ShapeError (naming the op and both shapes) or DomainError on bad input.
namespace hsomrl::ops
{
    Var matmul(Var a, Var b);
    /// a * b^T
    Var matmul_nt(Var a, Var b);
    Var transpose(Var a);

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    /// Adds a 1 x cols row to every row of `x`.
    Var add_bias(Var x, Var bias);
    Var add_scalar(Var x, double c);
    Var elementwise_mul(Var a, Var b);
    Var scalar_mul(Var x, double c);

    Var tanh(Var x);
    Var relu(Var x);
    Var exp(Var x);
    /// Natural log; every entry must be > 0.
    Var log(Var x);
    Var square(Var x);

    /// Softmax along each row, max-subtracted.
    Var row_softmax(Var x);
    /// x / sqrt(|x|^2 + 1e-12) per row; an exactly zero row is a DomainError.
    Var l2_normalize_rows(Var x);

    /// Sum of all entries, 1x1.
    Var sum(Var x);
    /// Mean of all entries, 1x1.
    Var mean(Var x);
    /// rows x 1 sums along each row.
    Var row_sum(Var x);

    Var concat_cols(std::span<const Var> parts);

    /// Softmax-weighted pooling over contiguous row segments.
    ///
    /// Segment s spans rows [offsets[s], offsets[s+1]) of `scores` (T x 1) and
    /// `values` (T x H). Returns S x H with row s = sum_t softmax(scores)_t values_t.
    /// Terms are accumulated in a canonical order (sorted by value row, then
    /// score), so the result is bit-identical under any permutation of a segment.
    Var segment_attention_pool(Var scores, Var values, std::span<const std::size_t> offsets);

    inline constexpr double kNormalizeEpsilon = 1e-12;
}
