#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "hsomrl/envs.h"
#include "hsomrl/graph.h"
#include "hsomrl/nn.h"

namespace hsomrl
{
    /// Contiguous slice of a trajectory used as context.
    using Segment = std::span<const Transition>;

    struct EncoderDims
    {
        std::size_t obs_dim = 2;
        std::size_t act_dim = 2;
        std::size_t transition_dim = 20;
        std::size_t hidden = 64;
        std::size_t context_dim = 64;
        std::size_t projection_hidden = 64;
        std::size_t projection_dim = 5;

        /// |s| + |a| + |s'| + 1
        std::size_t input_dim() const noexcept { return 2 * obs_dim + act_dim + 1; }

        friend bool operator==(const EncoderDims &, const EncoderDims &) = default;
    };

    /// Transition encoder f, attention-pooling aggregator g and projection head.
    ///
    /// f:    [s, a, s', r] -> MLP(hidden, hidden) -> D_T, normalized to v
    /// g:    score_t = MLP_score(v_t) (hidden -> 1), value_t = MLP_value(v_t) (hidden -> hidden),
    ///       pooled = sum_t softmax(score)_t value_t, z = normalize(Linear(pooled) -> D_E)
    /// proj: w = normalize(MLP(projection_hidden) -> D_P)
    ///
    /// All hidden activations are tanh. Parameters are declared in the order
    /// transition, score, value, out, projection.
    class ContextEncoder
    {
    public:
        ContextEncoder(EncoderDims dims, std::uint64_t seed);

        const EncoderDims &dims() const noexcept { return dims_; }
        ParamSet &params() noexcept { return params_; }
        const ParamSet &params() const noexcept { return params_; }

        struct Outputs
        {
            Var v; ///< one row per transition, all segments stacked
            Var z; ///< one row per segment
            Var w; ///< one row per segment
        };

        /// Full forward pass over a batch of segments in `graph`.
        Outputs forward(Graph &graph, std::span<const Var> bound, std::span<const Segment> segments) const;

        Var transition_embeddings(std::span<const Var> bound, Var features) const;
        Var aggregate(std::span<const Var> bound, Var v, std::span<const std::size_t> offsets) const;
        Var project(std::span<const Var> bound, Var z) const;

        /// Stacked [s, a, s', r] rows; offsets receives segment boundaries.
        Matrix features(std::span<const Segment> segments, std::vector<std::size_t> &offsets) const;

        Matrix encode_transition(const Transition &transition) const;
        /// v_list is L x D_T; returns 1 x D_E.
        Matrix aggregate(const Matrix &v_list) const;
        Matrix project(const Matrix &z) const;
        /// Returns (z, w) for one segment.
        std::pair<Matrix, Matrix> encode_trajectory(Segment segment) const;
        /// Context embeddings z for many segments, one row each.
        Matrix encode_contexts(std::span<const Segment> segments) const;

    private:
        EncoderDims dims_;
        ParamSet params_;
        Mlp transition_;
        Mlp score_;
        Mlp value_;
        Mlp out_;
        Mlp projection_;
    };

    EncoderDims encoder_dims_for(Family family);
}
