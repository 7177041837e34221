#include "hsomrl/encoder.h"

#include <algorithm>

#include "hsomrl/errors.h"
#include "hsomrl/ops.h"
#include "hsomrl/rng.h"

namespace hsomrl
{
    ContextEncoder::ContextEncoder(EncoderDims dims, std::uint64_t seed) : dims_{dims}
    {
        Rng rng(derive_seed(seed, 0xe2c));
        const std::size_t h = dims.hidden;
        const std::size_t two[] = {h, h};
        const std::size_t one[] = {h};
        const std::size_t proj[] = {dims.projection_hidden};
        transition_ = Mlp(params_, "transition", dims.input_dim(), two, dims.transition_dim, Activation::Tanh, rng);
        score_ = Mlp(params_, "score", dims.transition_dim, one, 1, Activation::Tanh, rng);
        value_ = Mlp(params_, "value", dims.transition_dim, one, h, Activation::Tanh, rng);
        out_ = Mlp(params_, "out", h, {}, dims.context_dim, Activation::Tanh, rng);
        projection_ = Mlp(params_, "projection", dims.context_dim, proj, dims.projection_dim, Activation::Tanh, rng);
    }

    Matrix ContextEncoder::features(std::span<const Segment> segments, std::vector<std::size_t> &offsets) const
    {
        offsets.assign(1, 0);
        std::size_t total = 0;
        for (const Segment &seg : segments) {
            if (seg.empty()) {
                throw PreconditionError("encoder: empty segment");
            }
            total += seg.size();
            offsets.push_back(total);
        }
        const std::size_t width = dims_.input_dim();
        Matrix x(total, width);
        std::size_t row = 0;
        for (const Segment &seg : segments) {
            for (const Transition &t : seg) {
                if (t.s.size() != dims_.obs_dim || t.a.size() != dims_.act_dim || t.s_next.size() != dims_.obs_dim) {
                    throw ShapeError("encode_transition: transition dims (" + std::to_string(t.s.size()) + ", "
                                     + std::to_string(t.a.size()) + ", " + std::to_string(t.s_next.size())
                                     + ") do not match encoder dims (" + std::to_string(dims_.obs_dim) + ", "
                                     + std::to_string(dims_.act_dim) + ", " + std::to_string(dims_.obs_dim) + ")");
                }
                auto dst = x.row(row++).begin();
                dst = std::copy(t.s.begin(), t.s.end(), dst);
                dst = std::copy(t.a.begin(), t.a.end(), dst);
                dst = std::copy(t.s_next.begin(), t.s_next.end(), dst);
                *dst = t.r;
            }
        }
        return x;
    }

    Var ContextEncoder::transition_embeddings(std::span<const Var> bound, Var features) const
    {
        return ops::l2_normalize_rows(transition_.forward(bound, features));
    }

    Var ContextEncoder::aggregate(std::span<const Var> bound, Var v, std::span<const std::size_t> offsets) const
    {
        const Var scores = score_.forward(bound, v);
        const Var values = ops::tanh(value_.forward(bound, v));
        const Var pooled = ops::segment_attention_pool(scores, values, offsets);
        return ops::l2_normalize_rows(out_.forward(bound, pooled));
    }

    Var ContextEncoder::project(std::span<const Var> bound, Var z) const
    {
        return ops::l2_normalize_rows(projection_.forward(bound, z));
    }

    ContextEncoder::Outputs ContextEncoder::forward(Graph &graph, std::span<const Var> bound,
                                                    std::span<const Segment> segments) const
    {
        if (segments.empty()) {
            throw PreconditionError("encoder: no segments");
        }
        std::vector<std::size_t> offsets;
        const Var x = graph.constant(features(segments, offsets));
        const Var v = transition_embeddings(bound, x);
        const Var z = aggregate(bound, v, offsets);
        const Var w = project(bound, z);
        return {v, z, w};
    }

    Matrix ContextEncoder::encode_transition(const Transition &transition) const
    {
        Graph g;
        const auto bound = params_.bind(g, false);
        std::vector<std::size_t> offsets;
        const Segment seg(&transition, 1);
        const Var x = g.constant(features(std::span<const Segment>(&seg, 1), offsets));
        return transition_embeddings(bound, x).value();
    }

    Matrix ContextEncoder::aggregate(const Matrix &v_list) const
    {
        if (v_list.rows() == 0) {
            throw PreconditionError("aggregate: empty transition list");
        }
        if (v_list.cols() != dims_.transition_dim) {
            throw ShapeError("aggregate: expected " + std::to_string(dims_.transition_dim) + " columns, got "
                             + shape_string(v_list));
        }
        Graph g;
        const auto bound = params_.bind(g, false);
        const std::size_t offsets[] = {0, v_list.rows()};
        return aggregate(bound, g.constant(v_list), offsets).value();
    }

    Matrix ContextEncoder::project(const Matrix &z) const
    {
        Graph g;
        const auto bound = params_.bind(g, false);
        return project(bound, g.constant(z)).value();
    }

    std::pair<Matrix, Matrix> ContextEncoder::encode_trajectory(Segment segment) const
    {
        Graph g;
        const auto bound = params_.bind(g, false);
        const auto out = forward(g, bound, std::span<const Segment>(&segment, 1));
        return {out.z.value(), out.w.value()};
    }

    Matrix ContextEncoder::encode_contexts(std::span<const Segment> segments) const
    {
        // Rows are computed independently, so chunking only bounds memory.
        constexpr std::size_t kChunk = 256;
        Matrix out(segments.size(), dims_.context_dim);
        for (std::size_t begin = 0; begin < segments.size(); begin += kChunk) {
            const auto chunk = segments.subspan(begin, std::min(kChunk, segments.size() - begin));
            Graph g;
            const auto bound = params_.bind(g, false);
            std::vector<std::size_t> offsets;
            const Var x = g.constant(features(chunk, offsets));
            const Matrix z = aggregate(bound, transition_embeddings(bound, x), offsets).value();
            for (std::size_t i = 0; i < chunk.size(); ++i) {
                std::copy(z.row(i).begin(), z.row(i).end(), out.row(begin + i).begin());
            }
        }
        return out;
    }

    EncoderDims encoder_dims_for(Family family)
    {
        EncoderDims d;
        d.obs_dim = observation_dim(family);
        d.act_dim = action_dim(family);
        return d;
    }
}
