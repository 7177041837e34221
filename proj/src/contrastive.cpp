#include "hsomrl/contrastive.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>
#include <string>

#include "hsomrl/checksum.h"
#include "hsomrl/errors.h"
#include "hsomrl/kernels.h"
#include "hsomrl/ops.h"

namespace hsomrl
{
    namespace
    {
        std::vector<double> softmax(std::span<const double> x, double sign)
        {
            if (x.empty()) {
                throw PreconditionError("hardness weights need at least one sample");
            }
            double m = sign * x.front();
            for (double v : x) {
                m = std::max(m, sign * v);
            }
            std::vector<double> out(x.size());
            double z = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) {
                out[i] = std::exp(sign * x[i] - m);
                z += out[i];
            }
            for (double &v : out) {
                v /= z;
            }
            return out;
        }

        std::vector<double> row_dots(const Matrix &anchor, const Matrix &others)
        {
            if (anchor.rows() != 1 || anchor.cols() != others.cols()) {
                throw ShapeError("hardness: incompatible shapes " + shape_string(anchor) + " and "
                                 + shape_string(others));
            }
            const Matrix d = kernels::matmul_nt(anchor, others);
            return {d.data().begin(), d.data().end()};
        }

        bool reweights_negatives(LossVariant v)
        {
            return v == LossVariant::HG || v == LossVariant::HPHG;
        }

        bool reweights_positives(LossVariant v)
        {
            return v == LossVariant::HP || v == LossVariant::HPHG;
        }

        /// Constant coefficient matrices of the loss, computed from embedding values.
        struct LossCoefficients
        {
            Matrix denominator;   ///< weight of e^{s_qa/b} in the partition sum
            Matrix positive_mean; ///< 1/|P| on positives
            double log_numerator = 0.0; ///< mean over anchors of (1/|P|) sum_p log c_p
        };

        LossCoefficients coefficients(const Matrix &w, std::span<const int> labels, LossVariant variant)
        {
            const std::size_t n = w.rows();
            if (labels.size() != n) {
                throw ShapeError("contrastive_loss: " + std::to_string(labels.size()) + " labels for "
                                 + std::to_string(n) + " samples");
            }
            if (std::set<int>(labels.begin(), labels.end()).size() < 2) {
                throw PreconditionError("contrastive_loss: batch needs at least two distinct task labels (no negatives)");
            }
            const Matrix dots = kernels::matmul_nt(w, w);
            LossCoefficients c{Matrix(n, n), Matrix(n, n), 0.0};
            std::vector<std::size_t> pos;
            std::vector<std::size_t> neg;
            std::vector<double> pos_dots;
            std::vector<double> neg_dots;
            for (std::size_t q = 0; q < n; ++q) {
                pos.clear();
                neg.clear();
                pos_dots.clear();
                neg_dots.clear();
                for (std::size_t a = 0; a < n; ++a) {
                    if (a == q) {
                        continue;
                    }
                    if (labels[a] == labels[q]) {
                        pos.push_back(a);
                        pos_dots.push_back(dots(q, a));
                    }
                    else {
                        neg.push_back(a);
                        neg_dots.push_back(dots(q, a));
                    }
                }
                if (pos.empty()) {
                    throw PreconditionError("contrastive_loss: anchor " + std::to_string(q) + " with task label "
                                            + std::to_string(labels[q]) + " has no positives");
                }
                const double n_pos = static_cast<double>(pos.size());
                const double n_neg = static_cast<double>(neg.size());

                double log_num = 0.0;
                if (reweights_positives(variant)) {
                    const auto omega = hardness_pos(pos_dots);
                    for (std::size_t k = 0; k < pos.size(); ++k) {
                        const double scaled = n_pos * omega[k];
                        c.denominator(q, pos[k]) = scaled;
                        log_num += std::log(scaled);
                    }
                }
                else {
                    for (std::size_t a : pos) {
                        c.denominator(q, a) = 1.0;
                    }
                }
                if (reweights_negatives(variant)) {
                    const auto omega = hardness_neg(neg_dots);
                    for (std::size_t k = 0; k < neg.size(); ++k) {
                        c.denominator(q, neg[k]) = n_neg * omega[k];
                    }
                }
                else {
                    for (std::size_t a : neg) {
                        c.denominator(q, a) = 1.0;
                    }
                }
                for (std::size_t a : pos) {
                    c.positive_mean(q, a) = 1.0 / n_pos;
                }
                c.log_numerator += log_num / n_pos;
            }
            c.log_numerator /= static_cast<double>(n);
            return c;
        }
    }

    std::string_view variant_name(LossVariant v)
    {
        switch (v) {
        case LossVariant::SCL:
            return "scl";
        case LossVariant::HG:
            return "hg";
        case LossVariant::HP:
            return "hp";
        case LossVariant::HPHG:
            return "hphg";
        }
        return "unknown";
    }

    LossVariant parse_variant(std::string_view name)
    {
        for (LossVariant v : {LossVariant::SCL, LossVariant::HG, LossVariant::HP, LossVariant::HPHG}) {
            if (variant_name(v) == name) {
                return v;
            }
        }
        throw PreconditionError("unknown loss variant '" + std::string(name) + "'; valid: scl, hg, hp, hphg");
    }

    std::pair<Segment, Segment> augment(Segment trajectory, std::size_t min_len, std::size_t max_len, Rng &rng)
    {
        if (min_len < 1 || max_len < min_len) {
            throw PreconditionError("augment: need 1 <= min_len <= max_len");
        }
        if (trajectory.size() < min_len) {
            throw PreconditionError("augment: trajectory of length " + std::to_string(trajectory.size())
                                    + " is shorter than the minimum segment length " + std::to_string(min_len));
        }
        const std::size_t hi = std::min(max_len, trajectory.size());
        auto crop = [&]() {
            const std::size_t len = min_len + uniform_index(rng, hi - min_len + 1);
            const std::size_t start = uniform_index(rng, trajectory.size() - len + 1);
            return trajectory.subspan(start, len);
        };
        Segment first = crop();
        Segment second = crop();
        return {first, second};
    }

    std::pair<Segment, Segment> augment(Segment trajectory, std::size_t min_len, std::size_t max_len,
                                        std::uint64_t seed)
    {
        Rng rng(derive_seed(seed, 0xa06));
        return augment(trajectory, min_len, max_len, rng);
    }

    std::vector<double> hardness_neg(std::span<const double> dots)
    {
        return softmax(dots, 1.0);
    }

    std::vector<double> hardness_pos(std::span<const double> dots)
    {
        return softmax(dots, -1.0);
    }

    std::vector<double> hardness_neg(const Matrix &anchor, const Matrix &negatives)
    {
        return hardness_neg(row_dots(anchor, negatives));
    }

    std::vector<double> hardness_pos(const Matrix &anchor, const Matrix &positives)
    {
        return hardness_pos(row_dots(anchor, positives));
    }

    std::vector<Segment> AugmentedBatch::all_segments() const
    {
        std::vector<Segment> out(view1);
        out.insert(out.end(), view2.begin(), view2.end());
        return out;
    }

    std::vector<int> AugmentedBatch::all_labels() const
    {
        std::vector<int> out(labels);
        out.insert(out.end(), labels.begin(), labels.end());
        return out;
    }

    AugmentedBatch sample_batch(const OfflineDataset &dataset, std::size_t batch_size, std::size_t min_len,
                                std::size_t max_len, Rng &rng)
    {
        if (dataset.tasks.size() < 2) {
            throw PreconditionError("contrastive training needs at least 2 tasks (no negatives otherwise)");
        }
        if (batch_size < 2) {
            throw PreconditionError("contrastive batch size must be >= 2");
        }
        AugmentedBatch batch;
        for (;;) {
            batch = {};
            for (std::size_t i = 0; i < batch_size; ++i) {
                const std::size_t task = uniform_index(rng, dataset.tasks.size());
                const auto &buffer = dataset.buffers[task];
                const Trajectory &traj = buffer[uniform_index(rng, buffer.size())];
                const auto [a, b] = augment(traj.transitions, min_len, max_len, rng);
                batch.view1.push_back(a);
                batch.view2.push_back(b);
                batch.labels.push_back(traj.task_id);
            }
            if (std::set<int>(batch.labels.begin(), batch.labels.end()).size() >= 2) {
                return batch;
            }
        }
    }

    Var contrastive_loss(Var projections, std::span<const int> labels, LossVariant variant, double temperature)
    {
        return contrastive_loss(projections, labels, variant, temperature, projections.value());
    }

    Var contrastive_loss(Var projections, std::span<const int> labels, LossVariant variant, double temperature,
                         const Matrix &hardness_source)
    {
        if (!(temperature > 0.0)) {
            throw PreconditionError("contrastive_loss: temperature must be > 0");
        }
        if (!hardness_source.same_shape(projections.value())) {
            throw ShapeError("contrastive_loss: hardness source " + shape_string(hardness_source)
                             + " does not match projections " + shape_string(projections.value()));
        }
        Graph &g = projections.graph();
        LossCoefficients c = coefficients(hardness_source, labels, variant);
        const Var logits = ops::scalar_mul(ops::matmul_nt(projections, projections), 1.0 / temperature);
        const Var partition = ops::row_sum(ops::elementwise_mul(ops::exp(logits), g.constant(std::move(c.denominator))));
        const Var positive_logit = ops::row_sum(ops::elementwise_mul(logits, g.constant(std::move(c.positive_mean))));
        const Var per_anchor = ops::sub(ops::log(partition), positive_logit);
        return ops::add_scalar(ops::mean(per_anchor), -c.log_numerator);
    }

    double contrastive_loss(const Matrix &projections, std::span<const int> labels, LossVariant variant,
                            double temperature)
    {
        Graph g;
        return contrastive_loss(g.constant(projections), labels, variant, temperature).value().scalar();
    }

    double loss_scl(const Matrix &projections, std::span<const int> labels, double temperature)
    {
        return contrastive_loss(projections, labels, LossVariant::SCL, temperature);
    }

    double loss_hg(const Matrix &projections, std::span<const int> labels, double temperature)
    {
        return contrastive_loss(projections, labels, LossVariant::HG, temperature);
    }

    double loss_hp(const Matrix &projections, std::span<const int> labels, double temperature)
    {
        return contrastive_loss(projections, labels, LossVariant::HP, temperature);
    }

    double loss_hphg(const Matrix &projections, std::span<const int> labels, double temperature)
    {
        return contrastive_loss(projections, labels, LossVariant::HPHG, temperature);
    }

    EncoderTrainResult train_encoder(const OfflineDataset &dataset, const EncoderDims &dims,
                                     const EncoderTrainConfig &config, std::uint64_t seed)
    {
        if (dataset.tasks.size() < 2) {
            throw PreconditionError("train_encoder: dataset has " + std::to_string(dataset.tasks.size())
                                    + " task(s); contrastive training needs at least 2");
        }
        if (dims.obs_dim != observation_dim(dataset.family) || dims.act_dim != action_dim(dataset.family)) {
            throw ShapeError("train_encoder: encoder dims do not match the dataset family");
        }
        EncoderTrainResult result{ContextEncoder(dims, derive_seed(seed, 0x1)), {}};
        ParamSet &params = result.encoder.params();
        Adam adam(config.adam, params.values());
        Rng rng(derive_seed(seed, 0x2));
        const auto start = std::chrono::steady_clock::now();

        for (std::size_t step = 0; step < config.steps; ++step) {
            const AugmentedBatch batch =
                sample_batch(dataset, config.loss.batch_size, config.loss.min_segment, config.loss.max_segment, rng);
            const auto segments = batch.all_segments();
            const auto labels = batch.all_labels();

            Graph g;
            const auto bound = params.bind(g, true);
            const auto out = result.encoder.forward(g, bound, segments);
            const Var loss = contrastive_loss(out.w, labels, config.loss.variant, config.loss.temperature);
            const Gradients grads = g.backward(loss);

            std::vector<Matrix> grad_list;
            grad_list.reserve(bound.size());
            for (const Var &p : bound) {
                grad_list.push_back(grads.of(p));
            }
            adam.step(params.values(), grad_list);

            const double ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
            result.history.push_back({step, config.loss.variant, loss.value().scalar(), ms});
        }
        return result;
    }

    void write_encoder_history_csv(const std::filesystem::path &path, std::span<const EncoderLossRecord> history)
    {
        std::string body = "step,variant,loss,wallclock_ms\n";
        char buf[128];
        for (const auto &r : history) {
            std::snprintf(buf, sizeof buf, "%zu,%s,%.17g,%.3f\n", r.step, std::string(variant_name(r.variant)).c_str(),
                          r.loss, r.wallclock_ms);
            body += buf;
        }
        write_file(path, body);
    }
}
