#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "hsomrl/adam.h"
#include "hsomrl/datagen.h"
#include "hsomrl/encoder.h"
#include "hsomrl/graph.h"
#include "hsomrl/rng.h"

namespace hsomrl
{
    enum class LossVariant
    {
        SCL,  ///< supervised InfoNCE, no reweighting
        HG,   ///< hard negatives: Z_neg reweighted by omega_neg
        HP,   ///< hard positives: numerator and Z_pos reweighted by omega_pos
        HPHG, ///< both
    };

    std::string_view variant_name(LossVariant v);
    LossVariant parse_variant(std::string_view name);

    struct LossConfig
    {
        LossVariant variant = LossVariant::HPHG;
        double temperature = 0.1;
        std::size_t batch_size = 256;
        std::size_t min_segment = 20;
        std::size_t max_segment = 60;
    };

    /// Two independent contiguous crops with lengths uniform in [min_len, max_len]
    /// (capped at the trajectory length) and uniform start positions.
    std::pair<Segment, Segment> augment(Segment trajectory, std::size_t min_len, std::size_t max_len, Rng &rng);
    std::pair<Segment, Segment> augment(Segment trajectory, std::size_t min_len, std::size_t max_len,
                                        std::uint64_t seed);

    /// softmax(dots): closer negatives weigh more.
    std::vector<double> hardness_neg(std::span<const double> dots);
    /// softmax(-dots): farther positives weigh more.
    std::vector<double> hardness_pos(std::span<const double> dots);
    /// Same, from an anchor row (1 x d) and candidate rows (k x d).
    std::vector<double> hardness_neg(const Matrix &anchor, const Matrix &negatives);
    std::vector<double> hardness_pos(const Matrix &anchor, const Matrix &positives);

    /// Batch of two views per source trajectory. Sample i of view 1 and view 2
    /// come from the same trajectory and share labels[i].
    struct AugmentedBatch
    {
        std::vector<Segment> view1;
        std::vector<Segment> view2;
        std::vector<int> labels;

        /// [view1..., view2...]
        std::vector<Segment> all_segments() const;
        /// Labels for all_segments().
        std::vector<int> all_labels() const;
    };

    AugmentedBatch sample_batch(const OfflineDataset &dataset, std::size_t batch_size, std::size_t min_len,
                                std::size_t max_len, Rng &rng);

    /// Mean over anchors of the per-anchor contrastive term on unit-norm rows.
    ///
    /// For anchor q with positives P (same label, q excluded) and negatives N:
    ///   -1/|P| sum_p log( c_p e^{s_qp/b} / (sum_P c_a e^{s_qa/b} + sum_N d_a e^{s_qa/b}) )
    /// with c = |P| omega_pos (HP, HPHG) or 1, d = |N| omega_neg (HG, HPHG) or 1.
    /// The |P|, |N| factors make uniform hardness reduce exactly to SCL.
    /// Hardness weights come from the values and carry no gradient.
    Var contrastive_loss(Var projections, std::span<const int> labels, LossVariant variant, double temperature);
    /// Same, with hardness weights taken from `hardness_source` (rows matching
    /// `projections`) instead of the projections' own values.
    Var contrastive_loss(Var projections, std::span<const int> labels, LossVariant variant, double temperature,
                         const Matrix &hardness_source);
    double contrastive_loss(const Matrix &projections, std::span<const int> labels, LossVariant variant,
                            double temperature);

    double loss_scl(const Matrix &projections, std::span<const int> labels, double temperature);
    double loss_hg(const Matrix &projections, std::span<const int> labels, double temperature);
    double loss_hp(const Matrix &projections, std::span<const int> labels, double temperature);
    double loss_hphg(const Matrix &projections, std::span<const int> labels, double temperature);

    struct EncoderTrainConfig
    {
        LossConfig loss;
        std::size_t steps = 1000;
        AdamConfig adam;
    };

    struct EncoderLossRecord
    {
        std::size_t step = 0;
        LossVariant variant = LossVariant::SCL;
        double loss = 0.0;
        double wallclock_ms = 0.0;
    };

    struct EncoderTrainResult
    {
        ContextEncoder encoder;
        std::vector<EncoderLossRecord> history;
    };

    EncoderTrainResult train_encoder(const OfflineDataset &dataset, const EncoderDims &dims,
                                     const EncoderTrainConfig &config, std::uint64_t seed);

    /// Columns: step, variant, loss, wallclock_ms.
    void write_encoder_history_csv(const std::filesystem::path &path, std::span<const EncoderLossRecord> history);
}
