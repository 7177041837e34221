#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hsomrl/datagen.h"
#include "hsomrl/encoder.h"

namespace hsomrl
{
    /// Maps (observation, task embedding) to an action.
    using PolicyFn = std::function<std::vector<double>(std::span<const double>, std::span<const double>)>;

    /// Undiscounted return of one full-horizon episode.
    double rollout_return(const TaskSpec &task, const EnvConfig &env, const PolicyFn &policy,
                          std::span<const double> context, std::uint64_t reset_seed);

    /// Mean return over episodes; each episode draws one context trajectory from
    /// `bucket`, encodes it in full with the frozen encoder and rolls out the policy.
    double evaluate_policy(const PolicyFn &policy, const ContextEncoder &encoder, std::span<const Trajectory> bucket,
                           const TaskSpec &task, const EnvConfig &env, std::size_t n_episodes, std::uint64_t seed);

    /// Mean return of a uniform-random policy.
    double random_policy_return(const TaskSpec &task, const EnvConfig &env, std::size_t n_episodes,
                                std::uint64_t seed);

    /// log of the mean over distinct unordered pairs of exp(-t |z_i - z_j|^2).
    double uniformity(const Matrix &embeddings, double t = 2.0);
    /// Mean of |a_i - b_i|^2 over paired rows.
    double alignment(const Matrix &first, const Matrix &second);
    /// Mean silhouette coefficient with cosine distance.
    double separability(const Matrix &embeddings, std::span<const int> labels);

    struct EvalEntry
    {
        int task_id = 0;
        int bucket = 0;
        std::uint64_t seed = 0;
        double mean_return = 0.0;
    };

    struct EvalReport
    {
        std::string variant;
        std::vector<std::uint64_t> seeds;
        std::vector<EvalEntry> per_task;
        double mean = 0.0;
        double std = 0.0;
        std::string encoder_id;
        std::string policy_id;
        std::size_t episodes = 0;

        /// Sets mean and (population) std from per_task entries.
        void recompute_aggregate();
        nlohmann::json to_json() const;
        static EvalReport from_json(const nlohmann::json &j);
    };

    /// Throws SchemaError unless `j` has the report layout.
    void validate_report_json(const nlohmann::json &j);

    /// "low" -> 0, "medium" -> 1, "high" -> n_buckets - 1, or a decile index.
    std::size_t parse_bucket(const std::string &name, std::size_t n_buckets = 10);

    struct EmbeddingRow
    {
        int task_id = 0;
        int quality_level = 0;
        double ret = 0.0;
        std::vector<double> z;
    };

    /// Encodes every trajectory (or those of one return bucket per task) in
    /// full. With views == 2, each trajectory yields two random crops on
    /// consecutive rows instead.
    std::vector<EmbeddingRow> compute_embeddings(const ContextEncoder &encoder, const OfflineDataset &dataset,
                                                 std::optional<std::size_t> bucket, std::size_t views,
                                                 std::size_t min_segment, std::size_t max_segment,
                                                 std::uint64_t seed);

    /// Columns: task_id, quality_level, return, z_0 .. z_{D-1}.
    void write_embeddings_csv(const std::filesystem::path &path, std::span<const EmbeddingRow> rows);
    std::vector<EmbeddingRow> read_embeddings_csv(const std::filesystem::path &path);

    void export_embeddings(const ContextEncoder &encoder, const OfflineDataset &dataset,
                           std::optional<std::size_t> bucket, const std::filesystem::path &path);
}
