#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hsomrl/config.h"
#include "hsomrl/eval.h"

// Stage runners behind the command-line tool. Each one locks its output
// directory, records a stage entry in <out>/run_manifest.json (status
// "incomplete") before writing anything else, and marks it "complete" with
// output checksums at the end.
namespace hsomrl
{
    inline constexpr const char *kToolVersion = "0.1.0";

    /// Exclusive advisory lock on <dir>/.hsomrl.lock, held for the object's lifetime.
    class DirectoryLock
    {
    public:
        explicit DirectoryLock(const std::filesystem::path &dir);
        ~DirectoryLock();
        DirectoryLock(const DirectoryLock &) = delete;
        DirectoryLock &operator=(const DirectoryLock &) = delete;

    private:
        int fd_ = -1;
    };

    class StageRecord
    {
    public:
        StageRecord(const std::filesystem::path &out, std::string stage, const RunConfig &config,
                    nlohmann::ordered_json arguments, const std::vector<std::filesystem::path> &inputs);

        void add_output(const std::filesystem::path &path);
        void complete();

    private:
        void write();

        std::filesystem::path manifest_;
        nlohmann::ordered_json document_;
        std::size_t index_ = 0;
    };

    std::filesystem::path train_data_dir(const std::filesystem::path &out);
    std::filesystem::path test_data_dir(const std::filesystem::path &out);

    struct GenDataResult
    {
        std::filesystem::path train_dir;
        std::filesystem::path test_dir;
        std::size_t trajectories = 0;
    };

    GenDataResult run_gen_data(const RunConfig &config, const std::filesystem::path &out);

    struct EncoderStageResult
    {
        std::filesystem::path checkpoint;
        std::filesystem::path history;
    };

    EncoderStageResult run_train_encoder(const RunConfig &config, const std::filesystem::path &out,
                                         const std::filesystem::path &data_dir);

    struct PolicyStageResult
    {
        std::filesystem::path checkpoint;
        std::filesystem::path history;
    };

    PolicyStageResult run_train_policy(const RunConfig &config, const std::filesystem::path &out,
                                       const std::filesystem::path &data_dir,
                                       const std::filesystem::path &encoder_path);

    struct EvalInputs
    {
        std::filesystem::path encoder;
        std::filesystem::path policy;
    };

    /// One report over every (test task, seed) pair; seeds are the policy checkpoints' seeds.
    EvalReport evaluate_checkpoints(const RunConfig &config, const OfflineDataset &test_data,
                                    const std::vector<EvalInputs> &inputs, std::size_t bucket);

    struct EvalStageResult
    {
        EvalReport report;
        std::filesystem::path path;
    };

    EvalStageResult run_eval(const RunConfig &config, const std::filesystem::path &out,
                             const std::filesystem::path &data_dir, const std::vector<EvalInputs> &inputs,
                             const std::string &bucket, std::optional<std::filesystem::path> output);

    /// Uniformity over all rows, alignment over rows that share (task_id,
    /// quality_level, return) taken two at a time, separability by task_id.
    nlohmann::ordered_json embedding_metrics(std::span<const EmbeddingRow> rows, double t);

    struct MetricsSource
    {
        std::optional<std::filesystem::path> embeddings;
        std::optional<std::filesystem::path> encoder;
        std::optional<std::filesystem::path> data_dir;
        std::optional<std::string> bucket;
    };

    nlohmann::ordered_json run_metrics(const RunConfig &config, const std::filesystem::path &out,
                                       const MetricsSource &source, std::optional<std::filesystem::path> output);

    std::filesystem::path run_export_embeddings(const RunConfig &config, const std::filesystem::path &out,
                                                const std::filesystem::path &encoder_path,
                                                const std::filesystem::path &data_dir,
                                                std::optional<std::string> bucket, std::size_t views,
                                                std::optional<std::filesystem::path> output);

    /// Keeps freed large buffers in the heap instead of returning them to the
    /// OS; training allocates and frees many same-sized matrices per step.
    void configure_allocator();

    /// Caps OpenMP threads from HSOMRL_THREADS when set; returns the effective cap.
    int apply_thread_limit();
}
