#include "hsomrl/pipeline.h"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <map>
#include <tuple>

#include <fcntl.h>
#include <malloc.h>
#include <sys/file.h>
#include <unistd.h>


#include "hsomrl/checkpoint.h"
#include "hsomrl/checksum.h"
#include "hsomrl/dataset_io.h"
#include "hsomrl/errors.h"
#include "hsomrl/kernels.h"
#include "hsomrl/rng.h"

namespace hsomrl
{
    namespace fs = std::filesystem;

    namespace
    {
        std::string utc_now()
        {
            const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
            std::tm tm{};
            gmtime_r(&t, &tm);
            char buf[32];
            std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
            return buf;
        }

        /// Datasets are fingerprinted by their manifest, which lists every file's checksum.
        std::string fingerprint(const fs::path &path)
        {
            if (fs::is_directory(path)) {
                return sha256_file(path / "manifest.json");
            }
            return sha256_file(path);
        }

        void require_dataset(const fs::path &dir)
        {
            if (!fs::exists(dir / "manifest.json")) {
                throw MissingInputError("dataset not found: " + dir.string() + " (no manifest.json)");
            }
        }

        void require_file(const fs::path &path, const std::string &what)
        {
            if (!fs::is_regular_file(path)) {
                throw MissingInputError(what + " not found: " + path.string());
            }
        }

        void prepare_out(const fs::path &out)
        {
            std::error_code ec;
            fs::create_directories(out, ec);
            if (ec || !fs::is_directory(out)) {
                throw IoError("cannot create output directory " + out.string() + ": " + ec.message());
            }
        }

        std::string bucket_label(const std::string &bucket)
        {
            return bucket.empty() ? "all" : bucket;
        }
    }

    DirectoryLock::DirectoryLock(const fs::path &dir)
    {
        const fs::path path = dir / ".hsomrl.lock";
        fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
        if (fd_ < 0) {
            throw IoError("cannot open lock file " + path.string());
        }
        if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
            ::close(fd_);
            fd_ = -1;
            throw LockError("output directory " + dir.string() + " is in use by another process");
        }
    }

    DirectoryLock::~DirectoryLock()
    {
        if (fd_ >= 0) {
            ::flock(fd_, LOCK_UN);
            ::close(fd_);
        }
    }

    StageRecord::StageRecord(const fs::path &out, std::string stage, const RunConfig &config,
                             nlohmann::ordered_json arguments, const std::vector<fs::path> &inputs)
        : manifest_(out / "run_manifest.json")
    {
        if (fs::exists(manifest_)) {
            try {
                document_ = nlohmann::ordered_json::parse(read_file(manifest_));
            }
            catch (const nlohmann::json::exception &e) {
                throw FormatError("corrupt run manifest " + manifest_.string() + ": " + e.what());
            }
        }
        else {
            document_ = {{"stages", nlohmann::ordered_json::array()}};
        }
        nlohmann::ordered_json input_sums = nlohmann::ordered_json::object();
        for (const auto &p : inputs) {
            input_sums[p.string()] = fingerprint(p);
        }
        nlohmann::ordered_json entry;
        entry["stage"] = std::move(stage);
        entry["status"] = "incomplete";
        entry["tool_version"] = kToolVersion;
        entry["started"] = utc_now();
        entry["config"] = config.to_json();
        entry["arguments"] = std::move(arguments);
        entry["inputs"] = std::move(input_sums);
        entry["outputs"] = nlohmann::ordered_json::object();
        document_["stages"].push_back(std::move(entry));
        index_ = document_["stages"].size() - 1;
        write();
    }

    void StageRecord::add_output(const fs::path &path)
    {
        document_["stages"][index_]["outputs"][path.string()] = fingerprint(path);
    }

    void StageRecord::complete()
    {
        auto &entry = document_["stages"][index_];
        entry["status"] = "complete";
        entry["finished"] = utc_now();
        write();
    }

    void StageRecord::write()
    {
        write_file(manifest_, document_.dump(2) + "\n");
    }

    fs::path train_data_dir(const fs::path &out)
    {
        return out / "data" / "train";
    }

    fs::path test_data_dir(const fs::path &out)
    {
        return out / "data" / "test";
    }

    GenDataResult run_gen_data(const RunConfig &config, const fs::path &out)
    {
        config.validate();
        prepare_out(out);
        DirectoryLock lock(out);
        StageRecord record(out, "gen-data", config, nlohmann::ordered_json::object(), {});

        const TaskSplit split = sample_tasks(config.family, config.n_train_tasks, config.n_test_tasks,
                                             derive_seed(config.seed, 0x7a5c), config.env);
        GenDataResult result{train_data_dir(out), test_data_dir(out), 0};
        const OfflineDataset train = generate_dataset(config.family, split.train, config.n_per_level, config.levels,
                                                      derive_seed(config.seed, 1), config.env);
        save_dataset(train, result.train_dir);
        record.add_output(result.train_dir);
        result.trajectories += train.trajectory_count();
        if (!split.test.empty()) {
            const OfflineDataset test = generate_dataset(config.family, split.test, config.n_per_level,
                                                         config.levels, derive_seed(config.seed, 2), config.env);
            save_dataset(test, result.test_dir);
            record.add_output(result.test_dir);
            result.trajectories += test.trajectory_count();
        }
        record.complete();
        return result;
    }

    EncoderStageResult run_train_encoder(const RunConfig &config, const fs::path &out, const fs::path &data_dir)
    {
        config.validate();
        require_dataset(data_dir);
        prepare_out(out);
        DirectoryLock lock(out);
        const std::string variant(variant_name(config.encoder.loss.variant));
        StageRecord record(out, "train-encoder", config, {{"data", data_dir.string()}, {"loss", variant}},
                           {data_dir});

        const OfflineDataset data = load_dataset(data_dir);
        EncoderDims dims = config.encoder_dims();
        const EncoderDims family_dims = encoder_dims_for(data.family);
        dims.obs_dim = family_dims.obs_dim;
        dims.act_dim = family_dims.act_dim;

        EncoderTrainResult trained = train_encoder(data, dims, config.encoder, config.seed);
        EncoderStageResult result{out / ("encoder_" + variant + ".ckpt"), out / ("encoder_" + variant + "_loss.csv")};
        save_encoder({std::move(trained.encoder), data.family, variant, config.seed}, result.checkpoint);
        write_encoder_history_csv(result.history, trained.history);
        record.add_output(result.checkpoint);
        record.add_output(result.history);
        record.complete();
        return result;
    }

    PolicyStageResult run_train_policy(const RunConfig &config, const fs::path &out, const fs::path &data_dir,
                                       const fs::path &encoder_path)
    {
        config.validate();
        require_dataset(data_dir);
        require_file(encoder_path, "encoder checkpoint");
        prepare_out(out);
        DirectoryLock lock(out);
        const EncoderCheckpoint encoder = load_encoder(encoder_path);
        StageRecord record(out, "train-policy", config,
                           {{"data", data_dir.string()}, {"encoder", encoder_path.string()}},
                           {data_dir, encoder_path});

        const OfflineDataset data = load_dataset(data_dir);
        if (encoder.family != data.family) {
            throw PreconditionError("encoder was trained on " + std::string(family_name(encoder.family))
                                    + " but the dataset is " + std::string(family_name(data.family)));
        }
        const EncoderDims expected = encoder_dims_for(data.family);
        if (encoder.encoder.dims().obs_dim != expected.obs_dim || encoder.encoder.dims().act_dim != expected.act_dim) {
            throw ShapeError("encoder expects obs_dim " + std::to_string(encoder.encoder.dims().obs_dim) + ", act_dim "
                             + std::to_string(encoder.encoder.dims().act_dim) + "; dataset has obs_dim "
                             + std::to_string(expected.obs_dim) + ", act_dim " + std::to_string(expected.act_dim));
        }

        IqlTrainResult trained = train_policy(data, encoder.encoder, config.iql, config.seed);
        PolicyStageResult result{out / ("policy_" + encoder.variant + ".ckpt"),
                                 out / ("policy_" + encoder.variant + "_loss.csv")};
        save_policy({std::move(trained.agent), data.family, sha256_file(encoder_path), config.seed},
                    result.checkpoint);
        write_iql_history_csv(result.history, trained.history);
        record.add_output(result.checkpoint);
        record.add_output(result.history);
        record.complete();
        return result;
    }

    EvalReport evaluate_checkpoints(const RunConfig &config, const OfflineDataset &test_data,
                                    const std::vector<EvalInputs> &inputs, std::size_t bucket)
    {
        if (inputs.empty()) {
            throw PreconditionError("eval needs at least one encoder/policy pair");
        }
        EvalReport report;
        report.episodes = config.eval_episodes;
        for (const auto &input : inputs) {
            require_file(input.encoder, "encoder checkpoint");
            require_file(input.policy, "policy checkpoint");
            const EncoderCheckpoint enc = load_encoder(input.encoder);
            const PolicyCheckpoint pol = load_policy(input.policy);
            if (enc.family != test_data.family || pol.family != test_data.family) {
                throw PreconditionError("family mismatch: encoder " + std::string(family_name(enc.family)) + ", policy "
                                        + std::string(family_name(pol.family)) + ", test data "
                                        + std::string(family_name(test_data.family)));
            }
            const IqlDims &pd = pol.agent.dims();
            const EncoderDims &ed = enc.encoder.dims();
            if (pd.context_dim != ed.context_dim || pd.obs_dim != ed.obs_dim || pd.act_dim != ed.act_dim) {
                throw ShapeError("policy expects context_dim " + std::to_string(pd.context_dim) + " (obs "
                                 + std::to_string(pd.obs_dim) + ", act " + std::to_string(pd.act_dim)
                                 + ") but encoder produces context_dim " + std::to_string(ed.context_dim) + " (obs "
                                 + std::to_string(ed.obs_dim) + ", act " + std::to_string(ed.act_dim) + ")");
            }
            const std::string encoder_sha = sha256_file(input.encoder);
            if (!pol.encoder_sha256.empty() && pol.encoder_sha256 != encoder_sha) {
                throw PreconditionError("policy " + input.policy.string() + " was trained against a different encoder than "
                                        + input.encoder.string());
            }

            if (report.variant.empty()) {
                report.variant = enc.variant;
            }
            else if (report.variant != enc.variant) {
                report.variant = "mixed";
            }
            const auto sep = [](const std::string &s) { return s.empty() ? std::string() : std::string(","); };
            report.encoder_id += sep(report.encoder_id) + encoder_sha.substr(0, 16);
            report.policy_id += sep(report.policy_id) + sha256_file(input.policy).substr(0, 16);
            report.seeds.push_back(pol.seed);

            const IqlAgent &agent = pol.agent;
            const PolicyFn policy = [&agent](std::span<const double> obs, std::span<const double> z) {
                return agent.act(obs, z);
            };
            for (std::size_t i = 0; i < test_data.tasks.size(); ++i) {
                const TaskSpec &task = test_data.tasks[i];
                const auto buckets = bucket_by_return(test_data.buffers[i], 10);
                const std::uint64_t seed =
                    derive_seed(config.seed, 0xe7a1, (pol.seed << 20) ^ static_cast<std::uint64_t>(task.task_id));
                const double mean = evaluate_policy(policy, enc.encoder, buckets.at(bucket), task, test_data.env,
                                                    config.eval_episodes, seed);
                report.per_task.push_back({task.task_id, static_cast<int>(bucket), pol.seed, mean});
            }
        }
        report.recompute_aggregate();
        return report;
    }

    EvalStageResult run_eval(const RunConfig &config, const fs::path &out, const fs::path &data_dir,
                             const std::vector<EvalInputs> &inputs, const std::string &bucket,
                             std::optional<fs::path> output)
    {
        config.validate();
        require_dataset(data_dir);
        std::vector<fs::path> input_paths{data_dir};
        nlohmann::ordered_json args = {{"data", data_dir.string()}, {"bucket", bucket}};
        for (const auto &in : inputs) {
            require_file(in.encoder, "encoder checkpoint");
            require_file(in.policy, "policy checkpoint");
            input_paths.push_back(in.encoder);
            input_paths.push_back(in.policy);
        }
        const std::size_t b = parse_bucket(bucket);
        prepare_out(out);
        DirectoryLock lock(out);
        StageRecord record(out, "eval", config, std::move(args), input_paths);

        const OfflineDataset data = load_dataset(data_dir);
        EvalStageResult result{evaluate_checkpoints(config, data, inputs, b), {}};
        result.path = output ? *output : out / ("eval_" + result.report.variant + "_" + bucket + ".json");
        write_file(result.path, result.report.to_json().dump(2) + "\n");
        record.add_output(result.path);
        record.complete();
        return result;
    }

    nlohmann::ordered_json embedding_metrics(std::span<const EmbeddingRow> rows, double t)
    {
        if (rows.size() < 2) {
            throw PreconditionError("metrics need at least 2 embeddings");
        }
        const std::size_t dim = rows.front().z.size();
        Matrix all(rows.size(), dim);
        std::vector<int> labels;
        std::map<std::tuple<int, int, double>, std::vector<std::size_t>> groups;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].z.size() != dim) {
                throw ShapeError("embedding rows have different dimensions");
            }
            std::copy(rows[i].z.begin(), rows[i].z.end(), all.row(i).begin());
            labels.push_back(rows[i].task_id);
            groups[{rows[i].task_id, rows[i].quality_level, rows[i].ret}].push_back(i);
        }
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto &g = groups[{rows[i].task_id, rows[i].quality_level, rows[i].ret}];
            if (g.front() != i) {
                continue;
            }
            for (std::size_t k = 0; k + 1 < g.size(); k += 2) {
                pairs.emplace_back(g[k], g[k + 1]);
            }
        }

        nlohmann::ordered_json j;
        j["t"] = t;
        j["rows"] = rows.size();
        j["pairs"] = pairs.size();
        j["uniformity"] = uniformity(all, t);
        if (pairs.empty()) {
            j["alignment"] = nullptr;
        }
        else {
            Matrix first(pairs.size(), dim);
            Matrix second(pairs.size(), dim);
            for (std::size_t k = 0; k < pairs.size(); ++k) {
                std::copy(rows[pairs[k].first].z.begin(), rows[pairs[k].first].z.end(), first.row(k).begin());
                std::copy(rows[pairs[k].second].z.begin(), rows[pairs[k].second].z.end(), second.row(k).begin());
            }
            j["alignment"] = alignment(first, second);
        }
        try {
            j["separability"] = separability(all, labels);
        }
        catch (const PreconditionError &) {
            j["separability"] = nullptr;
        }
        return j;
    }

    nlohmann::ordered_json run_metrics(const RunConfig &config, const fs::path &out, const MetricsSource &source,
                                       std::optional<fs::path> output)
    {
        config.validate();
        std::vector<fs::path> inputs;
        nlohmann::ordered_json args = nlohmann::ordered_json::object();
        if (source.embeddings) {
            require_file(*source.embeddings, "embeddings file");
            inputs.push_back(*source.embeddings);
            args["embeddings"] = source.embeddings->string();
        }
        else if (source.encoder && source.data_dir) {
            require_file(*source.encoder, "encoder checkpoint");
            require_dataset(*source.data_dir);
            inputs.push_back(*source.encoder);
            inputs.push_back(*source.data_dir);
            args["encoder"] = source.encoder->string();
            args["data"] = source.data_dir->string();
            args["bucket"] = bucket_label(source.bucket.value_or(""));
        }
        else {
            throw ConfigError("metrics needs --embeddings, or --encoder with a dataset");
        }
        prepare_out(out);
        DirectoryLock lock(out);
        StageRecord record(out, "metrics", config, args, inputs);

        std::vector<EmbeddingRow> rows;
        if (source.embeddings) {
            rows = read_embeddings_csv(*source.embeddings);
        }
        else {
            const EncoderCheckpoint enc = load_encoder(*source.encoder);
            const OfflineDataset data = load_dataset(*source.data_dir);
            std::optional<std::size_t> bucket;
            if (source.bucket) {
                bucket = parse_bucket(*source.bucket);
            }
            rows = compute_embeddings(enc.encoder, data, bucket, 2, config.encoder.loss.min_segment,
                                      config.encoder.loss.max_segment, config.seed);
        }
        nlohmann::ordered_json metrics = embedding_metrics(rows, config.uniformity_t);
        metrics["source"] = args;
        const fs::path path = output ? *output : out / "metrics.json";
        write_file(path, metrics.dump(2) + "\n");
        record.add_output(path);
        record.complete();
        return metrics;
    }

    fs::path run_export_embeddings(const RunConfig &config, const fs::path &out, const fs::path &encoder_path,
                                   const fs::path &data_dir, std::optional<std::string> bucket, std::size_t views,
                                   std::optional<fs::path> output)
    {
        config.validate();
        require_file(encoder_path, "encoder checkpoint");
        require_dataset(data_dir);
        std::optional<std::size_t> bucket_index;
        if (bucket) {
            bucket_index = parse_bucket(*bucket);
        }
        prepare_out(out);
        DirectoryLock lock(out);
        StageRecord record(out, "export-embeddings", config,
                           {{"encoder", encoder_path.string()},
                            {"data", data_dir.string()},
                            {"bucket", bucket_label(bucket.value_or(""))},
                            {"views", views}},
                           {encoder_path, data_dir});

        const EncoderCheckpoint enc = load_encoder(encoder_path);
        const OfflineDataset data = load_dataset(data_dir);
        const auto rows = compute_embeddings(enc.encoder, data, bucket_index, views, config.encoder.loss.min_segment,
                                             config.encoder.loss.max_segment, config.seed);
        const fs::path path =
            output ? *output : out / ("embeddings_" + enc.variant + "_" + bucket_label(bucket.value_or("")) + ".csv");
        write_embeddings_csv(path, rows);
        record.add_output(path);
        record.complete();
        return path;
    }

    void configure_allocator()
    {
        mallopt(M_MMAP_THRESHOLD, 1 << 30);
        mallopt(M_TRIM_THRESHOLD, 1 << 30);
        mallopt(M_TOP_PAD, 64 << 20);
    }

    int apply_thread_limit()
    {
        if (const char *value = std::getenv("HSOMRL_THREADS"); value != nullptr && *value != '\0') {
            char *end = nullptr;
            const long n = std::strtol(value, &end, 10);
            if (*end != '\0' || n < 1) {
                throw ConfigError("HSOMRL_THREADS must be a positive integer, got '" + std::string(value) + "'");
            }
            kernels::set_max_threads(static_cast<int>(n));
        }
        return kernels::max_threads();
    }
}
