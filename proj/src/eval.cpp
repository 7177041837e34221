#include "hsomrl/eval.h"

#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

#include "hsomrl/checksum.h"
#include "hsomrl/contrastive.h"
#include "hsomrl/errors.h"
#include "hsomrl/rng.h"

namespace hsomrl
{
    double rollout_return(const TaskSpec &task, const EnvConfig &env, const PolicyFn &policy,
                          std::span<const double> context, std::uint64_t reset_seed)
    {
        EnvState state = reset(task, reset_seed, env);
        double total = 0.0;
        while (state.step_index < state.horizon) {
            const std::vector<double> action = policy(state.observation, context);
            StepResult next = step(task, state, action, env);
            total += next.reward;
            state = std::move(next.state);
        }
        return total;
    }

    double evaluate_policy(const PolicyFn &policy, const ContextEncoder &encoder, std::span<const Trajectory> bucket,
                           const TaskSpec &task, const EnvConfig &env, std::size_t n_episodes, std::uint64_t seed)
    {
        if (bucket.empty()) {
            throw PreconditionError("evaluate_policy: empty context bucket");
        }
        if (n_episodes < 1) {
            throw PreconditionError("evaluate_policy: need at least one episode");
        }
        std::vector<Segment> contexts;
        contexts.reserve(n_episodes);
        for (std::size_t e = 0; e < n_episodes; ++e) {
            Rng rng(derive_seed(seed, 0xc07, e));
            contexts.emplace_back(bucket[uniform_index(rng, bucket.size())].transitions);
        }
        const Matrix z = encoder.encode_contexts(contexts);

        std::vector<double> returns(n_episodes);
        std::vector<std::string> errors(n_episodes);
        const auto n = static_cast<std::int64_t>(n_episodes);
#pragma omp parallel for schedule(dynamic)
        for (std::int64_t e = 0; e < n; ++e) {
            const auto idx = static_cast<std::size_t>(e);
            try {
                returns[idx] = rollout_return(task, env, policy, z.row(idx), derive_seed(seed, 0x2e5, idx));
            }
            catch (const std::exception &ex) {
                errors[idx] = ex.what();
            }
        }
        for (const auto &err : errors) {
            if (!err.empty()) {
                throw Error("evaluate_policy: " + err);
            }
        }
        double total = 0.0;
        for (double r : returns) {
            total += r;
        }
        return total / static_cast<double>(n_episodes);
    }

    double random_policy_return(const TaskSpec &task, const EnvConfig &env, std::size_t n_episodes,
                                std::uint64_t seed)
    {
        if (n_episodes < 1) {
            throw PreconditionError("random_policy_return: need at least one episode");
        }
        const std::size_t adim = action_dim(task.family);
        double total = 0.0;
        for (std::size_t e = 0; e < n_episodes; ++e) {
            Rng rng(derive_seed(seed, 0x4a4d, e));
            PolicyFn random = [&](std::span<const double>, std::span<const double>) {
                std::vector<double> a(adim);
                for (double &v : a) {
                    v = uniform(rng, -1.0, 1.0);
                }
                return a;
            };
            total += rollout_return(task, env, random, {}, derive_seed(seed, 0x2e5, e));
        }
        return total / static_cast<double>(n_episodes);
    }

    double uniformity(const Matrix &embeddings, double t)
    {
        const std::size_t n = embeddings.rows();
        if (n < 2) {
            throw PreconditionError("uniformity: need at least 2 embeddings");
        }
        if (!(t > 0.0)) {
            throw PreconditionError("uniformity: t must be > 0");
        }
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto zi = embeddings.row(i);
            for (std::size_t j = i + 1; j < n; ++j) {
                const auto zj = embeddings.row(j);
                double d2 = 0.0;
                for (std::size_t k = 0; k < zi.size(); ++k) {
                    const double d = zi[k] - zj[k];
                    d2 += d * d;
                }
                total += std::exp(-t * d2);
            }
        }
        const double pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
        return std::log(total / pairs);
    }

    double alignment(const Matrix &first, const Matrix &second)
    {
        if (first.rows() == 0) {
            throw PreconditionError("alignment: need at least one pair");
        }
        if (!first.same_shape(second)) {
            throw ShapeError("alignment: incompatible shapes " + shape_string(first) + " and " + shape_string(second));
        }
        double total = 0.0;
        for (std::size_t i = 0; i < first.rows(); ++i) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < first.cols(); ++k) {
                const double d = first(i, k) - second(i, k);
                d2 += d * d;
            }
            total += d2;
        }
        return total / static_cast<double>(first.rows());
    }

    double separability(const Matrix &embeddings, std::span<const int> labels)
    {
        const std::size_t n = embeddings.rows();
        if (labels.size() != n) {
            throw ShapeError("separability: " + std::to_string(labels.size()) + " labels for " + std::to_string(n)
                             + " embeddings");
        }
        std::map<int, std::size_t> counts;
        for (int l : labels) {
            ++counts[l];
        }
        if (counts.size() < 2) {
            throw PreconditionError("separability: need at least 2 distinct labels");
        }
        for (const auto &[label, count] : counts) {
            if (count < 2) {
                throw PreconditionError("separability: label " + std::to_string(label) + " has a single sample");
            }
        }

        std::vector<double> norms(n);
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (double v : embeddings.row(i)) {
                s += v * v;
            }
            if (s == 0.0) {
                throw DomainError("separability: zero embedding at row " + std::to_string(i));
            }
            norms[i] = std::sqrt(s);
        }
        auto distance = [&](std::size_t i, std::size_t j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < embeddings.cols(); ++k) {
                dot += embeddings(i, k) * embeddings(j, k);
            }
            return 1.0 - dot / (norms[i] * norms[j]);
        };

        double total = 0.0;
        std::map<int, double> sums;
        for (std::size_t i = 0; i < n; ++i) {
            sums.clear();
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i) {
                    sums[labels[j]] += distance(i, j);
                }
            }
            const double a = sums[labels[i]] / static_cast<double>(counts[labels[i]] - 1);
            double b = std::numeric_limits<double>::infinity();
            for (const auto &[label, s] : sums) {
                if (label != labels[i]) {
                    b = std::min(b, s / static_cast<double>(counts[label]));
                }
            }
            const double denom = std::max(a, b);
            total += denom > 0.0 ? (b - a) / denom : 0.0;
        }
        return total / static_cast<double>(n);
    }

    void EvalReport::recompute_aggregate()
    {
        if (per_task.empty()) {
            mean = 0.0;
            std = 0.0;
            return;
        }
        double s = 0.0;
        for (const auto &e : per_task) {
            s += e.mean_return;
        }
        mean = s / static_cast<double>(per_task.size());
        double v = 0.0;
        for (const auto &e : per_task) {
            v += (e.mean_return - mean) * (e.mean_return - mean);
        }
        std = std::sqrt(v / static_cast<double>(per_task.size()));
    }

    nlohmann::json EvalReport::to_json() const
    {
        nlohmann::ordered_json per = nlohmann::ordered_json::array();
        for (const auto &e : per_task) {
            per.push_back({{"task_id", e.task_id}, {"bucket", e.bucket}, {"seed", e.seed}, {"mean_return", e.mean_return}});
        }
        nlohmann::ordered_json j;
        j["variant"] = variant;
        j["seeds"] = seeds;
        j["per_task"] = std::move(per);
        j["aggregate"] = {{"mean", mean}, {"std", std}};
        j["encoder"] = encoder_id;
        j["policy"] = policy_id;
        j["episodes"] = episodes;
        return nlohmann::json::parse(j.dump());
    }

    void validate_report_json(const nlohmann::json &j)
    {
        auto fail = [](const std::string &what) { throw SchemaError("eval report: " + what); };
        if (!j.is_object()) {
            fail("not an object");
        }
        if (!j.contains("variant") || !j["variant"].is_string()) {
            fail("'variant' must be a string");
        }
        if (!j.contains("seeds") || !j["seeds"].is_array()) {
            fail("'seeds' must be an array");
        }
        for (const auto &s : j["seeds"]) {
            if (!s.is_number_unsigned()) {
                fail("'seeds' must hold non-negative integers");
            }
        }
        if (!j.contains("per_task") || !j["per_task"].is_array()) {
            fail("'per_task' must be an array");
        }
        for (const auto &e : j["per_task"]) {
            if (!e.is_object() || !e.contains("task_id") || !e["task_id"].is_number_integer() || !e.contains("bucket")
                || !e["bucket"].is_number_integer() || !e.contains("seed") || !e["seed"].is_number_unsigned()
                || !e.contains("mean_return") || !e["mean_return"].is_number()) {
                fail("per_task entries need integer task_id, bucket, seed and numeric mean_return");
            }
        }
        if (!j.contains("aggregate") || !j["aggregate"].is_object() || !j["aggregate"].contains("mean")
            || !j["aggregate"]["mean"].is_number() || !j["aggregate"].contains("std")
            || !j["aggregate"]["std"].is_number()) {
            fail("'aggregate' needs numeric mean and std");
        }
    }

    EvalReport EvalReport::from_json(const nlohmann::json &j)
    {
        validate_report_json(j);
        EvalReport r;
        r.variant = j["variant"].get<std::string>();
        r.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
        for (const auto &e : j["per_task"]) {
            r.per_task.push_back({e["task_id"].get<int>(), e["bucket"].get<int>(), e["seed"].get<std::uint64_t>(),
                                  e["mean_return"].get<double>()});
        }
        r.mean = j["aggregate"]["mean"].get<double>();
        r.std = j["aggregate"]["std"].get<double>();
        r.encoder_id = j.value("encoder", "");
        r.policy_id = j.value("policy", "");
        r.episodes = j.value("episodes", std::size_t{0});
        return r;
    }

    std::size_t parse_bucket(const std::string &name, std::size_t n_buckets)
    {
        if (name == "low") {
            return 0;
        }
        if (name == "medium") {
            return 1;
        }
        if (name == "high") {
            return n_buckets - 1;
        }
        std::size_t pos = 0;
        long value = -1;
        try {
            value = std::stol(name, &pos);
        }
        catch (const std::exception &) {
            pos = 0;
        }
        if (pos != name.size() || value < 0 || static_cast<std::size_t>(value) >= n_buckets) {
            throw PreconditionError("bucket must be low, medium, high or an integer in [0, "
                                    + std::to_string(n_buckets - 1) + "], got '" + name + "'");
        }
        return static_cast<std::size_t>(value);
    }

    std::vector<EmbeddingRow> compute_embeddings(const ContextEncoder &encoder, const OfflineDataset &dataset,
                                                 std::optional<std::size_t> bucket, std::size_t views,
                                                 std::size_t min_segment, std::size_t max_segment, std::uint64_t seed)
    {
        if (views != 1 && views != 2) {
            throw PreconditionError("compute_embeddings: views must be 1 or 2");
        }
        std::vector<Trajectory> selected;
        for (const auto &buffer : dataset.buffers) {
            if (bucket) {
                auto buckets = bucket_by_return(buffer, 10);
                if (*bucket >= buckets.size()) {
                    throw PreconditionError("compute_embeddings: bucket out of range");
                }
                selected.insert(selected.end(), buckets[*bucket].begin(), buckets[*bucket].end());
            }
            else {
                selected.insert(selected.end(), buffer.begin(), buffer.end());
            }
        }
        std::vector<Segment> segments;
        Rng rng(derive_seed(seed, 0xe3b));
        for (const Trajectory &t : selected) {
            if (views == 1) {
                segments.emplace_back(t.transitions);
            }
            else {
                const auto [a, b] = augment(t.transitions, min_segment, max_segment, rng);
                segments.push_back(a);
                segments.push_back(b);
            }
        }
        const Matrix z = encoder.encode_contexts(segments);
        std::vector<EmbeddingRow> rows;
        rows.reserve(segments.size());
        for (std::size_t i = 0; i < segments.size(); ++i) {
            const Trajectory &t = selected[i / views];
            rows.push_back({t.task_id, t.quality_level, t.ret, {z.row(i).begin(), z.row(i).end()}});
        }
        return rows;
    }

    void write_embeddings_csv(const std::filesystem::path &path, std::span<const EmbeddingRow> rows)
    {
        std::string body = "task_id,quality_level,return";
        const std::size_t dim = rows.empty() ? 0 : rows.front().z.size();
        for (std::size_t k = 0; k < dim; ++k) {
            body += ",z_" + std::to_string(k);
        }
        body += '\n';
        char buf[64];
        for (const auto &r : rows) {
            body += std::to_string(r.task_id) + "," + std::to_string(r.quality_level);
            std::snprintf(buf, sizeof buf, ",%.17g", r.ret);
            body += buf;
            for (double v : r.z) {
                std::snprintf(buf, sizeof buf, ",%.17g", v);
                body += buf;
            }
            body += '\n';
        }
        write_file(path, body);
    }

    std::vector<EmbeddingRow> read_embeddings_csv(const std::filesystem::path &path)
    {
        std::istringstream in(read_file(path));
        std::string line;
        if (!std::getline(in, line) || line.rfind("task_id,quality_level,return", 0) != 0) {
            throw SchemaError("embeddings CSV: missing header in " + path.string());
        }
        std::vector<EmbeddingRow> rows;
        while (std::getline(in, line)) {
            if (line.empty()) {
                continue;
            }
            std::vector<std::string> cells;
            std::istringstream ls(line);
            std::string cell;
            while (std::getline(ls, cell, ',')) {
                cells.push_back(cell);
            }
            if (cells.size() < 4) {
                throw SchemaError("embeddings CSV: row with fewer than 4 columns");
            }
            try {
                EmbeddingRow r;
                r.task_id = std::stoi(cells[0]);
                r.quality_level = std::stoi(cells[1]);
                r.ret = std::stod(cells[2]);
                for (std::size_t k = 3; k < cells.size(); ++k) {
                    r.z.push_back(std::stod(cells[k]));
                }
                if (!rows.empty() && r.z.size() != rows.front().z.size()) {
                    throw SchemaError("embeddings CSV: ragged rows");
                }
                rows.push_back(std::move(r));
            }
            catch (const std::invalid_argument &) {
                throw SchemaError("embeddings CSV: non-numeric cell");
            }
            catch (const std::out_of_range &) {
                throw SchemaError("embeddings CSV: value out of range");
            }
        }
        return rows;
    }

    void export_embeddings(const ContextEncoder &encoder, const OfflineDataset &dataset,
                           std::optional<std::size_t> bucket, const std::filesystem::path &path)
    {
        const auto rows = compute_embeddings(encoder, dataset, bucket, 1, 1, 1, 0);
        write_embeddings_csv(path, rows);
    }
}
