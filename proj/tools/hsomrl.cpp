// Command-line front end: gen-data, train-encoder, train-policy, eval, metrics,
// export-embeddings.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hsomrl/errors.h"
#include "hsomrl/pipeline.h"

namespace
{
    namespace fs = std::filesystem;
    using namespace hsomrl;

    enum ExitCode : int
    {
        kOk = 0,
        kInternal = 1,
        kInvalidConfig = 2,
        kMissingInput = 3,
        kPrecondition = 4,
        kIo = 5,
        kBadData = 6,
        kLocked = 7,
    };

    struct Globals
    {
        std::optional<std::string> config;
        std::optional<std::uint64_t> seed;
        std::string out = ".";
        std::vector<std::string> overrides;
    };

    RunConfig resolve_config(const Globals &g, const std::vector<std::pair<std::string, std::string>> &extra)
    {
        RunConfig config;
        if (g.config) {
            config = load_config(*g.config);
        }
        for (const auto &kv : g.overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) {
                throw ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
            }
            set_config_value(config, kv.substr(0, eq), kv.substr(eq + 1));
        }
        for (const auto &[key, value] : extra) {
            set_config_value(config, key, value);
        }
        if (g.seed) {
            config.seed = *g.seed;
        }
        config.validate();
        return config;
    }

    int run(int argc, char **argv)
    {
        CLI::App app{"Offline meta-RL lab: contrastive context encoders and IQL policies"};
        app.require_subcommand(1);
        app.fallthrough();

        Globals g;
        app.add_option("--config", g.config, "key = value config file");
        app.add_option("--seed", g.seed, "seed (overrides the config)");
        app.add_option("--out", g.out, "output directory")->capture_default_str();
        app.add_option("--set", g.overrides, "config override KEY=VALUE (repeatable)");

        std::string family;
        auto *gen = app.add_subcommand("gen-data", "generate train and test datasets under OUT/data");
        gen->add_option("--family", family, "env family: " + valid_family_names());

        std::string loss;
        std::optional<std::string> data;
        auto *enc = app.add_subcommand("train-encoder", "train a context encoder");
        enc->add_option("--loss", loss, "scl | hg | hp | hphg");
        enc->add_option("--data", data, "dataset directory (default OUT/data/train)");

        std::string encoder;
        auto *pol = app.add_subcommand("train-policy", "train an IQL policy on a frozen encoder");
        pol->add_option("--encoder", encoder, "encoder checkpoint")->required();
        pol->add_option("--data", data, "dataset directory (default OUT/data/train)");

        std::vector<std::string> encoders;
        std::vector<std::string> policies;
        std::optional<std::string> bucket;
        std::optional<std::string> output;
        auto *ev = app.add_subcommand("eval", "evaluate policies with contexts from one return bucket");
        ev->add_option("--encoder", encoders, "encoder checkpoint (repeatable, paired with --policy)")->required();
        ev->add_option("--policy", policies, "policy checkpoint (repeatable)")->required();
        ev->add_option("--bucket", bucket, "low | medium | high | 0-9 (default from config)");
        ev->add_option("--data", data, "test dataset directory (default OUT/data/test)");
        ev->add_option("--output", output, "report path (default OUT/eval_<variant>_<bucket>.json)");

        std::optional<std::string> embeddings;
        std::optional<std::string> metric_encoder;
        auto *met = app.add_subcommand("metrics", "uniformity, alignment and separability of embeddings");
        auto *emb_opt = met->add_option("--embeddings", embeddings, "embeddings CSV");
        met->add_option("--encoder", metric_encoder, "encoder checkpoint (embeds two crops per trajectory)")
            ->excludes(emb_opt);
        met->add_option("--data", data, "dataset directory (default OUT/data/test)");
        met->add_option("--bucket", bucket, "restrict to one return bucket");
        met->add_option("--output", output, "metrics path (default OUT/metrics.json)");

        std::size_t views = 1;
        auto *exp = app.add_subcommand("export-embeddings", "write context embeddings as CSV");
        exp->add_option("--encoder", metric_encoder, "encoder checkpoint")->required();
        exp->add_option("--data", data, "dataset directory (default OUT/data/test)");
        exp->add_option("--bucket", bucket, "restrict to one return bucket");
        exp->add_option("--views", views, "1: whole trajectories, 2: two random crops each")
            ->check(CLI::IsMember({1, 2}));
        exp->add_option("--output", output, "CSV path");

        try {
            app.parse(argc, argv);
        }
        catch (const CLI::ParseError &e) {
            const int code = app.exit(e);
            return code == 0 ? kOk : kInvalidConfig;
        }

        const fs::path out = g.out;
        configure_allocator();
        apply_thread_limit();

        if (gen->parsed()) {
            std::vector<std::pair<std::string, std::string>> extra;
            if (!family.empty()) {
                extra.emplace_back("env.family", family);
            }
            const RunConfig config = resolve_config(g, extra);
            const auto r = run_gen_data(config, out);
            std::printf("wrote %zu trajectories to %s and %s\n", r.trajectories, r.train_dir.c_str(),
                        r.test_dir.c_str());
        }
        else if (enc->parsed()) {
            std::vector<std::pair<std::string, std::string>> extra;
            if (!loss.empty()) {
                extra.emplace_back("contrastive.loss", loss);
            }
            const RunConfig config = resolve_config(g, extra);
            const auto r = run_train_encoder(config, out, data ? fs::path(*data) : train_data_dir(out));
            std::printf("encoder: %s\nloss history: %s\n", r.checkpoint.c_str(), r.history.c_str());
        }
        else if (pol->parsed()) {
            const RunConfig config = resolve_config(g, {});
            const auto r = run_train_policy(config, out, data ? fs::path(*data) : train_data_dir(out), encoder);
            std::printf("policy: %s\nloss history: %s\n", r.checkpoint.c_str(), r.history.c_str());
        }
        else if (ev->parsed()) {
            const RunConfig config = resolve_config(g, {});
            if (encoders.size() != policies.size()) {
                throw ConfigError("eval needs one --encoder per --policy (got " + std::to_string(encoders.size())
                                  + " and " + std::to_string(policies.size()) + ")");
            }
            std::vector<EvalInputs> inputs;
            for (std::size_t i = 0; i < encoders.size(); ++i) {
                inputs.push_back({encoders[i], policies[i]});
            }
            std::optional<fs::path> output_path;
            if (output) {
                output_path = *output;
            }
            const auto r = run_eval(config, out, data ? fs::path(*data) : test_data_dir(out), inputs,
                                    bucket.value_or(config.eval_bucket), output_path);
            std::printf("%s bucket %s: %.4f ± %.4f over %zu task/seed entries\nreport: %s\n",
                        r.report.variant.c_str(), bucket.value_or(config.eval_bucket).c_str(), r.report.mean,
                        r.report.std, r.report.per_task.size(), r.path.c_str());
        }
        else if (met->parsed()) {
            const RunConfig config = resolve_config(g, {});
            MetricsSource source;
            if (embeddings) {
                source.embeddings = *embeddings;
            }
            if (metric_encoder) {
                source.encoder = *metric_encoder;
                source.data_dir = data ? fs::path(*data) : test_data_dir(out);
            }
            source.bucket = bucket;
            std::optional<fs::path> output_path;
            if (output) {
                output_path = *output;
            }
            std::cout << run_metrics(config, out, source, output_path).dump(2) << "\n";
        }
        else if (exp->parsed()) {
            const RunConfig config = resolve_config(g, {});
            std::optional<fs::path> output_path;
            if (output) {
                output_path = *output;
            }
            const auto path = run_export_embeddings(config, out, *metric_encoder,
                                                    data ? fs::path(*data) : test_data_dir(out), bucket, views,
                                                    output_path);
            std::printf("embeddings: %s\n", path.c_str());
        }
        return kOk;
    }
}

int main(int argc, char **argv)
{
    try {
        return run(argc, argv);
    }
    catch (const ConfigError &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kInvalidConfig;
    }
    catch (const MissingInputError &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kMissingInput;
    }
    catch (const MissingManifestError &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kMissingInput;
    }
    catch (const LockError &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kLocked;
    }
    catch (const IoError &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kIo;
    }
    catch (const FormatError &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kBadData;
    }
    catch (const PreconditionError &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kPrecondition;
    }
    catch (const ShapeError &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kPrecondition;
    }
    catch (const DomainError &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kPrecondition;
    }
    catch (const std::exception &e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return kInternal;
    }
}
