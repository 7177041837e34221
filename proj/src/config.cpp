#include "hsomrl/config.h"

#include <charconv>
#include <functional>
#include <sstream>

#include "hsomrl/checksum.h"
#include "hsomrl/errors.h"

namespace hsomrl
{
    namespace
    {
        std::string_view trim(std::string_view s)
        {
            const auto first = s.find_first_not_of(" \t\r");
            if (first == std::string_view::npos) {
                return {};
            }
            const auto last = s.find_last_not_of(" \t\r");
            return s.substr(first, last - first + 1);
        }

        template <class T>
        T parse_number(std::string_view key, std::string_view text)
        {
            T value{};
            const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
            if (ec != std::errc() || ptr != text.data() + text.size()) {
                throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + std::string(text) + "'");
            }
            return value;
        }

        struct Field
        {
            std::string key;
            std::function<void(RunConfig &, std::string_view)> set;
            std::function<nlohmann::ordered_json(const RunConfig &)> get;
        };

        template <class T>
        Field number(std::string key, T RunConfig::*member)
        {
            return {key, [key, member](RunConfig &c, std::string_view v) { c.*member = parse_number<T>(key, v); },
                    [member](const RunConfig &c) { return nlohmann::ordered_json(c.*member); }};
        }

        template <class Outer, class T>
        Field nested(std::string key, Outer RunConfig::*outer, T Outer::*member)
        {
            return {key,
                    [key, outer, member](RunConfig &c, std::string_view v) {
                        (c.*outer).*member = parse_number<T>(key, v);
                    },
                    [outer, member](const RunConfig &c) { return nlohmann::ordered_json((c.*outer).*member); }};
        }

        Field loss_field(std::string key, std::function<double &(RunConfig &)> ref,
                         std::function<double(const RunConfig &)> read)
        {
            return {key, [key, ref](RunConfig &c, std::string_view v) { ref(c) = parse_number<double>(key, v); },
                    [read](const RunConfig &c) { return nlohmann::ordered_json(read(c)); }};
        }

        Field size_field(std::string key, std::function<std::size_t &(RunConfig &)> ref,
                         std::function<std::size_t(const RunConfig &)> read)
        {
            return {key, [key, ref](RunConfig &c, std::string_view v) { ref(c) = parse_number<std::size_t>(key, v); },
                    [read](const RunConfig &c) { return nlohmann::ordered_json(read(c)); }};
        }

        const std::vector<Field> &fields()
        {
            static const std::vector<Field> table = [] {
                std::vector<Field> f;
                f.push_back(number("seed", &RunConfig::seed));
                f.push_back({"env.family",
                             [](RunConfig &c, std::string_view v) {
                                 try {
                                     c.family = parse_family(v);
                                 }
                                 catch (const PreconditionError &e) {
                                     throw ConfigError(e.what());
                                 }
                             },
                             [](const RunConfig &c) { return nlohmann::ordered_json(family_name(c.family)); }});
                f.push_back(nested("env.horizon", &RunConfig::env, &EnvConfig::horizon));
                f.push_back(nested("env.dt", &RunConfig::env, &EnvConfig::dt));
                f.push_back(nested("env.drag", &RunConfig::env, &EnvConfig::drag));
                f.push_back(nested("env.speed_lo", &RunConfig::env, &EnvConfig::speed_lo));
                f.push_back(nested("env.speed_hi", &RunConfig::env, &EnvConfig::speed_hi));
                f.push_back(nested("env.reset_jitter", &RunConfig::env, &EnvConfig::reset_jitter));
                f.push_back(number("tasks.train", &RunConfig::n_train_tasks));
                f.push_back(number("tasks.test", &RunConfig::n_test_tasks));
                f.push_back(number("data.levels", &RunConfig::levels));
                f.push_back(number("data.per_level", &RunConfig::n_per_level));
                f.push_back(number("encoder.transition_dim", &RunConfig::transition_dim));
                f.push_back(number("encoder.hidden", &RunConfig::encoder_hidden));
                f.push_back(number("encoder.context_dim", &RunConfig::context_dim));
                f.push_back(number("encoder.projection_hidden", &RunConfig::projection_hidden));
                f.push_back(number("encoder.projection_dim", &RunConfig::projection_dim));
                f.push_back({"contrastive.loss",
                             [](RunConfig &c, std::string_view v) {
                                 try {
                                     c.encoder.loss.variant = parse_variant(v);
                                 }
                                 catch (const PreconditionError &e) {
                                     throw ConfigError(e.what());
                                 }
                             },
                             [](const RunConfig &c) {
                                 return nlohmann::ordered_json(variant_name(c.encoder.loss.variant));
                             }});
                f.push_back(loss_field(
                    "contrastive.temperature", [](RunConfig &c) -> double & { return c.encoder.loss.temperature; },
                    [](const RunConfig &c) { return c.encoder.loss.temperature; }));
                f.push_back(size_field(
                    "contrastive.batch_size", [](RunConfig &c) -> std::size_t & { return c.encoder.loss.batch_size; },
                    [](const RunConfig &c) { return c.encoder.loss.batch_size; }));
                f.push_back(size_field(
                    "contrastive.min_segment",
                    [](RunConfig &c) -> std::size_t & { return c.encoder.loss.min_segment; },
                    [](const RunConfig &c) { return c.encoder.loss.min_segment; }));
                f.push_back(size_field(
                    "contrastive.max_segment",
                    [](RunConfig &c) -> std::size_t & { return c.encoder.loss.max_segment; },
                    [](const RunConfig &c) { return c.encoder.loss.max_segment; }));
                f.push_back(size_field(
                    "contrastive.steps", [](RunConfig &c) -> std::size_t & { return c.encoder.steps; },
                    [](const RunConfig &c) { return c.encoder.steps; }));
                f.push_back(loss_field(
                    "contrastive.lr", [](RunConfig &c) -> double & { return c.encoder.adam.learning_rate; },
                    [](const RunConfig &c) { return c.encoder.adam.learning_rate; }));
                f.push_back(nested("iql.expectile", &RunConfig::iql, &IqlConfig::expectile));
                f.push_back(nested("iql.temperature", &RunConfig::iql, &IqlConfig::temperature));
                f.push_back(nested("iql.discount", &RunConfig::iql, &IqlConfig::discount));
                f.push_back(nested("iql.batch_size", &RunConfig::iql, &IqlConfig::batch_size));
                f.push_back(nested("iql.lr", &RunConfig::iql, &IqlConfig::learning_rate));
                f.push_back(nested("iql.polyak", &RunConfig::iql, &IqlConfig::polyak));
                f.push_back(nested("iql.weight_clip", &RunConfig::iql, &IqlConfig::weight_clip));
                f.push_back(nested("iql.policy_std", &RunConfig::iql, &IqlConfig::policy_std));
                f.push_back(nested("iql.hidden", &RunConfig::iql, &IqlConfig::hidden));
                f.push_back(nested("iql.steps", &RunConfig::iql, &IqlConfig::steps));
                f.push_back(nested("iql.context_bank", &RunConfig::iql, &IqlConfig::context_bank));
                f.push_back(number("eval.episodes", &RunConfig::eval_episodes));
                f.push_back({"eval.bucket", [](RunConfig &c, std::string_view v) { c.eval_bucket = std::string(v); },
                             [](const RunConfig &c) { return nlohmann::ordered_json(c.eval_bucket); }});
                f.push_back(number("metrics.uniformity_t", &RunConfig::uniformity_t));
                return f;
            }();
            return table;
        }

        void require(bool ok, const std::string &message)
        {
            if (!ok) {
                throw ConfigError(message);
            }
        }
    }

    EncoderDims RunConfig::encoder_dims() const
    {
        EncoderDims d = encoder_dims_for(family);
        d.transition_dim = transition_dim;
        d.hidden = encoder_hidden;
        d.context_dim = context_dim;
        d.projection_hidden = projection_hidden;
        d.projection_dim = projection_dim;
        return d;
    }

    nlohmann::ordered_json RunConfig::to_json() const
    {
        nlohmann::ordered_json j;
        for (const auto &f : fields()) {
            j[f.key] = f.get(*this);
        }
        return j;
    }

    void RunConfig::validate() const
    {
        require(env.horizon >= 1, "env.horizon must be >= 1");
        require(env.dt > 0.0, "env.dt must be > 0");
        require(env.drag > 0.0 && env.drag <= 1.0, "env.drag must be in (0, 1]");
        require(env.speed_lo < env.speed_hi, "env.speed_lo must be < env.speed_hi");
        require(env.reset_jitter >= 0.0, "env.reset_jitter must be >= 0");
        require(n_train_tasks >= 1, "tasks.train must be >= 1");
        require(levels >= 1, "data.levels must be >= 1");
        require(n_per_level >= 1, "data.per_level must be >= 1");
        require(transition_dim >= 1 && encoder_hidden >= 1 && context_dim >= 1 && projection_hidden >= 1
                    && projection_dim >= 1,
                "encoder dimensions must be >= 1");
        const auto &loss = encoder.loss;
        require(loss.temperature > 0.0, "contrastive.temperature must be > 0");
        require(loss.batch_size >= 2, "contrastive.batch_size must be >= 2");
        require(loss.min_segment >= 1 && loss.min_segment <= loss.max_segment,
                "contrastive segment bounds need 1 <= min_segment <= max_segment");
        require(loss.min_segment <= static_cast<std::size_t>(env.horizon),
                "contrastive.min_segment exceeds env.horizon");
        require(encoder.adam.learning_rate > 0.0, "contrastive.lr must be > 0");
        require(iql.expectile > 0.0 && iql.expectile < 1.0, "iql.expectile must be in (0, 1)");
        require(iql.temperature >= 0.0, "iql.temperature must be >= 0");
        require(iql.discount >= 0.0 && iql.discount <= 1.0, "iql.discount must be in [0, 1]");
        require(iql.batch_size >= 1, "iql.batch_size must be >= 1");
        require(iql.learning_rate > 0.0, "iql.lr must be > 0");
        require(iql.polyak > 0.0 && iql.polyak <= 1.0, "iql.polyak must be in (0, 1]");
        require(iql.weight_clip > 0.0, "iql.weight_clip must be > 0");
        require(iql.policy_std > 0.0, "iql.policy_std must be > 0");
        require(iql.hidden >= 1, "iql.hidden must be >= 1");
        require(iql.context_bank >= 1, "iql.context_bank must be >= 1");
        require(iql.min_segment >= 1 && iql.min_segment <= iql.max_segment, "iql segment bounds are inconsistent");
        require(eval_episodes >= 1, "eval.episodes must be >= 1");
        require(uniformity_t > 0.0, "metrics.uniformity_t must be > 0");
    }

    std::vector<std::string> config_keys()
    {
        std::vector<std::string> keys;
        for (const auto &f : fields()) {
            keys.push_back(f.key);
        }
        return keys;
    }

    void set_config_value(RunConfig &config, std::string_view key, std::string_view value)
    {
        for (const auto &f : fields()) {
            if (f.key == key) {
                f.set(config, trim(value));
                if (key == "contrastive.min_segment") {
                    config.iql.min_segment = config.encoder.loss.min_segment;
                }
                if (key == "contrastive.max_segment") {
                    config.iql.max_segment = config.encoder.loss.max_segment;
                }
                return;
            }
        }
        throw ConfigError("unknown config key '" + std::string(key) + "'");
    }

    void apply_config_text(RunConfig &config, std::string_view text)
    {
        std::istringstream in{std::string(text)};
        std::string raw;
        int line_no = 0;
        while (std::getline(in, raw)) {
            ++line_no;
            std::string_view line = raw;
            if (const auto hash = line.find('#'); hash != std::string_view::npos) {
                line = line.substr(0, hash);
            }
            line = trim(line);
            if (line.empty()) {
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string_view::npos) {
                throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
            }
            set_config_value(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
    }

    RunConfig load_config(const std::filesystem::path &path)
    {
        if (!std::filesystem::exists(path)) {
            throw MissingInputError("config file not found: " + path.string());
        }
        RunConfig config;
        apply_config_text(config, read_file(path));
        config.validate();
        return config;
    }
}
