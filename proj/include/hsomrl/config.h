#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hsomrl/contrastive.h"
#include "hsomrl/encoder.h"
#include "hsomrl/envs.h"
#include "hsomrl/iql.h"

// Config files are plain `key = value` lines; `#` starts a comment. Keys:
//
//   seed
//   env.family env.horizon env.dt env.drag env.speed_lo env.speed_hi env.reset_jitter
//   tasks.train tasks.test data.levels data.per_level
//   encoder.transition_dim encoder.hidden encoder.context_dim
//   encoder.projection_hidden encoder.projection_dim
//   contrastive.loss contrastive.temperature contrastive.batch_size
//   contrastive.min_segment contrastive.max_segment contrastive.steps contrastive.lr
//   iql.expectile iql.temperature iql.discount iql.batch_size iql.lr iql.polyak
//   iql.weight_clip iql.policy_std iql.hidden iql.steps iql.context_bank
//   eval.episodes eval.bucket metrics.uniformity_t
namespace hsomrl
{
    struct RunConfig
    {
        std::uint64_t seed = 0;
        Family family = Family::PointRobotGoal;
        EnvConfig env;
        std::size_t n_train_tasks = 10;
        std::size_t n_test_tasks = 5;
        std::size_t levels = 10;
        std::size_t n_per_level = 50;

        std::size_t transition_dim = 20;
        std::size_t encoder_hidden = 64;
        std::size_t context_dim = 64;
        std::size_t projection_hidden = 64;
        std::size_t projection_dim = 5;

        EncoderTrainConfig encoder;
        IqlConfig iql;

        std::size_t eval_episodes = 20;
        std::string eval_bucket = "low";
        double uniformity_t = 2.0;

        EncoderDims encoder_dims() const;

        /// Every key with its effective value.
        nlohmann::ordered_json to_json() const;
        /// Throws ConfigError on inconsistent values.
        void validate() const;
    };

    std::vector<std::string> config_keys();

    /// Sets one key from its textual value; unknown keys and bad values throw ConfigError.
    void set_config_value(RunConfig &config, std::string_view key, std::string_view value);

    /// Applies `key = value` lines on top of `config`.
    void apply_config_text(RunConfig &config, std::string_view text);

    /// Defaults overlaid with the file; validated.
    RunConfig load_config(const std::filesystem::path &path);
}
