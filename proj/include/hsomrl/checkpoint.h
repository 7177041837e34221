#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "hsomrl/encoder.h"
#include "hsomrl/envs.h"
#include "hsomrl/iql.h"

// Checkpoint layout: 8-byte magic "HSOMRLCK", u32 version, u64 header length,
// JSON header, then every parameter matrix as little-endian doubles in
// declaration order. The header lists names and shapes.
namespace hsomrl
{
    inline constexpr std::uint32_t kCheckpointVersion = 1;

    struct EncoderCheckpoint
    {
        ContextEncoder encoder;
        Family family = Family::PointRobotGoal;
        std::string variant;
        std::uint64_t seed = 0;
    };

    struct PolicyCheckpoint
    {
        IqlAgent agent;
        Family family = Family::PointRobotGoal;
        /// sha256 of the encoder checkpoint the policy was trained against.
        std::string encoder_sha256;
        std::uint64_t seed = 0;
    };

    void save_encoder(const EncoderCheckpoint &checkpoint, const std::filesystem::path &path);
    EncoderCheckpoint load_encoder(const std::filesystem::path &path);

    void save_policy(const PolicyCheckpoint &checkpoint, const std::filesystem::path &path);
    PolicyCheckpoint load_policy(const std::filesystem::path &path);

    /// Header of any checkpoint file, without reading parameters.
    nlohmann::json read_checkpoint_header(const std::filesystem::path &path);
}
