#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "hsomrl/datagen.h"

// On-disk dataset layout:
//
//   <dir>/manifest.json   family, env constants, seed, generation config,
//                         tasks (id, params, count, file, sha256), format_version = 1
//   <dir>/task_<id>.jsonl one trajectory per line:
//     {"task_id": 3, "quality_level": 0, "return": -4.5,
//      "transitions": [[[s...], [a...], [s_next...], r], ...]}
namespace hsomrl
{
    inline constexpr int kDatasetFormatVersion = 1;

    std::string trajectory_to_json_line(const Trajectory &trajectory);
    /// Throws SchemaError on malformed lines; does not check chains.
    Trajectory trajectory_from_json_line(std::string_view line, Family family);

    void save_dataset(const OfflineDataset &dataset, const std::filesystem::path &dir);

    /// Validates schema, chains, manifest counts, then file checksums.
    OfflineDataset load_dataset(const std::filesystem::path &dir);
}
