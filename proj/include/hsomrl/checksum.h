#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace hsomrl
{
    /// Lower-case hex SHA-256 digest.
    std::string sha256_hex(std::string_view bytes);
    std::string sha256_file(const std::filesystem::path &path);

    std::string read_file(const std::filesystem::path &path);
    /// Writes through a temporary sibling and renames, so readers never see a partial file.
    void write_file(const std::filesystem::path &path, std::string_view bytes);
}
