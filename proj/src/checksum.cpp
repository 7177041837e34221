#include "hsomrl/checksum.h"

#include <array>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "hsomrl/errors.h"

namespace hsomrl
{
    std::string sha256_hex(std::string_view bytes)
    {
        std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
        unsigned int len = 0;
        if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
            throw Error("sha256: digest failed");
        }
        static constexpr char kHex[] = "0123456789abcdef";
        std::string out;
        out.reserve(2 * len);
        for (unsigned int i = 0; i < len; ++i) {
            out.push_back(kHex[digest[i] >> 4]);
            out.push_back(kHex[digest[i] & 0xf]);
        }
        return out;
    }

    std::string sha256_file(const std::filesystem::path &path)
    {
        return sha256_hex(read_file(path));
    }

    std::string read_file(const std::filesystem::path &path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw IoError("cannot open " + path.string());
        }
        std::ostringstream ss;
        ss << in.rdbuf();
        return std::move(ss).str();
    }

    void write_file(const std::filesystem::path &path, std::string_view bytes)
    {
        std::filesystem::path tmp = path;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) {
                throw IoError("cannot write " + tmp.string());
            }
            out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
            if (!out) {
                throw IoError("write failed for " + tmp.string());
            }
        }
        std::error_code ec;
        std::filesystem::rename(tmp, path, ec);
        if (ec) {
            throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
        }
    }
}
