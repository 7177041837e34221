#include "hsomrl/checkpoint.h"

#include <bit>
#include <cstring>
#include <string_view>
#include <vector>

#include "hsomrl/checksum.h"
#include "hsomrl/errors.h"

namespace hsomrl
{
    namespace
    {
        static_assert(std::endian::native == std::endian::little, "checkpoints are written little-endian");

        constexpr std::string_view kMagic = "HSOMRLCK";

        template <class T>
        void put(std::string &out, T value)
        {
            char buf[sizeof(T)];
            std::memcpy(buf, &value, sizeof(T));
            out.append(buf, sizeof(T));
        }

        template <class T>
        T take(std::string_view bytes, std::size_t &pos, const std::filesystem::path &path)
        {
            if (pos + sizeof(T) > bytes.size()) {
                throw FormatError("checkpoint truncated: " + path.string());
            }
            T value;
            std::memcpy(&value, bytes.data() + pos, sizeof(T));
            pos += sizeof(T);
            return value;
        }

        nlohmann::ordered_json shapes(const ParamSet &params, const std::string &prefix)
        {
            nlohmann::ordered_json out = nlohmann::ordered_json::array();
            for (std::size_t i = 0; i < params.size(); ++i) {
                out.push_back({{"name", prefix + params.names()[i]},
                               {"rows", params[i].rows()},
                               {"cols", params[i].cols()}});
            }
            return out;
        }

        void write_checkpoint(const std::filesystem::path &path, nlohmann::ordered_json header,
                              std::initializer_list<std::pair<const ParamSet *, std::string>> sets)
        {
            nlohmann::ordered_json params = nlohmann::ordered_json::array();
            for (const auto &[set, prefix] : sets) {
                for (auto &entry : shapes(*set, prefix)) {
                    params.push_back(std::move(entry));
                }
            }
            header["params"] = std::move(params);
            const std::string text = header.dump();

            std::string out(kMagic);
            put<std::uint32_t>(out, kCheckpointVersion);
            put<std::uint64_t>(out, text.size());
            out += text;
            for (const auto &[set, prefix] : sets) {
                for (const Matrix &m : set->values()) {
                    out.append(reinterpret_cast<const char *>(m.data().data()), m.size() * sizeof(double));
                }
            }
            write_file(path, out);
        }

        struct RawCheckpoint
        {
            nlohmann::json header;
            std::string bytes;
            std::size_t body = 0;
        };

        RawCheckpoint read_raw(const std::filesystem::path &path, bool header_only)
        {
            if (!std::filesystem::exists(path)) {
                throw MissingInputError("checkpoint not found: " + path.string());
            }
            RawCheckpoint raw;
            raw.bytes = read_file(path);
            const std::string_view bytes = raw.bytes;
            if (bytes.substr(0, kMagic.size()) != kMagic) {
                throw FormatError("not a checkpoint file: " + path.string());
            }
            std::size_t pos = kMagic.size();
            const auto version = take<std::uint32_t>(bytes, pos, path);
            if (version != kCheckpointVersion) {
                throw FormatError("unsupported checkpoint version " + std::to_string(version) + " in " + path.string());
            }
            const auto length = take<std::uint64_t>(bytes, pos, path);
            if (pos + length > bytes.size()) {
                throw FormatError("checkpoint truncated: " + path.string());
            }
            try {
                raw.header = nlohmann::json::parse(bytes.substr(pos, length));
            }
            catch (const nlohmann::json::exception &e) {
                throw SchemaError("checkpoint header is not JSON: " + std::string(e.what()));
            }
            raw.body = pos + length;
            if (header_only) {
                raw.bytes.clear();
            }
            return raw;
        }

        /// Fills `sets` from the body, checking names and shapes against the header.
        void read_params(const RawCheckpoint &raw, const std::filesystem::path &path,
                         std::initializer_list<std::pair<ParamSet *, std::string>> sets)
        {
            const auto &entries = raw.header.at("params");
            std::size_t index = 0;
            std::size_t pos = raw.body;
            for (const auto &[set, prefix] : sets) {
                for (std::size_t i = 0; i < set->size(); ++i, ++index) {
                    Matrix &m = set->values()[i];
                    if (index >= entries.size()) {
                        throw SchemaError("checkpoint lists too few parameters: " + path.string());
                    }
                    const auto &e = entries[index];
                    const std::string expected = prefix + set->names()[i];
                    if (e.at("name").get<std::string>() != expected || e.at("rows").get<std::size_t>() != m.rows()
                        || e.at("cols").get<std::size_t>() != m.cols()) {
                        throw ShapeError("checkpoint parameter " + e.at("name").get<std::string>() + " ("
                                         + std::to_string(e.at("rows").get<std::size_t>()) + "x"
                                         + std::to_string(e.at("cols").get<std::size_t>()) + ") does not match "
                                         + expected + " " + shape_string(m));
                    }
                    const std::size_t n = m.size() * sizeof(double);
                    if (pos + n > raw.bytes.size()) {
                        throw FormatError("checkpoint truncated: " + path.string());
                    }
                    std::memcpy(m.data().data(), raw.bytes.data() + pos, n);
                    pos += n;
                }
            }
            if (index != entries.size() || pos != raw.bytes.size()) {
                throw SchemaError("checkpoint has trailing parameters or bytes: " + path.string());
            }
        }

        void expect_kind(const nlohmann::json &header, const std::string &kind, const std::filesystem::path &path)
        {
            if (!header.contains("kind") || header["kind"] != kind) {
                throw SchemaError(path.string() + " is not a " + kind + " checkpoint");
            }
        }
    }

    void save_encoder(const EncoderCheckpoint &checkpoint, const std::filesystem::path &path)
    {
        const EncoderDims &d = checkpoint.encoder.dims();
        nlohmann::ordered_json header;
        header["kind"] = "encoder";
        header["family"] = family_name(checkpoint.family);
        header["variant"] = checkpoint.variant;
        header["seed"] = checkpoint.seed;
        header["dims"] = {{"obs_dim", d.obs_dim},
                          {"act_dim", d.act_dim},
                          {"transition_dim", d.transition_dim},
                          {"hidden", d.hidden},
                          {"context_dim", d.context_dim},
                          {"projection_hidden", d.projection_hidden},
                          {"projection_dim", d.projection_dim}};
        write_checkpoint(path, std::move(header), {{&checkpoint.encoder.params(), ""}});
    }

    EncoderCheckpoint load_encoder(const std::filesystem::path &path)
    {
        const RawCheckpoint raw = read_raw(path, false);
        expect_kind(raw.header, "encoder", path);
        try {
            const auto &j = raw.header.at("dims");
            EncoderDims d;
            d.obs_dim = j.at("obs_dim").get<std::size_t>();
            d.act_dim = j.at("act_dim").get<std::size_t>();
            d.transition_dim = j.at("transition_dim").get<std::size_t>();
            d.hidden = j.at("hidden").get<std::size_t>();
            d.context_dim = j.at("context_dim").get<std::size_t>();
            d.projection_hidden = j.at("projection_hidden").get<std::size_t>();
            d.projection_dim = j.at("projection_dim").get<std::size_t>();
            EncoderCheckpoint out{ContextEncoder(d, 0), parse_family(raw.header.at("family").get<std::string>()),
                                  raw.header.at("variant").get<std::string>(),
                                  raw.header.at("seed").get<std::uint64_t>()};
            read_params(raw, path, {{&out.encoder.params(), ""}});
            return out;
        }
        catch (const nlohmann::json::exception &e) {
            throw SchemaError("encoder checkpoint header: " + std::string(e.what()));
        }
    }

    void save_policy(const PolicyCheckpoint &checkpoint, const std::filesystem::path &path)
    {
        const IqlDims &d = checkpoint.agent.dims();
        nlohmann::ordered_json header;
        header["kind"] = "policy";
        header["family"] = family_name(checkpoint.family);
        header["encoder_sha256"] = checkpoint.encoder_sha256;
        header["seed"] = checkpoint.seed;
        header["dims"] = {{"obs_dim", d.obs_dim}, {"act_dim", d.act_dim}, {"context_dim", d.context_dim},
                          {"hidden", d.hidden}};
        const IqlAgent &a = checkpoint.agent;
        write_checkpoint(path, std::move(header),
                         {{&a.value_params(), "value/"},
                          {&a.q_params(), "q/"},
                          {&a.q_target_params(), "q_target/"},
                          {&a.policy_params(), "policy/"}});
    }

    PolicyCheckpoint load_policy(const std::filesystem::path &path)
    {
        const RawCheckpoint raw = read_raw(path, false);
        expect_kind(raw.header, "policy", path);
        try {
            const auto &j = raw.header.at("dims");
            IqlDims d;
            d.obs_dim = j.at("obs_dim").get<std::size_t>();
            d.act_dim = j.at("act_dim").get<std::size_t>();
            d.context_dim = j.at("context_dim").get<std::size_t>();
            d.hidden = j.at("hidden").get<std::size_t>();
            PolicyCheckpoint out{IqlAgent(d, 0), parse_family(raw.header.at("family").get<std::string>()),
                                 raw.header.at("encoder_sha256").get<std::string>(),
                                 raw.header.at("seed").get<std::uint64_t>()};
            IqlAgent &a = out.agent;
            read_params(raw, path,
                        {{&a.value_params(), "value/"},
                         {&a.q_params(), "q/"},
                         {&a.q_target_params(), "q_target/"},
                         {&a.policy_params(), "policy/"}});
            return out;
        }
        catch (const nlohmann::json::exception &e) {
            throw SchemaError("policy checkpoint header: " + std::string(e.what()));
        }
    }

    nlohmann::json read_checkpoint_header(const std::filesystem::path &path)
    {
        return read_raw(path, true).header;
    }
}
