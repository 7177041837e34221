#include "hsomrl/dataset_io.h"

#include <sstream>

#include <json.hpp>

#include "hsomrl/checksum.h"
#include "hsomrl/errors.h"

namespace hsomrl
{
    namespace
    {
        using ordered_json = nlohmann::ordered_json;

        std::string task_file_name(int task_id)
        {
            return "task_" + std::to_string(task_id) + ".jsonl";
        }

        std::vector<double> read_vector(const ordered_json &j, std::size_t expected, const char *what)
        {
            if (!j.is_array() || j.size() != expected) {
                throw SchemaError(std::string("transition field '") + what + "' must be an array of "
                                  + std::to_string(expected) + " numbers");
            }
            std::vector<double> out;
            out.reserve(expected);
            for (const auto &v : j) {
                if (!v.is_number()) {
                    throw SchemaError(std::string("transition field '") + what + "' holds a non-number");
                }
                out.push_back(v.get<double>());
            }
            return out;
        }

        template <typename T>
        T require(const ordered_json &j, const char *key)
        {
            if (!j.is_object() || !j.contains(key)) {
                throw SchemaError(std::string("missing key '") + key + "'");
            }
            try {
                return j.at(key).get<T>();
            }
            catch (const nlohmann::json::exception &e) {
                throw SchemaError(std::string("bad value for '") + key + "': " + e.what());
            }
        }
    }

    std::string trajectory_to_json_line(const Trajectory &trajectory)
    {
        ordered_json j;
        j["task_id"] = trajectory.task_id;
        j["quality_level"] = trajectory.quality_level;
        j["return"] = trajectory.ret;
        ordered_json transitions = ordered_json::array();
        for (const Transition &t : trajectory.transitions) {
            transitions.push_back(ordered_json::array({t.s, t.a, t.s_next, t.r}));
        }
        j["transitions"] = std::move(transitions);
        return j.dump();
    }

    Trajectory trajectory_from_json_line(std::string_view line, Family family)
    {
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        }
        catch (const nlohmann::json::parse_error &e) {
            throw SchemaError(std::string("malformed trajectory line: ") + e.what());
        }
        Trajectory traj;
        traj.task_id = require<int>(j, "task_id");
        traj.quality_level = require<int>(j, "quality_level");
        traj.ret = require<double>(j, "return");
        const auto transitions = require<ordered_json>(j, "transitions");
        if (!transitions.is_array()) {
            throw SchemaError("'transitions' must be an array");
        }
        const std::size_t sdim = observation_dim(family);
        const std::size_t adim = action_dim(family);
        traj.transitions.reserve(transitions.size());
        for (const auto &t : transitions) {
            if (!t.is_array() || t.size() != 4 || !t[3].is_number()) {
                throw SchemaError("each transition must be [s, a, s_next, r]");
            }
            traj.transitions.push_back(Transition{read_vector(t[0], sdim, "s"), read_vector(t[1], adim, "a"),
                                                  read_vector(t[2], sdim, "s_next"), t[3].get<double>()});
        }
        return traj;
    }

    void save_dataset(const OfflineDataset &dataset, const std::filesystem::path &dir)
    {
        validate_dataset(dataset);
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec) {
            throw IoError("cannot create " + dir.string() + ": " + ec.message());
        }

        ordered_json tasks = ordered_json::array();
        for (std::size_t i = 0; i < dataset.tasks.size(); ++i) {
            const TaskSpec &task = dataset.tasks[i];
            std::string body;
            for (const Trajectory &t : dataset.buffers[i]) {
                body += trajectory_to_json_line(t);
                body += '\n';
            }
            const std::string file = task_file_name(task.task_id);
            write_file(dir / file, body);
            tasks.push_back({{"task_id", task.task_id},
                             {"params", task.params},
                             {"count", dataset.buffers[i].size()},
                             {"file", file},
                             {"sha256", sha256_hex(body)}});
        }

        ordered_json manifest;
        manifest["format_version"] = kDatasetFormatVersion;
        manifest["family"] = std::string(family_name(dataset.family));
        manifest["horizon"] = dataset.env.horizon;
        manifest["dt"] = dataset.env.dt;
        manifest["drag"] = dataset.env.drag;
        manifest["speed_lo"] = dataset.env.speed_lo;
        manifest["speed_hi"] = dataset.env.speed_hi;
        manifest["reset_jitter"] = dataset.env.reset_jitter;
        manifest["seed"] = dataset.seed;
        manifest["levels"] = dataset.levels;
        manifest["n_per_level"] = dataset.n_per_level;
        manifest["tasks"] = std::move(tasks);
        write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    }

    OfflineDataset load_dataset(const std::filesystem::path &dir)
    {
        const auto manifest_path = dir / "manifest.json";
        if (!std::filesystem::exists(manifest_path)) {
            throw MissingManifestError("no manifest.json in " + dir.string());
        }
        ordered_json manifest;
        try {
            manifest = ordered_json::parse(read_file(manifest_path));
        }
        catch (const nlohmann::json::parse_error &e) {
            throw SchemaError(std::string("malformed manifest: ") + e.what());
        }
        const int version = require<int>(manifest, "format_version");
        if (version != kDatasetFormatVersion) {
            throw SchemaError("unsupported dataset format_version " + std::to_string(version));
        }

        OfflineDataset ds;
        try {
            ds.family = parse_family(require<std::string>(manifest, "family"));
        }
        catch (const PreconditionError &e) {
            throw SchemaError(e.what());
        }
        ds.env.horizon = require<int>(manifest, "horizon");
        ds.env.dt = require<double>(manifest, "dt");
        ds.env.drag = require<double>(manifest, "drag");
        ds.env.speed_lo = require<double>(manifest, "speed_lo");
        ds.env.speed_hi = require<double>(manifest, "speed_hi");
        ds.env.reset_jitter = require<double>(manifest, "reset_jitter");
        ds.seed = require<std::uint64_t>(manifest, "seed");
        ds.levels = require<std::size_t>(manifest, "levels");
        ds.n_per_level = require<std::size_t>(manifest, "n_per_level");

        const auto tasks = require<ordered_json>(manifest, "tasks");
        if (!tasks.is_array()) {
            throw SchemaError("'tasks' must be an array");
        }
        std::vector<std::string> checksums;
        std::vector<std::string> bodies;
        for (const auto &entry : tasks) {
            TaskSpec task;
            task.family = ds.family;
            task.task_id = require<int>(entry, "task_id");
            task.params = require<std::vector<double>>(entry, "params");
            const auto count = require<std::size_t>(entry, "count");
            const auto file = require<std::string>(entry, "file");
            checksums.push_back(require<std::string>(entry, "sha256"));

            const auto path = dir / file;
            if (!std::filesystem::exists(path)) {
                throw IoError("dataset file missing: " + path.string());
            }
            bodies.push_back(read_file(path));
            std::vector<Trajectory> buffer;
            std::istringstream lines(bodies.back());
            std::string line;
            while (std::getline(lines, line)) {
                if (line.empty()) {
                    continue;
                }
                Trajectory t = trajectory_from_json_line(line, ds.family);
                if (t.task_id != task.task_id) {
                    throw SchemaError(file + " holds a trajectory of task " + std::to_string(t.task_id));
                }
                if (t.transitions.size() != static_cast<std::size_t>(ds.env.horizon)) {
                    throw SchemaError(file + " holds a trajectory of length " + std::to_string(t.transitions.size())
                                      + ", horizon is " + std::to_string(ds.env.horizon));
                }
                validate_trajectory(t);
                buffer.push_back(std::move(t));
            }
            if (buffer.size() != count) {
                throw CountMismatchError("manifest lists " + std::to_string(count) + " trajectories for task "
                                         + std::to_string(task.task_id) + " but " + file + " holds "
                                         + std::to_string(buffer.size()));
            }
            ds.tasks.push_back(std::move(task));
            ds.buffers.push_back(std::move(buffer));
        }
        for (std::size_t i = 0; i < bodies.size(); ++i) {
            if (sha256_hex(bodies[i]) != checksums[i]) {
                throw ChecksumError("checksum mismatch for task " + std::to_string(ds.tasks[i].task_id));
            }
        }
        validate_dataset(ds);
        return ds;
    }
}
