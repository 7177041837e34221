#include "hsomrl/datagen.h"

#include <algorithm>
#include <numeric>
#include <string>

#include "hsomrl/errors.h"
#include "hsomrl/rng.h"

namespace hsomrl
{
    double sum_rewards(std::span<const Transition> transitions)
    {
        double total = 0.0;
        for (const Transition &t : transitions) {
            total += t.r;
        }
        return total;
    }

    void validate_trajectory(const Trajectory &trajectory)
    {
        const auto &tr = trajectory.transitions;
        for (std::size_t t = 0; t + 1 < tr.size(); ++t) {
            if (tr[t].s_next != tr[t + 1].s) {
                throw ChainError("trajectory of task " + std::to_string(trajectory.task_id) + ": s_next at step "
                                 + std::to_string(t) + " does not match s at step " + std::to_string(t + 1));
            }
        }
        if (sum_rewards(tr) != trajectory.ret) {
            throw FormatError("trajectory of task " + std::to_string(trajectory.task_id)
                              + ": stored return does not equal the reward sum");
        }
    }

    double level_noise(std::size_t level, std::size_t levels)
    {
        if (levels <= 1) {
            return 0.0;
        }
        return static_cast<double>(level) / static_cast<double>(levels - 1);
    }

    std::vector<Trajectory> generate(const TaskSpec &task, std::size_t n_per_level, std::size_t levels,
                                     std::uint64_t seed, const EnvConfig &env)
    {
        if (n_per_level < 1 || levels < 1) {
            throw PreconditionError("generate: n_per_level and levels must be >= 1");
        }
        validate_task(task, env);
        const std::size_t adim = action_dim(task.family);
        std::vector<Trajectory> out;
        out.reserve(levels * n_per_level);
        for (std::size_t level = 0; level < levels; ++level) {
            const double eps = level_noise(level, levels);
            for (std::size_t n = 0; n < n_per_level; ++n) {
                const std::uint64_t index = level * n_per_level + n;
                Rng noise(derive_seed(seed, 0xda7a, index));
                EnvState state = reset(task, derive_seed(seed, 0x5e7, index), env);

                Trajectory traj;
                traj.task_id = task.task_id;
                traj.quality_level = static_cast<int>(level);
                traj.transitions.reserve(static_cast<std::size_t>(env.horizon));
                while (state.step_index < state.horizon) {
                    const std::vector<double> opt = optimal_action(task, state, env);
                    std::vector<double> action(adim);
                    for (std::size_t d = 0; d < adim; ++d) {
                        action[d] = (1.0 - eps) * opt[d] + eps * uniform(noise, -1.0, 1.0);
                    }
                    action = clip_action(action);
                    StepResult next = step(task, state, action, env);
                    traj.transitions.push_back(
                        Transition{state.observation, action, next.state.observation, next.reward});
                    state = std::move(next.state);
                }
                traj.ret = sum_rewards(traj.transitions);
                out.push_back(std::move(traj));
            }
        }
        return out;
    }

    std::vector<std::vector<Trajectory>> bucket_by_return(std::span<const Trajectory> buffer, std::size_t n_buckets)
    {
        if (buffer.empty()) {
            throw PreconditionError("bucket_by_return: empty buffer");
        }
        if (n_buckets < 1 || buffer.size() < n_buckets) {
            throw PreconditionError("bucket_by_return: buffer of " + std::to_string(buffer.size())
                                    + " trajectories cannot fill " + std::to_string(n_buckets) + " buckets");
        }
        std::vector<std::size_t> order(buffer.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return buffer[a].ret < buffer[b].ret; });

        const std::size_t base = buffer.size() / n_buckets;
        const std::size_t extra = buffer.size() % n_buckets;
        std::vector<std::vector<Trajectory>> buckets(n_buckets);
        std::size_t pos = 0;
        for (std::size_t k = 0; k < n_buckets; ++k) {
            const std::size_t count = base + (k < extra ? 1 : 0);
            buckets[k].reserve(count);
            for (std::size_t i = 0; i < count; ++i) {
                buckets[k].push_back(buffer[order[pos++]]);
            }
        }
        return buckets;
    }

    std::size_t OfflineDataset::trajectory_count() const
    {
        std::size_t n = 0;
        for (const auto &b : buffers) {
            n += b.size();
        }
        return n;
    }

    std::size_t OfflineDataset::task_index(int task_id) const
    {
        for (std::size_t i = 0; i < tasks.size(); ++i) {
            if (tasks[i].task_id == task_id) {
                return i;
            }
        }
        throw PreconditionError("dataset has no task with id " + std::to_string(task_id));
    }

    OfflineDataset generate_dataset(Family family, std::vector<TaskSpec> tasks, std::size_t n_per_level,
                                    std::size_t levels, std::uint64_t seed, const EnvConfig &env)
    {
        OfflineDataset ds;
        ds.family = family;
        ds.env = env;
        ds.seed = seed;
        ds.levels = levels;
        ds.n_per_level = n_per_level;
        for (const TaskSpec &t : tasks) {
            if (t.family != family) {
                throw PreconditionError("generate_dataset: task family does not match dataset family");
            }
        }
        ds.tasks = std::move(tasks);
        ds.buffers.resize(ds.tasks.size());

        const auto n_tasks = static_cast<std::int64_t>(ds.tasks.size());
        std::vector<std::string> errors(ds.tasks.size());
#pragma omp parallel for schedule(dynamic)
        for (std::int64_t i = 0; i < n_tasks; ++i) {
            const auto idx = static_cast<std::size_t>(i);
            try {
                const TaskSpec &task = ds.tasks[idx];
                ds.buffers[idx] = generate(task, n_per_level, levels,
                                           derive_seed(seed, 0x9e4, static_cast<std::uint64_t>(task.task_id)), env);
            }
            catch (const std::exception &e) {
                errors[idx] = e.what();
            }
        }
        for (const std::string &e : errors) {
            if (!e.empty()) {
                throw PreconditionError("generate_dataset: " + e);
            }
        }
        return ds;
    }

    void validate_dataset(const OfflineDataset &dataset)
    {
        if (dataset.buffers.size() != dataset.tasks.size()) {
            throw CountMismatchError("dataset has " + std::to_string(dataset.tasks.size()) + " tasks but "
                                     + std::to_string(dataset.buffers.size()) + " buffers");
        }
        for (std::size_t i = 0; i < dataset.tasks.size(); ++i) {
            validate_task(dataset.tasks[i], dataset.env);
            if (dataset.buffers[i].size() != dataset.buffers.front().size()) {
                throw CountMismatchError("per-task buffer sizes differ");
            }
            for (const Trajectory &t : dataset.buffers[i]) {
                if (t.task_id != dataset.tasks[i].task_id) {
                    throw SchemaError("trajectory with task_id " + std::to_string(t.task_id) + " stored under task "
                                      + std::to_string(dataset.tasks[i].task_id));
                }
                validate_trajectory(t);
            }
        }
    }
}
