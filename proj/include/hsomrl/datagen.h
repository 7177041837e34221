#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hsomrl/envs.h"

namespace hsomrl
{
    struct Trajectory
    {
        int task_id = 0;
        std::vector<Transition> transitions;
        /// Undiscounted sum of rewards, accumulated front to back.
        double ret = 0.0;
        /// Generation-time noise tier; 0 is the cleanest controller.
        int quality_level = 0;

        friend bool operator==(const Trajectory &, const Trajectory &) = default;
    };

    double sum_rewards(std::span<const Transition> transitions);

    /// Throws ChainError if s_next of step t differs from s of step t+1, and
    /// FormatError if the stored return is not the exact reward sum.
    void validate_trajectory(const Trajectory &trajectory);

    /// Noise weight of a quality level: l / (levels - 1), or 0 with a single level.
    double level_noise(std::size_t level, std::size_t levels);

    /// Rolls out `levels * n_per_level` trajectories, level-major. Level l uses
    /// a = (1 - eps_l) * optimal_action + eps_l * U(-1, 1)^d.
    std::vector<Trajectory> generate(const TaskSpec &task, std::size_t n_per_level, std::size_t levels,
                                     std::uint64_t seed, const EnvConfig &env = {});

    /// Stable ascending sort by return, then contiguous split. The first
    /// `size % n_buckets` buckets take one extra trajectory.
    std::vector<std::vector<Trajectory>> bucket_by_return(std::span<const Trajectory> buffer,
                                                          std::size_t n_buckets = 10);

    struct OfflineDataset
    {
        Family family = Family::PointRobotGoal;
        EnvConfig env;
        std::vector<TaskSpec> tasks;
        /// buffers[i] holds the trajectories of tasks[i].
        std::vector<std::vector<Trajectory>> buffers;
        std::uint64_t seed = 0;
        std::size_t levels = 0;
        std::size_t n_per_level = 0;

        std::size_t trajectory_count() const;
        /// Index into `tasks` for a task id; throws if absent.
        std::size_t task_index(int task_id) const;

        friend bool operator==(const OfflineDataset &, const OfflineDataset &) = default;
    };

    /// Generates every task's buffer (in parallel) and merges in task order.
    OfflineDataset generate_dataset(Family family, std::vector<TaskSpec> tasks, std::size_t n_per_level,
                                    std::size_t levels, std::uint64_t seed, const EnvConfig &env = {});

    /// Checks dataset-level invariants: ids, equal buffer sizes, trajectory chains.
    void validate_dataset(const OfflineDataset &dataset);
}
