#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hsomrl
{
    /// Analytic task families. Tasks within a family differ only in their reward function.
    enum class Family
    {
        PointRobotGoal, ///< 2-D point mass; reward is minus the distance to a goal on the unit circle.
        LineVel,        ///< 1-D runner; reward is minus the gap to a target speed.
        DirWorld,       ///< 2-D runner; reward is velocity projected on a unit direction.
    };

    std::string_view family_name(Family f);
    /// Throws PreconditionError listing valid names for anything unknown.
    Family parse_family(std::string_view name);
    std::string valid_family_names();

    struct EnvConfig
    {
        int horizon = 60;
        double dt = 0.1;
        double drag = 0.95;
        double speed_lo = 0.5;
        double speed_hi = 1.5;
        double reset_jitter = 0.05;

        friend bool operator==(const EnvConfig &, const EnvConfig &) = default;
    };

    struct TaskSpec
    {
        Family family = Family::PointRobotGoal;
        /// goal (x, y) | target speed | direction (dx, dy)
        std::vector<double> params;
        int task_id = 0;

        friend bool operator==(const TaskSpec &, const TaskSpec &) = default;
    };

    struct TaskSplit
    {
        std::vector<TaskSpec> train;
        std::vector<TaskSpec> test;
    };

    struct EnvState
    {
        std::vector<double> observation;
        int step_index = 0;
        int horizon = 0;

        friend bool operator==(const EnvState &, const EnvState &) = default;
    };

    struct Transition
    {
        std::vector<double> s;
        std::vector<double> a;
        std::vector<double> s_next;
        double r = 0.0;

        friend bool operator==(const Transition &, const Transition &) = default;
    };

    struct StepResult
    {
        EnvState state;
        double reward = 0.0;
    };

    std::size_t observation_dim(Family f);
    std::size_t action_dim(Family f);

    /// I.i.d. uniform tasks; train tasks get ids [0, n_train), test tasks [n_train, n_train + n_test).
    TaskSplit sample_tasks(Family family, std::size_t n_train, std::size_t n_test, std::uint64_t seed,
                           const EnvConfig &config = {});

    EnvState reset(const TaskSpec &task, std::uint64_t seed, const EnvConfig &config = {});
    /// Actions are clipped per dimension to [-1, 1] before integration.
    StepResult step(const TaskSpec &task, const EnvState &state, std::span<const double> action,
                    const EnvConfig &config = {});
    /// Reference controller used to generate quality-controlled data.
    std::vector<double> optimal_action(const TaskSpec &task, const EnvState &state, const EnvConfig &config = {});

    std::vector<double> clip_action(std::span<const double> action);
    /// Validates family-specific parameter invariants.
    void validate_task(const TaskSpec &task, const EnvConfig &config = {});
}
