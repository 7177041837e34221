#include "hsomrl/envs.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hsomrl/errors.h"
#include "hsomrl/rng.h"

namespace hsomrl
{
    namespace
    {
        constexpr double kUnitTolerance = 1e-9;

        TaskSpec draw_task(Family family, Rng &rng, const EnvConfig &config)
        {
            TaskSpec t;
            t.family = family;
            switch (family) {
            case Family::PointRobotGoal:
            case Family::DirWorld: {
                const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
                t.params = {std::cos(angle), std::sin(angle)};
                break;
            }
            case Family::LineVel:
                t.params = {uniform(rng, config.speed_lo, config.speed_hi)};
                break;
            }
            return t;
        }

        void check_action(const TaskSpec &task, std::span<const double> action)
        {
            if (action.size() != action_dim(task.family)) {
                throw ShapeError("step: action has " + std::to_string(action.size()) + " dims, "
                                 + std::string(family_name(task.family)) + " expects "
                                 + std::to_string(action_dim(task.family)));
            }
        }
    }

    std::string_view family_name(Family f)
    {
        switch (f) {
        case Family::PointRobotGoal:
            return "PointRobotGoal";
        case Family::LineVel:
            return "LineVel";
        case Family::DirWorld:
            return "DirWorld";
        }
        return "unknown";
    }

    std::string valid_family_names()
    {
        return "PointRobotGoal, LineVel, DirWorld";
    }

    Family parse_family(std::string_view name)
    {
        for (Family f : {Family::PointRobotGoal, Family::LineVel, Family::DirWorld}) {
            if (family_name(f) == name) {
                return f;
            }
        }
        throw PreconditionError("unknown env family '" + std::string(name) + "'; valid families: "
                                + valid_family_names());
    }

    std::size_t observation_dim(Family f)
    {
        switch (f) {
        case Family::PointRobotGoal:
            return 2;
        case Family::LineVel:
            return 2;
        case Family::DirWorld:
            return 4;
        }
        return 0;
    }

    std::size_t action_dim(Family f)
    {
        return f == Family::LineVel ? 1 : 2;
    }

    void validate_task(const TaskSpec &task, const EnvConfig &config)
    {
        const std::string name(family_name(task.family));
        switch (task.family) {
        case Family::PointRobotGoal:
        case Family::DirWorld: {
            if (task.params.size() != 2) {
                throw PreconditionError(name + " task needs 2 parameters");
            }
            const double n = std::hypot(task.params[0], task.params[1]);
            if (std::abs(n - 1.0) > kUnitTolerance) {
                throw PreconditionError(name + " task parameter must have unit norm, got " + std::to_string(n));
            }
            break;
        }
        case Family::LineVel:
            if (task.params.size() != 1) {
                throw PreconditionError("LineVel task needs 1 parameter");
            }
            if (task.params[0] < config.speed_lo || task.params[0] > config.speed_hi) {
                throw PreconditionError("LineVel target speed outside configured range");
            }
            break;
        }
    }

    TaskSplit sample_tasks(Family family, std::size_t n_train, std::size_t n_test, std::uint64_t seed,
                           const EnvConfig &config)
    {
        if (n_train < 1 || n_test < 1) {
            throw PreconditionError("sample_tasks: need at least one train and one test task");
        }
        Rng rng(derive_seed(seed, 0x7a5c));
        std::vector<TaskSpec> all;
        while (all.size() < n_train + n_test) {
            TaskSpec t = draw_task(family, rng, config);
            const bool duplicate = std::any_of(all.begin(), all.end(),
                                               [&](const TaskSpec &o) { return o.params == t.params; });
            if (duplicate) {
                continue;
            }
            t.task_id = static_cast<int>(all.size());
            all.push_back(std::move(t));
        }
        TaskSplit split;
        split.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
        split.test.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train), all.end());
        return split;
    }

    EnvState reset(const TaskSpec &task, std::uint64_t seed, const EnvConfig &config)
    {
        EnvState state;
        state.horizon = config.horizon;
        state.step_index = 0;
        Rng rng(derive_seed(seed, 0x4e57));
        const double j = config.reset_jitter;
        switch (task.family) {
        case Family::PointRobotGoal:
            state.observation = {0.0, 0.0};
            break;
        case Family::LineVel:
            state.observation = {uniform(rng, -j, j), 0.0};
            break;
        case Family::DirWorld: {
            const double x = uniform(rng, -j, j);
            const double y = uniform(rng, -j, j);
            state.observation = {x, y, 0.0, 0.0};
            break;
        }
        }
        return state;
    }

    std::vector<double> clip_action(std::span<const double> action)
    {
        std::vector<double> out(action.begin(), action.end());
        for (double &v : out) {
            v = std::clamp(v, -1.0, 1.0);
        }
        return out;
    }

    StepResult step(const TaskSpec &task, const EnvState &state, std::span<const double> action,
                    const EnvConfig &config)
    {
        check_action(task, action);
        if (state.step_index >= state.horizon) {
            throw PreconditionError("step: episode already reached its horizon of " + std::to_string(state.horizon));
        }
        const std::vector<double> a = clip_action(action);
        const double dt = config.dt;
        const auto &o = state.observation;
        StepResult out;
        out.state.horizon = state.horizon;
        out.state.step_index = state.step_index + 1;
        switch (task.family) {
        case Family::PointRobotGoal: {
            const double x = o[0] + dt * a[0];
            const double y = o[1] + dt * a[1];
            out.state.observation = {x, y};
            out.reward = -std::hypot(x - task.params[0], y - task.params[1]);
            break;
        }
        case Family::LineVel: {
            const double v = config.drag * o[1] + dt * a[0];
            const double x = o[0] + dt * v;
            out.state.observation = {x, v};
            out.reward = -std::abs(v - task.params[0]);
            break;
        }
        case Family::DirWorld: {
            const double vx = config.drag * o[2] + dt * a[0];
            const double vy = config.drag * o[3] + dt * a[1];
            out.state.observation = {o[0] + dt * vx, o[1] + dt * vy, vx, vy};
            out.reward = vx * task.params[0] + vy * task.params[1];
            break;
        }
        }
        return out;
    }

    std::vector<double> optimal_action(const TaskSpec &task, const EnvState &state, const EnvConfig &config)
    {
        const auto &o = state.observation;
        switch (task.family) {
        case Family::PointRobotGoal: {
            const double dx = task.params[0] - o[0];
            const double dy = task.params[1] - o[1];
            const double d = std::hypot(dx, dy);
            if (d == 0.0) {
                return {0.0, 0.0};
            }
            // Unit speed toward the goal, slowing to land exactly on it in the final step.
            const double scale = 1.0 / std::max(d, config.dt);
            return clip_action(std::vector<double>{dx * scale, dy * scale});
        }
        case Family::LineVel:
            return clip_action(std::vector<double>{(task.params[0] - o[1]) / config.dt});
        case Family::DirWorld: {
            const double m = std::max(std::abs(task.params[0]), std::abs(task.params[1]));
            return {task.params[0] / m, task.params[1] / m};
        }
        }
        return {};
    }
}
