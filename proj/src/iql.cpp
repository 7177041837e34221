#include "hsomrl/iql.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

#include "hsomrl/checksum.h"
#include "hsomrl/contrastive.h"
#include "hsomrl/errors.h"
#include "hsomrl/ops.h"
#include "hsomrl/rng.h"

namespace hsomrl
{
    double expectile_loss(double x, double tau)
    {
        const double weight = std::abs(tau - (x < 0.0 ? 1.0 : 0.0));
        return weight * x * x;
    }

    IqlAgent::IqlAgent(IqlDims dims, std::uint64_t seed) : dims_{dims}
    {
        Rng rng(derive_seed(seed, 0x1c1));
        const std::size_t hidden[] = {dims.hidden, dims.hidden};
        const std::size_t sz = dims.obs_dim + dims.context_dim;
        value_net_ = Mlp(value_params_, "value", sz, hidden, 1, Activation::Relu, rng);
        q_net_ = Mlp(q_params_, "q", sz + dims.act_dim, hidden, 1, Activation::Relu, rng);
        policy_net_ = Mlp(policy_params_, "policy", sz, hidden, dims.act_dim, Activation::Relu, rng);
        q_target_params_ = q_params_;
    }

    Var IqlAgent::value(std::span<const Var> bound, Var state_context) const
    {
        return value_net_.forward(bound, state_context);
    }

    Var IqlAgent::q(std::span<const Var> bound, Var state_context_action) const
    {
        return q_net_.forward(bound, state_context_action);
    }

    Var IqlAgent::policy_mean(std::span<const Var> bound, Var state_context) const
    {
        return ops::tanh(policy_net_.forward(bound, state_context));
    }

    Matrix IqlAgent::act(const Matrix &state_context) const
    {
        Matrix out = policy_net_.evaluate(policy_params_, state_context);
        for (double &v : out.data()) {
            v = std::tanh(v);
        }
        return out;
    }

    std::vector<double> IqlAgent::act(std::span<const double> observation, std::span<const double> context) const
    {
        if (observation.size() != dims_.obs_dim || context.size() != dims_.context_dim) {
            throw ShapeError("IqlAgent::act: got observation of " + std::to_string(observation.size())
                             + " and context of " + std::to_string(context.size()) + " dims, policy expects "
                             + std::to_string(dims_.obs_dim) + " and " + std::to_string(dims_.context_dim));
        }
        Matrix x(1, observation.size() + context.size());
        std::copy(context.begin(), context.end(),
                  std::copy(observation.begin(), observation.end(), x.row(0).begin()));
        const Matrix a = act(x);
        return {a.data().begin(), a.data().end()};
    }

    void IqlAgent::polyak_update(double rate)
    {
        auto &target = q_target_params_.values();
        const auto &source = q_params_.values();
        for (std::size_t i = 0; i < target.size(); ++i) {
            auto t = target[i].data();
            auto s = source[i].data();
            for (std::size_t k = 0; k < t.size(); ++k) {
                t[k] = (1.0 - rate) * t[k] + rate * s[k];
            }
        }
    }

    IqlVars bind_agent(Graph &graph, const IqlAgent &agent, IqlTrainable trainable)
    {
        return IqlVars{agent.value_params().bind(graph, trainable.value), agent.q_params().bind(graph, trainable.q),
                       agent.q_target_params().bind(graph, trainable.q_target),
                       agent.policy_params().bind(graph, trainable.policy)};
    }

    namespace
    {
        Var state_context(Graph &graph, const IqlBatch &batch)
        {
            const Matrix *parts[] = {&batch.s, &batch.z};
            return graph.constant(hconcat(parts));
        }

        Var state_context_action(Graph &graph, const IqlBatch &batch)
        {
            const Matrix *parts[] = {&batch.s, &batch.z, &batch.a};
            return graph.constant(hconcat(parts));
        }

        Var next_state_context(Graph &graph, const IqlBatch &batch)
        {
            const Matrix *parts[] = {&batch.s_next, &batch.z};
            return graph.constant(hconcat(parts));
        }

        void check_batch(const IqlBatch &batch, const IqlDims &dims)
        {
            const std::size_t n = batch.s.rows();
            const bool ok = n > 0 && batch.s.cols() == dims.obs_dim && batch.s_next.cols() == dims.obs_dim
                            && batch.z.cols() == dims.context_dim && batch.a.cols() == dims.act_dim
                            && batch.r.cols() == 1 && batch.terminal.cols() == 1 && batch.z.rows() == n
                            && batch.a.rows() == n && batch.r.rows() == n && batch.s_next.rows() == n
                            && batch.terminal.rows() == n;
            if (!ok) {
                throw ShapeError("IQL batch shapes do not match agent dims (obs " + std::to_string(dims.obs_dim)
                                 + ", context " + std::to_string(dims.context_dim) + ", action "
                                 + std::to_string(dims.act_dim) + ")");
            }
        }
    }

    Var value_loss(Graph &graph, const IqlAgent &agent, const IqlVars &vars, const IqlBatch &batch, double tau)
    {
        if (!(tau > 0.0 && tau < 1.0)) {
            throw PreconditionError("value_loss: expectile must lie in (0, 1)");
        }
        check_batch(batch, agent.dims());
        const Var q_target = graph.stop_gradient(agent.q(vars.q_target, state_context_action(graph, batch)));
        const Var v = agent.value(vars.value, state_context(graph, batch));
        const Var diff = ops::sub(q_target, v);
        Matrix weights(diff.rows(), 1);
        for (std::size_t i = 0; i < weights.rows(); ++i) {
            weights(i, 0) = std::abs(tau - (diff.value()(i, 0) < 0.0 ? 1.0 : 0.0));
        }
        return ops::mean(ops::elementwise_mul(graph.constant(std::move(weights)), ops::square(diff)));
    }

    Var q_loss(Graph &graph, const IqlAgent &agent, const IqlVars &vars, const IqlBatch &batch, double gamma)
    {
        check_batch(batch, agent.dims());
        const Var v_next = graph.stop_gradient(agent.value(vars.value, next_state_context(graph, batch)));
        Matrix target(batch.r.rows(), 1);
        for (std::size_t i = 0; i < target.rows(); ++i) {
            const double bootstrap = batch.terminal(i, 0) != 0.0 ? 0.0 : gamma * v_next.value()(i, 0);
            target(i, 0) = batch.r(i, 0) + bootstrap;
        }
        const Var q = agent.q(vars.q, state_context_action(graph, batch));
        return ops::mean(ops::square(ops::sub(q, graph.constant(std::move(target)))));
    }

    Var policy_loss(Graph &graph, const IqlAgent &agent, const IqlVars &vars, const IqlBatch &batch, double beta,
                    double clip, double policy_std)
    {
        if (!(beta > 0.0) || !(policy_std > 0.0)) {
            throw PreconditionError("policy_loss: temperature and policy std must be > 0");
        }
        check_batch(batch, agent.dims());
        const Var sz = state_context(graph, batch);
        const Var q_target = graph.stop_gradient(agent.q(vars.q_target, state_context_action(graph, batch)));
        const Var v = graph.stop_gradient(agent.value(vars.value, sz));
        Matrix weights(batch.s.rows(), 1);
        for (std::size_t i = 0; i < weights.rows(); ++i) {
            const double advantage = q_target.value()(i, 0) - v.value()(i, 0);
            weights(i, 0) = std::min(std::exp(beta * advantage), clip);
        }

        const Var mu = agent.policy_mean(vars.policy, sz);
        const double inv_two_var = 1.0 / (2.0 * policy_std * policy_std);
        const double log_norm =
            static_cast<double>(agent.dims().act_dim) * std::log(policy_std * std::sqrt(2.0 * std::numbers::pi));
        const Var sq = ops::row_sum(ops::square(ops::sub(graph.constant(batch.a), mu)));
        const Var log_prob = ops::add_scalar(ops::scalar_mul(sq, -inv_two_var), -log_norm);
        return ops::scalar_mul(ops::mean(ops::elementwise_mul(graph.constant(std::move(weights)), log_prob)), -1.0);
    }

    namespace
    {
        std::vector<Matrix> collect(const Gradients &grads, std::span<const Var> bound)
        {
            std::vector<Matrix> out;
            out.reserve(bound.size());
            for (const Var &p : bound) {
                out.push_back(grads.of(p));
            }
            return out;
        }

        AdamConfig adam_config(const IqlConfig &c)
        {
            AdamConfig a;
            a.learning_rate = c.learning_rate;
            return a;
        }
    }

    IqlTrainer::IqlTrainer(IqlAgent &agent, const IqlConfig &config)
        : agent_{agent}, config_{config}, value_opt_{adam_config(config), agent.value_params().values()},
          q_opt_{adam_config(config), agent.q_params().values()},
          policy_opt_{adam_config(config), agent.policy_params().values()}
    {
        if (!(config.expectile > 0.0 && config.expectile < 1.0)) {
            throw PreconditionError("IQL expectile must lie in (0, 1)");
        }
        if (!(config.temperature > 0.0)) {
            throw PreconditionError("IQL temperature must be > 0");
        }
        if (!(config.discount > 0.0 && config.discount < 1.0)) {
            throw PreconditionError("IQL discount must lie in (0, 1)");
        }
    }

    IqlLossRecord IqlTrainer::step(const IqlBatch &batch)
    {
        IqlLossRecord rec;
        rec.step = steps_++;
        {
            Graph g;
            const IqlVars vars = bind_agent(g, agent_, {.value = true});
            const Var loss = value_loss(g, agent_, vars, batch, config_.expectile);
            value_opt_.step(agent_.value_params().values(), collect(g.backward(loss), vars.value));
            rec.v_loss = loss.value().scalar();
        }
        {
            Graph g;
            const IqlVars vars = bind_agent(g, agent_, {.q = true});
            const Var loss = q_loss(g, agent_, vars, batch, config_.discount);
            q_opt_.step(agent_.q_params().values(), collect(g.backward(loss), vars.q));
            rec.q_loss = loss.value().scalar();
        }
        {
            Graph g;
            const IqlVars vars = bind_agent(g, agent_, {.policy = true});
            const Var loss = policy_loss(g, agent_, vars, batch, config_.temperature, config_.weight_clip,
                                         config_.policy_std);
            policy_opt_.step(agent_.policy_params().values(), collect(g.backward(loss), vars.policy));
            rec.pi_loss = loss.value().scalar();
        }
        agent_.polyak_update(config_.polyak);
        return rec;
    }

    IqlTrainResult train_policy(const OfflineDataset &dataset, const ContextEncoder &encoder, const IqlConfig &config,
                                std::uint64_t seed)
    {
        const EncoderDims &ed = encoder.dims();
        if (ed.obs_dim != observation_dim(dataset.family) || ed.act_dim != action_dim(dataset.family)) {
            throw ShapeError("train_policy: encoder expects obs/action dims " + std::to_string(ed.obs_dim) + "/"
                             + std::to_string(ed.act_dim) + " but the " + std::string(family_name(dataset.family))
                             + " dataset has " + std::to_string(observation_dim(dataset.family)) + "/"
                             + std::to_string(action_dim(dataset.family)));
        }
        if (config.context_bank < 1 || config.batch_size < 1) {
            throw PreconditionError("train_policy: context_bank and batch_size must be >= 1");
        }

        std::vector<const Trajectory *> trajectories;
        for (const auto &buffer : dataset.buffers) {
            for (const Trajectory &t : buffer) {
                trajectories.push_back(&t);
            }
        }
        if (trajectories.empty()) {
            throw PreconditionError("train_policy: empty dataset");
        }

        // Context bank: `context_bank` random segments per trajectory through the frozen encoder.
        Rng bank_rng(derive_seed(seed, 0xba4));
        std::vector<Segment> segments;
        segments.reserve(trajectories.size() * config.context_bank);
        for (const Trajectory *t : trajectories) {
            for (std::size_t k = 0; k < config.context_bank; k += 2) {
                const auto [a, b] = augment(t->transitions, config.min_segment, config.max_segment, bank_rng);
                segments.push_back(a);
                if (k + 1 < config.context_bank) {
                    segments.push_back(b);
                }
            }
        }
        const Matrix bank = encoder.encode_contexts(segments);

        IqlDims dims{ed.obs_dim, ed.act_dim, ed.context_dim, config.hidden};
        IqlTrainResult result{IqlAgent(dims, derive_seed(seed, 0x1)), {}};
        IqlTrainer trainer(result.agent, config);
        Rng rng(derive_seed(seed, 0x2));
        const std::size_t n = config.batch_size;

        for (std::size_t step = 0; step < config.steps; ++step) {
            IqlBatch batch{Matrix(n, dims.obs_dim), Matrix(n, dims.context_dim), Matrix(n, dims.act_dim),
                           Matrix(n, 1), Matrix(n, dims.obs_dim), Matrix(n, 1)};
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t ti = uniform_index(rng, trajectories.size());
                const Trajectory &traj = *trajectories[ti];
                const std::size_t t = uniform_index(rng, traj.transitions.size());
                const std::size_t k = uniform_index(rng, config.context_bank);
                const Transition &tr = traj.transitions[t];
                std::copy(tr.s.begin(), tr.s.end(), batch.s.row(i).begin());
                std::copy(tr.a.begin(), tr.a.end(), batch.a.row(i).begin());
                std::copy(tr.s_next.begin(), tr.s_next.end(), batch.s_next.row(i).begin());
                const auto zrow = bank.row(ti * config.context_bank + k);
                std::copy(zrow.begin(), zrow.end(), batch.z.row(i).begin());
                batch.r(i, 0) = tr.r;
                batch.terminal(i, 0) = t + 1 == traj.transitions.size() ? 1.0 : 0.0;
            }
            result.history.push_back(trainer.step(batch));
        }
        return result;
    }

    void write_iql_history_csv(const std::filesystem::path &path, std::span<const IqlLossRecord> history)
    {
        std::string body = "step,v_loss,q_loss,pi_loss\n";
        char buf[160];
        for (const auto &r : history) {
            std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", r.step, r.v_loss, r.q_loss, r.pi_loss);
            body += buf;
        }
        write_file(path, body);
    }
}
