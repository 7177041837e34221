#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hsomrl/adam.h"
#include "hsomrl/errors.h"
#include "hsomrl/eval.h"
#include "hsomrl/iql.h"
#include "support.h"

using namespace hsomrl;

namespace
{
    IqlDims small_dims() { return IqlDims{2, 2, 3, 8}; }

    IqlBatch random_batch(Rng &rng, const IqlDims &d, std::size_t n)
    {
        IqlBatch b{testing::random_matrix(rng, n, d.obs_dim), testing::random_matrix(rng, n, d.context_dim),
                   testing::random_matrix(rng, n, d.act_dim), testing::random_matrix(rng, n, 1),
                   testing::random_matrix(rng, n, d.obs_dim), Matrix(n, 1)};
        for (std::size_t i = 0; i < n; ++i) {
            b.terminal(i, 0) = uniform01(rng) < 0.3 ? 1.0 : 0.0;
        }
        return b;
    }

    /// Zeroes the output layer and sets its bias: the network becomes constant.
    void make_constant(ParamSet &params, double c)
    {
        auto &v = params.values();
        v[v.size() - 2] = Matrix(v[v.size() - 2].rows(), v[v.size() - 2].cols());
        v.back() = Matrix(v.back().rows(), v.back().cols(), c);
    }

    /// Largest relative FD error of `loss` with respect to one network, all others constant.
    double fd_error(const IqlAgent &agent, const IqlBatch &batch, int which,
                    const std::function<Var(Graph &, const IqlAgent &, const IqlVars &)> &loss)
    {
        const ParamSet *trained[] = {&agent.value_params(), &agent.q_params(), &agent.policy_params()};
        const auto result = testing::check_gradients(
            [&](Graph &g, const std::vector<Var> &leaves) {
                IqlVars vars = bind_agent(g, agent, {});
                (which == 0 ? vars.value : which == 1 ? vars.q : vars.policy) = leaves;
                return loss(g, agent, vars);
            },
            trained[which]->values());
        return result.max_rel_error;
    }

    /// tau-expectile of samples by bisection on the first-order condition.
    double expectile_oracle(const std::vector<double> &x, double tau)
    {
        double lo = *std::min_element(x.begin(), x.end());
        double hi = *std::max_element(x.begin(), x.end());
        for (int it = 0; it < 200; ++it) {
            const double m = 0.5 * (lo + hi);
            long double g = 0.0L;
            for (double v : x) {
                g += (v >= m ? tau : 1.0 - tau) * (v - m);
            }
            (g > 0 ? lo : hi) = m;
        }
        return 0.5 * (lo + hi);
    }
}

TEST_CASE("expectile loss")
{
    CHECK(expectile_loss(2.0, 0.8) == doctest::Approx(3.2).epsilon(1e-15));
    CHECK(expectile_loss(-2.0, 0.8) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(expectile_loss(0.0, 0.8) == 0.0);
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        const double x = uniform(rng, -3.0, 3.0);
        CHECK(expectile_loss(x, 0.5) == doctest::Approx(0.5 * x * x).epsilon(1e-15));
        CHECK(expectile_loss(x, 0.8) >= 0.0);
        if (x > 0) {
            CHECK(expectile_loss(x, 0.8) > expectile_loss(-x, 0.8));
        }
    }
}

TEST_CASE("loss values with constant networks")
{
    Rng rng(5);
    IqlAgent agent(small_dims(), 1);
    const IqlBatch batch = random_batch(rng, agent.dims(), 6);
    make_constant(agent.value_params(), 0.5);
    make_constant(agent.q_target_params(), 1.25);
    make_constant(agent.q_params(), -0.5);
    make_constant(agent.policy_params(), 0.3);

    Graph g;
    const IqlVars vars = bind_agent(g, agent, {});
    SUBCASE("value")
    {
        CHECK(value_loss(g, agent, vars, batch, 0.8).value().scalar() == doctest::Approx(0.8 * 0.75 * 0.75).epsilon(1e-14));
        make_constant(agent.value_params(), 2.0);
        Graph g2;
        const IqlVars v2 = bind_agent(g2, agent, {});
        CHECK(value_loss(g2, agent, v2, batch, 0.8).value().scalar() == doctest::Approx(0.2 * 0.75 * 0.75).epsilon(1e-14));
    }
    SUBCASE("q")
    {
        double expected = 0.0;
        for (std::size_t i = 0; i < 6; ++i) {
            const double target = batch.r(i, 0) + (batch.terminal(i, 0) != 0.0 ? 0.0 : 0.9 * 0.5);
            expected += (-0.5 - target) * (-0.5 - target) / 6.0;
        }
        CHECK(q_loss(g, agent, vars, batch, 0.9).value().scalar() == doctest::Approx(expected).epsilon(1e-13));
    }
    SUBCASE("policy")
    {
        const double sigma = 0.2;
        for (const double clip : {100.0, 2.0}) {
            const double w = std::min(std::exp(3.0 * 0.75), clip);
            const double mu = std::tanh(0.3);
            double expected = 0.0;
            for (std::size_t i = 0; i < 6; ++i) {
                double sq = 0.0;
                for (std::size_t k = 0; k < 2; ++k) {
                    sq += (batch.a(i, k) - mu) * (batch.a(i, k) - mu);
                }
                const double log_prob = -sq / (2 * sigma * sigma) - 2.0 * std::log(sigma * std::sqrt(2 * std::numbers::pi));
                expected -= w * log_prob / 6.0;
            }
            CHECK(policy_loss(g, agent, vars, batch, 3.0, clip, sigma).value().scalar()
                  == doctest::Approx(expected).epsilon(1e-13));
        }
    }
}

TEST_CASE("loss gradients match finite differences over the trained network")
{
    Rng rng(7);
    for (int trial = 0; trial < 3; ++trial) {
        const IqlAgent agent(small_dims(), 10 + trial);
        IqlAgent shifted = agent;
        // Decouple target from online Q so the target path is exercised.
        shifted.q_target_params().values()[0] = testing::random_matrix(rng, 7, 8);
        const IqlBatch batch = random_batch(rng, agent.dims(), 8);
        CHECK(fd_error(shifted, batch, 0,
                       [&](Graph &g, const IqlAgent &a, const IqlVars &v) { return value_loss(g, a, v, batch, 0.8); })
              < 1e-6);
        CHECK(fd_error(shifted, batch, 1,
                       [&](Graph &g, const IqlAgent &a, const IqlVars &v) { return q_loss(g, a, v, batch, 0.99); })
              < 1e-6);
        CHECK(fd_error(shifted, batch, 2,
                       [&](Graph &g, const IqlAgent &a, const IqlVars &v) {
                           return policy_loss(g, a, v, batch, 3.0, 100.0, 0.1);
                       })
              < 1e-6);
    }
}

TEST_CASE("targets carry no gradient")
{
    Rng rng(11);
    const IqlAgent agent(small_dims(), 3);
    const IqlBatch batch = random_batch(rng, agent.dims(), 8);
    auto all_zero = [](const Gradients &grads, const std::vector<Var> &vars) {
        for (const Var &v : vars) {
            for (double x : grads.of(v).data()) {
                if (x != 0.0) {
                    return false;
                }
            }
        }
        return true;
    };
    const IqlTrainable everything{true, true, true, true};
    {
        Graph g;
        const IqlVars vars = bind_agent(g, agent, everything);
        const auto grads = g.backward(value_loss(g, agent, vars, batch, 0.8));
        CHECK(all_zero(grads, vars.q_target));
        CHECK(all_zero(grads, vars.q));
        CHECK(all_zero(grads, vars.policy));
        CHECK_FALSE(all_zero(grads, vars.value));
    }
    {
        Graph g;
        const IqlVars vars = bind_agent(g, agent, everything);
        const auto grads = g.backward(q_loss(g, agent, vars, batch, 0.99));
        CHECK(all_zero(grads, vars.value));
        CHECK(all_zero(grads, vars.q_target));
        CHECK_FALSE(all_zero(grads, vars.q));
    }
    {
        Graph g;
        const IqlVars vars = bind_agent(g, agent, everything);
        const auto grads = g.backward(policy_loss(g, agent, vars, batch, 3.0, 100.0, 0.1));
        CHECK(all_zero(grads, vars.value));
        CHECK(all_zero(grads, vars.q_target));
        CHECK(all_zero(grads, vars.q));
        CHECK_FALSE(all_zero(grads, vars.policy));
    }
}

TEST_CASE("loss preconditions")
{
    Rng rng(13);
    const IqlAgent agent(small_dims(), 3);
    Graph g;
    const IqlVars vars = bind_agent(g, agent, {});
    const IqlBatch batch = random_batch(rng, agent.dims(), 4);
    CHECK_THROWS_AS(value_loss(g, agent, vars, batch, 1.0), PreconditionError);
    CHECK_THROWS_AS(policy_loss(g, agent, vars, batch, 0.0, 100.0, 0.1), PreconditionError);
    IqlBatch bad = batch;
    bad.z = Matrix(4, 5);
    CHECK_THROWS_AS(q_loss(g, agent, vars, bad, 0.99), ShapeError);
    CHECK_THROWS_AS(agent.act(std::vector<double>{0, 0}, std::vector<double>{0, 0}), ShapeError);
}

TEST_CASE("Polyak averaging is geometric")
{
    Rng rng(17);
    IqlAgent agent(small_dims(), 9);
    for (auto &m : agent.q_target_params().values()) {
        m = testing::random_matrix(rng, m.rows(), m.cols());
    }
    const auto start = agent.q_target_params().values();
    const auto online = agent.q_params().values();
    const double rate = 0.05;
    for (int n = 1; n <= 50; ++n) {
        agent.polyak_update(rate);
    }
    const double keep = std::pow(1.0 - rate, 50);
    for (std::size_t k = 0; k < start.size(); ++k) {
        for (std::size_t i = 0; i < start[k].size(); ++i) {
            const double expected = online[k].data()[i] + keep * (start[k].data()[i] - online[k].data()[i]);
            CHECK(agent.q_target_params().values()[k].data()[i] == doctest::Approx(expected).epsilon(1e-12));
        }
    }
    CHECK(agent.q_params().values() == online);
}

TEST_CASE("value regression recovers the expectile of a bandit")
{
    // Single state; Q_target(a) = a_0 + 2 built by hand, so V must approach
    // the tau-expectile of a_0 + 2 over the dataset actions.
    const IqlDims dims{2, 2, 3, 8};
    IqlAgent agent(dims, 21);
    auto &q = agent.q_target_params().values();
    for (auto &m : q) {
        m = Matrix(m.rows(), m.cols());
    }
    q[0](dims.obs_dim + dims.context_dim, 0) = 1.0;
    q[1](0, 0) = 2.0;
    q[2](0, 0) = 1.0;
    q[4](0, 0) = 1.0;

    Rng rng(23);
    const std::size_t n = 256;
    IqlBatch batch{Matrix(n, 2), Matrix(n, 3), Matrix(n, 2), Matrix(n, 1), Matrix(n, 2), Matrix(n, 1)};
    std::vector<double> q_values;
    for (std::size_t i = 0; i < n; ++i) {
        // Skewed actions so mean and expectile differ.
        const double u = uniform01(rng);
        batch.a(i, 0) = u * u * 2.0 - 1.0;
        q_values.push_back(batch.a(i, 0) + 2.0);
    }
    AdamConfig cfg;
    cfg.learning_rate = 1e-2;
    Adam opt(cfg, agent.value_params().values());
    for (int step = 0; step < 3000; ++step) {
        Graph g;
        const IqlVars vars = bind_agent(g, agent, {.value = true});
        const auto grads = g.backward(value_loss(g, agent, vars, batch, 0.8));
        std::vector<Matrix> gv;
        for (const Var &v : vars.value) {
            gv.push_back(grads.of(v));
        }
        opt.step(agent.value_params().values(), gv);
    }
    Graph g;
    const IqlVars vars = bind_agent(g, agent, {});
    const double v = agent.value(vars.value, g.constant(Matrix(1, 5))).value().scalar();
    const double oracle = expectile_oracle(q_values, 0.8);
    double mean = 0.0;
    for (double x : q_values) {
        mean += x / n;
    }
    CHECK(oracle > mean + 0.1);
    CHECK(v == doctest::Approx(oracle).epsilon(0.05));
}

TEST_CASE("train_policy is deterministic and rejects mismatched encoders")
{
    const auto split = sample_tasks(Family::PointRobotGoal, 2, 1, 4);
    const auto data = generate_dataset(Family::PointRobotGoal, split.train, 2, 3, 5);
    const ContextEncoder encoder(EncoderDims{2, 2, 8, 4, 8, 3}, 6);
    IqlConfig cfg;
    cfg.steps = 20;
    cfg.batch_size = 32;
    cfg.hidden = 8;
    const auto a = train_policy(data, encoder, cfg, 9);
    const auto b = train_policy(data, encoder, cfg, 9);
    CHECK(a.agent.policy_params() == b.agent.policy_params());
    CHECK(a.agent.q_target_params() == b.agent.q_target_params());
    REQUIRE(a.history.size() == 20);
    for (std::size_t i = 0; i < 20; ++i) {
        CHECK(a.history[i].v_loss == b.history[i].v_loss);
        CHECK(a.history[i].q_loss == b.history[i].q_loss);
        CHECK(a.history[i].pi_loss == b.history[i].pi_loss);
    }
    const auto c = train_policy(data, encoder, cfg, 10);
    CHECK_FALSE(c.agent.policy_params() == a.agent.policy_params());

    const ContextEncoder line(encoder_dims_for(Family::LineVel), 6);
    CHECK_THROWS_AS(train_policy(data, line, cfg, 9), ShapeError);
}

TEST_CASE("IQL recovers a near-optimal policy on a single DirWorld task")
{
    const auto split = sample_tasks(Family::DirWorld, 1, 1, 31);
    const TaskSpec &task = split.train[0];
    const auto data = generate_dataset(Family::DirWorld, split.train, 10, 10, 32);
    const ContextEncoder encoder(EncoderDims{4, 2, 16, 8, 16, 4}, 33);
    IqlConfig cfg;
    cfg.steps = 2000;
    cfg.hidden = 64;
    cfg.batch_size = 256;
    const auto trained = train_policy(data, encoder, cfg, 34);

    const EnvConfig env;
    const PolicyFn policy = [&](std::span<const double> obs, std::span<const double> z) {
        return trained.agent.act(obs, z);
    };
    const PolicyFn optimal = [&](std::span<const double> obs, std::span<const double>) {
        return optimal_action(task, EnvState{{obs.begin(), obs.end()}, 0, env.horizon}, env);
    };
    const double learned = evaluate_policy(policy, encoder, data.buffers[0], task, env, 10, 35);
    const double best = evaluate_policy(optimal, encoder, data.buffers[0], task, env, 10, 35);
    const double random = random_policy_return(task, env, 10, 35);
    MESSAGE("learned " << learned << " optimal " << best << " random " << random);
    CHECK(best > 0.0);
    CHECK(learned >= 0.8 * best);
}
