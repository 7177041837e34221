#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hsomrl/adam.h"
#include "hsomrl/datagen.h"
#include "hsomrl/encoder.h"
#include "hsomrl/graph.h"
#include "hsomrl/nn.h"

namespace hsomrl
{
    struct IqlConfig
    {
        double expectile = 0.8;
        double temperature = 3.0;
        double discount = 0.99;
        std::size_t batch_size = 256;
        double learning_rate = 3e-4;
        double polyak = 0.005;
        double weight_clip = 100.0;
        double policy_std = 0.1;
        std::size_t hidden = 64;
        std::size_t steps = 5000;
        /// Context embeddings precomputed per trajectory, one drawn per sample.
        std::size_t context_bank = 8;
        std::size_t min_segment = 20;
        std::size_t max_segment = 60;
    };

    /// |tau - 1(x < 0)| * x^2
    double expectile_loss(double x, double tau);

    struct IqlDims
    {
        std::size_t obs_dim = 2;
        std::size_t act_dim = 2;
        std::size_t context_dim = 64;
        std::size_t hidden = 64;

        friend bool operator==(const IqlDims &, const IqlDims &) = default;
    };

    /// V(s, z), Q(s, z, a), target Q and a tanh-squashed Gaussian-mean policy,
    /// all MLP(hidden, hidden) with ReLU.
    class IqlAgent
    {
    public:
        IqlAgent(IqlDims dims, std::uint64_t seed);

        const IqlDims &dims() const noexcept { return dims_; }

        ParamSet &value_params() noexcept { return value_params_; }
        ParamSet &q_params() noexcept { return q_params_; }
        ParamSet &q_target_params() noexcept { return q_target_params_; }
        ParamSet &policy_params() noexcept { return policy_params_; }
        const ParamSet &value_params() const noexcept { return value_params_; }
        const ParamSet &q_params() const noexcept { return q_params_; }
        const ParamSet &q_target_params() const noexcept { return q_target_params_; }
        const ParamSet &policy_params() const noexcept { return policy_params_; }

        Var value(std::span<const Var> bound, Var state_context) const;
        Var q(std::span<const Var> bound, Var state_context_action) const;
        Var policy_mean(std::span<const Var> bound, Var state_context) const;

        /// Mean action for each row of [s, z].
        Matrix act(const Matrix &state_context) const;
        std::vector<double> act(std::span<const double> observation, std::span<const double> context) const;

        /// target <- (1 - rate) * target + rate * q
        void polyak_update(double rate);

    private:
        IqlDims dims_;
        Mlp value_net_;
        Mlp q_net_;
        Mlp policy_net_;
        ParamSet value_params_;
        ParamSet q_params_;
        ParamSet q_target_params_;
        ParamSet policy_params_;
    };

    /// Rows are transitions; r and terminal are n x 1.
    struct IqlBatch
    {
        Matrix s;
        Matrix z;
        Matrix a;
        Matrix r;
        Matrix s_next;
        Matrix terminal;
    };

    /// Graph leaves for the four networks of an agent.
    struct IqlVars
    {
        std::vector<Var> value;
        std::vector<Var> q;
        std::vector<Var> q_target;
        std::vector<Var> policy;
    };

    struct IqlTrainable
    {
        bool value = false;
        bool q = false;
        bool q_target = false;
        bool policy = false;
    };

    IqlVars bind_agent(Graph &graph, const IqlAgent &agent, IqlTrainable trainable);

    /// mean L2_tau(Q_target(s,z,a) - V(s,z)); the target-Q path is stop-gradient.
    Var value_loss(Graph &graph, const IqlAgent &agent, const IqlVars &vars, const IqlBatch &batch, double tau);
    /// mean (Q(s,z,a) - (r + gamma (1 - done) V(s',z)))^2; the target is stop-gradient.
    Var q_loss(Graph &graph, const IqlAgent &agent, const IqlVars &vars, const IqlBatch &batch, double gamma);
    /// -mean[min(exp(beta A), clip) log pi(a | s, z)] with A = Q_target - V under stop-gradient.
    Var policy_loss(Graph &graph, const IqlAgent &agent, const IqlVars &vars, const IqlBatch &batch, double beta,
                    double clip, double policy_std);

    struct IqlLossRecord
    {
        std::size_t step = 0;
        double v_loss = 0.0;
        double q_loss = 0.0;
        double pi_loss = 0.0;
    };

    /// One optimizer per network; each step updates V, then Q, then the policy,
    /// then moves the target toward Q.
    class IqlTrainer
    {
    public:
        IqlTrainer(IqlAgent &agent, const IqlConfig &config);

        IqlLossRecord step(const IqlBatch &batch);

    private:
        IqlAgent &agent_;
        IqlConfig config_;
        Adam value_opt_;
        Adam q_opt_;
        Adam policy_opt_;
        std::size_t steps_ = 0;
    };

    struct IqlTrainResult
    {
        IqlAgent agent;
        std::vector<IqlLossRecord> history;
    };

    /// Trains on (s, z) with z from a frozen encoder applied to random segments
    /// of each transition's source trajectory.
    IqlTrainResult train_policy(const OfflineDataset &dataset, const ContextEncoder &encoder, const IqlConfig &config,
                                std::uint64_t seed);

    /// Columns: step, v_loss, q_loss, pi_loss.
    void write_iql_history_csv(const std::filesystem::path &path, std::span<const IqlLossRecord> history);
}
