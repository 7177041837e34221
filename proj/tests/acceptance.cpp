// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "hsomrl/checkpoint.h"
#include "hsomrl/checksum.h"
#include "hsomrl/contrastive.h"
#include "hsomrl/dataset_io.h"
#include "hsomrl/eval.h"
#include "hsomrl/iql.h"
#include "hsomrl/pipeline.h"
#include "oracles.h"
#include "support.h"

using namespace hsomrl;
namespace fs = std::filesystem;

namespace
{
    struct Outcome
    {
        bool pass = false;
        std::string detail;
    };

    std::string fmt(const char *f, auto... args)
    {
        char buf[512];
        std::snprintf(buf, sizeof buf, f, args...);
        return buf;
    }

    constexpr LossVariant kVariants[] = {LossVariant::SCL, LossVariant::HG, LossVariant::HP, LossVariant::HPHG};

    oracle::Kind kind_of(LossVariant v)
    {
        switch (v) {
        case LossVariant::SCL:
            return oracle::Kind::Scl;
        case LossVariant::HG:
            return oracle::Kind::Hg;
        case LossVariant::HP:
            return oracle::Kind::Hp;
        case LossVariant::HPHG:
            return oracle::Kind::Hphg;
        }
        return oracle::Kind::Scl;
    }

    std::pair<Matrix, std::vector<int>> random_batch(Rng &rng, std::size_t dim)
    {
        const std::size_t tasks = 2 + uniform_index(rng, 3);
        const std::size_t n = std::max<std::size_t>(2 * tasks, 4 + uniform_index(rng, 13));
        std::vector<int> labels;
        for (std::size_t t = 0; t < tasks; ++t) {
            labels.insert(labels.end(), 2, static_cast<int>(t));
        }
        while (labels.size() < n) {
            labels.push_back(static_cast<int>(uniform_index(rng, tasks)));
        }
        std::shuffle(labels.begin(), labels.end(), rng);
        return {testing::random_unit_rows(rng, n, dim), labels};
    }

    Matrix simplex(std::size_t n)
    {
        Matrix m(n, n);
        const double c = 1.0 / static_cast<double>(n);
        const double norm = std::sqrt((1.0 - c) * (1.0 - c) + (n - 1) * c * c);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                m(i, j) = ((i == j ? 1.0 : 0.0) - c) / norm;
            }
        }
        return m;
    }

    Outcome loss_oracle()
    {
        Rng rng(101);
        double worst = 0.0;
        for (const LossVariant v : kVariants) {
            for (int i = 0; i < 50; ++i) {
                const auto [w, labels] = random_batch(rng, 5);
                const double beta = uniform(rng, 0.05, 1.0);
                worst = std::max(worst, std::abs(contrastive_loss(w, labels, v, beta)
                                                 - oracle::contrastive(w, labels, kind_of(v), beta)));
            }
        }
        return {worst <= 1e-10, fmt("4 variants x 50 batches, max abs error %.3g (tol 1e-10)", worst)};
    }

    Outcome uniform_hardness()
    {
        double worst = 0.0;
        auto check = [&](const Matrix &w, const std::vector<int> &labels) {
            const double scl = loss_scl(w, labels, 0.1);
            worst = std::max({worst, std::abs(loss_hg(w, labels, 0.1) - scl), std::abs(loss_hp(w, labels, 0.1) - scl),
                              std::abs(loss_hphg(w, labels, 0.1) - scl)});
        };
        check(simplex(8), {0, 1, 2, 3, 0, 1, 2, 3});
        check(simplex(12), {0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2});
        check(Matrix::from_rows({{1, 0, 0}, {0, 1, 0}, {1, 0, 0}, {0, 0, 1}, {0, 1, 0}, {0, 0, 1}, {1, 0, 0}}),
              {0, 1, 0, 2, 1, 2, 0});
        return {worst <= 1e-8, fmt("max |variant - SCL| %.3g (tol 1e-8)", worst)};
    }

    Outcome gradient_suite()
    {
        Rng rng(103);
        double worst = 0.0;
        const EncoderDims dims{2, 2, 8, 8, 8, 8, 5};
        for (const LossVariant v : kVariants) {
            for (int trial = 0; trial < 2; ++trial) {
                const ContextEncoder encoder(dims, 200 + trial);
                const auto split = sample_tasks(Family::PointRobotGoal, 3, 1, 300 + trial);
                const auto data = generate_dataset(Family::PointRobotGoal, split.train, 2, 2, 400 + trial);
                const auto batch = sample_batch(data, 3, 3, 6, rng);
                const auto segments = batch.all_segments();
                const auto labels = batch.all_labels();
                Matrix frozen;
                {
                    Graph g;
                    const auto bound = encoder.params().bind(g, false);
                    frozen = encoder.forward(g, bound, segments).w.value();
                }
                const auto r = testing::check_gradients(
                    [&](Graph &g, const std::vector<Var> &p) {
                        return contrastive_loss(encoder.forward(g, p, segments).w, labels, v, 0.1, frozen);
                    },
                    encoder.params().values());
                worst = std::max(worst, r.max_rel_error);
            }
        }
        const double contrastive_worst = worst;
        worst = 0.0;

        const IqlDims idims{2, 2, 3, 8};
        for (int trial = 0; trial < 2; ++trial) {
            IqlAgent agent(idims, 500 + trial);
            for (auto &m : agent.q_target_params().values()) {
                m = testing::random_matrix(rng, m.rows(), m.cols(), -0.5, 0.5);
            }
            const std::size_t n = 8;
            IqlBatch b{testing::random_matrix(rng, n, 2), testing::random_matrix(rng, n, 3),
                       testing::random_matrix(rng, n, 2), testing::random_matrix(rng, n, 1),
                       testing::random_matrix(rng, n, 2), Matrix(n, 1)};
            b.terminal(n - 1, 0) = 1.0;
            auto run = [&](int which, auto loss) {
                const ParamSet *sets[] = {&agent.value_params(), &agent.q_params(), &agent.policy_params()};
                const auto r = testing::check_gradients(
                    [&](Graph &g, const std::vector<Var> &leaves) {
                        IqlVars vars = bind_agent(g, agent, {});
                        (which == 0 ? vars.value : which == 1 ? vars.q : vars.policy) = leaves;
                        return loss(g, vars);
                    },
                    sets[which]->values());
                worst = std::max(worst, r.max_rel_error);
            };
            run(0, [&](Graph &g, const IqlVars &v) { return value_loss(g, agent, v, b, 0.8); });
            run(1, [&](Graph &g, const IqlVars &v) { return q_loss(g, agent, v, b, 0.99); });
            run(2, [&](Graph &g, const IqlVars &v) { return policy_loss(g, agent, v, b, 3.0, 100.0, 0.1); });
        }
        return {std::max(worst, contrastive_worst) < 1e-4,
                fmt("max rel error: contrastive x4 over all encoder params %.3g, value/Q/policy over their own "
                    "params %.3g (tol 1e-4)",
                    contrastive_worst, worst)};
    }

    Outcome hardness_properties()
    {
        Rng rng(107);
        double worst_sum = 0.0;
        int reversal_failures = 0;
        for (int i = 0; i < 1000; ++i) {
            std::vector<double> dots(1 + uniform_index(rng, 16));
            for (double &d : dots) {
                d = uniform(rng, -1.0, 1.0);
            }
            const auto neg = hardness_neg(dots);
            const auto pos = hardness_pos(dots);
            worst_sum = std::max({worst_sum, std::abs(std::accumulate(neg.begin(), neg.end(), 0.0) - 1.0),
                                  std::abs(std::accumulate(pos.begin(), pos.end(), 0.0) - 1.0)});
            std::vector<std::size_t> a(dots.size());
            std::iota(a.begin(), a.end(), 0);
            auto b = a;
            std::stable_sort(a.begin(), a.end(), [&](auto x, auto y) { return neg[x] < neg[y]; });
            std::stable_sort(b.begin(), b.end(), [&](auto x, auto y) { return pos[x] > pos[y]; });
            reversal_failures += a == b ? 0 : 1;
        }
        return {worst_sum <= 1e-6 && reversal_failures == 0,
                fmt("1000 cases, max |sum - 1| %.3g (tol 1e-6), ordering reversal failures %d", worst_sum,
                    reversal_failures)};
    }

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

    Outcome expectile_facts()
    {
        Rng rng(109);
        int inexact = 0;
        for (int i = 0; i < 1000; ++i) {
            const double x = uniform(rng, -10.0, 10.0);
            inexact += expectile_loss(x, 0.5) == 0.5 * x * x ? 0 : 1;
        }
        const bool points = expectile_loss(1.0, 0.8) == 0.8 && std::abs(expectile_loss(-1.0, 0.8) - 0.2) < 1e-15;

        // One-step dataset: Q_target(a) = a_0 + 2, V trained by expectile regression.
        const IqlDims dims{2, 2, 3, 8};
        IqlAgent agent(dims, 111);
        auto &q = agent.q_target_params().values();
        for (auto &m : q) {
            m = Matrix(m.rows(), m.cols());
        }
        q[0](dims.obs_dim + dims.context_dim, 0) = 1.0;
        q[1](0, 0) = 2.0;
        q[2](0, 0) = 1.0;
        q[4](0, 0) = 1.0;
        const std::size_t n = 512;
        IqlBatch batch{Matrix(n, 2), Matrix(n, 3), Matrix(n, 2), Matrix(n, 1), Matrix(n, 2), Matrix(n, 1)};
        std::vector<double> targets;
        for (std::size_t i = 0; i < n; ++i) {
            const double u = uniform01(rng);
            batch.a(i, 0) = 2.0 * u * u - 1.0;
            batch.terminal(i, 0) = 1.0;
            targets.push_back(batch.a(i, 0) + 2.0);
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
        const double target = expectile_oracle(targets, 0.8);
        const double rel = std::abs(v - target) / std::abs(target);
        return {inexact == 0 && points && rel <= 0.05,
                fmt("0.5-expectile inexact cases %d/1000, L(1)=%.17g L(-1)=%.17g, trained V %.5f vs oracle %.5f "
                    "(rel %.3g, tol 0.05)",
                    inexact, expectile_loss(1.0, 0.8), expectile_loss(-1.0, 0.8), v, target, rel)};
    }

    Outcome encoder_invariants()
    {
        Rng rng(113);
        const ContextEncoder encoder(encoder_dims_for(Family::PointRobotGoal), 114);
        double worst_norm = 0.0;
        int not_invariant = 0;
        for (int i = 0; i < 1000; ++i) {
            std::vector<Transition> seg(1 + uniform_index(rng, 60));
            for (auto &t : seg) {
                t.s = {uniform(rng, -2, 2), uniform(rng, -2, 2)};
                t.a = {uniform(rng, -1, 1), uniform(rng, -1, 1)};
                t.s_next = {uniform(rng, -2, 2), uniform(rng, -2, 2)};
                t.r = uniform(rng, -3, 0);
            }
            const auto [z, w] = encoder.encode_trajectory(seg);
            auto shuffled = seg;
            std::shuffle(shuffled.begin(), shuffled.end(), rng);
            const auto [z2, w2] = encoder.encode_trajectory(shuffled);
            not_invariant += (z == z2 && w == w2) ? 0 : 1;
            for (const Matrix *m : {&z, &w}) {
                double s = 0.0;
                for (double x : m->data()) {
                    s += x * x;
                }
                worst_norm = std::max(worst_norm, std::abs(std::sqrt(s) - 1.0));
            }
        }
        return {worst_norm <= 1e-6 && not_invariant == 0,
                fmt("1000 segments, max | |z|-1 | %.3g (tol 1e-6), non-identical after shuffling %d", worst_norm,
                    not_invariant)};
    }

    // Reduced training budget for the comparative runs (single core, < 2 h total).
    RunConfig comparative_config(Family family)
    {
        RunConfig c;
        c.family = family;
        c.encoder.steps = 300;
        c.iql.steps = 3000;
        return c;
    }

    struct ComparativeRuns
    {
        fs::path root;
        fs::path test_dir;
        std::vector<std::uint64_t> seeds;
        /// encoder/policy checkpoint per (variant, seed)
        std::vector<std::vector<EvalInputs>> runs;
    };

    double seconds_since(std::chrono::steady_clock::time_point t0)
    {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }

    Outcome directional_returns(ComparativeRuns &runs)
    {
        const auto t0 = std::chrono::steady_clock::now();
        RunConfig base = comparative_config(Family::PointRobotGoal);
        const fs::path data_root = runs.root / "prg";
        run_gen_data(base, data_root);
        runs.test_dir = test_data_dir(data_root);
        runs.seeds = {1, 2, 3, 4, 5};
        runs.runs.assign(4, {});
        for (std::size_t vi = 0; vi < 4; ++vi) {
            for (const std::uint64_t seed : runs.seeds) {
                RunConfig c = base;
                c.seed = seed;
                c.encoder.loss.variant = kVariants[vi];
                const fs::path out = data_root / ("seed" + std::to_string(seed));
                const auto enc = run_train_encoder(c, out, train_data_dir(data_root));
                const auto pol = run_train_policy(c, out, train_data_dir(data_root), enc.checkpoint);
                runs.runs[vi].push_back({enc.checkpoint, pol.checkpoint});
            }
        }
        const OfflineDataset test = load_dataset(runs.test_dir);
        double mean[4];
        for (std::size_t vi = 0; vi < 4; ++vi) {
            mean[vi] = evaluate_checkpoints(base, test, runs.runs[vi], 0).mean;
        }
        double random = 0.0;
        for (std::size_t t = 0; t < test.tasks.size(); ++t) {
            random += random_policy_return(test.tasks[t], test.env, base.eval_episodes, derive_seed(base.seed, 0xa11, t))
                      / static_cast<double>(test.tasks.size());
        }
        const double scl = mean[0], hg = mean[1], hp = mean[2], hphg = mean[3];
        const double gap = scl - random;
        const bool ranked = hphg >= std::max(hg, hp) && std::max(hg, hp) >= scl;
        const bool margin = gap > 0.0 && hphg - scl >= 0.1 * gap;
        return {ranked && margin,
                fmt("low-bucket test return over 5 seeds: SCL %.3f HG %.3f HP %.3f HPHG %.3f random %.3f; "
                    "HPHG-SCL %.3f vs 10%% of gap %.3f (%.0f s)",
                    scl, hg, hp, hphg, random, hphg - scl, 0.1 * gap, seconds_since(t0))};
    }

    Outcome alignment_uniformity(const fs::path &root)
    {
        const auto t0 = std::chrono::steady_clock::now();
        RunConfig base = comparative_config(Family::DirWorld);
        const fs::path data_root = root / "dirworld";
        run_gen_data(base, data_root);
        const OfflineDataset train = load_dataset(train_data_dir(data_root));
        double align[4] = {0, 0, 0, 0};
        double unif[4] = {0, 0, 0, 0};
        const std::uint64_t seeds[] = {1, 2, 3};
        for (std::size_t vi = 0; vi < 4; ++vi) {
            for (const std::uint64_t seed : seeds) {
                RunConfig c = base;
                c.seed = seed;
                c.encoder.loss.variant = kVariants[vi];
                const auto enc = run_train_encoder(c, data_root / ("seed" + std::to_string(seed)),
                                                   train_data_dir(data_root));
                const auto ckpt = load_encoder(enc.checkpoint);
                const auto rows = compute_embeddings(ckpt.encoder, train, std::nullopt, 2, c.encoder.loss.min_segment,
                                                     c.encoder.loss.max_segment, derive_seed(seed, 0xf5));
                const std::size_t d = rows.front().z.size();
                Matrix first(rows.size() / 2, d), second(rows.size() / 2, d);
                for (std::size_t i = 0; i < rows.size() / 2; ++i) {
                    std::copy(rows[2 * i].z.begin(), rows[2 * i].z.end(), first.row(i).begin());
                    std::copy(rows[2 * i + 1].z.begin(), rows[2 * i + 1].z.end(), second.row(i).begin());
                }
                align[vi] += alignment(first, second) / 3.0;
                unif[vi] += uniformity(first, c.uniformity_t) / 3.0;
            }
        }
        const double lo = *std::min_element(unif, unif + 4);
        const double hi = *std::max_element(unif, unif + 4);
        const double spread = (hi - lo) / std::max(std::abs(lo), std::abs(hi));
        return {align[3] <= align[0] && spread <= 0.2,
                fmt("DirWorld, 3 seeds: alignment SCL %.4f HG %.4f HP %.4f HPHG %.4f; uniformity %.4f %.4f %.4f "
                    "%.4f, spread %.3f (tol 0.2) (%.0f s)",
                    align[0], align[1], align[2], align[3], unif[0], unif[1], unif[2], unif[3], spread,
                    seconds_since(t0))};
    }

    Outcome separability_by_quality(const ComparativeRuns &runs)
    {
        const OfflineDataset test = load_dataset(runs.test_dir);
        std::string detail = "SCL encoders on test tasks, top vs bottom decile silhouette:";
        bool pass = runs.runs.size() == 4 && runs.runs[0].size() >= 3;
        for (std::size_t k = 0; pass && k < runs.runs[0].size(); ++k) {
            const auto ckpt = load_encoder(runs.runs[0][k].encoder);
            double s[2];
            const std::size_t buckets[] = {9, 0};
            for (int b = 0; b < 2; ++b) {
                const auto rows = compute_embeddings(ckpt.encoder, test, buckets[b], 1, 1, 1, 0);
                Matrix z(rows.size(), rows.front().z.size());
                std::vector<int> labels;
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    std::copy(rows[i].z.begin(), rows[i].z.end(), z.row(i).begin());
                    labels.push_back(rows[i].task_id);
                }
                s[b] = separability(z, labels);
            }
            pass = pass && s[0] > s[1];
            detail += fmt(" seed %llu %.4f > %.4f;", static_cast<unsigned long long>(runs.seeds[k]), s[0], s[1]);
        }
        return {pass, detail};
    }

    Outcome metric_oracles()
    {
        Rng rng(127);
        double worst = 0.0;
        for (int i = 0; i < 100; ++i) {
            const std::size_t n = 2 + uniform_index(rng, 40);
            const Matrix a = testing::random_unit_rows(rng, n, 5);
            const Matrix b = testing::random_unit_rows(rng, n, 5);
            worst = std::max({worst, std::abs(uniformity(a, 2.0) - oracle::uniformity(a, 2.0)),
                              std::abs(alignment(a, b) - oracle::alignment(a, b))});
        }
        const Matrix same = Matrix::from_rows({{0.6, 0.8}, {0.6, 0.8}, {0.6, 0.8}, {0.6, 0.8}});
        const double u_same = uniformity(same, 2.0);
        const double a_anti = alignment(Matrix::from_rows({{1, 0}}), Matrix::from_rows({{-1, 0}}));
        return {worst <= 1e-12 && u_same == 0.0 && a_anti == 4.0,
                fmt("max abs error vs pair loops %.3g (tol 1e-12), identical-set uniformity %.17g, antipodal "
                    "alignment %.17g",
                    worst, u_same, a_anti)};
    }

    std::string encoder_loss_columns(const fs::path &csv)
    {
        std::istringstream in(read_file(csv));
        std::string line, out;
        while (std::getline(in, line)) {
            out += line.substr(0, line.rfind(',')) + "\n";
        }
        return out;
    }

    Outcome determinism(const fs::path &root)
    {
        RunConfig c;
        c.seed = 17;
        c.n_train_tasks = 4;
        c.n_test_tasks = 2;
        c.levels = 3;
        c.n_per_level = 10;
        c.encoder.steps = 10;
        c.encoder.loss.batch_size = 16;
        c.iql.steps = 50;
        c.iql.batch_size = 64;
        c.eval_episodes = 3;
        std::vector<std::string> compared;
        std::vector<std::string> differing;
        std::vector<fs::path> dirs = {root / "det_a", root / "det_b"};
        for (const auto &d : dirs) {
            run_gen_data(c, d);
            const auto enc = run_train_encoder(c, d, train_data_dir(d));
            const auto pol = run_train_policy(c, d, train_data_dir(d), enc.checkpoint);
            run_eval(c, d, test_data_dir(d), {{enc.checkpoint, pol.checkpoint}}, "low", std::nullopt);
            run_export_embeddings(c, d, enc.checkpoint, test_data_dir(d), std::nullopt, 1, std::nullopt);
        }
        for (const auto &entry : fs::recursive_directory_iterator(dirs[0])) {
            if (!entry.is_regular_file()) {
                continue;
            }
            const fs::path rel = fs::relative(entry.path(), dirs[0]);
            const std::string name = rel.string();
            if (name == "run_manifest.json" || name == ".hsomrl.lock") {
                continue;
            }
            compared.push_back(name);
            const bool same = name.ends_with("encoder_hphg_loss.csv")
                                  ? encoder_loss_columns(dirs[0] / rel) == encoder_loss_columns(dirs[1] / rel)
                                  : read_file(dirs[0] / rel) == read_file(dirs[1] / rel);
            if (!same) {
                differing.push_back(name);
            }
        }
        std::string detail = fmt("%zu stage outputs compared byte for byte (encoder history without wallclock)",
                                 compared.size());
        for (const auto &d : differing) {
            detail += "; differs: " + d;
        }
        return {differing.empty() && compared.size() >= 8, detail};
    }
}

int main()
{
    configure_allocator();
    apply_thread_limit();
    const char *env_dir = std::getenv("HSOMRL_ACCEPTANCE_DIR");
    const fs::path root = env_dir ? fs::path(env_dir) : fs::temp_directory_path() / "hsomrl_acceptance";
    fs::remove_all(root);
    fs::create_directories(root);

    ComparativeRuns runs{root, {}, {}, {}};
    struct Criterion
    {
        const char *name;
        std::function<Outcome()> check;
    };
    const std::vector<Criterion> criteria = {
        {"loss oracle equivalence", loss_oracle},
        {"uniform hardness reduces to SCL", uniform_hardness},
        {"gradients match finite differences", gradient_suite},
        {"hardness weight properties", hardness_properties},
        {"expectile facts", expectile_facts},
        {"encoder invariants", encoder_invariants},
        {"low-bucket return ranking", [&] { return directional_returns(runs); }},
        {"alignment and uniformity", [&] { return alignment_uniformity(root); }},
        {"separability by context quality", [&] { return separability_by_quality(runs); }},
        {"metric oracles", metric_oracles},
        {"stage determinism", [&] { return determinism(root); }},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].check();
        }
        catch (const std::exception &e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failures += o.pass ? 0 : 1;
        std::printf("[%s] %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].name, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    if (!env_dir) {
        fs::remove_all(root);
    }
    return failures == 0 ? 0 : 1;
}
