#include <doctest.h>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "hsomrl/adam.h"
#include "hsomrl/errors.h"
#include "hsomrl/kernels.h"
#include "hsomrl/nn.h"
#include "hsomrl/ops.h"
#include "support.h"

using namespace hsomrl;
using testing::check_gradients;
using testing::random_matrix;

TEST_CASE("forward op examples")
{
    Graph g;
    const Var n = ops::l2_normalize_rows(g.constant(Matrix::from_rows({{3, 4}})));
    CHECK(n.value()(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(n.value()(0, 1) == doctest::Approx(0.8).epsilon(1e-12));

    const Var s = ops::row_softmax(g.constant(Matrix::from_rows({{0, 0}})));
    CHECK(s.value() == Matrix::from_rows({{0.5, 0.5}}));

    const Matrix m = Matrix::from_rows({{1, 2}, {3, 4}});
    CHECK(ops::matmul(g.constant(Matrix::identity(2)), g.constant(m)).value() == m);
}

TEST_CASE("row_softmax is stable for large logits")
{
    Graph g;
    const Var s = ops::row_softmax(g.constant(Matrix::from_rows({{1000, 1000, 999}})));
    CHECK(s.value().all_finite());
    CHECK(s.value()(0, 0) == doctest::Approx(1.0 / (2.0 + std::exp(-1.0))));
}

TEST_CASE("shape errors name the op and both shapes")
{
    Graph g;
    const Var a = g.constant(Matrix(2, 3));
    const Var b = g.constant(Matrix(2, 3));
    try {
        ops::matmul(a, b);
        FAIL("expected ShapeError");
    }
    catch (const ShapeError &e) {
        const std::string msg = e.what();
        CHECK(msg.find("matmul") != std::string::npos);
        CHECK(msg.find("2x3") != std::string::npos);
    }
    CHECK_THROWS_AS(ops::add(a, g.constant(Matrix(3, 2))), ShapeError);
    CHECK_THROWS_AS(ops::elementwise_mul(a, g.constant(Matrix(1, 3))), ShapeError);
    CHECK_THROWS_AS(ops::add_bias(a, g.constant(Matrix(1, 2))), ShapeError);
}

TEST_CASE("domain errors")
{
    Graph g;
    CHECK_THROWS_AS(ops::log(g.constant(Matrix::from_rows({{1, 0}}))), DomainError);
    CHECK_THROWS_AS(ops::log(g.constant(Matrix::from_rows({{-1}}))), DomainError);
    CHECK_THROWS_AS(ops::l2_normalize_rows(g.constant(Matrix::from_rows({{1, 1}, {0, 0}}))), DomainError);
    CHECK_THROWS_AS(ops::exp(g.constant(Matrix::from_rows({{1000}}))), DomainError);
}

TEST_CASE("backward examples")
{
    SUBCASE("sum of squares")
    {
        Graph g;
        const Var x = g.parameter(Matrix::from_rows({{1, 2}}));
        const auto grads = g.backward(ops::sum(ops::square(x)));
        CHECK(grads.of(x) == Matrix::from_rows({{2, 4}}));
    }
    SUBCASE("normalize at a unit vector")
    {
        Graph g;
        const Var x = g.parameter(Matrix::from_rows({{1, 0}}));
        const auto grads = g.backward(ops::sum(ops::l2_normalize_rows(x)));
        CHECK(grads.of(x)(0, 0) == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(grads.of(x)(0, 1) == doctest::Approx(1.0).epsilon(1e-9));
        const auto fd = check_gradients(
            [](Graph &, const std::vector<Var> &p) { return ops::sum(ops::l2_normalize_rows(p[0])); },
            {Matrix::from_rows({{1, 0}})});
        CHECK(fd.max_abs_error < 1e-8);
    }
    SUBCASE("non-scalar loss")
    {
        Graph g;
        const Var x = g.parameter(Matrix::from_rows({{1, 2}}));
        CHECK_THROWS_AS(g.backward(ops::square(x)), ShapeError);
    }
    SUBCASE("stop_gradient freezes one factor")
    {
        Graph g;
        const Var x = g.parameter(Matrix::from_rows({{2}}));
        const Var y = ops::elementwise_mul(x, g.stop_gradient(x));
        CHECK(y.value().scalar() == 4.0);
        CHECK(g.backward(ops::sum(y)).of(x) == Matrix::from_rows({{2}}));
    }
    SUBCASE("disconnected parameters get exact zeros")
    {
        Graph g;
        const Var x = g.parameter(Matrix::from_rows({{1, 2}}));
        const Var unused = g.parameter(Matrix::from_rows({{5, 6, 7}}));
        const auto grads = g.backward(ops::sum(x));
        CHECK(grads.of(unused) == Matrix(1, 3, 0.0));
    }
    SUBCASE("constants are skipped")
    {
        Graph g;
        const Var x = g.parameter(Matrix::from_rows({{1, 2}}));
        const Var c = g.constant(Matrix::from_rows({{3, 4}}));
        const auto grads = g.backward(ops::sum(ops::elementwise_mul(x, c)));
        CHECK(grads.size() == 1);
        CHECK(grads.of(x) == Matrix::from_rows({{3, 4}}));
    }
}

TEST_CASE("backward is pure")
{
    Rng rng(3);
    Graph g;
    const Var x = g.parameter(random_matrix(rng, 4, 3));
    const Var w = g.parameter(random_matrix(rng, 3, 2));
    const Var loss = ops::mean(ops::tanh(ops::matmul(x, w)));
    const auto first = g.backward(loss);
    const auto second = g.backward(loss);
    CHECK(first.of(x) == second.of(x));
    CHECK(first.of(w) == second.of(w));
}

TEST_CASE("graph is append-only with inputs before outputs")
{
    Graph g;
    const Var a = g.constant(Matrix(1, 1, 1.0));
    const Var b = ops::exp(a);
    CHECK(b.id() > a.id());
    CHECK(g.size() == 2);
    CHECK_THROWS_AS(g.record("bad", Matrix(1, 1), {7}, nullptr), PreconditionError);
}

namespace
{
    struct OpCase
    {
        const char *name;
        std::function<Var(Graph &, const std::vector<Var> &)> apply;
        std::vector<std::pair<std::size_t, std::size_t>> shapes;
        double lo = -1.0;
        double hi = 1.0;
    };

    Matrix away_from_zero(Rng &rng, std::size_t r, std::size_t c)
    {
        Matrix m = random_matrix(rng, r, c, 0.1, 1.0);
        for (double &v : m.data()) {
            if (uniform01(rng) < 0.5) {
                v = -v;
            }
        }
        return m;
    }
}

TEST_CASE("every op matches central finite differences on 100 random instances")
{
    const std::vector<std::size_t> offsets{0, 2, 5};
    const std::vector<OpCase> cases = {
        {"matmul", [](Graph &, const std::vector<Var> &p) { return ops::matmul(p[0], p[1]); }, {{3, 4}, {4, 2}}},
        {"matmul_nt", [](Graph &, const std::vector<Var> &p) { return ops::matmul_nt(p[0], p[1]); }, {{3, 4}, {2, 4}}},
        {"transpose", [](Graph &, const std::vector<Var> &p) { return ops::transpose(p[0]); }, {{3, 2}}},
        {"add", [](Graph &, const std::vector<Var> &p) { return ops::add(p[0], p[1]); }, {{3, 2}, {3, 2}}},
        {"sub", [](Graph &, const std::vector<Var> &p) { return ops::sub(p[0], p[1]); }, {{3, 2}, {3, 2}}},
        {"add_bias", [](Graph &, const std::vector<Var> &p) { return ops::add_bias(p[0], p[1]); }, {{3, 2}, {1, 2}}},
        {"add_scalar", [](Graph &, const std::vector<Var> &p) { return ops::add_scalar(p[0], 0.7); }, {{3, 2}}},
        {"elementwise_mul",
         [](Graph &, const std::vector<Var> &p) { return ops::elementwise_mul(p[0], p[1]); },
         {{3, 2}, {3, 2}}},
        {"scalar_mul", [](Graph &, const std::vector<Var> &p) { return ops::scalar_mul(p[0], -1.7); }, {{3, 2}}},
        {"tanh", [](Graph &, const std::vector<Var> &p) { return ops::tanh(p[0]); }, {{3, 2}}, -2.0, 2.0},
        {"relu", [](Graph &, const std::vector<Var> &p) { return ops::relu(p[0]); }, {{3, 2}}},
        {"exp", [](Graph &, const std::vector<Var> &p) { return ops::exp(p[0]); }, {{3, 2}}},
        {"log", [](Graph &, const std::vector<Var> &p) { return ops::log(p[0]); }, {{3, 2}}, 0.2, 2.0},
        {"square", [](Graph &, const std::vector<Var> &p) { return ops::square(p[0]); }, {{3, 2}}},
        {"row_softmax", [](Graph &, const std::vector<Var> &p) { return ops::row_softmax(p[0]); }, {{3, 4}}, -3.0, 3.0},
        {"l2_normalize_rows",
         [](Graph &, const std::vector<Var> &p) { return ops::l2_normalize_rows(p[0]); },
         {{3, 4}}},
        {"sum", [](Graph &, const std::vector<Var> &p) { return ops::sum(p[0]); }, {{3, 2}}},
        {"mean", [](Graph &, const std::vector<Var> &p) { return ops::mean(p[0]); }, {{3, 2}}},
        {"row_sum", [](Graph &, const std::vector<Var> &p) { return ops::row_sum(p[0]); }, {{3, 2}}},
        {"concat_cols",
         [](Graph &, const std::vector<Var> &p) {
             const std::vector<Var> parts{p[0], p[1]};
             return ops::concat_cols(parts);
         },
         {{3, 2}, {3, 1}}},
        {"segment_attention_pool",
         [&offsets](Graph &, const std::vector<Var> &p) { return ops::segment_attention_pool(p[0], p[1], offsets); },
         {{5, 1}, {5, 3}},
         -2.0,
         2.0},
    };

    Rng rng(11);
    for (const auto &op : cases) {
        CAPTURE(op.name);
        double worst = 0.0;
        for (int instance = 0; instance < 100; ++instance) {
            std::vector<Matrix> params;
            for (const auto &[r, c] : op.shapes) {
                params.push_back(std::string(op.name) == "relu" ? away_from_zero(rng, r, c)
                                                                : random_matrix(rng, r, c, op.lo, op.hi));
            }
            // A random linear functional of the output exercises the full Jacobian.
            Matrix probe;
            {
                Graph g;
                std::vector<Var> leaves;
                for (const auto &p : params) {
                    leaves.push_back(g.constant(p));
                }
                const Var out = op.apply(g, leaves);
                probe = random_matrix(rng, out.rows(), out.cols());
            }
            const auto result = check_gradients(
                [&](Graph &g, const std::vector<Var> &p) {
                    return ops::sum(ops::elementwise_mul(op.apply(g, p), g.constant(probe)));
                },
                params);
            worst = std::max(worst, result.max_rel_error);
        }
        CHECK(worst < 1e-5);
    }
}

TEST_CASE("random 3-layer MLP gradient matches finite differences")
{
    for (const Activation act : {Activation::Tanh, Activation::Relu}) {
        Rng rng(act == Activation::Tanh ? 5 : 6);
        ParamSet params;
        const std::size_t hidden[] = {6, 5};
        Mlp mlp(params, "mlp", 4, hidden, 1, act, rng);
        const Matrix x = random_matrix(rng, 7, 4);
        const auto result = check_gradients(
            [&](Graph &g, const std::vector<Var> &p) { return ops::mean(mlp.forward(p, g.constant(x))); },
            params.values());
        CHECK(result.max_rel_error < 1e-5);
    }
}

TEST_CASE("graph-free MLP evaluation is bit-identical to the graph forward pass")
{
    Rng rng(21);
    ParamSet params;
    const std::size_t hidden[] = {8, 8};
    Mlp mlp(params, "m", 3, hidden, 2, Activation::Tanh, rng);
    const Matrix x = random_matrix(rng, 10, 3);
    Graph g;
    const auto bound = params.bind(g, false);
    CHECK(mlp.forward(bound, g.constant(x)).value() == mlp.evaluate(params, x));
}

TEST_CASE("parallel kernels are bit-identical to the serial reference")
{
    const int saved = kernels::max_threads();
    kernels::set_max_threads(4);
    Rng rng(17);
    const std::vector<std::array<std::size_t, 3>> shapes = {{1, 1, 1}, {3, 5, 2}, {17, 33, 9}, {300, 64, 64},
                                                            {2000, 20, 7}, {64, 1000, 5}};
    for (const auto &[m, k, n] : shapes) {
        CAPTURE(m);
        CAPTURE(k);
        CAPTURE(n);
        const Matrix a = random_matrix(rng, m, k);
        const Matrix b = random_matrix(rng, k, n);
        CHECK(kernels::matmul(a, b) == kernels::serial::matmul(a, b));
        const Matrix at = random_matrix(rng, k, m);
        CHECK(kernels::matmul_tn(at, b) == kernels::serial::matmul_tn(at, b));
        const Matrix bt = random_matrix(rng, n, k);
        CHECK(kernels::matmul_nt(a, bt) == kernels::serial::matmul_nt(a, bt));
        const Matrix bias = random_matrix(rng, 1, k);
        CHECK(kernels::add_bias(a, bias) == kernels::serial::add_bias(a, bias));
        CHECK(kernels::column_sums(a) == kernels::serial::column_sums(a));
        CHECK(kernels::tanh(a) == kernels::serial::tanh(a));
    }
    CHECK_THROWS_AS(kernels::matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
    kernels::set_max_threads(saved);
}

TEST_CASE("adam")
{
    const AdamConfig config;
    SUBCASE("zero gradient leaves parameters unchanged")
    {
        std::vector<Matrix> params{Matrix::from_rows({{1.5, -2.0}})};
        Adam adam(config, params);
        const std::vector<Matrix> grads{Matrix(1, 2, 0.0)};
        for (int i = 0; i < 10; ++i) {
            adam.step(params, grads);
        }
        CHECK(std::abs(params[0](0, 0) - 1.5) < 1e-9);
        CHECK(std::abs(params[0](0, 1) + 2.0) < 1e-9);
        CHECK(adam.steps() == 10);
    }
    SUBCASE("constant gradient moves against its sign")
    {
        std::vector<Matrix> params{Matrix::from_rows({{0.0, 0.0}})};
        Adam adam(config, params);
        const std::vector<Matrix> grads{Matrix::from_rows({{2.0, -0.5}})};
        for (int i = 0; i < 100; ++i) {
            adam.step(params, grads);
        }
        CHECK(params[0](0, 0) < 0.0);
        CHECK(params[0](0, 1) > 0.0);
    }
    SUBCASE("first step follows the bias-corrected recurrence")
    {
        const double g = 0.37;
        std::vector<Matrix> params{Matrix::from_rows({{1.0}})};
        Adam adam(config, params);
        adam.step(params, std::vector<Matrix>{Matrix::from_rows({{g}})});
        // m = (1-b1) g, v = (1-b2) g^2; m_hat = g, v_hat = g^2.
        const double m = (1.0 - config.beta1) * g;
        const double v = (1.0 - config.beta2) * g * g;
        const double m_hat = m / (1.0 - config.beta1);
        const double v_hat = v / (1.0 - config.beta2);
        const double expected = 1.0 - config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
        CHECK(params[0](0, 0) == doctest::Approx(expected).epsilon(1e-14));
        CHECK(std::abs(1.0 - params[0](0, 0)) == doctest::Approx(config.learning_rate).epsilon(1e-6));
        CHECK(adam.first_moments()[0](0, 0) == doctest::Approx(m));
    }
    SUBCASE("shape mismatch")
    {
        std::vector<Matrix> params{Matrix(2, 2)};
        Adam adam(config, params);
        CHECK_THROWS_AS(adam.step(params, std::vector<Matrix>{Matrix(2, 3)}), ShapeError);
        CHECK_THROWS_AS(adam.step(params, std::vector<Matrix>{}), ShapeError);
    }
}
