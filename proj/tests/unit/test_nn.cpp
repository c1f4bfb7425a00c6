#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "cacheflow/adam.hpp"
#include "cacheflow/gru.hpp"
#include "cacheflow/mlp.hpp"
#include "cacheflow/rng.hpp"
#include "cacheflow/tape.hpp"

using namespace cacheflow;

namespace {

void set_block(ParamStore& ps, const std::string& name, const std::vector<double>& v) {
    const ParamBlock* b = ps.find(name);
    REQUIRE(b != nullptr);
    REQUIRE(b->count() == v.size());
    std::memcpy(ps.values() + b->offset, v.data(), v.size() * sizeof(double));
}

}  // namespace

TEST_CASE("mlp matches a hand-computed tanh network", "[nn]") {
    ParamStore ps;
    Rng rng(0);
    Mlp mlp(ps, "m", MlpSpec{{2, 2, 1}, Activation::tanh}, rng, false);
    set_block(ps, "m.w0", {0.5, -0.25, 0.1, 0.3});
    set_block(ps, "m.b0", {0.05, -0.05});
    set_block(ps, "m.w1", {1.5, -2.0});
    set_block(ps, "m.b1", {0.2});

    Matrix x(1, 2, {1.0, 0.0});
    Matrix y = mlp.forward(ps, x);
    CHECK(y.at(0, 0) == Catch::Approx(1.5334055416885346).epsilon(1e-15));

    CHECK_THROWS_AS(mlp.forward(ps, Matrix(1, 3)), DimensionError);
}

TEST_CASE("zero-init last layer gives an exactly zero output", "[nn]") {
    ParamStore ps;
    Rng rng(3);
    Mlp mlp(ps, "z", MlpSpec{{3, 8, 2}, Activation::silu}, rng, /*zero_last=*/true);
    Matrix x(4, 3);
    for (double& v : x.data) v = rng.normal();
    Matrix y = mlp.forward(ps, x);
    for (double v : y.data) CHECK(v == 0.0);
}

TEST_CASE("taped mlp forward is bitwise equal to the plain path", "[nn]") {
    ParamStore ps;
    Rng rng(8);
    Mlp mlp(ps, "m", MlpSpec{{3, 5, 4, 2}, Activation::tanh}, rng, false);
    Matrix x(6, 3);
    for (double& v : x.data) v = rng.normal();

    Matrix plain = mlp.forward(ps, x);
    Tape t(ps);
    Val taped = mlp.forward_taped(t, t.constant(x));
    REQUIRE(taped.value().rows == plain.rows);
    for (std::size_t i = 0; i < plain.data.size(); ++i)
        CHECK(taped.value().data[i] == plain.data[i]);
}

TEST_CASE("mlp jvp matches directional finite differences", "[nn]") {
    ParamStore ps;
    Rng rng(21);
    for (Activation act : {Activation::tanh, Activation::silu}) {
        Mlp mlp(ps, act == Activation::tanh ? "jt" : "js", MlpSpec{{3, 6, 2}, act}, rng, false);
        Matrix x(2, 3);
        for (double& v : x.data) v = rng.normal();
        Matrix tx(2, 3);
        for (double& v : tx.data) v = rng.normal();

        std::vector<Matrix> preacts;
        mlp.forward_cached(ps, x, preacts);
        Matrix jv = mlp.jvp(ps, preacts, tx, x.rows);

        const double eps = 1e-6;
        Matrix xp = x, xm = x;
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            xp.data[i] += eps * tx.data[i];
            xm.data[i] -= eps * tx.data[i];
        }
        Matrix up = mlp.forward(ps, xp), dn = mlp.forward(ps, xm);
        for (std::size_t i = 0; i < jv.data.size(); ++i) {
            double fd = (up.data[i] - dn.data[i]) / (2.0 * eps);
            CHECK(std::abs(fd - jv.data[i]) < 1e-6 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("gru matches a hand-stepped scalar cell", "[nn]") {
    ParamStore ps;
    Rng rng(0);
    Gru gru(ps, "g", GruSpec{1, 1}, rng);
    set_block(ps, "g.wr", {0.5});
    set_block(ps, "g.ur", {0.25});
    set_block(ps, "g.wu", {0.3});
    set_block(ps, "g.uu", {-0.2});
    set_block(ps, "g.wc", {1.0});
    set_block(ps, "g.uc", {0.7});
    set_block(ps, "g.br", {0.0});
    set_block(ps, "g.bu", {0.1});
    set_block(ps, "g.bc", {-0.1});

    std::vector<Matrix> steps = {Matrix(1, 1, {1.0}), Matrix(1, 1, {-0.5})};
    Matrix h1 = gru.step(ps, steps[0], Matrix(1, 1));
    CHECK(h1.at(0, 0) == Catch::Approx(0.2874591743460376).epsilon(1e-15));
    Matrix h2 = gru.encode(ps, steps);
    CHECK(h2.at(0, 0) == Catch::Approx(-0.11088976457980537).epsilon(1e-15));

    CHECK_THROWS_AS(gru.encode(ps, {}), InputError);
}

TEST_CASE("gru zero input and state stays exactly zero", "[nn]") {
    // Biases initialize to zero, so tanh(0) keeps the candidate at zero.
    ParamStore ps;
    Rng rng(9);
    Gru gru(ps, "g0", GruSpec{3, 4}, rng);
    Matrix h = gru.encode(ps, {Matrix(2, 3), Matrix(2, 3)});
    for (double v : h.data) CHECK(v == 0.0);
}

TEST_CASE("taped gru encode is bitwise equal to the plain path", "[nn]") {
    ParamStore ps;
    Rng rng(31);
    Gru gru(ps, "gt", GruSpec{2, 5}, rng);
    std::vector<Matrix> steps;
    for (int t = 0; t < 4; ++t) {
        Matrix x(3, 2);
        for (double& v : x.data) v = rng.normal();
        steps.push_back(std::move(x));
    }
    Matrix plain = gru.encode(ps, steps);

    Tape tape(ps);
    Val taped = gru.encode_taped(tape, steps);
    for (std::size_t i = 0; i < plain.data.size(); ++i)
        CHECK(taped.value().data[i] == plain.data[i]);
}

TEST_CASE("adam converges on a separable quadratic", "[nn]") {
    ParamStore ps;
    ParamBlock p = ps.add("opt.p", {2});
    AdamConfig cfg;
    cfg.lr = 0.05;
    Adam adam(ps, cfg);
    for (int t = 0; t < 200; ++t) {
        double* v = ps.values() + p.offset;
        ps.grads()[p.offset + 0] = v[0] - 1.0;
        ps.grads()[p.offset + 1] = 4.0 * (v[1] + 2.0);
        adam.step();
    }
    double dx = ps.values()[p.offset] - 1.0;
    double dy = ps.values()[p.offset + 1] + 2.0;
    double dist = std::sqrt(dx * dx + dy * dy);
    CHECK(dist == Catch::Approx(7.26383885892242e-05).epsilon(1e-9));
}

TEST_CASE("adam refuses non-finite gradients without moving", "[nn]") {
    ParamStore ps;
    ParamBlock p = ps.add("opt.q", {2});
    ps.values()[p.offset] = 1.5;
    Adam adam(ps);
    ps.grads()[p.offset] = std::numeric_limits<double>::quiet_NaN();
    ps.grads()[p.offset + 1] = 1.0;
    CHECK_THROWS_WITH(adam.step(), Catch::Matchers::ContainsSubstring("opt.q"));
    CHECK(ps.values()[p.offset] == 1.5);
    CHECK(ps.values()[p.offset + 1] == 0.0);
}
