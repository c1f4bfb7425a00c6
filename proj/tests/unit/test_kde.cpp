#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "cacheflow/kde.hpp"
#include "cacheflow/rng.hpp"

using namespace cacheflow;

TEST_CASE("scott bandwidth", "[kde]") {
    Rng rng(501);
    Matrix xs(100, 2);
    for (double& v : xs.data) v = rng.normal();
    KdeModel m = fit_kde(xs);
    // 100^(-1/6)
    CHECK(m.h == Catch::Approx(0.4641588833612779).epsilon(1e-15));

    Matrix two(2, 1);
    two.at(0, 0) = 0.0;
    two.at(1, 0) = 2.0;
    // 2^(-1/5)
    CHECK(fit_kde(two).h == Catch::Approx(0.8705505632961241).epsilon(1e-15));
}

TEST_CASE("degenerate dimensions fall back to unit std", "[kde]") {
    Matrix xs(2, 1);  // both samples at 0
    KdeModel m = fit_kde(xs);
    CHECK(m.degenerate_dims == 1);
    CHECK(m.std_dev[0] == 1.0);
    CHECK(m.log_std_sum == 0.0);
    CHECK(kde_log_prob(m, {0.0}) == Catch::Approx(-0.7803090970926836).epsilon(1e-14));
}

TEST_CASE("two-sample log density by hand", "[kde]") {
    Matrix xs(2, 1);
    xs.at(0, 0) = 0.0;
    xs.at(1, 0) = 2.0;
    KdeModel m = fit_kde(xs);
    CHECK(m.degenerate_dims == 0);
    CHECK(m.mean[0] == 1.0);
    CHECK(m.std_dev[0] == Catch::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(kde_log_prob(m, {1.0}) == Catch::Approx(-1.4567596650658798).epsilon(1e-14));
}

TEST_CASE("kde recovers a gaussian to 0.1 nats", "[kde]") {
    Rng rng(502);
    std::size_t n = 10000;
    Matrix xs(n, 2);
    for (double& v : xs.data) v = rng.normal();
    KdeModel m = fit_kde(xs);

    double mean_lp = 0.0;
    std::size_t q = 500;
    for (std::size_t i = 0; i < q; ++i) mean_lp += kde_log_prob(m, {rng.normal(), rng.normal()});
    mean_lp /= static_cast<double>(q);

    // E[log N(x; 0, I_2)] = -log(2 pi) - 1
    CHECK(mean_lp == Catch::Approx(-2.8378770664093453).margin(0.1));
}

TEST_CASE("kde input validation", "[kde]") {
    CHECK_THROWS_AS(fit_kde(Matrix(1, 2)), InputError);
    CHECK_THROWS_AS(fit_kde(Matrix(3, 0)), InputError);
    Matrix xs(3, 2);
    KdeModel m = fit_kde(xs);
    CHECK_THROWS_AS(kde_log_prob(m, {1.0}), DimensionError);
}
