#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include "cacheflow/codec.hpp"
#include "cacheflow/pose.hpp"
#include "cacheflow/rng.hpp"

using namespace cacheflow;

TEST_CASE("identity codec round-trips exactly", "[codec]") {
    Codec c = Codec::identity_codec(2, 3, 30.0);
    REQUIRE(c.latent_dim == 18);
    REQUIRE(c.flat_dim() == 18);

    PoseSequence p(2, 3, 30.0);
    Rng rng(5);
    for (double& v : p.xyz) v = rng.normal();

    LatentVector z = c.encode(p);
    REQUIRE(z.size() == 18);
    for (std::size_t i = 0; i < 18; ++i) CHECK(z[i] == p.xyz[i]);

    PoseSequence q = c.decode(z);
    CHECK(q.frames == 2);
    CHECK(q.joints == 3);
    CHECK(q.fps == 30.0);
    for (std::size_t i = 0; i < 18; ++i) CHECK(q.xyz[i] == p.xyz[i]);

    CHECK_THROWS_AS(c.encode(PoseSequence(3, 3)), DimensionError);
    CHECK_THROWS_AS(c.decode(LatentVector(17, 0.0)), DimensionError);
}

TEST_CASE("pose_features lays frames out row-major", "[codec]") {
    PoseSequence p(2, 2, 25.0);
    for (std::size_t i = 0; i < p.xyz.size(); ++i) p.xyz[i] = static_cast<double>(i);
    Matrix f = pose_features(p);
    REQUIRE(f.rows == 2);
    REQUIRE(f.cols == 6);
    for (std::size_t t = 0; t < 2; ++t)
        for (std::size_t j = 0; j < 2; ++j)
            for (std::size_t a = 0; a < 3; ++a)
                CHECK(f.at(t, j * 3 + a) == p.at(t, j, a));
}

namespace {

// Futures confined to a fixed 2-plane in R^6 so the covariance has rank 2.
std::vector<PoseSequence> plane_futures(std::size_t n) {
    const double s = 1.0 / std::sqrt(2.0);
    const double u[6] = {s, s, 0, 0, 0, 0};
    const double v[6] = {0, 0, s, -s, 0, 0};
    const double center[6] = {1.0, -2.0, 0.5, 3.0, -1.0, 0.25};
    Rng rng(11);
    std::vector<PoseSequence> fs;
    for (std::size_t i = 0; i < n; ++i) {
        PoseSequence p(1, 2, 25.0);
        double a = 3.0 * rng.normal(), b = 1.5 * rng.normal();
        for (std::size_t j = 0; j < 6; ++j) p.xyz[j] = center[j] + a * u[j] + b * v[j];
        fs.push_back(std::move(p));
    }
    return fs;
}

}  // namespace

TEST_CASE("linear codec recovers a planar subspace", "[codec]") {
    std::vector<PoseSequence> fs = plane_futures(40);
    Codec c = fit_linear(fs, 2);
    REQUIRE(c.kind == CodecKind::linear);
    REQUIRE(c.latent_dim == 2);
    REQUIRE(c.basis.rows == 2);
    REQUIRE(c.basis.cols == 6);

    // Basis rows orthonormal.
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t q = 0; q < 2; ++q) {
            double dot = 0.0;
            for (std::size_t j = 0; j < 6; ++j) dot += c.basis.at(r, j) * c.basis.at(q, j);
            CHECK(dot == Catch::Approx(r == q ? 1.0 : 0.0).margin(1e-12));
        }
    }

    // Sign convention: each row's largest-magnitude entry is positive.
    for (std::size_t r = 0; r < 2; ++r) {
        std::size_t arg = 0;
        for (std::size_t j = 1; j < 6; ++j)
            if (std::abs(c.basis.at(r, j)) > std::abs(c.basis.at(r, arg))) arg = j;
        CHECK(c.basis.at(r, arg) > 0.0);
    }

    // Samples lie in the span, so encode/decode recovers them.
    for (const auto& f : fs) {
        PoseSequence back = c.decode(c.encode(f));
        for (std::size_t j = 0; j < 6; ++j)
            CHECK(back.xyz[j] == Catch::Approx(f.xyz[j]).margin(1e-10));
    }

    // Asking for more directions than the data has is rejected with the rank.
    CHECK_THROWS_WITH(fit_linear(fs, 3), Catch::Matchers::ContainsSubstring("rank 2"));
}

TEST_CASE("fit_linear input validation", "[codec]") {
    CHECK_THROWS_AS(fit_linear({}, 2), InputError);
    std::vector<PoseSequence> fs = plane_futures(4);
    CHECK_THROWS_AS(fit_linear(fs, 0), InputError);
    CHECK_THROWS_AS(fit_linear(fs, 7), InputError);
    CHECK_THROWS_AS(fit_linear(plane_futures(1), 2), InputError);
}

TEST_CASE("encode_all stacks per-future encodings", "[codec]") {
    std::vector<PoseSequence> fs = plane_futures(5);
    Codec c = fit_linear(fs, 2);
    Matrix xs = encode_all(c, fs);
    REQUIRE(xs.rows == 5);
    REQUIRE(xs.cols == 2);
    for (std::size_t i = 0; i < 5; ++i) {
        LatentVector z = c.encode(fs[i]);
        CHECK(xs.at(i, 0) == z[0]);
        CHECK(xs.at(i, 1) == z[1]);
    }
}

TEST_CASE("codec files round-trip and reject corruption", "[codec]") {
    std::vector<PoseSequence> fs = plane_futures(12);
    Codec c = fit_linear(fs, 2);

    std::vector<std::uint8_t> buf = c.save_bytes();
    Codec back = Codec::load_bytes(buf);
    CHECK(back.kind == c.kind);
    CHECK(back.frames == c.frames);
    CHECK(back.joints == c.joints);
    CHECK(back.fps == c.fps);
    CHECK(back.latent_dim == c.latent_dim);
    REQUIRE(back.mean.size() == c.mean.size());
    for (std::size_t j = 0; j < 6; ++j) CHECK(back.mean[j] == c.mean[j]);
    for (std::size_t k = 0; k < c.basis.data.size(); ++k)
        CHECK(back.basis.data[k] == c.basis.data[k]);
    CHECK(back.save_bytes() == buf);

    // Identity codecs round-trip too.
    Codec ident = Codec::identity_codec(1, 1, 25.0);
    Codec ident_back = Codec::load_bytes(ident.save_bytes());
    CHECK(ident_back.kind == CodecKind::identity);
    CHECK(ident_back.latent_dim == 3);

    // Bad magic.
    std::vector<std::uint8_t> bad = buf;
    bad[0] ^= 0xff;
    CHECK_THROWS_WITH(Codec::load_bytes(bad), Catch::Matchers::ContainsSubstring("magic"));

    // Unknown kind byte.
    bad = buf;
    bad[8] = 2;
    CHECK_THROWS_WITH(Codec::load_bytes(bad), Catch::Matchers::ContainsSubstring("kind"));

    // Truncation mid-payload.
    bad = buf;
    bad.resize(bad.size() - 1);
    CHECK_THROWS_AS(Codec::load_bytes(bad), ParseError);

    // Trailing garbage.
    bad = buf;
    bad.push_back(0);
    CHECK_THROWS_WITH(Codec::load_bytes(bad), Catch::Matchers::ContainsSubstring("trailing"));

    // Identity codec whose latent dim disagrees with the flat dim.
    Codec broken = Codec::identity_codec(1, 1, 25.0);
    broken.latent_dim = 2;
    CHECK_THROWS_AS(Codec::load_bytes(broken.save_bytes()), ParseError);
}

TEST_CASE("codec file save and load through disk", "[codec]") {
    Codec c = Codec::identity_codec(2, 1, 50.0);
    std::string path = "/tmp/cf_test_codec.cfcodec";
    c.save(path);
    Codec back = Codec::load(path);
    CHECK(back.frames == 2);
    CHECK(back.joints == 1);
    CHECK(back.fps == 50.0);
    CHECK_THROWS_AS(Codec::load("/tmp/cf_missing_codec.cfcodec"), IoError);
}
