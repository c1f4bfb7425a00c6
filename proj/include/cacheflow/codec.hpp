#pragma once

// Codec between pose-space futures and the d-dimensional latent the flow
// runs in. Two kinds: identity (latent is the flattened future, d = F*J*3,
// for synthetic latent-space benchmarks) and linear (top-d principal
// directions of the training futures; encode is an affine projection,
// decode its transpose).
//
// File format CFCODEC1, little-endian:
//   magic "CFCODEC1", u8 kind (0 identity, 1 linear),
//   u64 D, u64 d, u64 F, u64 J, f64 fps,
//   linear only: f64 mean[D], f64 basis[d*D] row-major

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cacheflow/detail/binio.hpp"
#include "cacheflow/error.hpp"
#include "cacheflow/pose.hpp"
#include "cacheflow/tensor.hpp"

namespace cacheflow {

enum class CodecKind : std::uint8_t { identity = 0, linear = 1 };

struct Codec {
    CodecKind kind = CodecKind::identity;
    std::size_t frames = 0;  // F of the futures this codec was built for
    std::size_t joints = 0;
    double fps = 25.0;
    std::size_t latent_dim = 0;   // d
    std::vector<double> mean;     // D entries (linear only)
    Matrix basis;                 // d x D orthonormal rows (linear only)

    std::size_t flat_dim() const { return frames * joints * 3; }

    static Codec identity_codec(std::size_t frames, std::size_t joints, double fps) {
        Codec c;
        c.kind = CodecKind::identity;
        c.frames = frames;
        c.joints = joints;
        c.fps = fps;
        c.latent_dim = frames * joints * 3;
        return c;
    }

    LatentVector encode(const PoseSequence& p) const {
        if (p.frames != frames || p.joints != joints)
            throw DimensionError("codec encode: sequence " + std::to_string(p.frames) + "x" +
                                 std::to_string(p.joints) + ", codec expects " +
                                 std::to_string(frames) + "x" + std::to_string(joints));
        if (kind == CodecKind::identity) return p.xyz;
        LatentVector z(latent_dim, 0.0);
        for (std::size_t r = 0; r < latent_dim; ++r) {
            const double* br = basis.row_ptr(r);
            double acc = 0.0;
            for (std::size_t j = 0; j < mean.size(); ++j) acc += br[j] * (p.xyz[j] - mean[j]);
            z[r] = acc;
        }
        return z;
    }

    PoseSequence decode(const LatentVector& z) const {
        if (z.size() != latent_dim)
            throw DimensionError("codec decode: latent dim " + std::to_string(z.size()) +
                                 ", codec d " + std::to_string(latent_dim));
        PoseSequence p(frames, joints, fps);
        if (kind == CodecKind::identity) {
            p.xyz = z;
            return p;
        }
        for (std::size_t j = 0; j < mean.size(); ++j) {
            double acc = mean[j];
            for (std::size_t r = 0; r < latent_dim; ++r) acc += basis.at(r, j) * z[r];
            p.xyz[j] = acc;
        }
        return p;
    }

    std::vector<std::uint8_t> save_bytes() const {
        std::vector<std::uint8_t> buf;
        detail::put_bytes(buf, "CFCODEC1", 8);
        detail::put_u8(buf, static_cast<std::uint8_t>(kind));
        detail::put_u64(buf, flat_dim());
        detail::put_u64(buf, latent_dim);
        detail::put_u64(buf, frames);
        detail::put_u64(buf, joints);
        detail::put_f64(buf, fps);
        if (kind == CodecKind::linear) {
            for (double v : mean) detail::put_f64(buf, v);
            for (double v : basis.data) detail::put_f64(buf, v);
        }
        return buf;
    }

    void save(const std::string& path) const { detail::write_file(path, save_bytes()); }

    static Codec load_bytes(const std::vector<std::uint8_t>& buf) {
        detail::ByteReader r(buf);
        r.expect_magic("CFCODEC1", 8);
        std::uint8_t kind_raw = r.u8("codec kind");
        if (kind_raw > 1) throw ParseError("unknown codec kind " + std::to_string(kind_raw), r.offset());
        Codec c;
        c.kind = static_cast<CodecKind>(kind_raw);
        std::uint64_t big_d = r.u64("flat dim");
        c.latent_dim = r.u64("latent dim");
        c.frames = r.u64("frames");
        c.joints = r.u64("joints");
        c.fps = r.f64("fps");
        if (c.flat_dim() != big_d)
            throw ParseError("flat dim " + std::to_string(big_d) + " does not match frames*joints*3",
                             r.offset());
        if (c.kind == CodecKind::linear) {
            c.mean.resize(big_d);
            for (auto& v : c.mean) v = r.f64("codec mean");
            c.basis = Matrix(c.latent_dim, big_d);
            for (auto& v : c.basis.data) v = r.f64("codec basis");
        } else if (c.latent_dim != big_d) {
            throw ParseError("identity codec with latent dim != flat dim", r.offset());
        }
        if (!r.at_end()) throw ParseError("trailing bytes after codec payload", r.offset());
        return c;
    }

    static Codec load(const std::string& path) { return load_bytes(detail::read_file(path)); }
};

// Top-d principal directions of the futures by eigendecomposition of the
// sample covariance. Sign fixed so each basis row's largest-magnitude
// entry is positive. Data whose covariance rank is below d is rejected
// with the achievable rank in the message.
inline Codec fit_linear(const std::vector<PoseSequence>& futures, std::size_t d) {
    if (futures.empty()) throw InputError("fit_linear: no futures");
    std::size_t big_d = futures[0].flat_size();
    std::size_t n = futures.size();
    if (d == 0 || d > big_d)
        throw InputError("fit_linear: d = " + std::to_string(d) + " out of range 1.." +
                         std::to_string(big_d));
    if (n < d)
        throw InputError("fit_linear: " + std::to_string(n) + " samples for d = " + std::to_string(d));
    for (const auto& f : futures) check_same_shape(futures[0], f, "fit_linear");

    std::vector<double> mean(big_d, 0.0);
    for (const auto& f : futures)
        for (std::size_t j = 0; j < big_d; ++j) mean[j] += f.xyz[j];
    for (double& v : mean) v /= static_cast<double>(n);

    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(big_d, big_d);
    Eigen::VectorXd row(big_d);
    for (const auto& f : futures) {
        for (std::size_t j = 0; j < big_d; ++j) row(j) = f.xyz[j] - mean[j];
        cov.noalias() += row * row.transpose();
    }
    cov /= static_cast<double>(n > 1 ? n - 1 : 1);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) throw NumericError("fit_linear: eigendecomposition failed");
    // Eigen returns eigenvalues ascending; walk from the back.
    double lam_max = std::max(es.eigenvalues()(big_d - 1), 0.0);
    double tol = lam_max * 1e-10;
    std::size_t rank = 0;
    for (std::size_t i = 0; i < big_d; ++i)
        if (es.eigenvalues()(i) > tol) ++rank;
    if (rank < d)
        throw InputError("fit_linear: data rank " + std::to_string(rank) + " < requested d = " +
                         std::to_string(d));

    Codec c;
    c.kind = CodecKind::linear;
    c.frames = futures[0].frames;
    c.joints = futures[0].joints;
    c.fps = futures[0].fps;
    c.latent_dim = d;
    c.mean = std::move(mean);
    c.basis = Matrix(d, big_d);
    for (std::size_t r = 0; r < d; ++r) {
        Eigen::VectorXd v = es.eigenvectors().col(big_d - 1 - r);
        std::size_t arg = 0;
        for (std::size_t j = 1; j < big_d; ++j)
            if (std::abs(v(j)) > std::abs(v(arg))) arg = j;
        double sign = v(arg) < 0.0 ? -1.0 : 1.0;
        for (std::size_t j = 0; j < big_d; ++j) c.basis.at(r, j) = sign * v(j);
    }
    return c;
}

// Encodes every future into one latent row.
inline Matrix encode_all(const Codec& codec, const std::vector<PoseSequence>& futures) {
    Matrix xs(futures.size(), codec.latent_dim);
    for (std::size_t i = 0; i < futures.size(); ++i) {
        LatentVector z = codec.encode(futures[i]);
        std::copy(z.begin(), z.end(), xs.row_ptr(i));
    }
    return xs;
}

}  // namespace cacheflow
