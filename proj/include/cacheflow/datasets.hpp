#pragma once

// Synthetic conditional-motion benchmarks and the CFDATA01 array file.
// Two generators:
//
//   bimodal-pendulum  pose space, 1 joint on an ellipse; the future either
//                     continues the phase or reverses it, with a mode
//                     weight that depends on the amplitude. A per-item
//                     phase jitter bends each mode into a 1-D filament,
//                     so the conditional is not a finite isotropic GMM.
//
//   latent-gmm        futures drawn directly in a 3-D latent from a
//                     2-mode diagonal GMM whose weights/means/scales are
//                     closed-form functions of a scalar condition s,
//                     which the (noiseless) past encodes as a ramp. True
//                     conditional densities are available exactly.
//
// File format CFDATA01, little-endian:
//   magic "CFDATA01", u64 item count, u32 past frames H, u32 future
//   frames F, u32 joints J, f64 fps, then per item H*J*3 f32 past values
//   followed by F*J*3 f32 future values, frame-major.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "cacheflow/detail/binio.hpp"
#include "cacheflow/error.hpp"
#include "cacheflow/gmm.hpp"
#include "cacheflow/pose.hpp"
#include "cacheflow/rng.hpp"

namespace cacheflow {

struct BenchmarkSpec {
    std::string generator = "bimodal-pendulum";
    std::size_t past_frames = 8;     // H
    std::size_t future_frames = 12;  // F
    std::size_t joints = 1;          // J
    std::size_t train_size = 2000;
    std::size_t test_size = 200;
    std::size_t modes = 2;
    double noise_scale = 0.02;  // pendulum: iso position noise; latent-gmm: sigma multiplier
    std::uint64_t seed = 0;
    double fps = 25.0;
    // bimodal-pendulum only: continue-mode weight endpoints over the
    // amplitude range, and the std of the per-item phase wobble.
    double weight_low = 0.25;
    double weight_high = 0.75;
    double phase_jitter = 0.08;
};

struct Dataset {
    std::vector<PoseSequence> pasts;
    std::vector<PoseSequence> futures;
    std::vector<int> labels;     // generator-specific mode id; empty if n/a
    std::vector<double> params;  // generator-specific condition scalar; empty if n/a
    double fps = 25.0;

    std::size_t size() const { return pasts.size(); }
};

struct SplitDataset {
    Dataset train;
    Dataset test;
};

namespace detail {

inline constexpr double kPendulumOmega = 2.0 * std::numbers::pi_v<double> / 20.0;
inline constexpr double kPendulumAmpLo = 0.6;
inline constexpr double kPendulumAmpHi = 1.4;

inline void pendulum_point(double amp, double phase, double* out) {
    out[0] = amp * std::sin(phase);
    out[1] = 0.5 * amp * std::cos(phase);
    out[2] = 0.0;
}

}  // namespace detail

// Analytic branch future for the pendulum: branch 0 continues the phase
// forward from the last past frame, branch 1 runs it backward. jitter is
// the per-item phase offset; 0 gives the noiseless mode center.
inline PoseSequence pendulum_branch_future(const BenchmarkSpec& spec, double amp, double psi,
                                           int branch, double jitter = 0.0) {
    PoseSequence f(spec.future_frames, spec.joints, spec.fps);
    double h1 = static_cast<double>(spec.past_frames) - 1.0;
    for (std::size_t j = 0; j < spec.future_frames; ++j) {
        double step = static_cast<double>(j) + 1.0;
        double phase =
            detail::kPendulumOmega * (branch == 0 ? h1 + step : h1 - step) + psi + jitter;
        double p[3];
        detail::pendulum_point(amp, phase, p);
        for (std::size_t q = 0; q < spec.joints; ++q)
            for (std::size_t a = 0; a < 3; ++a) f.at(j, q, a) = p[a];
    }
    return f;
}

// Continue-branch weight as a function of amplitude.
inline double pendulum_continue_weight(const BenchmarkSpec& spec, double amp) {
    double u = (amp - detail::kPendulumAmpLo) / (detail::kPendulumAmpHi - detail::kPendulumAmpLo);
    return spec.weight_low + (spec.weight_high - spec.weight_low) * u;
}

namespace detail {

inline void gen_pendulum_into(const BenchmarkSpec& spec, std::size_t n, Rng& rng, Dataset& out) {
    for (std::size_t i = 0; i < n; ++i) {
        double amp = rng.uniform(kPendulumAmpLo, kPendulumAmpHi);
        double psi = rng.uniform(0.0, 2.0 * std::numbers::pi_v<double>);
        PoseSequence past(spec.past_frames, spec.joints, spec.fps);
        for (std::size_t k = 0; k < spec.past_frames; ++k) {
            double p[3];
            pendulum_point(amp, kPendulumOmega * static_cast<double>(k) + psi, p);
            for (std::size_t q = 0; q < spec.joints; ++q)
                for (std::size_t a = 0; a < 3; ++a) past.at(k, q, a) = p[a];
        }
        double w_cont = pendulum_continue_weight(spec, amp);
        int branch = spec.modes <= 1 ? 0 : (rng.uniform() < w_cont ? 0 : 1);
        double jitter = spec.phase_jitter > 0.0 ? spec.phase_jitter * rng.normal() : 0.0;
        PoseSequence fut = pendulum_branch_future(spec, amp, psi, branch, jitter);
        if (spec.noise_scale > 0.0)
            for (double& v : fut.xyz) v += spec.noise_scale * rng.normal();
        out.pasts.push_back(std::move(past));
        out.futures.push_back(std::move(fut));
        out.labels.push_back(branch);
        out.params.push_back(amp);
    }
}

}  // namespace detail

inline SplitDataset gen_bimodal_pendulum(const BenchmarkSpec& spec) {
    if (spec.train_size == 0 || spec.test_size == 0)
        throw InputError("gen_bimodal_pendulum: empty split");
    Rng rng(spec.seed);
    SplitDataset ds;
    ds.train.fps = ds.test.fps = spec.fps;
    detail::gen_pendulum_into(spec, spec.train_size, rng, ds.train);
    detail::gen_pendulum_into(spec, spec.test_size, rng, ds.test);
    return ds;
}

// True conditional mixture of the latent-gmm generator at condition s.
inline GmmParams latent_gmm_true_params(const BenchmarkSpec& spec, double s) {
    double k = spec.noise_scale;
    GmmParams g;
    double w1 = 0.3 + 0.4 * (s + 1.0) / 2.0;
    g.weights = {w1, 1.0 - w1};
    g.means = Matrix(2, 3);
    g.means.at(0, 0) = 1.6 * std::tanh(s);
    g.means.at(0, 1) = 0.9 * s + 0.5;
    g.means.at(0, 2) = 0.7 * s;
    g.means.at(1, 0) = -1.4 * std::tanh(s);
    g.means.at(1, 1) = -0.9;
    g.means.at(1, 2) = 0.3 - 0.6 * s;
    g.scales = Matrix(2, 3);
    for (std::size_t j = 0; j < 3; ++j) {
        g.scales.at(0, j) = 0.30 * k;
        g.scales.at(1, j) = 0.35 * k;
    }
    return g;
}

// Recovers the condition scalar from a latent-gmm past (exact; pasts are
// noiseless by construction).
inline double latent_gmm_condition(const PoseSequence& past) {
    return past.at(past.frames - 1, 0, 0);
}

inline double latent_gmm_true_log_prob(const BenchmarkSpec& spec, double s, const LatentVector& x) {
    return gmm_log_prob(latent_gmm_true_params(spec, s), x);
}

namespace detail {

inline void gen_latent_gmm_into(const BenchmarkSpec& spec, std::size_t n, Rng& rng, Dataset& out) {
    double h = static_cast<double>(spec.past_frames);
    for (std::size_t i = 0; i < n; ++i) {
        double s = rng.uniform(-1.0, 1.0);
        PoseSequence past(spec.past_frames, 1, spec.fps);
        for (std::size_t k = 0; k < spec.past_frames; ++k) {
            past.at(k, 0, 0) = s * static_cast<double>(k + 1) / h;
            past.at(k, 0, 1) = 0.5 * s;
            past.at(k, 0, 2) = -0.3 * s;
        }
        GmmParams g = latent_gmm_true_params(spec, s);
        double u = rng.uniform();
        int mode = u < g.weights[0] ? 0 : 1;
        PoseSequence fut(1, 1, spec.fps);
        for (std::size_t j = 0; j < 3; ++j)
            fut.at(0, 0, j) = g.means.at(mode, j) + g.scales.at(mode, j) * rng.normal();
        out.pasts.push_back(std::move(past));
        out.futures.push_back(std::move(fut));
        out.labels.push_back(mode);
        out.params.push_back(s);
    }
}

}  // namespace detail

// Latent-space benchmark: futures are F=1, J=1 sequences whose three
// coordinates are the latent itself (identity codec, d = 3).
inline SplitDataset gen_latent_gmm(const BenchmarkSpec& spec) {
    if (spec.train_size == 0 || spec.test_size == 0)
        throw InputError("gen_latent_gmm: empty split");
    if (spec.noise_scale <= 0.0) throw InputError("gen_latent_gmm: noise_scale must be > 0");
    Rng rng(spec.seed);
    SplitDataset ds;
    ds.train.fps = ds.test.fps = spec.fps;
    detail::gen_latent_gmm_into(spec, spec.train_size, rng, ds.train);
    detail::gen_latent_gmm_into(spec, spec.test_size, rng, ds.test);
    return ds;
}

inline SplitDataset generate(const BenchmarkSpec& spec) {
    if (spec.generator == "bimodal-pendulum") return gen_bimodal_pendulum(spec);
    if (spec.generator == "latent-gmm") return gen_latent_gmm(spec);
    throw ConfigError("unknown generator '" + spec.generator + "'");
}

inline std::vector<std::uint8_t> save_array_bytes(const Dataset& ds) {
    if (ds.pasts.size() != ds.futures.size())
        throw InputError("save_array_file: past/future count mismatch");
    if (ds.pasts.empty()) throw InputError("save_array_file: empty dataset");
    std::size_t h = ds.pasts[0].frames, f = ds.futures[0].frames, j = ds.pasts[0].joints;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        check_same_shape(ds.pasts[0], ds.pasts[i], "save_array_file pasts");
        check_same_shape(ds.futures[0], ds.futures[i], "save_array_file futures");
    }
    std::vector<std::uint8_t> buf;
    detail::put_bytes(buf, "CFDATA01", 8);
    detail::put_u64(buf, ds.size());
    detail::put_u32(buf, static_cast<std::uint32_t>(h));
    detail::put_u32(buf, static_cast<std::uint32_t>(f));
    detail::put_u32(buf, static_cast<std::uint32_t>(j));
    detail::put_f64(buf, ds.fps);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (double v : ds.pasts[i].xyz) detail::put_f32(buf, static_cast<float>(v));
        for (double v : ds.futures[i].xyz) detail::put_f32(buf, static_cast<float>(v));
    }
    return buf;
}

inline void save_array_file(const std::string& path, const Dataset& ds) {
    detail::write_file(path, save_array_bytes(ds));
}

inline Dataset load_array_bytes(const std::vector<std::uint8_t>& buf) {
    detail::ByteReader r(buf);
    r.expect_magic("CFDATA01", 8);
    std::uint64_t n = r.u64("item count");
    std::uint32_t h = r.u32("past frames");
    std::uint32_t f = r.u32("future frames");
    std::uint32_t j = r.u32("joints");
    double fps = r.f64("fps");
    if (n == 0 || h == 0 || f == 0 || j == 0)
        throw ParseError("zero count in header", r.offset());
    Dataset ds;
    ds.fps = fps;
    ds.pasts.reserve(n);
    ds.futures.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        PoseSequence past(h, j, fps);
        for (double& v : past.xyz) v = static_cast<double>(r.f32("past frame value"));
        PoseSequence fut(f, j, fps);
        for (double& v : fut.xyz) v = static_cast<double>(r.f32("future frame value"));
        ds.pasts.push_back(std::move(past));
        ds.futures.push_back(std::move(fut));
    }
    if (!r.at_end()) throw ParseError("trailing bytes after last item", r.offset());
    return ds;
}

inline Dataset load_array_file(const std::string& path) {
    return load_array_bytes(detail::read_file(path));
}

// Conditions for the encoder: one feature row per past frame.
inline std::vector<Condition> dataset_conditions(const Dataset& ds) {
    std::vector<Condition> cs;
    cs.reserve(ds.size());
    for (const auto& p : ds.pasts) cs.push_back(Condition{pose_features(p)});
    return cs;
}

}  // namespace cacheflow
