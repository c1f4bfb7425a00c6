#pragma once

// Conditional base density q(z|c): a GRU encodes the past sequence and
// three linear heads regress a diagonal Gaussian mixture (weights,
// means, scales). Scales go through softplus plus a floor so no mode can
// collapse to a spike; weights go through softmax and are renormalized
// to sum to 1 exactly.
//
// Two evaluation paths: regress()+gmm_log_prob() is the plain inference
// path, log_prob_taped() builds the same quantity on an autodiff tape
// for training. They agree to rounding but are not required to be
// bit-identical to each other.

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "cacheflow/detail/kernels.hpp"
#include "cacheflow/error.hpp"
#include "cacheflow/gru.hpp"
#include "cacheflow/param_store.hpp"
#include "cacheflow/rng.hpp"
#include "cacheflow/tape.hpp"
#include "cacheflow/tensor.hpp"

namespace cacheflow {

inline constexpr double kDefaultSigmaFloor = 1e-3;

struct GmmParams {
    std::vector<double> weights;  // M entries, nonnegative, sum 1
    Matrix means;                 // M x d
    Matrix scales;                // M x d, every entry >= the floor used to build it

    std::size_t modes() const { return weights.size(); }
    std::size_t dim() const { return means.cols; }
};

// Past motion as a T x in feature matrix, one frame per row. A
// pre-encoded feature vector is the T = 1 case.
struct Condition {
    Matrix past;
};

// Allocation-free variant over a raw coordinate pointer; the inference
// loop calls this once per cached triplet. Log-sum-exp runs online (one
// pass, rescaling the partial sum whenever a new maximum appears).
inline double gmm_log_prob_ptr(const GmmParams& g, const double* z) {
    std::size_t m = g.modes(), d = g.dim();
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi_v<double>);
    double mx = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        double acc = std::log(g.weights[k]);
        const double* mu = g.means.row_ptr(k);
        const double* sg = g.scales.row_ptr(k);
        for (std::size_t j = 0; j < d; ++j) {
            double u = (z[j] - mu[j]) / sg[j];
            acc += -0.5 * u * u - std::log(sg[j]) - half_log_2pi;
        }
        // A zero-weight mode contributes no mass; skipping it keeps the
        // running rescale free of inf-inf.
        if (acc == -std::numeric_limits<double>::infinity()) continue;
        if (acc <= mx) {
            sum += std::exp(acc - mx);
        } else {
            sum = sum * std::exp(mx - acc) + 1.0;
            mx = acc;
        }
    }
    return mx + std::log(sum);
}

inline double gmm_log_prob(const GmmParams& g, const LatentVector& z) {
    if (z.size() != g.dim())
        throw DimensionError("gmm_log_prob: point dim " + std::to_string(z.size()) +
                             ", mixture dim " + std::to_string(g.dim()));
    return gmm_log_prob_ptr(g, z.data());
}

inline std::vector<LatentVector> gmm_sample(const GmmParams& g, Rng& rng, std::size_t n) {
    if (n == 0) throw InputError("gmm_sample: n must be >= 1");
    std::size_t m = g.modes(), d = g.dim();
    std::vector<LatentVector> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        double u = rng.uniform();
        std::size_t pick = m - 1;
        double cum = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            cum += g.weights[k];
            if (u < cum) {
                pick = k;
                break;
            }
        }
        LatentVector z(d);
        const double* mu = g.means.row_ptr(pick);
        const double* sg = g.scales.row_ptr(pick);
        for (std::size_t j = 0; j < d; ++j) z[j] = mu[j] + sg[j] * rng.normal();
        out.push_back(std::move(z));
    }
    return out;
}

struct BaseDensitySpec {
    std::size_t input_dim = 0;  // per-frame feature width of the condition
    std::size_t hidden = 128;
    std::size_t modes = 50;
    std::size_t dim = 8;  // latent dimension d
    double sigma_floor = kDefaultSigmaFloor;
};

class BaseDensity {
public:
    BaseDensity() = default;

    BaseDensity(ParamStore& store, const std::string& prefix, BaseDensitySpec spec, Rng& rng)
        : spec_(spec) {
        if (spec_.modes == 0 || spec_.dim == 0) throw ConfigError("base density needs modes, dim > 0");
        gru_ = Gru(store, prefix + ".enc", GruSpec{spec_.input_dim, spec_.hidden}, rng);
        std::size_t h = spec_.hidden, md = spec_.modes * spec_.dim;
        wl_ = store.add_random(prefix + ".head_w.w", {h, spec_.modes}, rng, h);
        bl_ = store.add(prefix + ".head_w.b", {spec_.modes});
        wm_ = store.add_random(prefix + ".head_mu.w", {h, md}, rng, h);
        bm_ = store.add(prefix + ".head_mu.b", {md});
        ws_ = store.add_random(prefix + ".head_sigma.w", {h, md}, rng, h);
        bs_ = store.add(prefix + ".head_sigma.b", {md});
    }

    const BaseDensitySpec& spec() const { return spec_; }
    const Gru& gru() const { return gru_; }

    GmmParams regress(const ParamStore& s, const Condition& c) const {
        std::vector<Matrix> steps = to_steps(c);
        Matrix h = gru_.encode(s, steps);
        return heads_to_params(s, h, 0);
    }

    // One GmmParams per condition; all conditions must share T and width.
    std::vector<GmmParams> regress_batch(const ParamStore& s,
                                         const std::vector<Matrix>& steps) const {
        Matrix h = gru_.encode(s, steps);
        std::vector<GmmParams> out;
        out.reserve(h.rows);
        for (std::size_t r = 0; r < h.rows; ++r) out.push_back(heads_to_params(s, h, r));
        return out;
    }

    // log q(z_b | c_b) for a batch, as a B x 1 tape value. steps[t] is the
    // t-th frame of every condition stacked, z holds one latent per row.
    Val log_prob_taped(Tape& t, const std::vector<Matrix>& steps, const Matrix& z) const {
        std::size_t m = spec_.modes, d = spec_.dim;
        if (z.cols != d)
            throw DimensionError("log_prob_taped: latent " + shape_str(z) + ", mixture dim " +
                                 std::to_string(d));
        Val h = gru_.encode_taped(t, steps);
        Val logits = t.add_rowvec(t.matmul(h, t.param(wl_)), t.param(bl_));
        Val logw = t.sub_colvec(logits, t.lse_rows(logits));
        Val means = t.add_rowvec(t.matmul(h, t.param(wm_)), t.param(bm_));
        Val raw = t.add_rowvec(t.matmul(h, t.param(ws_)), t.param(bs_));
        Val scales = t.add_const(t.softplus_(raw), spec_.sigma_floor);
        Val zt = t.tile_cols(t.input(z), m);
        Val u = t.div(t.sub(zt, means), scales);
        Val maha = t.sum_blocks(t.mul(u, u), d);
        Val logdet = t.sum_blocks(t.log_(scales), d);
        double c = -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi_v<double>);
        Val log_n = t.add_const(t.sub(t.scale(maha, -0.5), logdet), c);
        return t.lse_rows(t.add(logw, log_n));
    }

private:
    static std::vector<Matrix> to_steps(const Condition& c) {
        if (c.past.rows == 0) throw InputError("condition has no frames");
        std::vector<Matrix> steps;
        steps.reserve(c.past.rows);
        for (std::size_t r = 0; r < c.past.rows; ++r) {
            Matrix f(1, c.past.cols);
            for (std::size_t j = 0; j < c.past.cols; ++j) f.data[j] = c.past.at(r, j);
            steps.push_back(std::move(f));
        }
        return steps;
    }

    GmmParams heads_to_params(const ParamStore& s, const Matrix& h, std::size_t row) const {
        std::size_t m = spec_.modes, d = spec_.dim;
        Matrix hr(1, h.cols);
        for (std::size_t j = 0; j < h.cols; ++j) hr.data[j] = h.at(row, j);
        Matrix logits = detail::add_rowvec(detail::matmul(hr, s.matrix(wl_)), s.matrix(bl_));
        Matrix mu = detail::add_rowvec(detail::matmul(hr, s.matrix(wm_)), s.matrix(bm_));
        Matrix raw = detail::add_rowvec(detail::matmul(hr, s.matrix(ws_)), s.matrix(bs_));

        GmmParams g;
        g.weights.assign(m, 0.0);
        double mx = logits.data[0];
        for (std::size_t k = 1; k < m; ++k) mx = std::max(mx, logits.data[k]);
        double sum = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            g.weights[k] = std::exp(logits.data[k] - mx);
            sum += g.weights[k];
        }
        for (std::size_t k = 0; k < m; ++k) g.weights[k] /= sum;

        g.means = Matrix(m, d, std::move(mu.data));
        g.scales = Matrix(m, d);
        for (std::size_t k = 0; k < m * d; ++k)
            g.scales.data[k] = detail::softplus(raw.data[k]) + spec_.sigma_floor;
        return g;
    }

    BaseDensitySpec spec_;
    Gru gru_;
    ParamBlock wl_, bl_, wm_, bm_, ws_, bs_;
};

// Stacks per-condition frame t into one B x in matrix per timestep.
// All conditions must agree on frame count and width.
inline std::vector<Matrix> batch_steps(const std::vector<Condition>& cs,
                                       const std::vector<std::size_t>& idx) {
    if (idx.empty()) throw InputError("batch_steps: empty batch");
    const Matrix& first = cs[idx[0]].past;
    std::vector<Matrix> steps(first.rows, Matrix(idx.size(), first.cols));
    for (std::size_t b = 0; b < idx.size(); ++b) {
        const Matrix& p = cs[idx[b]].past;
        if (p.rows != first.rows || p.cols != first.cols)
            throw DimensionError("batch_steps: condition " + std::to_string(idx[b]) + " is " +
                                 shape_str(p) + ", batch head is " + shape_str(first));
        for (std::size_t t = 0; t < p.rows; ++t)
            for (std::size_t j = 0; j < p.cols; ++j) steps[t].at(b, j) = p.at(t, j);
    }
    return steps;
}

}  // namespace cacheflow
