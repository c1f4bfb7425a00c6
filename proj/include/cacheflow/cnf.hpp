#pragma once

// Continuous normalizing flow: fixed-step integration of a learned
// velocity field v(z, t) in either direction, accumulating the exact
// log-determinant of the transform Jacobian alongside the state.
//
//   forward  t: 0 -> 1   x = z + int v dt     log_det_inv = -int div v dt
//   inverse  t: 1 -> 0   z = x - int v dt     log_det_inv photographed at
//                                             the z actually reached
//
// log p(x) = log q(z) + log_det_inv with z = inverse(x), both directions
// reporting the same quantity at matched points. Divergence is the exact
// Jacobian trace, computed by d stacked tangent passes through the field
// network, so a batch of B points costs (1+d) network passes per stage.
//
// Every velocity evaluation bumps a global counter (one tick per point),
// which is how "the cached path never touches the flow" is asserted
// rather than assumed.

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cacheflow/error.hpp"
#include "cacheflow/mlp.hpp"
#include "cacheflow/param_store.hpp"
#include "cacheflow/tensor.hpp"

namespace cacheflow {

inline std::atomic<std::uint64_t>& flow_eval_counter() {
    static std::atomic<std::uint64_t> n{0};
    return n;
}

inline std::uint64_t flow_eval_count() { return flow_eval_counter().load(); }
inline void reset_flow_eval_count() { flow_eval_counter().store(0); }

struct IntegratorConfig {
    enum class Scheme { euler, rk4 };
    Scheme scheme = Scheme::rk4;
    std::size_t steps = 32;
};

inline IntegratorConfig::Scheme scheme_from_string(const std::string& s) {
    if (s == "euler") return IntegratorConfig::Scheme::euler;
    if (s == "rk4") return IntegratorConfig::Scheme::rk4;
    throw ConfigError("unknown integrator scheme '" + s + "', expected euler or rk4");
}

struct FlowResult {
    LatentVector endpoint;
    double log_det_inv = 0.0;
};

struct BatchFlowResult {
    Matrix endpoints;                 // one row per input point
    std::vector<double> log_det_inv;  // one entry per row
};

// The velocity network: an MLP over concat(z, t).
class FlowField {
public:
    FlowField() = default;

    FlowField(ParamStore& store, const std::string& prefix, std::size_t dim,
              std::vector<std::size_t> hidden, Activation act, Rng& rng)
        : dim_(dim) {
        if (dim_ == 0) throw ConfigError("flow field needs dim > 0");
        std::vector<std::size_t> widths;
        widths.push_back(dim_ + 1);
        for (std::size_t h : hidden) widths.push_back(h);
        widths.push_back(dim_);
        mlp_ = Mlp(store, prefix, MlpSpec{std::move(widths), act}, rng, /*zero_last=*/true);
    }

    std::size_t dim() const { return dim_; }
    const Mlp& mlp() const { return mlp_; }

    // v(z, t) for a batch of points, one tick per row.
    Matrix velocity(const ParamStore& store, const Matrix& z, double t) const {
        flow_eval_counter().fetch_add(z.rows);
        return mlp_.forward(store, with_time(z, t));
    }

    // v and exact divergence (trace of dv/dz) per row.
    void velocity_div(const ParamStore& store, const Matrix& z, double t, Matrix& v,
                      std::vector<double>& div) const {
        flow_eval_counter().fetch_add(z.rows);
        std::size_t b = z.rows, d = dim_;
        std::vector<Matrix> preacts;
        v = mlp_.forward_cached(store, with_time(z, t), preacts);
        Matrix tangents(b * d, d + 1);
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t r = 0; r < b; ++r) tangents.at(j * b + r, j) = 1.0;
        Matrix tv = mlp_.jvp(store, preacts, tangents, b);
        div.assign(b, 0.0);
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t r = 0; r < b; ++r) div[r] += tv.at(j * b + r, j);
    }

    Matrix with_time(const Matrix& z, double t) const {
        if (z.cols != dim_)
            throw DimensionError("flow: point " + shape_str(z) + ", field dim " +
                                 std::to_string(dim_));
        Matrix x(z.rows, dim_ + 1);
        for (std::size_t r = 0; r < z.rows; ++r) {
            const double* zr = z.row_ptr(r);
            double* xr = x.row_ptr(r);
            for (std::size_t c = 0; c < dim_; ++c) xr[c] = zr[c];
            xr[dim_] = t;
        }
        return x;
    }

private:
    std::size_t dim_ = 0;
    Mlp mlp_;
};

// Exact divergence at a single point.
inline double divergence(const ParamStore& store, const FlowField& field, const LatentVector& z,
                         double t) {
    Matrix zm(1, z.size(), z);
    Matrix v;
    std::vector<double> div;
    field.velocity_div(store, zm, t, v, div);
    return div[0];
}

namespace detail {

// Integrates the augmented state (z, l) with dl/dt = -div v. Direction
// is carried by h's sign; t0 is the start time.
inline BatchFlowResult integrate_aug(const ParamStore& store, const FlowField& field, Matrix z,
                                     double t0, double h, const IntegratorConfig& cfg) {
    std::size_t b = z.rows;
    std::vector<double> ell(b, 0.0);
    Matrix v1, v2, v3, v4;
    std::vector<double> d1, d2, d3, d4;

    auto check = [&](const Matrix& state, const std::vector<double>& acc, std::size_t step) {
        for (double x : state.data)
            if (!std::isfinite(x))
                throw NumericError("non-finite state during integration at step " +
                                   std::to_string(step));
        for (double x : acc)
            if (!std::isfinite(x))
                throw NumericError("non-finite state during integration at step " +
                                   std::to_string(step));
    };

    for (std::size_t s = 0; s < cfg.steps; ++s) {
        double t = t0 + h * static_cast<double>(s);
        if (cfg.scheme == IntegratorConfig::Scheme::euler) {
            field.velocity_div(store, z, t, v1, d1);
            for (std::size_t k = 0; k < z.size(); ++k) z.data[k] += h * v1.data[k];
            for (std::size_t r = 0; r < b; ++r) ell[r] += h * -d1[r];
        } else {
            field.velocity_div(store, z, t, v1, d1);
            Matrix z2 = z;
            for (std::size_t k = 0; k < z.size(); ++k) z2.data[k] += 0.5 * h * v1.data[k];
            field.velocity_div(store, z2, t + 0.5 * h, v2, d2);
            Matrix z3 = z;
            for (std::size_t k = 0; k < z.size(); ++k) z3.data[k] += 0.5 * h * v2.data[k];
            field.velocity_div(store, z3, t + 0.5 * h, v3, d3);
            Matrix z4 = z;
            for (std::size_t k = 0; k < z.size(); ++k) z4.data[k] += h * v3.data[k];
            field.velocity_div(store, z4, t + h, v4, d4);
            double w = h / 6.0;
            for (std::size_t k = 0; k < z.size(); ++k)
                z.data[k] += w * (v1.data[k] + 2.0 * v2.data[k] + 2.0 * v3.data[k] + v4.data[k]);
            for (std::size_t r = 0; r < b; ++r)
                ell[r] += w * -(d1[r] + 2.0 * d2[r] + 2.0 * d3[r] + d4[r]);
        }
        check(z, ell, s);
    }
    return BatchFlowResult{std::move(z), std::move(ell)};
}

// State-only integration (no divergence), for the training-time inverse
// where the log-determinant is not needed.
inline Matrix integrate_points(const ParamStore& store, const FlowField& field, Matrix z, double t0,
                               double h, const IntegratorConfig& cfg) {
    for (std::size_t s = 0; s < cfg.steps; ++s) {
        double t = t0 + h * static_cast<double>(s);
        if (cfg.scheme == IntegratorConfig::Scheme::euler) {
            Matrix v1 = field.velocity(store, z, t);
            for (std::size_t k = 0; k < z.size(); ++k) z.data[k] += h * v1.data[k];
        } else {
            Matrix v1 = field.velocity(store, z, t);
            Matrix z2 = z;
            for (std::size_t k = 0; k < z.size(); ++k) z2.data[k] += 0.5 * h * v1.data[k];
            Matrix v2 = field.velocity(store, z2, t + 0.5 * h);
            Matrix z3 = z;
            for (std::size_t k = 0; k < z.size(); ++k) z3.data[k] += 0.5 * h * v2.data[k];
            Matrix v3 = field.velocity(store, z3, t + 0.5 * h);
            Matrix z4 = z;
            for (std::size_t k = 0; k < z.size(); ++k) z4.data[k] += h * v3.data[k];
            Matrix v4 = field.velocity(store, z4, t + h);
            double w = h / 6.0;
            for (std::size_t k = 0; k < z.size(); ++k)
                z.data[k] += w * (v1.data[k] + 2.0 * v2.data[k] + 2.0 * v3.data[k] + v4.data[k]);
        }
        for (double x : z.data)
            if (!std::isfinite(x))
                throw NumericError("non-finite state during integration at step " +
                                   std::to_string(s));
    }
    return z;
}

}  // namespace detail

// z -> x, accumulating log_det_inv = -int_0^1 div v dt.
inline BatchFlowResult flow_forward(const ParamStore& store, const FlowField& field,
                                    const Matrix& z, const IntegratorConfig& cfg) {
    double h = 1.0 / static_cast<double>(cfg.steps);
    return detail::integrate_aug(store, field, z, 0.0, h, cfg);
}

// x -> z. The accumulator integrates -div along t: 1 -> 0, which lands at
// +int_0^1 div dt; the returned log_det_inv is its negation so both
// directions report the forward-convention value.
inline BatchFlowResult flow_inverse(const ParamStore& store, const FlowField& field,
                                    const Matrix& x, const IntegratorConfig& cfg) {
    double h = -1.0 / static_cast<double>(cfg.steps);
    BatchFlowResult r = detail::integrate_aug(store, field, x, 1.0, h, cfg);
    for (double& v : r.log_det_inv) v = -v;
    return r;
}

// x -> z without the log-determinant (cheaper; used inside training).
inline Matrix flow_inverse_points(const ParamStore& store, const FlowField& field, const Matrix& x,
                                  const IntegratorConfig& cfg) {
    double h = -1.0 / static_cast<double>(cfg.steps);
    return detail::integrate_points(store, field, x, 1.0, h, cfg);
}

inline FlowResult flow_forward(const ParamStore& store, const FlowField& field,
                               const LatentVector& z, const IntegratorConfig& cfg) {
    BatchFlowResult r = flow_forward(store, field, Matrix(1, z.size(), z), cfg);
    return FlowResult{std::move(r.endpoints.data), r.log_det_inv[0]};
}

inline FlowResult flow_inverse(const ParamStore& store, const FlowField& field,
                               const LatentVector& x, const IntegratorConfig& cfg) {
    BatchFlowResult r = flow_inverse(store, field, Matrix(1, x.size(), x), cfg);
    return FlowResult{std::move(r.endpoints.data), r.log_det_inv[0]};
}

}  // namespace cacheflow
