#pragma once

// Fully connected network y = act(x W + b) ... W_last + b_last, with a
// linear output layer. Three forward paths share the same kernels and
// therefore produce bit-identical values:
//   forward        plain evaluation
//   forward_cached plain evaluation that also records pre-activations
//   forward_taped  records onto an autodiff tape
// jvp() propagates tangents through the linearization around a cached
// forward pass; stacking d tangent rows per batch row gives exact
// Jacobian columns at (1+d) times forward cost.

#include <cstddef>
#include <string>
#include <vector>

#include "cacheflow/detail/kernels.hpp"
#include "cacheflow/param_store.hpp"
#include "cacheflow/rng.hpp"
#include "cacheflow/tape.hpp"
#include "cacheflow/tensor.hpp"

namespace cacheflow {

enum class Activation { tanh, silu };

inline Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "silu") return Activation::silu;
    throw ConfigError("unknown activation '" + s + "', expected tanh or silu");
}

struct MlpSpec {
    std::vector<std::size_t> widths;  // input, hidden..., output
    Activation act = Activation::tanh;
};

class Mlp {
public:
    Mlp() = default;

    // Registers parameter blocks <prefix>.w<i>/<prefix>.b<i>. Hidden
    // weights are N(0, 1/fan_in); biases zero. zero_last zeroes the
    // output layer so the initial network is the zero map.
    Mlp(ParamStore& store, const std::string& prefix, MlpSpec spec, Rng& rng, bool zero_last)
        : spec_(std::move(spec)) {
        if (spec_.widths.size() < 2) throw ConfigError("mlp needs at least input and output widths");
        std::size_t layers = spec_.widths.size() - 1;
        for (std::size_t l = 0; l < layers; ++l) {
            std::size_t in = spec_.widths[l], out = spec_.widths[l + 1];
            std::string wi = prefix + ".w" + std::to_string(l);
            std::string bi = prefix + ".b" + std::to_string(l);
            bool zero = zero_last && l + 1 == layers;
            ws_.push_back(zero ? store.add(wi, {in, out}) : store.add_random(wi, {in, out}, rng, in));
            bs_.push_back(store.add(bi, {out}));
        }
    }

    std::size_t in_width() const { return spec_.widths.front(); }
    std::size_t out_width() const { return spec_.widths.back(); }
    const MlpSpec& spec() const { return spec_; }

    Matrix forward(const ParamStore& store, const Matrix& x) const { return run(store, x, nullptr); }

    // preacts receives one matrix per hidden layer (the values fed to the
    // activation), which jvp() needs to linearize around.
    Matrix forward_cached(const ParamStore& store, const Matrix& x,
                          std::vector<Matrix>& preacts) const {
        preacts.clear();
        return run(store, x, &preacts);
    }

    // Tangent propagation through the linearization captured by preacts.
    // tx has batch_rows*k rows for some k; tangent row r linearizes
    // around forward-pass row (r % batch_rows).
    Matrix jvp(const ParamStore& store, const std::vector<Matrix>& preacts, const Matrix& tx,
               std::size_t batch_rows) const {
        if (tx.cols != in_width())
            throw DimensionError("mlp jvp: input " + shape_str(tx) + ", expected cols " +
                                 std::to_string(in_width()));
        Matrix t = tx;
        for (std::size_t l = 0; l < ws_.size(); ++l) {
            t = detail::matmul(t, store.matrix(ws_[l]));
            if (l + 1 == ws_.size()) break;
            const Matrix& p = preacts[l];
            for (std::size_t r = 0; r < t.rows; ++r) {
                const double* pr = p.row_ptr(r % batch_rows);
                double* tr = t.row_ptr(r);
                for (std::size_t c = 0; c < t.cols; ++c) tr[c] *= act_deriv(pr[c]);
            }
        }
        return t;
    }

    Val forward_taped(Tape& tape, Val x) const {
        Val h = x;
        for (std::size_t l = 0; l < ws_.size(); ++l) {
            h = tape.add_rowvec(tape.matmul(h, tape.param(ws_[l])), tape.param(bs_[l]));
            if (l + 1 == ws_.size()) break;
            h = spec_.act == Activation::tanh ? tape.tanh_(h) : tape.silu_(h);
        }
        return h;
    }

    const std::vector<ParamBlock>& weight_blocks() const { return ws_; }
    const std::vector<ParamBlock>& bias_blocks() const { return bs_; }

private:
    Matrix run(const ParamStore& store, const Matrix& x, std::vector<Matrix>* preacts) const {
        if (x.cols != in_width())
            throw DimensionError("mlp: input " + shape_str(x) + ", expected cols " +
                                 std::to_string(in_width()));
        Matrix h = x;
        for (std::size_t l = 0; l < ws_.size(); ++l) {
            h = detail::add_rowvec(detail::matmul(h, store.matrix(ws_[l])), store.matrix(bs_[l]));
            if (l + 1 == ws_.size()) break;
            if (preacts) preacts->push_back(h);
            h = spec_.act == Activation::tanh ? detail::map_tanh(h) : detail::map_silu(h);
        }
        detail::check_finite(h, "mlp forward");
        return h;
    }

    double act_deriv(double preact) const {
        if (spec_.act == Activation::tanh) {
            double y = std::tanh(preact);
            return 1.0 - y * y;
        }
        double s = detail::sigmoid(preact);
        return s * (1.0 + preact * (1.0 - s));
    }

    MlpSpec spec_;
    std::vector<ParamBlock> ws_;
    std::vector<ParamBlock> bs_;
};

}  // namespace cacheflow
