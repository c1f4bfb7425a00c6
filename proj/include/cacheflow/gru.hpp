#pragma once

// GRU sequence encoder. Cell convention:
//   r  = sigmoid(x Wr + h Ur + br)
//   u  = sigmoid(x Wu + h Uu + bu)
//   c  = tanh(x Wc + (r*h) Uc + bc)
//   h' = u*h + (1-u)*c
// so with zero input, zero state and zero biases the state stays zero.
// Plain and taped paths share kernels and accumulation order; their
// outputs are bit-identical.

#include <cstddef>
#include <string>
#include <vector>

#include "cacheflow/detail/kernels.hpp"
#include "cacheflow/param_store.hpp"
#include "cacheflow/rng.hpp"
#include "cacheflow/tape.hpp"
#include "cacheflow/tensor.hpp"

namespace cacheflow {

struct GruSpec {
    std::size_t in = 0;
    std::size_t hidden = 0;
};

class Gru {
public:
    Gru() = default;

    Gru(ParamStore& store, const std::string& prefix, GruSpec spec, Rng& rng) : spec_(spec) {
        if (spec_.in == 0 || spec_.hidden == 0) throw ConfigError("gru needs in > 0 and hidden > 0");
        auto w = [&](const char* n, std::size_t r, std::size_t c) {
            return store.add_random(prefix + "." + n, {r, c}, rng, r);
        };
        wr_ = w("wr", spec_.in, spec_.hidden);
        ur_ = w("ur", spec_.hidden, spec_.hidden);
        br_ = store.add(prefix + ".br", {spec_.hidden});
        wu_ = w("wu", spec_.in, spec_.hidden);
        uu_ = w("uu", spec_.hidden, spec_.hidden);
        bu_ = store.add(prefix + ".bu", {spec_.hidden});
        wc_ = w("wc", spec_.in, spec_.hidden);
        uc_ = w("uc", spec_.hidden, spec_.hidden);
        bc_ = store.add(prefix + ".bc", {spec_.hidden});
    }

    const GruSpec& spec() const { return spec_; }

    Matrix step(const ParamStore& s, const Matrix& x, const Matrix& h) const {
        using namespace detail;
        Matrix r = map_sigmoid(add_rowvec(add(matmul(x, s.matrix(wr_)), matmul(h, s.matrix(ur_))),
                                          s.matrix(br_)));
        Matrix u = map_sigmoid(add_rowvec(add(matmul(x, s.matrix(wu_)), matmul(h, s.matrix(uu_))),
                                          s.matrix(bu_)));
        Matrix rh = mul(r, h);
        Matrix c = map_tanh(add_rowvec(add(matmul(x, s.matrix(wc_)), matmul(rh, s.matrix(uc_))),
                                       s.matrix(bc_)));
        Matrix out(h.rows, h.cols);
        for (std::size_t k = 0; k < out.size(); ++k) {
            double uk = u.data[k];
            out.data[k] = uk * h.data[k] + (1.0 - uk) * c.data[k];
        }
        check_finite(out, "gru step");
        return out;
    }

    // steps[t] is the batch input at time t, all [B x in]; returns the
    // final hidden state [B x hidden] from a zero initial state.
    Matrix encode(const ParamStore& s, const std::vector<Matrix>& steps) const {
        if (steps.empty()) throw InputError("gru encode: empty sequence");
        Matrix h(steps[0].rows, spec_.hidden);
        for (const Matrix& x : steps) {
            if (x.cols != spec_.in)
                throw DimensionError("gru encode: step " + shape_str(x) + ", expected cols " +
                                     std::to_string(spec_.in));
            h = step(s, x, h);
        }
        return h;
    }

    Val step_taped(Tape& t, Val x, Val h) const {
        Val r = t.sigmoid_(t.add_rowvec(t.add(t.matmul(x, t.param(wr_)), t.matmul(h, t.param(ur_))),
                                        t.param(br_)));
        Val u = t.sigmoid_(t.add_rowvec(t.add(t.matmul(x, t.param(wu_)), t.matmul(h, t.param(uu_))),
                                        t.param(bu_)));
        Val rh = t.mul(r, h);
        Val c = t.tanh_(t.add_rowvec(t.add(t.matmul(x, t.param(wc_)), t.matmul(rh, t.param(uc_))),
                                     t.param(bc_)));
        Val one_minus_u = t.add_const(t.scale(u, -1.0), 1.0);
        return t.add(t.mul(u, h), t.mul(one_minus_u, c));
    }

    Val encode_taped(Tape& t, const std::vector<Matrix>& steps) const {
        if (steps.empty()) throw InputError("gru encode: empty sequence");
        Val h = t.constant(Matrix(steps[0].rows, spec_.hidden));
        for (const Matrix& x : steps) h = step_taped(t, t.input(x), h);
        return h;
    }

private:
    GruSpec spec_;
    ParamBlock wr_, ur_, br_, wu_, uu_, bu_, wc_, uc_, bc_;
};

}  // namespace cacheflow
