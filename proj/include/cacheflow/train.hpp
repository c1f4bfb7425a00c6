#pragma once

// Model bundle and training. The flow field (theta) trains by conditional
// flow matching; the base density (phi) trains by NLL of the
// inverse-transformed targets. The NLL term treats those latents as
// constants: no gradient flows back through the ODE inverse into theta,
// so the flow is trained purely by the matching loss. Both terms share
// one optimizer step over the combined parameter arena.
//
// All randomness comes from caller-seeded Rng streams; rerunning with the
// same seeds reproduces losses and parameters bit-identically.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "cacheflow/adam.hpp"
#include "cacheflow/cnf.hpp"
#include "cacheflow/detail/sha256.hpp"
#include "cacheflow/gmm.hpp"
#include "cacheflow/mlp.hpp"
#include "cacheflow/param_store.hpp"
#include "cacheflow/rng.hpp"
#include "cacheflow/tape.hpp"
#include "cacheflow/tensor.hpp"

namespace cacheflow {

struct ModelSpec {
    std::size_t dim = 8;                          // latent dimension d
    std::vector<std::size_t> flow_hidden = {256, 256};
    Activation flow_act = Activation::silu;
    std::size_t cond_input_dim = 3;               // per-frame width of conditions
    std::size_t rnn_hidden = 128;
    std::size_t modes = 50;
    double sigma_floor = kDefaultSigmaFloor;
};

class CacheFlowModel {
public:
    explicit CacheFlowModel(ModelSpec spec, std::uint64_t init_seed) : spec_(std::move(spec)) {
        Rng rng(init_seed);
        flow_ = FlowField(store_, "flow", spec_.dim, spec_.flow_hidden, spec_.flow_act, rng);
        base_ = BaseDensity(store_, "base",
                            BaseDensitySpec{spec_.cond_input_dim, spec_.rnn_hidden, spec_.modes,
                                            spec_.dim, spec_.sigma_floor},
                            rng);
    }

    const ModelSpec& spec() const { return spec_; }
    ParamStore& store() { return store_; }
    const ParamStore& store() const { return store_; }
    const FlowField& flow() const { return flow_; }
    const BaseDensity& base() const { return base_; }

    // Hash of the flow (theta) parameter blocks only; caches built from
    // this model carry it and refuse to serve a different flow.
    std::array<std::uint8_t, 32> flow_fingerprint() const {
        std::vector<std::uint8_t> buf = store_.serialize_blocks("flow");
        return detail::sha256(buf.data(), buf.size());
    }

private:
    ModelSpec spec_;
    ParamStore store_;
    FlowField flow_;
    BaseDensity base_;
};

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 64;
    double lr = 5e-4;
    std::uint64_t seed = 0;
    double lambda_nll = 1.0;
    double lambda_cfm = 1.0;
    // Integrator for the training-time inverse in the NLL term. CFM never
    // integrates; this is the only ODE use inside training.
    IntegratorConfig integrator{IntegratorConfig::Scheme::euler, 8};
    std::size_t log_every = 50;
};

// One training batch: stacked condition frames (steps[t] is frame t of
// every item) and one target latent per row. steps may be empty when the
// NLL term is disabled.
struct TrainBatch {
    std::vector<Matrix> steps;
    Matrix targets;
};

// Randomness of one CFM evaluation, drawn separately so the loss itself
// is a deterministic function of (params, batch, draws). t per item,
// z0 per item per dim, z0 drawn row-major.
struct CfmDraws {
    std::vector<double> t;
    Matrix z0;
};

inline CfmDraws draw_cfm(Rng& rng, std::size_t batch, std::size_t dim) {
    CfmDraws d;
    d.t.resize(batch);
    for (double& v : d.t) v = rng.uniform();
    d.z0 = Matrix(batch, dim);
    for (double& v : d.z0.data) v = rng.normal();
    return d;
}

namespace detail {

// Interpolant z_t = (1-t) z0 + t*targets, field input [z_t | t], and
// the straight-path regression target u = targets - z0.
inline void cfm_tensors(const Matrix& targets, const CfmDraws& draws, Matrix& input, Matrix& u) {
    std::size_t b = targets.rows, d = targets.cols;
    input = Matrix(b, d + 1);
    u = Matrix(b, d);
    for (std::size_t r = 0; r < b; ++r) {
        double t = draws.t[r];
        for (std::size_t c = 0; c < d; ++c) {
            double z0 = draws.z0.at(r, c), z1 = targets.at(r, c);
            input.at(r, c) = (1.0 - t) * z0 + t * z1;
            u.at(r, c) = z1 - z0;
        }
        input.at(r, d) = t;
    }
}

}  // namespace detail

// Mean squared error between the field and the straight path, over batch
// and dimensions, as a tape value.
inline Val cfm_loss_taped(Tape& tape, const CacheFlowModel& model, const Matrix& targets,
                          const CfmDraws& draws) {
    if (targets.cols != model.spec().dim)
        throw DimensionError("cfm_loss: targets " + shape_str(targets) + ", model dim " +
                             std::to_string(model.spec().dim));
    Matrix input, u;
    detail::cfm_tensors(targets, draws, input, u);
    Val v = model.flow().mlp().forward_taped(tape, tape.input(input));
    Val diff = tape.sub(v, tape.input(u));
    return tape.mean(tape.mul(diff, diff));
}

// Value-only CFM loss; identical arithmetic to the taped path.
inline double cfm_loss(const CacheFlowModel& model, const Matrix& targets, const CfmDraws& draws) {
    Matrix input, u;
    detail::cfm_tensors(targets, draws, input, u);
    Matrix v = model.flow().mlp().forward(model.store(), input);
    double s = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
        double e = v.data[k] - u.data[k];
        s += e * e;
    }
    return s / static_cast<double>(v.size());
}

struct LossParts {
    double cfm = 0.0;
    double nll = 0.0;
    double total = 0.0;
};

// Builds the joint objective lambda_nll * NLL + lambda_cfm * CFM on a
// tape and optionally backpropagates it. frozen_z pins the NLL latents
// (normally they are recomputed through the current flow each call);
// finite-difference checks pass the same frozen latents to every
// evaluation so they differentiate exactly the function the optimizer
// steps on.
inline LossParts joint_loss(CacheFlowModel& model, const TrainBatch& batch, const CfmDraws& draws,
                            const TrainConfig& cfg, bool backward,
                            const Matrix* frozen_z = nullptr) {
    if (batch.targets.cols != model.spec().dim)
        throw DimensionError("joint_loss: targets " + shape_str(batch.targets) + ", model dim " +
                             std::to_string(model.spec().dim));
    Tape tape(model.store());
    LossParts parts;
    Val total = tape.scalar(0.0);
    if (cfg.lambda_cfm != 0.0) {
        Val c = cfm_loss_taped(tape, model, batch.targets, draws);
        parts.cfm = c.value().data[0];
        total = tape.add(total, tape.scale(c, cfg.lambda_cfm));
    }
    if (cfg.lambda_nll != 0.0) {
        if (batch.steps.empty()) throw InputError("joint_loss: NLL enabled but batch has no conditions");
        if (batch.steps[0].rows != batch.targets.rows)
            throw DimensionError("joint_loss: " + std::to_string(batch.steps[0].rows) +
                                 " conditions vs " + std::to_string(batch.targets.rows) +
                                 " targets");
        Matrix z = frozen_z ? *frozen_z
                            : flow_inverse_points(model.store(), model.flow(), batch.targets,
                                                  cfg.integrator);
        Val lp = model.base().log_prob_taped(tape, batch.steps, z);
        Val nll = tape.scale(tape.mean(lp), -1.0);
        parts.nll = nll.value().data[0];
        total = tape.add(total, tape.scale(nll, cfg.lambda_nll));
    }
    parts.total = total.value().data[0];
    if (backward) tape.backward(total);
    return parts;
}

struct LossRecord {
    std::size_t step = 0;
    double cfm = 0.0;
    double nll = 0.0;
    double total = 0.0;
};

struct TrainResult {
    std::vector<LossRecord> curve;
    std::size_t steps = 0;
};

// Full training loop. conditions may be empty iff lambda_nll == 0.
// Aborts by rethrowing the numeric error on divergence; parameters are
// whatever the last completed step left (the optimizer never applies a
// non-finite update), so the store still holds the last good state.
inline TrainResult train(CacheFlowModel& model, const std::vector<Condition>& conditions,
                         const Matrix& targets, const TrainConfig& cfg) {
    std::size_t n = targets.rows;
    if (n == 0) throw InputError("train: empty dataset");
    if (cfg.lambda_nll != 0.0 && conditions.size() != n)
        throw InputError("train: " + std::to_string(conditions.size()) + " conditions for " +
                         std::to_string(n) + " targets");
    if (cfg.batch_size == 0) throw ConfigError("train: batch_size must be >= 1");

    Rng rng(cfg.seed);
    Adam opt(model.store(), AdamConfig{cfg.lr});
    TrainResult result;

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    std::size_t step = 0;
    std::size_t d = model.spec().dim;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = n; i > 1; --i) {
            std::size_t j = rng.below(i);
            std::swap(order[i - 1], order[j]);
        }
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            std::size_t stop = std::min(n, start + cfg.batch_size);
            std::vector<std::size_t> idx(order.begin() + start, order.begin() + stop);
            TrainBatch batch;
            batch.targets = Matrix(idx.size(), d);
            for (std::size_t b = 0; b < idx.size(); ++b)
                for (std::size_t c = 0; c < d; ++c)
                    batch.targets.at(b, c) = targets.at(idx[b], c);
            if (cfg.lambda_nll != 0.0) batch.steps = batch_steps(conditions, idx);
            CfmDraws draws = draw_cfm(rng, idx.size(), d);
            ++step;
            LossParts parts;
            try {
                parts = joint_loss(model, batch, draws, cfg, /*backward=*/true);
                opt.step();
            } catch (const NumericError&) {
                std::fprintf(stderr,
                             "training aborted at step %zu (epoch %zu, batch items %zu..%zu); "
                             "parameters keep the last completed step\n",
                             step, epoch, start, stop - 1);
                throw;
            }
            if (step % cfg.log_every == 0 || (epoch + 1 == cfg.epochs && stop == n))
                result.curve.push_back(LossRecord{step, parts.cfm, parts.nll, parts.total});
        }
    }
    result.steps = step;
    return result;
}

}  // namespace cacheflow
