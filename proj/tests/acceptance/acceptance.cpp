// Acceptance gate. Every criterion prints exactly one line:
//   [PASS] criterion N: <name> (<measurements>)
// and the binary exits nonzero if any criterion fails. Groups split the
// cheap closed-form checks from the trained benchmarks so CTest can give
// each its own timeout:
//   --group oracles     criteria 3, 4, 6, 10, 11 (no training)
//   --group structure   criteria 5, 12 (timing and instrumentation)
//   --group density2d   criterion 2 (trained 2-D flow integrates to one)
//   --group toybench    criteria 1, 7, 8, 9 (trained toy benchmarks)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cacheflow/cache.hpp"
#include "cacheflow/cnf.hpp"
#include "cacheflow/codec.hpp"
#include "cacheflow/datasets.hpp"
#include "cacheflow/gmm.hpp"
#include "cacheflow/inference.hpp"
#include "cacheflow/kde.hpp"
#include "cacheflow/metrics.hpp"
#include "cacheflow/pose.hpp"
#include "cacheflow/rng.hpp"
#include "cacheflow/train.hpp"

using namespace cacheflow;

namespace {

int g_fail = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", id, name, detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_fail;
}

std::string num(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

Matrix random_normal(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = scale * rng.normal();
    return m;
}

void set_block(ParamStore& ps, const std::string& name, const std::vector<double>& vals) {
    const ParamBlock* b = ps.find(name);
    double* v = ps.values() + b->offset;
    for (std::size_t i = 0; i < b->count(); ++i) v[i] = vals[i];
}

double median(std::vector<double> v) {
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    return v[v.size() / 2];
}

// ---------------------------------------------------------------- oracles

// Linear field v = 0.5 z: endpoint z * e^0.5, log-det -1.0, both directions.
void criterion_3() {
    ParamStore ps;
    Rng rng(1);
    FlowField field(ps, "flow", 2, {}, Activation::tanh, rng);
    set_block(ps, "flow.w0", {0.5, 0.0, 0.0, 0.5, 0.0, 0.0});
    set_block(ps, "flow.b0", {0.0, 0.0});

    IntegratorConfig cfg{IntegratorConfig::Scheme::rk4, 64};
    LatentVector z0 = {1.2, -0.7};
    double growth = std::exp(0.5);

    FlowResult fwd = flow_forward(ps, field, z0, cfg);
    double err = 0.0;
    for (std::size_t i = 0; i < 2; ++i)
        err = std::max(err, std::abs(fwd.endpoint[i] - z0[i] * growth) / std::abs(z0[i] * growth));
    double ldet_err = std::abs(fwd.log_det_inv - (-1.0));

    FlowResult inv = flow_inverse(ps, field, fwd.endpoint, cfg);
    for (std::size_t i = 0; i < 2; ++i)
        err = std::max(err, std::abs(inv.endpoint[i] - z0[i]) / std::abs(z0[i]));
    ldet_err = std::max(ldet_err, std::abs(inv.log_det_inv - (-1.0)));

    report(3, "closed-form linear flow", err <= 1e-6 && ldet_err <= 1e-6,
           "endpoint rel err " + num(err) + ", log-det err " + num(ldet_err) + " at rk4/64");
}

// CFM and joint losses match central finite differences on random coords.
void criterion_4() {
    ModelSpec ms;
    ms.dim = 2;
    ms.flow_hidden = {8};
    ms.flow_act = Activation::tanh;
    ms.cond_input_dim = 3;
    ms.rnn_hidden = 6;
    ms.modes = 3;
    CacheFlowModel model(ms, 42);

    Rng rng(7);
    const std::size_t bsz = 8;
    TrainBatch batch;
    batch.targets = random_normal(rng, bsz, 2, 0.8);
    for (double& v : batch.targets.data) v += 0.3;
    std::vector<Condition> cs;
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < bsz; ++i) {
        cs.push_back(Condition{random_normal(rng, 3, 3)});
        order.push_back(i);
    }
    batch.steps = batch_steps(cs, order);
    CfmDraws draws = draw_cfm(rng, bsz, 2);

    TrainConfig joint_cfg;
    joint_cfg.lambda_cfm = 0.7;
    joint_cfg.lambda_nll = 1.3;
    TrainConfig cfm_cfg;
    cfm_cfg.lambda_cfm = 1.0;
    cfm_cfg.lambda_nll = 0.0;

    Matrix frozen = flow_inverse_points(model.store(), model.flow(), batch.targets,
                                        joint_cfg.integrator);

    std::size_t n = model.store().size();
    auto grads_of = [&](const TrainConfig& cfg) {
        model.store().zero_grads();
        joint_loss(model, batch, draws, cfg, true, &frozen);
        return std::vector<double>(model.store().grads(), model.store().grads() + n);
    };
    std::vector<double> gj = grads_of(joint_cfg);
    std::vector<double> gc = grads_of(cfm_cfg);

    std::set<std::size_t> coords;
    Rng pick(99);
    while (coords.size() < 110) coords.insert(pick.below(n));

    const double eps = 1e-5;
    double* vals = model.store().values();
    double max_rel = 0.0;
    for (std::size_t idx : coords) {
        for (int which = 0; which < 2; ++which) {
            const TrainConfig& cfg = which == 0 ? joint_cfg : cfm_cfg;
            double g = which == 0 ? gj[idx] : gc[idx];
            double keep = vals[idx];
            vals[idx] = keep + eps;
            double lp = joint_loss(model, batch, draws, cfg, false, &frozen).total;
            vals[idx] = keep - eps;
            double lm = joint_loss(model, batch, draws, cfg, false, &frozen).total;
            vals[idx] = keep;
            double fd = (lp - lm) / (2.0 * eps);
            double rel = std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), 1e-8});
            max_rel = std::max(max_rel, rel);
        }
    }
    report(4, "finite-difference gradients", max_rel <= 1e-4,
           std::to_string(coords.size()) + " coords x {cfm, joint}, max rel err " + num(max_rel));
}

// Predicted cache size arithmetic, checked against real serialized bytes.
void criterion_6() {
    std::size_t bytes = predicted_cache_file_size(8, 371188, 4);
    bool exact = bytes == 25240846ULL;
    double mb = static_cast<double>(bytes) / (1024.0 * 1024.0);
    bool mb_ok = std::abs(mb - 24.07) <= 0.02 * 24.07;
    bool per_ok = (2 * 8 + 1) * 4 == 68;

    ParamStore ps;
    Rng rng(3);
    FlowField field(ps, "flow", 8, {4}, Activation::tanh, rng);
    Matrix xs = random_normal(rng, 5, 8);
    IntegratorConfig cfg{IntegratorConfig::Scheme::rk4, 8};
    std::array<std::uint8_t, 32> fp{};
    bool real_ok =
        build_cache(ps, field, xs, cfg, fp, 4).save_bytes().size() ==
            predicted_cache_file_size(8, 5, 4) &&
        build_cache(ps, field, xs, cfg, fp, 8).save_bytes().size() ==
            predicted_cache_file_size(8, 5, 8);

    report(6, "cache size formula", exact && mb_ok && per_ok && real_ok,
           "K=371188 d=8 f32 -> " + std::to_string(bytes) + " B = " + num(mb) +
               " MB, 68 B/motion, matches serialized bytes");
}

// Metric implementations reproduce the worked examples exactly.
void criterion_10() {
    auto seq2 = [](double x0, double y0, double x1, double y1) {
        PoseSequence p(2, 1, 25.0);
        p.at(0, 0, 0) = x0;
        p.at(0, 0, 1) = y0;
        p.at(1, 0, 0) = x1;
        p.at(1, 0, 1) = y1;
        return p;
    };
    PoseSequence gt = seq2(0, 0, 1, 0);
    PoseSequence gt2 = seq2(0, 0, 0, 1);
    std::vector<PoseSequence> preds = {seq2(0, 0, 0, 0), seq2(3, 4, 1, 0.5)};
    std::vector<PoseSequence> group = {gt, gt2};

    double err = 0.0;
    err = std::max(err, std::abs(ade(preds, gt) - 0.5));
    err = std::max(err, std::abs(fde(preds, gt) - 0.5));
    err = std::max(err, std::abs(apd(preds) - std::sqrt(26.25)));
    err = std::max(err, std::abs(mmade(preds, group) - 0.5));
    err = std::max(err, std::abs(mmfde(preds, group) - 0.75));

    std::vector<PoseSequence> exact = {gt, seq2(3, 4, 1, 0)};
    err = std::max(err, std::abs(ade(exact, gt) - 0.0));
    err = std::max(err, std::abs(fde(exact, gt) - 0.0));
    err = std::max(err, std::abs(apd(exact) - 5.0));

    report(10, "metric worked examples", err <= 1e-12, "max abs err " + num(err));
}

// Scott bandwidth and KDE recovery of a standard normal.
void criterion_11() {
    Rng rng(77);
    KdeModel m100 = fit_kde(random_normal(rng, 100, 2));
    double scott = std::pow(100.0, -1.0 / 6.0);
    bool scott_ok = std::abs(m100.h - scott) <= 1e-12;

    KdeModel mg = fit_kde(random_normal(rng, 10000, 2));
    double mean_lp = 0.0;
    const std::size_t q = 4000;
    for (std::size_t i = 0; i < q; ++i)
        mean_lp += kde_log_prob(mg, {rng.normal(), rng.normal()});
    mean_lp /= static_cast<double>(q);
    double analytic = -std::log(2.0 * std::numbers::pi_v<double>) - 1.0;
    double gap = std::abs(mean_lp - analytic);

    report(11, "kde bandwidth and recovery", scott_ok && gap <= 0.1,
           "h = " + num(m100.h) + ", gaussian mean log-prob " + num(mean_lp) + " vs " +
               num(analytic) + ", gap " + num(gap));
}

// -------------------------------------------------------------- structure

// Criterion 5: cached density beats per-point flow inversion by >= 20x.
// Criterion 12: the flow-eval counter stays at zero during estimation.
void criteria_5_and_12() {
    ModelSpec ms;
    ms.dim = 8;
    ms.flow_hidden = {8};
    ms.flow_act = Activation::silu;
    ms.cond_input_dim = 3;
    ms.rnn_hidden = 16;
    ms.modes = 50;
    CacheFlowModel model(ms, 99);
    {
        Rng rw(5);
        const ParamBlock* b = model.store().find("flow.w1");
        double* v = model.store().values() + b->offset;
        for (std::size_t i = 0; i < b->count(); ++i) v[i] = 0.3 * rw.normal();
    }

    Rng rng(7);
    const std::size_t k = 10000;
    Matrix xs = random_normal(rng, k, 8, 1.1);
    IntegratorConfig cfg{IntegratorConfig::Scheme::rk4, 32};
    TripletCache cache =
        build_cache(model.store(), model.flow(), xs, cfg, model.flow_fingerprint(), 4);
    Condition cond{random_normal(rng, 8, 3)};

    estimate_density(model, cache, cond);
    flow_inverse(model.store(), model.flow(), xs, cfg);

    const int reps = 30;
    std::vector<double> cached_s, uncached_s;
    for (int i = 0; i < reps; ++i)
        cached_s.push_back(estimate_density(model, cache, cond).eval_seconds);
    for (int i = 0; i < reps; ++i) {
        double t0 = now_s();
        BatchFlowResult r = flow_inverse(model.store(), model.flow(), xs, cfg);
        uncached_s.push_back(now_s() - t0);
        if (r.endpoints.rows != k) std::abort();
    }
    double mc = median(cached_s), mu = median(uncached_s);
    double speedup = mu / mc;
    report(5, "cached density speedup", speedup >= 20.0,
           "K=10^4, rk4/32: cached " + num(mc * 1e3) + " ms vs uncached " + num(mu * 1e3) +
               " ms, " + num(speedup) + "x, median of 30");

    reset_flow_eval_count();
    flow_inverse(model.store(), model.flow(), LatentVector(8, 0.1), cfg);
    std::size_t live = flow_eval_count();
    reset_flow_eval_count();
    estimate_density(model, cache, cond);
    std::size_t during = flow_eval_count();
    report(12, "zero flow evals at inference", live > 0 && during == 0,
           "counter " + std::to_string(during) + " during estimate_density, " +
               std::to_string(live) + " after one direct inversion");
}

// -------------------------------------------------------------- density2d

// A CFM-trained 2-D flow must integrate to one over a +-6 sigma grid.
void criterion_2() {
    double t0 = now_s();
    Rng rng(21);
    const std::size_t n = 2048;
    Matrix data(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        bool left = rng.uniform() < 0.5;
        data.at(i, 0) = (left ? -1.5 : 1.5) + 0.5 * rng.normal();
        data.at(i, 1) = (left ? 0.0 : 0.5) + 0.5 * rng.normal();
    }

    ModelSpec ms;
    ms.dim = 2;
    ms.flow_hidden = {32, 32};
    ms.flow_act = Activation::silu;
    ms.cond_input_dim = 1;
    ms.rnn_hidden = 4;
    ms.modes = 2;
    CacheFlowModel model(ms, 31);

    TrainConfig tc;
    tc.epochs = 80;
    tc.batch_size = 128;
    tc.lr = 2e-3;
    tc.seed = 32;
    tc.lambda_nll = 0.0;
    tc.lambda_cfm = 1.0;
    train(model, {}, data, tc);

    double mean[2] = {0, 0}, var[2] = {0, 0};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t d = 0; d < 2; ++d) mean[d] += data.at(i, d);
    for (std::size_t d = 0; d < 2; ++d) mean[d] /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t d = 0; d < 2; ++d) {
            double e = data.at(i, d) - mean[d];
            var[d] += e * e;
        }
    for (std::size_t d = 0; d < 2; ++d) var[d] /= static_cast<double>(n - 1);

    const std::size_t g = 200;
    double lo[2], h[2];
    for (std::size_t d = 0; d < 2; ++d) {
        double half = 6.0 * std::sqrt(var[d]);
        lo[d] = mean[d] - half;
        h[d] = 2.0 * half / static_cast<double>(g);
    }
    Matrix grid(g * g, 2);
    for (std::size_t i = 0; i < g; ++i)
        for (std::size_t j = 0; j < g; ++j) {
            grid.at(i * g + j, 0) = lo[0] + (static_cast<double>(i) + 0.5) * h[0];
            grid.at(i * g + j, 1) = lo[1] + (static_cast<double>(j) + 0.5) * h[1];
        }
    std::vector<double> lps = flow_log_prob_batch(model.store(), model.flow(), grid,
                                                  IntegratorConfig{IntegratorConfig::Scheme::rk4, 32});
    double integral = 0.0;
    for (double lp : lps) integral += std::exp(lp);
    integral *= h[0] * h[1];

    double elapsed = now_s() - t0;
    report(2, "trained 2-D density normalizes", std::abs(integral - 1.0) <= 0.05 && elapsed < 300.0,
           "integral " + num(integral) + " on 200x200 grid over +-6 sigma, " + num(elapsed) + " s");
}

// --------------------------------------------------------------- toybench

void run_toybench() {
    IntegratorConfig ic{IntegratorConfig::Scheme::rk4, 32};

    // Bimodal pendulum: joint model plus a GMM-only twin (same init, same
    // schedule, lambda_cfm = 0 so the flow stays at its identity init).
    BenchmarkSpec bspec;
    bspec.generator = "bimodal-pendulum";
    bspec.train_size = 4000;
    bspec.test_size = 100;
    bspec.noise_scale = 0.02;
    bspec.phase_jitter = 0.5;
    bspec.weight_low = 0.15;
    bspec.weight_high = 0.85;
    bspec.seed = 505;
    SplitDataset bim = generate(bspec);
    Codec codec = fit_linear(bim.train.futures, 8);
    Matrix xs = encode_all(codec, bim.train.futures);
    std::vector<Condition> train_cs = dataset_conditions(bim.train);
    std::vector<Condition> test_cs = dataset_conditions(bim.test);

    ModelSpec ms;
    ms.dim = 8;
    ms.flow_hidden = {64, 64};
    ms.flow_act = Activation::silu;
    ms.cond_input_dim = 3;
    ms.rnn_hidden = 32;
    ms.modes = 4;
    TrainConfig tc;
    tc.epochs = 80;
    tc.batch_size = 128;
    tc.lr = 1.5e-3;
    tc.seed = 22;

    CacheFlowModel joint(ms, 21);
    train(joint, train_cs, xs, tc);
    CacheFlowModel gmmonly(ms, 21);
    TrainConfig tg = tc;
    tg.lambda_cfm = 0.0;
    train(gmmonly, train_cs, xs, tg);

    // Criterion 1: the cached log-probs equal an on-the-fly recomputation
    // for every triplet under >= 20 fresh conditions, within the minute.
    double t1 = now_s();
    TripletCache cache_j =
        build_cache(joint.store(), joint.flow(), xs, ic, joint.flow_fingerprint(), 8);
    cache_j = TripletCache::load_bytes(cache_j.save_bytes());
    BatchFlowResult fresh = flow_inverse(joint.store(), joint.flow(), xs, ic);
    double max_rel = 0.0;
    Rng pick(31);
    for (int c = 0; c < 24; ++c) {
        const Condition& cond = test_cs[pick.below(test_cs.size())];
        DensityReport rep = estimate_density(joint, cache_j, cond);
        GmmParams gp = joint.base().regress(joint.store(), cond);
        for (std::size_t k = 0; k < cache_j.size(); ++k) {
            double otf = gmm_log_prob_ptr(gp, fresh.endpoints.row_ptr(k)) + fresh.log_det_inv[k];
            double rel = std::abs(rep.log_prob[k] - otf) / std::max(std::abs(otf), 1e-12);
            max_rel = std::max(max_rel, rel);
        }
    }
    double elapsed1 = now_s() - t1;
    report(1, "cache matches on-the-fly density", max_rel <= 1e-6 && elapsed1 < 60.0,
           "24 conditions x " + std::to_string(cache_j.size()) + " triplets, max rel err " +
               num(max_rel) + ", " + num(elapsed1) + " s");

    // Latent-GMM benchmark: joint model for the density-accuracy check.
    double t7 = now_s();
    BenchmarkSpec lspec;
    lspec.generator = "latent-gmm";
    lspec.train_size = 4000;
    lspec.test_size = 200;
    lspec.noise_scale = 1.0;
    lspec.seed = 404;
    SplitDataset lat = generate(lspec);
    Codec lcodec = Codec::identity_codec(1, 1, lspec.fps);
    Matrix lxs = encode_all(lcodec, lat.train.futures);
    std::vector<Condition> ltrain_cs = dataset_conditions(lat.train);
    std::vector<Condition> ltest_cs = dataset_conditions(lat.test);

    ModelSpec msl;
    msl.dim = 3;
    msl.flow_hidden = {64, 64};
    msl.flow_act = Activation::silu;
    msl.cond_input_dim = 3;
    msl.rnn_hidden = 32;
    msl.modes = 16;
    CacheFlowModel lmodel(msl, 11);
    TrainConfig tl;
    tl.epochs = 30;
    tl.batch_size = 128;
    tl.lr = 1.5e-3;
    tl.seed = 12;
    train(lmodel, ltrain_cs, lxs, tl);
    TripletCache cache_l =
        build_cache(lmodel.store(), lmodel.flow(), lxs, ic, lmodel.flow_fingerprint(), 8);

    // Criterion 7: multimodal log-prob per dim beats a 50-sample KDE from
    // the same model and lands within 0.3 nats/dim of the ground truth.
    double ltau = calibrate_tau(lat.test.pasts, 5);
    MultimodalGT lgt = build_mmgt(lat.test.pasts, ltau);
    std::vector<LatentVector> lenc;
    for (const PoseSequence& f : lat.test.futures) lenc.push_back(lcodec.encode(f));
    std::vector<double> pool_cf, pool_kde, pool_true;
    for (std::size_t i = 0; i < lat.test.size(); ++i) {
        GmmParams gp = lmodel.base().regress(lmodel.store(), ltest_cs[i]);
        Rng rs(6000 + i);
        PredictionSet samp = sample_nn(lmodel, cache_l, ltest_cs[i], 50, rs);
        Matrix sm(samp.indices.size(), 3);
        for (std::size_t r = 0; r < samp.indices.size(); ++r)
            for (std::size_t d = 0; d < 3; ++d)
                sm.at(r, d) = cache_l.xs().at(samp.indices[r], d);
        KdeModel km = fit_kde(sm);
        for (std::size_t j : lgt.members[i]) {
            pool_cf.push_back(flow_density_log_prob(lmodel, gp, lenc[j], ic));
            pool_kde.push_back(kde_log_prob(km, lenc[j]));
            pool_true.push_back(latent_gmm_true_log_prob(lspec, lat.test.params[i], lenc[j]));
        }
    }
    MmLogProb mm_cf = mm_log_prob_per_dim(pool_cf, 3);
    MmLogProb mm_kde = mm_log_prob_per_dim(pool_kde, 3);
    MmLogProb mm_true = mm_log_prob_per_dim(pool_true, 3);
    double gap = std::abs(mm_cf.per_dim - mm_true.per_dim);
    double elapsed7 = now_s() - t7;
    report(7, "latent-gmm density accuracy",
           mm_cf.per_dim > mm_kde.per_dim && gap <= 0.3 && elapsed7 < 600.0,
           "mm log-prob/dim " + num(mm_cf.per_dim) + " vs kde " + num(mm_kde.per_dim) +
               ", truth " + num(mm_true.per_dim) + ", gap " + num(gap) + ", " + num(elapsed7) +
               " s");

    // Criterion 8: the joint model strictly beats its GMM-only twin on
    // held-out multimodal log-prob and on best-of-50 ADE.
    double btau = calibrate_tau(bim.test.pasts, 5);
    MultimodalGT bgt = build_mmgt(bim.test.pasts, btau);
    std::vector<LatentVector> benc;
    for (const PoseSequence& f : bim.test.futures) benc.push_back(codec.encode(f));
    std::vector<double> pj, pg;
    for (std::size_t i = 0; i < bim.test.size(); ++i) {
        GmmParams gj = joint.base().regress(joint.store(), test_cs[i]);
        GmmParams gg = gmmonly.base().regress(gmmonly.store(), test_cs[i]);
        for (std::size_t j : bgt.members[i]) {
            pj.push_back(flow_density_log_prob(joint, gj, benc[j], ic));
            pg.push_back(flow_density_log_prob(gmmonly, gg, benc[j], ic));
        }
    }
    MmLogProb mm_j = mm_log_prob_per_dim(pj, 8);
    MmLogProb mm_g = mm_log_prob_per_dim(pg, 8);

    TripletCache cache_g =
        build_cache(gmmonly.store(), gmmonly.flow(), xs, ic, gmmonly.flow_fingerprint(), 8);
    double ade_j = 0.0, ade_g = 0.0;
    for (std::size_t i = 0; i < bim.test.size(); ++i) {
        Rng rj(9000 + i), rg(9000 + i);
        PredictionSet sj = sample_nn(joint, cache_j, test_cs[i], 50, rj);
        PredictionSet sg = sample_nn(gmmonly, cache_g, test_cs[i], 50, rg);
        ade_j += ade(decode_predictions(cache_j, codec, sj.indices), bim.test.futures[i]);
        ade_g += ade(decode_predictions(cache_g, codec, sg.indices), bim.test.futures[i]);
    }
    ade_j /= static_cast<double>(bim.test.size());
    ade_g /= static_cast<double>(bim.test.size());
    report(8, "joint beats gmm-only ablation", mm_j.per_dim > mm_g.per_dim && ade_j < ade_g,
           "mm log-prob/dim " + num(mm_j.per_dim) + " vs " + num(mm_g.per_dim) +
               ", best-of-50 ade " + num(ade_j) + " vs " + num(ade_g));

    // Criterion 9: sampling strategies order as claimed across conditions
    // and seeds, and most-likely collapses diversity relative to NN.
    const std::size_t nc = 25;
    double ade_nn = 0.0, ade_ml = 0.0, ade_rd = 0.0, apd_nn = 0.0, apd_ml = 0.0;
    std::size_t terms = 0;
    for (std::size_t i = 0; i < nc; ++i) {
        DensityReport rep = estimate_density(joint, cache_j, test_cs[i]);
        PredictionSet ml = sample_most_likely(rep, 50);
        std::vector<PoseSequence> dml = decode_predictions(cache_j, codec, ml.indices);
        double ade_ml_i = ade(dml, bim.test.futures[i]);
        double apd_ml_i = apd(dml);
        for (std::size_t s = 0; s < 3; ++s) {
            Rng rn(7700 + i * 31 + s), rr(8800 + i * 31 + s);
            PredictionSet nn = sample_nn(joint, cache_j, test_cs[i], 50, rn);
            PredictionSet rd = sample_random(cache_j, 50, rr);
            std::vector<PoseSequence> dnn = decode_predictions(cache_j, codec, nn.indices);
            std::vector<PoseSequence> drd = decode_predictions(cache_j, codec, rd.indices);
            ade_nn += ade(dnn, bim.test.futures[i]);
            ade_rd += ade(drd, bim.test.futures[i]);
            ade_ml += ade_ml_i;
            apd_nn += apd(dnn);
            apd_ml += apd_ml_i;
            ++terms;
        }
    }
    double t = static_cast<double>(terms);
    ade_nn /= t;
    ade_ml /= t;
    ade_rd /= t;
    apd_nn /= t;
    apd_ml /= t;
    report(9, "sampling strategy ordering",
           ade_nn <= ade_ml && ade_ml <= ade_rd && apd_ml < apd_nn,
           "ade nn " + num(ade_nn) + " <= ml " + num(ade_ml) + " <= random " + num(ade_rd) +
               "; apd ml " + num(apd_ml) + " < nn " + num(apd_nn) + "; 25 conditions x 3 seeds");
}

}  // namespace

int main(int argc, char** argv) {
    std::string group = "all";
    for (int i = 1; i < argc; ++i) {
        std::string a = argv[i];
        if (a == "--group" && i + 1 < argc) {
            group = argv[++i];
        } else {
            std::fprintf(stderr, "usage: %s [--group oracles|structure|density2d|toybench]\n",
                         argv[0]);
            return 2;
        }
    }
    if (group != "all" && group != "oracles" && group != "structure" && group != "density2d" &&
        group != "toybench") {
        std::fprintf(stderr, "unknown group '%s'\n", group.c_str());
        return 2;
    }

    if (group == "all" || group == "oracles") {
        criterion_3();
        criterion_4();
        criterion_6();
        criterion_10();
        criterion_11();
    }
    if (group == "all" || group == "structure") criteria_5_and_12();
    if (group == "all" || group == "density2d") criterion_2();
    if (group == "all" || group == "toybench") run_toybench();

    if (g_fail > 0) {
        std::printf("acceptance: %d criterion(s) failed\n", g_fail);
        return 1;
    }
    std::printf("acceptance: all checked criteria passed\n");
    return 0;
}
