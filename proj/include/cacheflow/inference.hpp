#pragma once

// The fast inference path: density over all cached futures from one base
// regression plus the cached log-determinants, and the three prediction
// strategies (nearest-neighbor sampling, uniform random, most-likely).
// estimate_density never evaluates the flow; the flow-eval counter proves
// it in tests. Predictions are index sets; decoding to pose space is a
// separate step so timing can isolate the density math.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "cacheflow/cache.hpp"
#include "cacheflow/cnf.hpp"
#include "cacheflow/codec.hpp"
#include "cacheflow/error.hpp"
#include "cacheflow/gmm.hpp"
#include "cacheflow/rng.hpp"
#include "cacheflow/train.hpp"

namespace cacheflow {

struct DensityReport {
    std::vector<double> log_prob;  // log p(x_k|c) per cached triplet
    std::size_t argmax = 0;
    double eval_seconds = 0.0;
};

struct PredictionSet {
    std::vector<std::size_t> indices;  // cache indices, ranked or sampled
    std::vector<double> log_prob;      // log p at each selection; empty for random
};

// One base regression, then K log-domain sums against the cached
// determinants. The fingerprint gate runs before the timed section; the
// timer covers exactly the work Alg.-style fast inference repeats per
// condition (regress + K mixture evaluations).
inline DensityReport estimate_density(const CacheFlowModel& model, const TripletCache& cache,
                                      const Condition& c) {
    check_fingerprint(cache, model.flow_fingerprint());
    auto t0 = std::chrono::steady_clock::now();
    GmmParams g = model.base().regress(model.store(), c);
    std::size_t k = cache.size();
    DensityReport report;
    report.log_prob.resize(k);
    const std::vector<double>& ldet = cache.log_det_inv();
    for (std::size_t i = 0; i < k; ++i) {
        double lp = gmm_log_prob_ptr(g, cache.zs().row_ptr(i)) + ldet[i];
        report.log_prob[i] = lp;
        if (lp > report.log_prob[report.argmax]) report.argmax = i;
    }
    auto t1 = std::chrono::steady_clock::now();
    report.eval_seconds = std::chrono::duration<double>(t1 - t0).count();
    return report;
}

// Draw n latents from q(z|c) and return each one's nearest cached
// triplet. Duplicates are possible and kept.
inline PredictionSet sample_nn(const CacheFlowModel& model, const TripletCache& cache,
                               const Condition& c, std::size_t n, Rng& rng) {
    if (n == 0) throw InputError("sample_nn: n must be >= 1");
    check_fingerprint(cache, model.flow_fingerprint());
    GmmParams g = model.base().regress(model.store(), c);
    std::vector<LatentVector> draws = gmm_sample(g, rng, n);
    PredictionSet out;
    out.indices.reserve(n);
    out.log_prob.reserve(n);
    const std::vector<double>& ldet = cache.log_det_inv();
    for (const LatentVector& z : draws) {
        std::size_t k = cache.nearest(z);
        out.indices.push_back(k);
        out.log_prob.push_back(gmm_log_prob_ptr(g, cache.zs().row_ptr(k)) + ldet[k]);
    }
    return out;
}

// Uniform draw of n distinct cache indices; condition-independent, so no
// log-probs are attached.
inline PredictionSet sample_random(const TripletCache& cache, std::size_t n, Rng& rng) {
    std::size_t k = cache.size();
    if (n == 0) throw InputError("sample_random: n must be >= 1");
    if (n > k)
        throw InputError("sample_random: n = " + std::to_string(n) + " exceeds cache size " +
                         std::to_string(k));
    std::vector<std::size_t> pool(k);
    for (std::size_t i = 0; i < k; ++i) pool[i] = i;
    PredictionSet out;
    out.indices.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t j = i + rng.below(k - i);
        std::swap(pool[i], pool[j]);
        out.indices.push_back(pool[i]);
    }
    return out;
}

// Top-n indices by log-probability, descending, ties by lowest index.
inline PredictionSet sample_most_likely(const DensityReport& report, std::size_t n) {
    std::size_t k = report.log_prob.size();
    if (n == 0) throw InputError("sample_most_likely: n must be >= 1");
    if (n > k)
        throw InputError("sample_most_likely: n = " + std::to_string(n) + " exceeds cache size " +
                         std::to_string(k));
    std::vector<std::size_t> order(k);
    for (std::size_t i = 0; i < k; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        double la = report.log_prob[a], lb = report.log_prob[b];
        return la > lb || (la == lb && a < b);
    });
    PredictionSet out;
    out.indices.assign(order.begin(), order.begin() + n);
    out.log_prob.reserve(n);
    for (std::size_t i : out.indices) out.log_prob.push_back(report.log_prob[i]);
    return out;
}

inline std::vector<PoseSequence> decode_predictions(const TripletCache& cache, const Codec& codec,
                                                    const std::vector<std::size_t>& indices) {
    std::vector<PoseSequence> out;
    out.reserve(indices.size());
    for (std::size_t k : indices) {
        if (k >= cache.size())
            throw InputError("decode_predictions: index " + std::to_string(k) +
                             " outside cache of size " + std::to_string(cache.size()));
        LatentVector x(cache.xs().row_ptr(k), cache.xs().row_ptr(k) + cache.dim());
        out.push_back(codec.decode(x));
    }
    return out;
}

inline double std_normal_log_prob(const LatentVector& z) {
    double s = 0.0;
    for (double v : z) s += v * v;
    return -0.5 * s -
           0.5 * static_cast<double>(z.size()) * std::log(2.0 * std::numbers::pi_v<double>);
}

// Unconditional flow density with a standard-normal source:
// log p(x) = log N(f^-1(x); 0, I) + log_det_inv.
inline double flow_log_prob(const ParamStore& store, const FlowField& field, const LatentVector& x,
                            const IntegratorConfig& cfg) {
    FlowResult inv = flow_inverse(store, field, x, cfg);
    return std_normal_log_prob(inv.endpoint) + inv.log_det_inv;
}

inline std::vector<double> flow_log_prob_batch(const ParamStore& store, const FlowField& field,
                                               const Matrix& xs, const IntegratorConfig& cfg) {
    BatchFlowResult inv = flow_inverse(store, field, xs, cfg);
    std::vector<double> out(xs.rows);
    for (std::size_t r = 0; r < xs.rows; ++r) {
        LatentVector z(inv.endpoints.row_ptr(r), inv.endpoints.row_ptr(r) + xs.cols);
        out[r] = std_normal_log_prob(z) + inv.log_det_inv[r];
    }
    return out;
}

// Exact conditional density of an arbitrary future: on-the-fly inverse
// through the flow, then the regressed base. This is the full-price path
// the cache replaces.
inline double flow_density_log_prob(const CacheFlowModel& model, const GmmParams& g,
                                    const LatentVector& x, const IntegratorConfig& cfg) {
    FlowResult inv = flow_inverse(model.store(), model.flow(), x, cfg);
    return gmm_log_prob(g, inv.endpoint) + inv.log_det_inv;
}

// Cache-restricted density of an arbitrary future: the report value at
// the cached triplet whose future is nearest in x-space.
inline double cached_density_log_prob(const TripletCache& cache, const DensityReport& report,
                                      const LatentVector& x) {
    if (report.log_prob.size() != cache.size())
        throw DimensionError("cached_density_log_prob: report size " +
                             std::to_string(report.log_prob.size()) + " vs cache size " +
                             std::to_string(cache.size()));
    return report.log_prob[cache.nearest_by_x(x)];
}

}  // namespace cacheflow
