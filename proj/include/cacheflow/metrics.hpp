#pragma once

// Evaluation metrics for stochastic prediction: APD (diversity), best-of-n
// ADE/FDE (accuracy), their multimodal variants over grouped ground
// truths, mean log-prob per dimension, and the MMGT grouping itself.
// Distances are L2 on flattened (frames x joints x 3) pose arrays;
// per-frame distances are pose L2 within the frame.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "cacheflow/error.hpp"
#include "cacheflow/pose.hpp"

namespace cacheflow {

namespace detail {

inline double flat_l2(const PoseSequence& a, const PoseSequence& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.xyz.size(); ++i) {
        double d = a.xyz[i] - b.xyz[i];
        s += d * d;
    }
    return std::sqrt(s);
}

inline double frame_l2(const PoseSequence& a, const PoseSequence& b, std::size_t f) {
    double s = 0.0;
    std::size_t w = a.joints * 3;
    const double* pa = a.xyz.data() + f * w;
    const double* pb = b.xyz.data() + f * w;
    for (std::size_t i = 0; i < w; ++i) {
        double d = pa[i] - pb[i];
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace detail

// Mean pairwise flattened L2 over all unordered prediction pairs.
inline double apd(const std::vector<PoseSequence>& preds) {
    if (preds.size() < 2) throw InputError("apd: needs at least 2 predictions");
    for (const auto& p : preds) check_same_shape(preds[0], p, "apd");
    double s = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        for (std::size_t j = i + 1; j < preds.size(); ++j) {
            s += detail::flat_l2(preds[i], preds[j]);
            ++pairs;
        }
    return s / static_cast<double>(pairs);
}

// Best-of-n average per-frame displacement.
inline double ade(const std::vector<PoseSequence>& preds, const PoseSequence& gt) {
    if (preds.empty()) throw InputError("ade: no predictions");
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : preds) {
        check_same_shape(p, gt, "ade");
        double s = 0.0;
        for (std::size_t f = 0; f < gt.frames; ++f) s += detail::frame_l2(p, gt, f);
        best = std::min(best, s / static_cast<double>(gt.frames));
    }
    return best;
}

// Best-of-n final-frame displacement.
inline double fde(const std::vector<PoseSequence>& preds, const PoseSequence& gt) {
    if (preds.empty()) throw InputError("fde: no predictions");
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : preds) {
        check_same_shape(p, gt, "fde");
        best = std::min(best, detail::frame_l2(p, gt, gt.frames - 1));
    }
    return best;
}

inline double mmade(const std::vector<PoseSequence>& preds,
                    const std::vector<PoseSequence>& mmgt) {
    if (mmgt.empty()) throw InputError("mmade: empty multimodal ground truth");
    double s = 0.0;
    for (const auto& g : mmgt) s += ade(preds, g);
    return s / static_cast<double>(mmgt.size());
}

inline double mmfde(const std::vector<PoseSequence>& preds,
                    const std::vector<PoseSequence>& mmgt) {
    if (mmgt.empty()) throw InputError("mmfde: empty multimodal ground truth");
    double s = 0.0;
    for (const auto& g : mmgt) s += fde(preds, g);
    return s / static_cast<double>(mmgt.size());
}

// For each test item: indices of all items whose past is within tau
// (flattened L2) of its own. Always contains the item itself.
struct MultimodalGT {
    std::vector<std::vector<std::size_t>> members;
    double tau = 0.0;
};

inline MultimodalGT build_mmgt(const std::vector<PoseSequence>& pasts, double tau) {
    if (tau < 0.0) throw InputError("build_mmgt: tau must be >= 0");
    MultimodalGT mm;
    mm.tau = tau;
    mm.members.resize(pasts.size());
    for (std::size_t j = 0; j < pasts.size(); ++j)
        for (std::size_t i = 0; i < pasts.size(); ++i)
            if (detail::flat_l2(pasts[i], pasts[j]) <= tau) mm.members[j].push_back(i);
    return mm;
}

// Smallest tau (to a relative bisection tolerance) whose median MMGT set
// size reaches target; used to pick the grouping radius per benchmark.
inline double calibrate_tau(const std::vector<PoseSequence>& pasts, std::size_t target_median) {
    if (pasts.size() < 2) throw InputError("calibrate_tau: needs at least 2 items");
    auto median_size = [&](double tau) {
        MultimodalGT mm = build_mmgt(pasts, tau);
        std::vector<std::size_t> sizes;
        sizes.reserve(mm.members.size());
        for (const auto& m : mm.members) sizes.push_back(m.size());
        std::sort(sizes.begin(), sizes.end());
        return sizes[sizes.size() / 2];
    };
    double lo = 0.0, hi = 1e-3;
    while (median_size(hi) < target_median && hi < 1e9) hi *= 2.0;
    for (int it = 0; it < 60 && (hi - lo) > 1e-9 * hi; ++it) {
        double mid = 0.5 * (lo + hi);
        if (median_size(mid) >= target_median)
            hi = mid;
        else
            lo = mid;
    }
    return hi;
}

struct MmLogProb {
    double per_dim = 0.0;
    std::size_t excluded = 0;  // non-finite densities dropped from the mean
};

// Mean over members of log p / d. Non-finite entries are excluded and
// counted; an all-non-finite input is an error.
inline MmLogProb mm_log_prob_per_dim(const std::vector<double>& member_log_probs, std::size_t d) {
    if (member_log_probs.empty()) throw InputError("mm_log_prob_per_dim: no members");
    if (d == 0) throw InputError("mm_log_prob_per_dim: d must be >= 1");
    MmLogProb out;
    double s = 0.0;
    std::size_t n = 0;
    for (double lp : member_log_probs) {
        if (!std::isfinite(lp)) {
            ++out.excluded;
            continue;
        }
        s += lp;
        ++n;
    }
    if (n == 0) throw NumericError("mm_log_prob_per_dim: every density was non-finite");
    out.per_dim = s / static_cast<double>(n) / static_cast<double>(d);
    return out;
}

}  // namespace cacheflow
