#pragma once

// Adam optimizer over a ParamStore. Bias-corrected first/second moments,
// one flat update over the whole arena. A non-finite gradient aborts the
// step with the name of the offending block before any parameter moves.

#include <cmath>
#include <cstddef>
#include <vector>

#include "cacheflow/error.hpp"
#include "cacheflow/param_store.hpp"

namespace cacheflow {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    Adam(ParamStore& store, AdamConfig cfg = {})
        : store_(&store), cfg_(cfg), m_(store.size(), 0.0), v_(store.size(), 0.0) {}

    const AdamConfig& config() const { return cfg_; }
    std::size_t steps_taken() const { return t_; }

    // Applies one update from the accumulated gradients, then zeroes them.
    void step() {
        const double* g = store_->grads();
        for (const auto& b : store_->blocks())
            for (std::size_t k = 0; k < b.count(); ++k)
                if (!std::isfinite(g[b.offset + k]))
                    throw NumericError("non-finite gradient in parameter block '" + b.name + "'");
        ++t_;
        double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        double* p = store_->values();
        for (std::size_t k = 0; k < m_.size(); ++k) {
            m_[k] = cfg_.beta1 * m_[k] + (1.0 - cfg_.beta1) * g[k];
            v_[k] = cfg_.beta2 * v_[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
            double mhat = m_[k] / c1;
            double vhat = v_[k] / c2;
            p[k] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
        store_->zero_grads();
    }

private:
    ParamStore* store_;
    AdamConfig cfg_;
    std::vector<double> m_, v_;
    std::size_t t_ = 0;
};

}  // namespace cacheflow
