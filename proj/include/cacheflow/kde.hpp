#pragma once

// Gaussian kernel density estimation over per-dimension standardized
// samples with the Scott bandwidth factor h = n^(-1/(d+4)). Densities are
// reported in the original space: the kernel sum runs in standardized
// coordinates and the standardization Jacobian (sum of log stds) is
// subtracted. A zero-variance dimension falls back to std 1 with a
// warning so the model stays finite.

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "cacheflow/error.hpp"
#include "cacheflow/tensor.hpp"

namespace cacheflow {

struct KdeModel {
    Matrix samples_std;            // n x d, standardized
    std::vector<double> mean;      // d
    std::vector<double> std_dev;   // d, after the zero-variance fallback
    double h = 0.0;                // Scott factor in standardized space
    double log_std_sum = 0.0;      // sum_j log std_dev[j]
    std::size_t degenerate_dims = 0;

    std::size_t n() const { return samples_std.rows; }
    std::size_t dim() const { return samples_std.cols; }
};

inline KdeModel fit_kde(const Matrix& samples) {
    std::size_t n = samples.rows, d = samples.cols;
    if (n < 2) throw InputError("fit_kde: needs at least 2 samples");
    if (d == 0) throw InputError("fit_kde: zero-dimensional samples");
    KdeModel m;
    m.mean.assign(d, 0.0);
    m.std_dev.assign(d, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) m.mean[c] += samples.at(r, c);
    for (double& v : m.mean) v /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) {
            double diff = samples.at(r, c) - m.mean[c];
            m.std_dev[c] += diff * diff;
        }
    for (std::size_t c = 0; c < d; ++c) {
        m.std_dev[c] = std::sqrt(m.std_dev[c] / static_cast<double>(n - 1));
        if (m.std_dev[c] == 0.0) {
            m.std_dev[c] = 1.0;
            ++m.degenerate_dims;
            std::fprintf(stderr, "fit_kde: dimension %zu has zero variance, using std 1\n", c);
        }
        m.log_std_sum += std::log(m.std_dev[c]);
    }
    m.samples_std = Matrix(n, d);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c)
            m.samples_std.at(r, c) = (samples.at(r, c) - m.mean[c]) / m.std_dev[c];
    m.h = std::pow(static_cast<double>(n), -1.0 / (static_cast<double>(d) + 4.0));
    return m;
}

// log[(1/n) sum_i N(x~; x~_i, h^2 I)] - sum_j log s_j, with x~ the
// standardized query, via online log-sum-exp.
inline double kde_log_prob(const KdeModel& m, const LatentVector& x) {
    std::size_t n = m.n(), d = m.dim();
    if (x.size() != d)
        throw DimensionError("kde_log_prob: query dim " + std::to_string(x.size()) +
                             ", model dim " + std::to_string(d));
    std::vector<double> q(d);
    for (std::size_t c = 0; c < d; ++c) q[c] = (x[c] - m.mean[c]) / m.std_dev[c];
    double norm = -static_cast<double>(d) *
                      (0.5 * std::log(2.0 * std::numbers::pi_v<double>) + std::log(m.h)) -
                  std::log(static_cast<double>(n));
    double inv_2h2 = 0.5 / (m.h * m.h);
    double mx = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* s = m.samples_std.row_ptr(i);
        double d2 = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            double diff = q[c] - s[c];
            d2 += diff * diff;
        }
        double t = -d2 * inv_2h2;
        if (t <= mx) {
            sum += std::exp(t - mx);
        } else {
            sum = sum * std::exp(mx - t) + 1.0;
            mx = t;
        }
    }
    return norm + mx + std::log(sum) - m.log_std_sum;
}

}  // namespace cacheflow
