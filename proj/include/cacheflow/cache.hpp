#pragma once

// The triplet cache {z_k, log|det J|^-1, x_k}: built once by inverse-
// transforming every training future through the frozen flow, then
// queried at inference without ever touching the flow again. Carries the
// fingerprint of the flow parameters it was built from; queries against
// a different flow are refused.
//
// Nearest-neighbor: a KD-tree over z with an exact brute-force scan as
// the reference; both break ties by lowest index and must agree always.
//
// File format CFCACHE1, little-endian:
//   magic "CFCACHE1", u32 version (1), u32 d, u64 K,
//   u8 precision (bytes per scalar, 4 or 8), u8 scheme (0 euler, 1 rk4),
//   u32 steps, 32-byte flow fingerprint,
//   then K records: z[d], log_det_inv, x[d].
// Header is 62 bytes; payload K*(2d+1)*precision.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "cacheflow/cnf.hpp"
#include "cacheflow/codec.hpp"
#include "cacheflow/detail/binio.hpp"
#include "cacheflow/detail/sha256.hpp"
#include "cacheflow/error.hpp"
#include "cacheflow/param_store.hpp"
#include "cacheflow/tensor.hpp"

namespace cacheflow {

struct CachedTriplet {
    LatentVector z;
    double log_det_inv = 0.0;
    LatentVector x;
};

// Exact nearest neighbor over the rows of a point matrix. The tree keeps
// only indices and split planes; queries take the same matrix it was
// built from. Ties go to the lowest row index, matching the linear scan
// exactly.
class KdTree {
public:
    KdTree() = default;

    explicit KdTree(const Matrix& pts) {
        std::size_t n = pts.rows;
        idx_.resize(n);
        for (std::size_t i = 0; i < n; ++i) idx_[i] = i;
        if (n > 0) root_ = build(pts, 0, n);
    }

    std::size_t nearest(const Matrix& pts, const double* q) const {
        if (pts.rows == 0 || idx_.size() != pts.rows)
            throw StateError("kd-tree: index does not match point matrix");
        std::size_t best = pts.rows;
        double best_d2 = 0.0;
        search(pts, root_, q, best, best_d2);
        return best;
    }

private:
    struct Node {
        std::size_t point = 0;
        std::uint32_t axis = 0;
        double value = 0.0;
        int left = -1;
        int right = -1;
        std::size_t leaf_lo = 0, leaf_hi = 0;  // leaf span when left == right == -2
    };

    static constexpr std::size_t kLeafSize = 8;

    int build(const Matrix& pts, std::size_t lo, std::size_t hi) {
        Node nd;
        if (hi - lo <= kLeafSize) {
            nd.left = nd.right = -2;
            nd.leaf_lo = lo;
            nd.leaf_hi = hi;
            // Leaf scan order must be index order for deterministic ties.
            std::sort(idx_.begin() + lo, idx_.begin() + hi);
            nodes_.push_back(nd);
            return static_cast<int>(nodes_.size() - 1);
        }
        std::size_t d = pts.cols;
        // Split along the axis of largest spread.
        std::uint32_t axis = 0;
        double spread = -1.0;
        for (std::uint32_t a = 0; a < d; ++a) {
            double mn = pts.at(idx_[lo], a), mx = mn;
            for (std::size_t i = lo + 1; i < hi; ++i) {
                double v = pts.at(idx_[i], a);
                mn = std::min(mn, v);
                mx = std::max(mx, v);
            }
            if (mx - mn > spread) {
                spread = mx - mn;
                axis = a;
            }
        }
        std::size_t mid = lo + (hi - lo) / 2;
        std::nth_element(idx_.begin() + lo, idx_.begin() + mid, idx_.begin() + hi,
                         [&](std::size_t a, std::size_t b) {
                             double va = pts.at(a, axis), vb = pts.at(b, axis);
                             return va < vb || (va == vb && a < b);
                         });
        nd.point = idx_[mid];
        nd.axis = axis;
        nd.value = pts.at(nd.point, axis);
        std::size_t self = nodes_.size();
        nodes_.push_back(nd);
        int l = build(pts, lo, mid);
        int r = mid + 1 < hi ? build(pts, mid + 1, hi) : -1;
        nodes_[self].left = l;
        nodes_[self].right = r;
        return static_cast<int>(self);
    }

    static void consider(const Matrix& pts, std::size_t i, const double* q, std::size_t& best,
                         double& best_d2) {
        double d2 = 0.0;
        const double* p = pts.row_ptr(i);
        for (std::size_t c = 0; c < pts.cols; ++c) {
            double diff = q[c] - p[c];
            d2 += diff * diff;
        }
        if (best == pts.rows || d2 < best_d2 || (d2 == best_d2 && i < best)) {
            best = i;
            best_d2 = d2;
        }
    }

    void search(const Matrix& pts, int node, const double* q, std::size_t& best,
                double& best_d2) const {
        if (node < 0) return;
        const Node& nd = nodes_[node];
        if (nd.left == -2) {
            for (std::size_t i = nd.leaf_lo; i < nd.leaf_hi; ++i)
                consider(pts, idx_[i], q, best, best_d2);
            return;
        }
        consider(pts, nd.point, q, best, best_d2);
        double diff = q[nd.axis] - nd.value;
        int near = diff < 0.0 ? nd.left : nd.right;
        int far = diff < 0.0 ? nd.right : nd.left;
        search(pts, near, q, best, best_d2);
        // <= so a far-side point at exactly the best distance can still
        // win a lower-index tie.
        if (diff * diff <= best_d2 || best == pts.rows) search(pts, far, q, best, best_d2);
    }

    std::vector<std::size_t> idx_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

class TripletCache {
public:
    TripletCache() = default;

    TripletCache(Matrix zs, std::vector<double> ldets, Matrix xs,
                 std::array<std::uint8_t, 32> fingerprint, IntegratorConfig integrator,
                 std::uint8_t precision = 4)
        : zs_(std::move(zs)),
          ldets_(std::move(ldets)),
          xs_(std::move(xs)),
          fingerprint_(fingerprint),
          integrator_(integrator),
          precision_(precision) {
        if (zs_.rows == 0) throw InputError("cache: needs at least one triplet");
        if (zs_.rows != xs_.rows || zs_.rows != ldets_.size() || zs_.cols != xs_.cols)
            throw DimensionError("cache: inconsistent triplet arrays");
        if (precision_ != 4 && precision_ != 8)
            throw InputError("cache: precision must be 4 or 8 bytes per scalar");
        tree_ = KdTree(zs_);
    }

    std::size_t size() const { return zs_.rows; }
    std::size_t dim() const { return zs_.cols; }
    const Matrix& zs() const { return zs_; }
    const Matrix& xs() const { return xs_; }
    const std::vector<double>& log_det_inv() const { return ldets_; }
    const std::array<std::uint8_t, 32>& fingerprint() const { return fingerprint_; }
    const IntegratorConfig& integrator() const { return integrator_; }
    std::uint8_t precision() const { return precision_; }
    std::size_t skipped() const { return skipped_; }
    void set_skipped(std::size_t n) { skipped_ = n; }

    CachedTriplet triplet(std::size_t k) const {
        CachedTriplet t;
        t.z.assign(zs_.row_ptr(k), zs_.row_ptr(k) + zs_.cols);
        t.log_det_inv = ldets_[k];
        t.x.assign(xs_.row_ptr(k), xs_.row_ptr(k) + xs_.cols);
        return t;
    }

    std::size_t nearest(const LatentVector& z) const {
        check_query(z);
        return tree_.nearest(zs_, z.data());
    }

    // Reference path; the tree must agree with this always.
    std::size_t nearest_scan(const LatentVector& z) const {
        check_query(z);
        return scan(zs_, z.data());
    }

    // Nearest by cached future x rather than latent z (used by the
    // cache-restricted density variant).
    std::size_t nearest_by_x(const LatentVector& x) const {
        if (x.size() != xs_.cols)
            throw DimensionError("cache query dim " + std::to_string(x.size()) + ", cache dim " +
                                 std::to_string(xs_.cols));
        return scan(xs_, x.data());
    }

    std::vector<std::uint8_t> save_bytes() const {
        std::vector<std::uint8_t> buf;
        detail::put_bytes(buf, "CFCACHE1", 8);
        detail::put_u32(buf, 1);
        detail::put_u32(buf, static_cast<std::uint32_t>(dim()));
        detail::put_u64(buf, size());
        detail::put_u8(buf, precision_);
        detail::put_u8(buf, integrator_.scheme == IntegratorConfig::Scheme::euler ? 0 : 1);
        detail::put_u32(buf, static_cast<std::uint32_t>(integrator_.steps));
        detail::put_bytes(buf, fingerprint_.data(), fingerprint_.size());
        auto put = [&](double v) {
            if (precision_ == 4)
                detail::put_f32(buf, static_cast<float>(v));
            else
                detail::put_f64(buf, v);
        };
        for (std::size_t k = 0; k < size(); ++k) {
            for (std::size_t c = 0; c < dim(); ++c) put(zs_.at(k, c));
            put(ldets_[k]);
            for (std::size_t c = 0; c < dim(); ++c) put(xs_.at(k, c));
        }
        return buf;
    }

    void save(const std::string& path) const { detail::write_file(path, save_bytes()); }

    static TripletCache load_bytes(const std::vector<std::uint8_t>& buf) {
        detail::ByteReader r(buf);
        r.expect_magic("CFCACHE1", 8);
        std::uint32_t version = r.u32("version");
        if (version != 1) throw ParseError("unsupported cache version " + std::to_string(version),
                                           r.offset());
        std::uint32_t d = r.u32("dimension");
        std::uint64_t k = r.u64("triplet count");
        std::uint8_t precision = r.u8("precision");
        std::uint8_t scheme = r.u8("integrator scheme");
        std::uint32_t steps = r.u32("integrator steps");
        if (d == 0 || k == 0) throw ParseError("empty cache header", r.offset());
        if (precision != 4 && precision != 8)
            throw ParseError("bad precision " + std::to_string(precision), r.offset());
        if (scheme > 1) throw ParseError("bad integrator scheme " + std::to_string(scheme),
                                         r.offset());
        std::array<std::uint8_t, 32> fp{};
        r.read_bytes(fp.data(), fp.size(), "fingerprint");
        auto get = [&](const char* what) {
            return precision == 4 ? static_cast<double>(r.f32(what)) : r.f64(what);
        };
        Matrix zs(k, d), xs(k, d);
        std::vector<double> ldets(k);
        for (std::uint64_t i = 0; i < k; ++i) {
            for (std::uint32_t c = 0; c < d; ++c) zs.at(i, c) = get("cached z");
            ldets[i] = get("cached log det");
            for (std::uint32_t c = 0; c < d; ++c) xs.at(i, c) = get("cached x");
        }
        if (!r.at_end()) throw ParseError("trailing bytes after last triplet", r.offset());
        IntegratorConfig cfg{scheme == 0 ? IntegratorConfig::Scheme::euler
                                         : IntegratorConfig::Scheme::rk4,
                             steps};
        return TripletCache(std::move(zs), std::move(ldets), std::move(xs), fp, cfg, precision);
    }

    static TripletCache load(const std::string& path) {
        return load_bytes(detail::read_file(path));
    }

private:
    void check_query(const LatentVector& z) const {
        if (z.size() != zs_.cols)
            throw DimensionError("cache query dim " + std::to_string(z.size()) + ", cache dim " +
                                 std::to_string(zs_.cols));
    }

    static std::size_t scan(const Matrix& pts, const double* q) {
        std::size_t best = 0;
        double best_d2 = 0.0;
        for (std::size_t i = 0; i < pts.rows; ++i) {
            double d2 = 0.0;
            const double* p = pts.row_ptr(i);
            for (std::size_t c = 0; c < pts.cols; ++c) {
                double diff = q[c] - p[c];
                d2 += diff * diff;
            }
            if (i == 0 || d2 < best_d2) {
                best = i;
                best_d2 = d2;
            }
        }
        return best;
    }

    Matrix zs_;
    std::vector<double> ldets_;
    Matrix xs_;
    std::array<std::uint8_t, 32> fingerprint_{};
    IntegratorConfig integrator_;
    std::uint8_t precision_ = 4;
    std::size_t skipped_ = 0;
    KdTree tree_;
};

inline std::size_t predicted_cache_file_size(std::size_t d, std::size_t k,
                                             std::size_t precision_bytes) {
    return 62 + k * (2 * d + 1) * precision_bytes;
}

// Inverse-transforms every row of xs through the frozen flow (Alg.-style
// precomputation). Rows whose integration blows up are skipped with a
// stderr warning; the skip count is recorded on the cache. Row batching
// never changes values (each row's arithmetic is independent), so caches
// of nested datasets share their common triplets bitwise.
inline TripletCache build_cache(const ParamStore& store, const FlowField& field, const Matrix& xs,
                                const IntegratorConfig& cfg,
                                const std::array<std::uint8_t, 32>& fingerprint,
                                std::uint8_t precision = 4, std::size_t batch = 256) {
    if (xs.rows == 0) throw InputError("build_cache: no futures");
    Matrix zs(xs.rows, xs.cols);
    Matrix xs_kept(xs.rows, xs.cols);
    std::vector<double> ldets(xs.rows);
    std::size_t kept = 0, skipped = 0;

    auto keep_row = [&](const double* z, double ldet, const double* x) {
        for (std::size_t c = 0; c < xs.cols; ++c) {
            zs.at(kept, c) = z[c];
            xs_kept.at(kept, c) = x[c];
        }
        ldets[kept] = ldet;
        ++kept;
    };

    for (std::size_t start = 0; start < xs.rows; start += batch) {
        std::size_t stop = std::min(xs.rows, start + batch);
        Matrix chunk(stop - start, xs.cols);
        for (std::size_t r = start; r < stop; ++r)
            for (std::size_t c = 0; c < xs.cols; ++c) chunk.at(r - start, c) = xs.at(r, c);
        try {
            BatchFlowResult inv = flow_inverse(store, field, chunk, cfg);
            for (std::size_t r = 0; r < chunk.rows; ++r)
                keep_row(inv.endpoints.row_ptr(r), inv.log_det_inv[r], chunk.row_ptr(r));
        } catch (const NumericError&) {
            // Redo the chunk point by point so only the bad rows drop.
            for (std::size_t r = 0; r < chunk.rows; ++r) {
                Matrix one(1, xs.cols);
                for (std::size_t c = 0; c < xs.cols; ++c) one.at(0, c) = chunk.at(r, c);
                try {
                    BatchFlowResult inv = flow_inverse(store, field, one, cfg);
                    keep_row(inv.endpoints.row_ptr(0), inv.log_det_inv[0], one.row_ptr(0));
                } catch (const NumericError& e) {
                    ++skipped;
                    std::fprintf(stderr, "build_cache: skipping item %zu: %s\n", start + r,
                                 e.what());
                }
            }
        }
    }
    if (kept == 0) throw NumericError("build_cache: every triplet was non-finite");
    zs.rows = kept;
    zs.data.resize(kept * xs.cols);
    xs_kept.rows = kept;
    xs_kept.data.resize(kept * xs.cols);
    ldets.resize(kept);
    TripletCache cache(std::move(zs), std::move(ldets), std::move(xs_kept), fingerprint, cfg,
                       precision);
    cache.set_skipped(skipped);
    return cache;
}

inline TripletCache build_cache(const ParamStore& store, const FlowField& field,
                                const Codec& codec, const std::vector<PoseSequence>& futures,
                                const IntegratorConfig& cfg,
                                const std::array<std::uint8_t, 32>& fingerprint,
                                std::uint8_t precision = 4, std::size_t batch = 256) {
    return build_cache(store, field, encode_all(codec, futures), cfg, fingerprint, precision,
                       batch);
}

// Refuses to pair a cache with a flow other than the one it was built
// from; the message carries both hashes.
inline void check_fingerprint(const TripletCache& cache,
                              const std::array<std::uint8_t, 32>& model_fp) {
    if (cache.fingerprint() == model_fp) return;
    throw StateError("cache fingerprint " + detail::hex(cache.fingerprint().data(), 32) +
                     " does not match model flow fingerprint " + detail::hex(model_fp.data(), 32));
}

}  // namespace cacheflow
