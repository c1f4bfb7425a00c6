#pragma once

// Define-by-run reverse-mode autodiff over 2-D matrices. A Tape owns a
// flat arena of nodes; ops append nodes and compute values eagerly, and
// backward() runs one reverse sweep that accumulates parameter gradients
// straight into the bound ParamStore. Every op checks its output for
// non-finite values and throws NumericError on the first one, naming
// the op, so a blow-up is caught where it happens rather than at the
// loss.
//
// Conventions: a "row vector" is 1xC, a "column vector" is Rx1. All
// reductions that say "rows" reduce within each row (over columns).

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "cacheflow/detail/kernels.hpp"
#include "cacheflow/error.hpp"
#include "cacheflow/param_store.hpp"
#include "cacheflow/tensor.hpp"

namespace cacheflow {

class Tape;

struct Val {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Matrix& value() const;
    std::size_t rows() const { return value().rows; }
    std::size_t cols() const { return value().cols; }
};

class Tape {
public:
    explicit Tape(ParamStore& store) : store_(&store) {}

    // Leaf with no gradient tracking.
    Val input(Matrix m) { return push(Op::leaf, std::move(m)); }
    Val constant(Matrix m) { return push(Op::leaf, std::move(m)); }

    Val scalar(double v) { return push(Op::leaf, Matrix(1, 1, std::vector<double>{v})); }

    // Leaf bound to a parameter block; backward() adds its gradient into
    // the store. 1-D blocks surface as 1xN row vectors.
    Val param(const ParamBlock& b) {
        Matrix m = store_->matrix(b);
        Val v = push(Op::leaf, std::move(m));
        nodes_[v.id].block = &b;
        return v;
    }

    std::size_t node_count() const { return nodes_.size(); }

    // Clears all nodes; parameter gradients in the store are untouched.
    void reset() { nodes_.clear(); }

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. loss must
    // be 1x1. Parameter gradients accumulate (caller zeroes between steps).
    void backward(Val loss) {
        if (loss.tape != this) throw StateError("backward: value from another tape");
        const Matrix& lv = nodes_[loss.id].value;
        if (lv.rows != 1 || lv.cols != 1)
            throw DimensionError("backward: loss is " + shape_str(lv) + ", expected 1x1");
        for (auto& n : nodes_) {
            n.grad.rows = n.value.rows;
            n.grad.cols = n.value.cols;
            n.grad.data.assign(n.value.size(), 0.0);
        }
        nodes_[loss.id].grad.data[0] = 1.0;
        for (std::size_t i = nodes_.size(); i-- > 0;) backward_node(i);
        for (const auto& n : nodes_) {
            if (!n.block) continue;
            double* g = store_->grads() + n.block->offset;
            for (std::size_t k = 0; k < n.grad.data.size(); ++k) g[k] += n.grad.data[k];
        }
    }

    // --- ops ---

    Val matmul(Val a, Val b) {
        return push(Op::matmul, detail::matmul(val(a), val(b)), a.id, b.id);
    }
    Val add(Val a, Val b) { return push(Op::add, detail::add(val(a), val(b)), a.id, b.id); }
    Val sub(Val a, Val b) { return push(Op::sub, detail::sub(val(a), val(b)), a.id, b.id); }
    Val mul(Val a, Val b) { return push(Op::mul, detail::mul(val(a), val(b)), a.id, b.id); }

    Val div(Val a, Val b) {
        check_same_shape(val(a), val(b), "div");
        Matrix y = val(a);
        for (std::size_t i = 0; i < y.size(); ++i) y.data[i] /= val(b).data[i];
        return push(Op::div, std::move(y), a.id, b.id);
    }

    // a + v with v a 1xC row vector broadcast down the rows.
    Val add_rowvec(Val a, Val v) {
        return push(Op::add_rowvec, detail::add_rowvec(val(a), val(v)), a.id, v.id);
    }

    // a - v with v an Rx1 column vector broadcast across each row.
    Val sub_colvec(Val a, Val v) {
        const Matrix& am = val(a);
        const Matrix& vm = val(v);
        if (vm.cols != 1 || vm.rows != am.rows)
            throw DimensionError("sub_colvec: " + shape_str(am) + " - " + shape_str(vm));
        Matrix y = am;
        for (std::size_t i = 0; i < am.rows; ++i) {
            double* yr = y.row_ptr(i);
            for (std::size_t j = 0; j < am.cols; ++j) yr[j] -= vm.data[i];
        }
        return push(Op::sub_colvec, std::move(y), a.id, v.id);
    }

    Val scale(Val a, double s) {
        Matrix y = val(a);
        for (double& v : y.data) v *= s;
        Val r = push(Op::scale, std::move(y), a.id);
        nodes_[r.id].scalar = s;
        return r;
    }

    Val add_const(Val a, double s) {
        Matrix y = val(a);
        for (double& v : y.data) v += s;
        return push(Op::add_const, std::move(y), a.id);
    }

    Val tanh_(Val a) { return push(Op::tanh_, detail::map_tanh(val(a)), a.id); }
    Val sigmoid_(Val a) { return push(Op::sigmoid_, detail::map_sigmoid(val(a)), a.id); }
    Val silu_(Val a) { return push(Op::silu_, detail::map_silu(val(a)), a.id); }
    Val softplus_(Val a) { return push(Op::softplus_, detail::map_softplus(val(a)), a.id); }

    Val exp_(Val a) {
        Matrix y = val(a);
        for (double& v : y.data) v = std::exp(v);
        return push(Op::exp_, std::move(y), a.id);
    }

    Val log_(Val a) {
        Matrix y = val(a);
        for (double& v : y.data) v = std::log(v);
        return push(Op::log_, std::move(y), a.id);
    }

    // Sum of all entries, 1x1.
    Val sum(Val a) {
        double s = 0.0;
        for (double v : val(a).data) s += v;
        return push(Op::sum, Matrix(1, 1, std::vector<double>{s}), a.id);
    }

    // Mean of all entries, 1x1.
    Val mean(Val a) {
        double s = 0.0;
        for (double v : val(a).data) s += v;
        s /= static_cast<double>(val(a).size());
        return push(Op::mean, Matrix(1, 1, std::vector<double>{s}), a.id);
    }

    // Per-row sum over columns, RxC -> Rx1.
    Val sum_rows(Val a) {
        const Matrix& am = val(a);
        Matrix y(am.rows, 1);
        for (std::size_t i = 0; i < am.rows; ++i) {
            const double* ar = am.row_ptr(i);
            double s = 0.0;
            for (std::size_t j = 0; j < am.cols; ++j) s += ar[j];
            y.data[i] = s;
        }
        return push(Op::sum_rows, std::move(y), a.id);
    }

    // Per-row logsumexp, RxC -> Rx1, max-shifted for stability.
    Val lse_rows(Val a) {
        const Matrix& am = val(a);
        if (am.cols == 0) throw DimensionError("lse_rows: zero columns");
        Matrix y(am.rows, 1);
        for (std::size_t i = 0; i < am.rows; ++i) {
            const double* ar = am.row_ptr(i);
            double m = ar[0];
            for (std::size_t j = 1; j < am.cols; ++j) m = std::max(m, ar[j]);
            double s = 0.0;
            for (std::size_t j = 0; j < am.cols; ++j) s += std::exp(ar[j] - m);
            y.data[i] = m + std::log(s);
        }
        return push(Op::lse_rows, std::move(y), a.id);
    }

    // Repeats the columns of a k times: RxC -> Rx(k*C), copy t at columns
    // [t*C, (t+1)*C).
    Val tile_cols(Val a, std::size_t k) {
        const Matrix& am = val(a);
        Matrix y(am.rows, am.cols * k);
        for (std::size_t i = 0; i < am.rows; ++i) {
            const double* ar = am.row_ptr(i);
            double* yr = y.row_ptr(i);
            for (std::size_t t = 0; t < k; ++t)
                for (std::size_t j = 0; j < am.cols; ++j) yr[t * am.cols + j] = ar[j];
        }
        Val r = push(Op::tile_cols, std::move(y), a.id);
        nodes_[r.id].aux = k;
        return r;
    }

    // Sums groups of `block` consecutive columns: Rx(m*block) -> Rxm.
    Val sum_blocks(Val a, std::size_t block) {
        const Matrix& am = val(a);
        if (block == 0 || am.cols % block != 0)
            throw DimensionError("sum_blocks: " + shape_str(am) + " with block " +
                                 std::to_string(block));
        std::size_t m = am.cols / block;
        Matrix y(am.rows, m);
        for (std::size_t i = 0; i < am.rows; ++i) {
            const double* ar = am.row_ptr(i);
            double* yr = y.row_ptr(i);
            for (std::size_t g = 0; g < m; ++g) {
                double s = 0.0;
                for (std::size_t j = 0; j < block; ++j) s += ar[g * block + j];
                yr[g] = s;
            }
        }
        Val r = push(Op::sum_blocks, std::move(y), a.id);
        nodes_[r.id].aux = block;
        return r;
    }

    Val concat_cols(Val a, Val b) {
        const Matrix& am = val(a);
        const Matrix& bm = val(b);
        if (am.rows != bm.rows)
            throw DimensionError("concat_cols: " + shape_str(am) + " | " + shape_str(bm));
        Matrix y(am.rows, am.cols + bm.cols);
        for (std::size_t i = 0; i < am.rows; ++i) {
            double* yr = y.row_ptr(i);
            const double* ar = am.row_ptr(i);
            const double* br = bm.row_ptr(i);
            for (std::size_t j = 0; j < am.cols; ++j) yr[j] = ar[j];
            for (std::size_t j = 0; j < bm.cols; ++j) yr[am.cols + j] = br[j];
        }
        return push(Op::concat_cols, std::move(y), a.id, b.id);
    }

    Val reshape(Val a, std::size_t r, std::size_t c) {
        const Matrix& am = val(a);
        if (r * c != am.size())
            throw DimensionError("reshape: " + shape_str(am) + " -> " + std::to_string(r) + "x" +
                                 std::to_string(c));
        Matrix y(r, c, am.data);
        return push(Op::reshape, std::move(y), a.id);
    }

    const Matrix& value_of(std::size_t id) const { return nodes_[id].value; }
    const Matrix& grad_of(std::size_t id) const { return nodes_[id].grad; }

private:
    enum class Op {
        leaf,
        matmul,
        add,
        sub,
        mul,
        div,
        add_rowvec,
        sub_colvec,
        scale,
        add_const,
        tanh_,
        sigmoid_,
        silu_,
        softplus_,
        exp_,
        log_,
        sum,
        mean,
        sum_rows,
        lse_rows,
        tile_cols,
        sum_blocks,
        concat_cols,
        reshape,
    };

    struct Node {
        Op op = Op::leaf;
        std::size_t a = 0;
        std::size_t b = 0;
        Matrix value;
        Matrix grad;
        double scalar = 0.0;
        std::size_t aux = 0;
        const ParamBlock* block = nullptr;
    };

    static const char* op_name(Op op) {
        switch (op) {
            case Op::leaf: return "leaf";
            case Op::matmul: return "matmul";
            case Op::add: return "add";
            case Op::sub: return "sub";
            case Op::mul: return "mul";
            case Op::div: return "div";
            case Op::add_rowvec: return "add_rowvec";
            case Op::sub_colvec: return "sub_colvec";
            case Op::scale: return "scale";
            case Op::add_const: return "add_const";
            case Op::tanh_: return "tanh";
            case Op::sigmoid_: return "sigmoid";
            case Op::silu_: return "silu";
            case Op::softplus_: return "softplus";
            case Op::exp_: return "exp";
            case Op::log_: return "log";
            case Op::sum: return "sum";
            case Op::mean: return "mean";
            case Op::sum_rows: return "sum_rows";
            case Op::lse_rows: return "lse_rows";
            case Op::tile_cols: return "tile_cols";
            case Op::sum_blocks: return "sum_blocks";
            case Op::concat_cols: return "concat_cols";
            case Op::reshape: return "reshape";
        }
        return "?";
    }

    const Matrix& val(Val v) const {
        if (v.tape != this) throw StateError("op: value from another tape");
        return nodes_[v.id].value;
    }

    Val push(Op op, Matrix value, std::size_t a = 0, std::size_t b = 0) {
        detail::check_finite(value, op_name(op));
        Node n;
        n.op = op;
        n.a = a;
        n.b = b;
        n.value = std::move(value);
        nodes_.push_back(std::move(n));
        return Val{this, nodes_.size() - 1};
    }

    void backward_node(std::size_t i) {
        Node& n = nodes_[i];
        const Matrix& g = n.grad;
        switch (n.op) {
            case Op::leaf:
                break;
            case Op::matmul: {
                detail::matmul_g_bt(g, nodes_[n.b].value, nodes_[n.a].grad);
                detail::matmul_at_g(nodes_[n.a].value, g, nodes_[n.b].grad);
                break;
            }
            case Op::add: {
                acc(nodes_[n.a].grad, g, 1.0);
                acc(nodes_[n.b].grad, g, 1.0);
                break;
            }
            case Op::sub: {
                acc(nodes_[n.a].grad, g, 1.0);
                acc(nodes_[n.b].grad, g, -1.0);
                break;
            }
            case Op::mul: {
                Matrix& ga = nodes_[n.a].grad;
                Matrix& gb = nodes_[n.b].grad;
                const Matrix& av = nodes_[n.a].value;
                const Matrix& bv = nodes_[n.b].value;
                for (std::size_t k = 0; k < g.data.size(); ++k) {
                    ga.data[k] += g.data[k] * bv.data[k];
                    gb.data[k] += g.data[k] * av.data[k];
                }
                break;
            }
            case Op::div: {
                Matrix& ga = nodes_[n.a].grad;
                Matrix& gb = nodes_[n.b].grad;
                const Matrix& av = nodes_[n.a].value;
                const Matrix& bv = nodes_[n.b].value;
                for (std::size_t k = 0; k < g.data.size(); ++k) {
                    double inv = 1.0 / bv.data[k];
                    ga.data[k] += g.data[k] * inv;
                    gb.data[k] -= g.data[k] * av.data[k] * inv * inv;
                }
                break;
            }
            case Op::add_rowvec: {
                acc(nodes_[n.a].grad, g, 1.0);
                Matrix& gv = nodes_[n.b].grad;
                for (std::size_t r = 0; r < g.rows; ++r) {
                    const double* gr = g.row_ptr(r);
                    for (std::size_t c = 0; c < g.cols; ++c) gv.data[c] += gr[c];
                }
                break;
            }
            case Op::sub_colvec: {
                acc(nodes_[n.a].grad, g, 1.0);
                Matrix& gv = nodes_[n.b].grad;
                for (std::size_t r = 0; r < g.rows; ++r) {
                    const double* gr = g.row_ptr(r);
                    double s = 0.0;
                    for (std::size_t c = 0; c < g.cols; ++c) s += gr[c];
                    gv.data[r] -= s;
                }
                break;
            }
            case Op::scale:
                acc(nodes_[n.a].grad, g, n.scalar);
                break;
            case Op::add_const:
                acc(nodes_[n.a].grad, g, 1.0);
                break;
            case Op::tanh_: {
                Matrix& ga = nodes_[n.a].grad;
                for (std::size_t k = 0; k < g.data.size(); ++k) {
                    double y = n.value.data[k];
                    ga.data[k] += g.data[k] * (1.0 - y * y);
                }
                break;
            }
            case Op::sigmoid_: {
                Matrix& ga = nodes_[n.a].grad;
                for (std::size_t k = 0; k < g.data.size(); ++k) {
                    double y = n.value.data[k];
                    ga.data[k] += g.data[k] * y * (1.0 - y);
                }
                break;
            }
            case Op::silu_: {
                Matrix& ga = nodes_[n.a].grad;
                const Matrix& av = nodes_[n.a].value;
                for (std::size_t k = 0; k < g.data.size(); ++k) {
                    double s = detail::sigmoid(av.data[k]);
                    ga.data[k] += g.data[k] * s * (1.0 + av.data[k] * (1.0 - s));
                }
                break;
            }
            case Op::softplus_: {
                Matrix& ga = nodes_[n.a].grad;
                const Matrix& av = nodes_[n.a].value;
                for (std::size_t k = 0; k < g.data.size(); ++k)
                    ga.data[k] += g.data[k] * detail::sigmoid(av.data[k]);
                break;
            }
            case Op::exp_: {
                Matrix& ga = nodes_[n.a].grad;
                for (std::size_t k = 0; k < g.data.size(); ++k)
                    ga.data[k] += g.data[k] * n.value.data[k];
                break;
            }
            case Op::log_: {
                Matrix& ga = nodes_[n.a].grad;
                const Matrix& av = nodes_[n.a].value;
                for (std::size_t k = 0; k < g.data.size(); ++k)
                    ga.data[k] += g.data[k] / av.data[k];
                break;
            }
            case Op::sum:
                acc(nodes_[n.a].grad, g.data[0]);
                break;
            case Op::mean:
                acc(nodes_[n.a].grad, g.data[0] / static_cast<double>(nodes_[n.a].grad.data.size()));
                break;
            case Op::sum_rows: {
                Matrix& ga = nodes_[n.a].grad;
                for (std::size_t r = 0; r < ga.rows; ++r) {
                    double* gr = ga.row_ptr(r);
                    for (std::size_t c = 0; c < ga.cols; ++c) gr[c] += g.data[r];
                }
                break;
            }
            case Op::lse_rows: {
                Matrix& ga = nodes_[n.a].grad;
                const Matrix& av = nodes_[n.a].value;
                for (std::size_t r = 0; r < ga.rows; ++r) {
                    double* gr = ga.row_ptr(r);
                    const double* ar = av.row_ptr(r);
                    double y = n.value.data[r];
                    for (std::size_t c = 0; c < ga.cols; ++c)
                        gr[c] += g.data[r] * std::exp(ar[c] - y);
                }
                break;
            }
            case Op::tile_cols: {
                Matrix& ga = nodes_[n.a].grad;
                std::size_t k = n.aux;
                for (std::size_t r = 0; r < ga.rows; ++r) {
                    double* gr = ga.row_ptr(r);
                    const double* og = g.row_ptr(r);
                    for (std::size_t t = 0; t < k; ++t)
                        for (std::size_t c = 0; c < ga.cols; ++c) gr[c] += og[t * ga.cols + c];
                }
                break;
            }
            case Op::sum_blocks: {
                Matrix& ga = nodes_[n.a].grad;
                std::size_t block = n.aux;
                for (std::size_t r = 0; r < ga.rows; ++r) {
                    double* gr = ga.row_ptr(r);
                    const double* og = g.row_ptr(r);
                    for (std::size_t c = 0; c < ga.cols; ++c) gr[c] += og[c / block];
                }
                break;
            }
            case Op::concat_cols: {
                Matrix& ga = nodes_[n.a].grad;
                Matrix& gb = nodes_[n.b].grad;
                for (std::size_t r = 0; r < g.rows; ++r) {
                    const double* gr = g.row_ptr(r);
                    double* ar = ga.row_ptr(r);
                    double* br = gb.row_ptr(r);
                    for (std::size_t c = 0; c < ga.cols; ++c) ar[c] += gr[c];
                    for (std::size_t c = 0; c < gb.cols; ++c) br[c] += gr[ga.cols + c];
                }
                break;
            }
            case Op::reshape: {
                Matrix& ga = nodes_[n.a].grad;
                for (std::size_t k = 0; k < g.data.size(); ++k) ga.data[k] += g.data[k];
                break;
            }
        }
    }

    static void acc(Matrix& dst, const Matrix& src, double s) {
        for (std::size_t k = 0; k < dst.data.size(); ++k) dst.data[k] += s * src.data[k];
    }

    static void acc(Matrix& dst, double s) {
        for (double& v : dst.data) v += s;
    }

    ParamStore* store_;
    std::vector<Node> nodes_;
};

inline const Matrix& Val::value() const { return tape->value_of(id); }

}  // namespace cacheflow
