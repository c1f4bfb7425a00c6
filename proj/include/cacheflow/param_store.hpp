#pragma once

// Flat parameter arena shared by every trainable module. Blocks are
// registered by unique name and live contiguously in one vector, with a
// parallel gradient vector of the same layout. The optimizer walks the
// flat arrays; models hold (offset, shape) handles into them.
//
// Checkpoint format CFPARAM1, little-endian:
//   magic "CFPARAM1"
//   u64 block count, u64 total scalar count
//   per block: u32 name length, name bytes, u64 offset, u32 ndim, u64 dims[]
//   f64 values[total]

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cacheflow/detail/binio.hpp"
#include "cacheflow/error.hpp"
#include "cacheflow/rng.hpp"
#include "cacheflow/tensor.hpp"

namespace cacheflow {

struct ParamBlock {
    std::string name;
    std::size_t offset = 0;
    std::vector<std::size_t> shape;

    std::size_t count() const {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }
};

class ParamStore {
public:
    // Registers a named block, zero-initialized. Names must be unique.
    ParamBlock add(const std::string& name, std::vector<std::size_t> shape) {
        if (find(name) != nullptr) throw StateError("duplicate parameter block: " + name);
        ParamBlock b;
        b.name = name;
        b.offset = params_.size();
        b.shape = std::move(shape);
        std::size_t n = b.count();
        params_.resize(params_.size() + n, 0.0);
        grads_.resize(params_.size(), 0.0);
        blocks_.push_back(b);
        return b;
    }

    // Registers a block filled with N(0, 1/fan_in) draws.
    ParamBlock add_random(const std::string& name, std::vector<std::size_t> shape, Rng& rng,
                          std::size_t fan_in) {
        ParamBlock b = add(name, std::move(shape));
        double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t i = 0; i < b.count(); ++i) params_[b.offset + i] = s * rng.normal();
        return b;
    }

    const ParamBlock* find(const std::string& name) const {
        for (const auto& b : blocks_)
            if (b.name == name) return &b;
        return nullptr;
    }

    const ParamBlock& get(const std::string& name) const {
        const ParamBlock* b = find(name);
        if (!b) throw StateError("unknown parameter block: " + name);
        return *b;
    }

    std::size_t size() const { return params_.size(); }
    const std::vector<ParamBlock>& blocks() const { return blocks_; }

    double* values() { return params_.data(); }
    const double* values() const { return params_.data(); }
    double* grads() { return grads_.data(); }
    const double* grads() const { return grads_.data(); }

    double* block_values(const ParamBlock& b) { return params_.data() + b.offset; }
    const double* block_values(const ParamBlock& b) const { return params_.data() + b.offset; }
    double* block_grads(const ParamBlock& b) { return grads_.data() + b.offset; }

    // Copies a block into a Matrix (2-D blocks; 1-D becomes a row vector).
    Matrix matrix(const ParamBlock& b) const {
        std::size_t r = 1, c = b.count();
        if (b.shape.size() == 2) {
            r = b.shape[0];
            c = b.shape[1];
        }
        Matrix m(r, c);
        std::copy(params_.begin() + b.offset, params_.begin() + b.offset + b.count(), m.data.begin());
        return m;
    }

    void zero_grads() { std::fill(grads_.begin(), grads_.end(), 0.0); }

    // Canonical byte serialization of the blocks whose names start with
    // `prefix` (all blocks when empty), in name order. Stable input for
    // fingerprinting a sub-model.
    std::vector<std::uint8_t> serialize_blocks(const std::string& prefix = "") const {
        std::vector<const ParamBlock*> sel;
        for (const auto& b : blocks_)
            if (b.name.rfind(prefix, 0) == 0) sel.push_back(&b);
        std::sort(sel.begin(), sel.end(),
                  [](const ParamBlock* a, const ParamBlock* b) { return a->name < b->name; });
        std::vector<std::uint8_t> buf;
        for (const ParamBlock* b : sel) {
            detail::put_u32(buf, static_cast<std::uint32_t>(b->name.size()));
            detail::put_bytes(buf, b->name.data(), b->name.size());
            detail::put_u32(buf, static_cast<std::uint32_t>(b->shape.size()));
            for (std::size_t d : b->shape) detail::put_u64(buf, d);
            for (std::size_t i = 0; i < b->count(); ++i)
                detail::put_f64(buf, params_[b->offset + i]);
        }
        return buf;
    }

    std::vector<std::uint8_t> save_bytes() const {
        std::vector<std::uint8_t> buf;
        detail::put_bytes(buf, "CFPARAM1", 8);
        detail::put_u64(buf, blocks_.size());
        detail::put_u64(buf, params_.size());
        for (const auto& b : blocks_) {
            detail::put_u32(buf, static_cast<std::uint32_t>(b.name.size()));
            detail::put_bytes(buf, b.name.data(), b.name.size());
            detail::put_u64(buf, b.offset);
            detail::put_u32(buf, static_cast<std::uint32_t>(b.shape.size()));
            for (std::size_t d : b.shape) detail::put_u64(buf, d);
        }
        for (double v : params_) detail::put_f64(buf, v);
        return buf;
    }

    void save(const std::string& path) const { detail::write_file(path, save_bytes()); }

    // Loads values into this store. Block names, shapes and offsets must
    // match the live registration exactly; checkpoints do not create
    // structure, they fill it.
    void load_bytes(const std::vector<std::uint8_t>& buf) {
        detail::ByteReader r(buf);
        r.expect_magic("CFPARAM1", 8);
        std::uint64_t nblocks = r.u64("block count");
        std::uint64_t total = r.u64("scalar count");
        if (nblocks != blocks_.size())
            throw ParseError("checkpoint has " + std::to_string(nblocks) + " blocks, model has " +
                                 std::to_string(blocks_.size()),
                             r.offset());
        if (total != params_.size())
            throw ParseError("checkpoint has " + std::to_string(total) + " scalars, model has " +
                                 std::to_string(params_.size()),
                             r.offset());
        for (const auto& b : blocks_) {
            std::uint32_t name_len = r.u32("block name length");
            std::string name(name_len, '\0');
            r.read_bytes(name.data(), name_len, "block name");
            if (name != b.name)
                throw ParseError("checkpoint block '" + name + "' where model expects '" + b.name + "'",
                                 r.offset());
            std::uint64_t off = r.u64("block offset");
            std::uint32_t ndim = r.u32("block ndim");
            std::vector<std::size_t> shape(ndim);
            for (auto& d : shape) d = r.u64("block dim");
            if (off != b.offset || shape != b.shape)
                throw ParseError("checkpoint layout mismatch for block '" + name + "'", r.offset());
        }
        for (auto& v : params_) v = r.f64("parameter value");
        if (!r.at_end()) throw ParseError("trailing bytes after checkpoint payload", r.offset());
    }

    void load(const std::string& path) { load_bytes(detail::read_file(path)); }

private:
    std::vector<double> params_;
    std::vector<double> grads_;
    std::vector<ParamBlock> blocks_;
};

}  // namespace cacheflow
