#pragma once

// Little-endian binary readers/writers. All on-disk formats in this
// project are explicitly little-endian regardless of host order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "../error.hpp"

namespace cacheflow::detail {

inline void put_bytes(std::vector<std::uint8_t>& out, const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
}

inline void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline void put_f32(std::vector<std::uint8_t>& out, float v) {
    put_u32(out, std::bit_cast<std::uint32_t>(v));
}

// Reader over an in-memory buffer that tracks its byte offset so parse
// errors can name the exact position of the failed read.
class ByteReader {
public:
    ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}
    explicit ByteReader(const std::vector<std::uint8_t>& buf) : data_(buf.data()), size_(buf.size()) {}

    std::uint64_t offset() const { return pos_; }
    std::size_t remaining() const { return size_ - pos_; }
    bool at_end() const { return pos_ == size_; }

    void read_bytes(void* dst, std::size_t n, const char* what) {
        if (pos_ + n > size_) throw ParseError(std::string("truncated file reading ") + what, pos_);
        std::memcpy(dst, data_ + pos_, n);
        pos_ += n;
    }

    std::uint8_t u8(const char* what) {
        std::uint8_t v;
        read_bytes(&v, 1, what);
        return v;
    }

    std::uint32_t u32(const char* what) {
        std::uint8_t b[4];
        read_bytes(b, 4, what);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }

    std::uint64_t u64(const char* what) {
        std::uint8_t b[8];
        read_bytes(b, 8, what);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }

    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

    // Consumes a fixed magic string; offset 0 style mismatch is a parse error.
    void expect_magic(const char* magic, std::size_t len) {
        std::uint64_t at = pos_;
        std::vector<char> got(len);
        read_bytes(got.data(), len, "magic");
        if (std::memcmp(got.data(), magic, len) != 0)
            throw ParseError(std::string("bad magic, expected \"") + magic + "\"", at);
    }

private:
    const std::uint8_t* data_;
    std::size_t size_;
    std::uint64_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    in.seekg(0, std::ios::end);
    std::streampos end = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(end));
    if (end > 0) in.read(reinterpret_cast<char*>(buf.data()), end);
    if (!in) throw IoError("short read from " + path);
    return buf;
}

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& buf) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    out.flush();
    if (!out) throw IoError("short write to " + path);
}

}  // namespace cacheflow::detail
