#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "postrain/common.hpp"

namespace postrain {

// The .prb tensor container:
//   bytes 0-3   magic "PRB1"
//   byte  4     rank (u8)
//   next 4*rank dims, little-endian u32
//   payload     float32 little-endian, row-major, last axis fastest
struct PrbTensor {
    std::vector<uint32_t> dims;
    std::vector<float> values;

    size_t numel() const {
        size_t n = 1;
        for (uint32_t d : dims) n *= d;
        return n;
    }
};

namespace detail {

inline void put_u32le(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline uint32_t get_u32le(const uint8_t* p) {
    return uint32_t(p[0]) | (uint32_t(p[1]) << 8) | (uint32_t(p[2]) << 16) | (uint32_t(p[3]) << 24);
}

inline uint32_t f32_bits(float f) {
    uint32_t u;
    std::memcpy(&u, &f, 4);
    return u;
}

inline float bits_f32(uint32_t u) {
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}

}  // namespace detail

inline std::string prb_encode(const PrbTensor& t) {
    if (t.dims.empty() || t.dims.size() > 255)
        throw IoError("prb: rank must be in [1, 255]");
    if (t.values.size() != t.numel())
        throw IoError("prb: payload size does not match dims");
    std::string out;
    out.reserve(5 + 4 * t.dims.size() + 4 * t.values.size());
    out += "PRB1";
    out.push_back(static_cast<char>(t.dims.size()));
    for (uint32_t d : t.dims) detail::put_u32le(out, d);
    for (float f : t.values) detail::put_u32le(out, detail::f32_bits(f));
    return out;
}

inline PrbTensor prb_decode(const uint8_t* p, size_t n, const std::string& what) {
    if (n < 5 || std::memcmp(p, "PRB1", 4) != 0)
        throw IoError("prb: bad magic bytes in " + what);
    size_t rank = p[4];
    if (rank == 0 || n < 5 + 4 * rank)
        throw IoError("prb: truncated header in " + what);
    PrbTensor t;
    t.dims.resize(rank);
    size_t off = 5;
    for (size_t i = 0; i < rank; ++i, off += 4) t.dims[i] = detail::get_u32le(p + off);
    size_t count = t.numel();
    if (n != off + 4 * count)
        throw IoError("prb: payload size mismatch in " + what);
    t.values.resize(count);
    for (size_t i = 0; i < count; ++i, off += 4)
        t.values[i] = detail::bits_f32(detail::get_u32le(p + off));
    return t;
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open file: " + path.string());
    std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (!f.good() && !f.eof()) throw IoError("read failed: " + path.string());
    return s;
}

inline void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open file for writing: " + path.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f.good()) throw IoError("write failed: " + path.string());
}

inline PrbTensor prb_read(const std::filesystem::path& path) {
    std::string bytes = read_file_bytes(path);
    return prb_decode(reinterpret_cast<const uint8_t*>(bytes.data()), bytes.size(), path.string());
}

inline void prb_write(const std::filesystem::path& path, const PrbTensor& t) {
    write_file_bytes(path, prb_encode(t));
}

}  // namespace postrain
