#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "postrain/common.hpp"
#include "postrain/prb.hpp"
#include "postrain/tensor.hpp"

namespace postrain {

// Container file: magic "PRBC", version u32 LE, 32-byte config hash, tensor
// count u32 LE, then per tensor a length-prefixed name and a length-prefixed
// .prb payload. Everything the trainer accumulates (parameters, optimizer
// moments, RNG state, normalization stats) rides in one file.
struct Checkpoint {
    uint32_t version = 1;
    std::array<uint8_t, 32> config_hash{};
    std::vector<std::pair<std::string, PrbTensor>> tensors;

    const PrbTensor* find(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    }
    const PrbTensor& require(const std::string& name) const {
        const PrbTensor* t = find(name);
        if (!t) throw ValidationError("checkpoint: missing tensor '" + name + "'");
        return *t;
    }
};

inline constexpr char kCkptMagic[4] = {'P', 'R', 'B', 'C'};

inline std::string checkpoint_encode(const Checkpoint& c) {
    std::string out;
    out.append(kCkptMagic, 4);
    detail::put_u32le(out, c.version);
    out.append(reinterpret_cast<const char*>(c.config_hash.data()), 32);
    detail::put_u32le(out, static_cast<uint32_t>(c.tensors.size()));
    for (const auto& [name, t] : c.tensors) {
        detail::put_u32le(out, static_cast<uint32_t>(name.size()));
        out += name;
        std::string payload = prb_encode(t);
        uint64_t n = payload.size();
        for (int i = 0; i < 8; ++i) out.push_back(char((n >> (8 * i)) & 0xff));
        out += payload;
    }
    return out;
}

inline Checkpoint checkpoint_decode(const std::string& bytes) {
    Checkpoint c;
    const uint8_t* base = reinterpret_cast<const uint8_t*>(bytes.data());
    size_t pos = 0;
    auto need = [&](size_t n) {
        if (pos + n > bytes.size()) throw IoError("checkpoint: truncated file");
    };
    need(4);
    if (std::memcmp(bytes.data(), kCkptMagic, 4) != 0)
        throw IoError("checkpoint: bad magic (expected PRBC)");
    pos = 4;
    need(4);
    c.version = detail::get_u32le(base + pos);
    pos += 4;
    if (c.version != 1)
        throw IoError("checkpoint: unsupported version " + std::to_string(c.version));
    need(32);
    std::memcpy(c.config_hash.data(), base + pos, 32);
    pos += 32;
    need(4);
    uint32_t count = detail::get_u32le(base + pos);
    pos += 4;
    for (uint32_t i = 0; i < count; ++i) {
        need(4);
        uint32_t name_len = detail::get_u32le(base + pos);
        pos += 4;
        need(name_len);
        std::string name = bytes.substr(pos, name_len);
        pos += name_len;
        need(8);
        uint64_t payload_len = 0;
        for (int b = 0; b < 8; ++b) payload_len |= uint64_t(base[pos + b]) << (8 * b);
        pos += 8;
        need(payload_len);
        PrbTensor t = prb_decode(base + pos, payload_len, "checkpoint tensor '" + name + "'");
        c.tensors.emplace_back(std::move(name), std::move(t));
        pos += payload_len;
    }
    if (pos != bytes.size()) throw IoError("checkpoint: trailing bytes after last tensor");
    return c;
}

inline void checkpoint_write(const std::filesystem::path& p, const Checkpoint& c) {
    write_file_bytes(p, checkpoint_encode(c));
}

inline Checkpoint checkpoint_read(const std::filesystem::path& p) {
    return checkpoint_decode(read_file_bytes(p));
}

// ---------------------------------------------------------------------------
// Conversions. Model math runs in double; the container stores float32, which
// is the canonical precision of anything persisted. Test evaluation always
// reloads from the file, so its inputs are exactly what the file holds.
// ---------------------------------------------------------------------------

inline PrbTensor prb_from_tensor(const Tensor& t) {
    PrbTensor out;
    for (long d : t.shape()) out.dims.push_back(static_cast<uint32_t>(d));
    out.values.resize(static_cast<size_t>(t.numel()));
    for (long i = 0; i < t.numel(); ++i) out.values[i] = static_cast<float>(t.v()[i]);
    return out;
}

inline void tensor_from_prb(const PrbTensor& src, Tensor& dst, const std::string& name) {
    if (static_cast<long>(src.numel()) != dst.numel())
        throw ValidationError("checkpoint: tensor '" + name + "' holds " +
                              std::to_string(src.numel()) + " values, expected " +
                              std::to_string(dst.numel()));
    for (size_t i = 0; i < src.values.size(); ++i) dst.v()[i] = double(src.values[i]);
}

// Arbitrary byte strings (RNG state) stored as one f32 per byte.
inline PrbTensor prb_from_bytes(const std::string& s) {
    PrbTensor out;
    out.dims = {static_cast<uint32_t>(s.size())};
    out.values.resize(s.size());
    for (size_t i = 0; i < s.size(); ++i) out.values[i] = float(uint8_t(s[i]));
    return out;
}

inline std::string bytes_from_prb(const PrbTensor& t) {
    std::string out(t.values.size(), '\0');
    for (size_t i = 0; i < t.values.size(); ++i) out[i] = char(uint8_t(t.values[i]));
    return out;
}

}  // namespace postrain
