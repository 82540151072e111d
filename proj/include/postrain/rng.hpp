#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace postrain {

// SplitMix64 step, used to derive independent substream seeds from (seed, tags).
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t derive_stream(uint64_t seed, std::initializer_list<uint64_t> tags) {
    uint64_t s = splitmix64(seed ^ 0x243f6a8885a308d3ULL);
    for (uint64_t t : tags) s = splitmix64(s ^ splitmix64(t));
    return s;
}

inline uint64_t tag_hash(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (char c : s) {
        h ^= static_cast<uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Named substream: independent of every other (seed, purpose, tags) triple.
inline uint64_t derive_stream(uint64_t seed, std::string_view purpose,
                              std::initializer_list<uint64_t> tags = {}) {
    uint64_t s = splitmix64(seed ^ 0x243f6a8885a308d3ULL);
    s = splitmix64(s ^ tag_hash(purpose));
    for (uint64_t t : tags) s = splitmix64(s ^ splitmix64(t));
    return s;
}

// Deterministic RNG. The engine (mt19937_64) has a standard-specified output
// sequence; the distribution transforms below are hand-rolled because the
// std:: distributions are implementation-defined.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t bits() { return eng_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [lo, hi] via rejection.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t n = static_cast<uint64_t>(hi - lo) + 1;
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t r;
        do {
            r = eng_();
        } while (r >= limit);
        return lo + static_cast<int64_t>(r % n);
    }

    // Box-Muller, one variate per call (the spare is discarded).
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

    // Rejection-sampled normal confined to [lo, hi].
    double trunc_normal(double std, double lo, double hi) {
        for (;;) {
            double x = normal() * std;
            if (x >= lo && x <= hi) return x;
        }
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::string serialize_state() const {
        std::ostringstream os;
        os << eng_;
        return os.str();
    }

    void restore_state(const std::string& s) {
        std::istringstream is(s);
        is >> eng_;
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace postrain
