#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace postrain {

// Error taxonomy. Validation = bad data content, Io = filesystem/format,
// Config = bad configuration, Numeric = non-finite values at runtime.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense (H, W) grid, row-major.
template <typename T>
struct Grid {
    int h = 0;
    int w = 0;
    std::vector<T> v;

    Grid() = default;
    Grid(int h_, int w_, T fill = T{}) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, fill) {}

    T& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
    const T& at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
    size_t size() const { return v.size(); }
    bool same_shape(const Grid& o) const { return h == o.h && w == o.w; }
};

using GridF = Grid<float>;
using GridD = Grid<double>;
using GridU8 = Grid<uint8_t>;

inline bool all_finite(const std::vector<float>& v) {
    for (float x : v)
        if (!std::isfinite(x)) return false;
    return true;
}
inline bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace postrain
