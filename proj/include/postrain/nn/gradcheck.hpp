#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "postrain/tensor.hpp"

namespace postrain::nn {

// Relative error convention used by every finite-difference test.
inline double rel_err(double analytic, double fd) {
    return std::abs(analytic - fd) / std::max({1e-6, std::abs(analytic), std::abs(fd)});
}

// Central difference of fn() with respect to *x. fn must re-run the full
// forward pass each call; *x is restored on exit.
template <class Fn>
double fd_derivative(Fn&& fn, double* x, double step = 1e-5) {
    const double orig = *x;
    *x = orig + step;
    const double up = fn();
    *x = orig - step;
    const double dn = fn();
    *x = orig;
    return (up - dn) / (2.0 * step);
}

// Max relative error between analytic gradients and central differences over
// the given entries of one tensor.
template <class Fn>
double check_entries(Fn&& loss, Tensor& value, const Tensor& grad, const std::vector<long>& idx,
                     double step = 1e-5) {
    double worst = 0.0;
    for (long i : idx)
        worst = std::max(worst, rel_err(grad.v()[i], fd_derivative(loss, &value.v()[i], step)));
    return worst;
}

template <class Fn>
double check_all_entries(Fn&& loss, Tensor& value, const Tensor& grad, double step = 1e-5) {
    std::vector<long> idx(value.numel());
    for (long i = 0; i < value.numel(); ++i) idx[i] = i;
    return check_entries(loss, value, grad, idx, step);
}

// Representative probe: first, middle and last entry of a tensor.
inline std::vector<long> probe_indices(const Tensor& t) {
    if (t.numel() == 1) return {0};
    return {0, t.numel() / 2, t.numel() - 1};
}

// ---------------------------------------------------------------------------
// Non-differentiability detection. A max that is (nearly) tied moves across
// inputs under the +-step perturbation and poisons the central difference, so
// tests regenerate inputs until the margin clears the step size comfortably.
// ---------------------------------------------------------------------------

// Smallest gap between the per-channel spatial max and its runner-up.
inline double channel_max_gap(const Tensor& f, long channels, long hw) {
    double worst = std::numeric_limits<double>::infinity();
    for (long c = 0; c < channels; ++c) {
        double best = -std::numeric_limits<double>::infinity(), second = best;
        for (long p = 0; p < hw; ++p) {
            double v = f.v()[c * hw + p];
            if (v > best) {
                second = best;
                best = v;
            } else if (v > second) {
                second = v;
            }
        }
        if (hw > 1) worst = std::min(worst, best - second);
    }
    return worst;
}

// Smallest gap between winner and runner-up inside each 2x2 pooling window.
inline double pool2x2_gap(const Tensor& x, long c, long h, long w) {
    double worst = std::numeric_limits<double>::infinity();
    for (long ch = 0; ch < c; ++ch)
        for (long y = 0; y + 1 < h; y += 2)
            for (long xx = 0; xx + 1 < w; xx += 2) {
                const double v[4] = {x.v()[(ch * h + y) * w + xx], x.v()[(ch * h + y) * w + xx + 1],
                                     x.v()[(ch * h + y + 1) * w + xx],
                                     x.v()[(ch * h + y + 1) * w + xx + 1]};
                double best = v[0], second = -std::numeric_limits<double>::infinity();
                for (int i = 1; i < 4; ++i) {
                    if (v[i] > best) {
                        second = best;
                        best = v[i];
                    } else if (v[i] > second) {
                        second = v[i];
                    }
                }
                worst = std::min(worst, best - second);
            }
    return worst;
}

}  // namespace postrain::nn
