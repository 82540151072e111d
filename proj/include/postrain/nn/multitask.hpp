#pragma once

#include <array>
#include <cmath>
#include <string>

#include "postrain/common.hpp"
#include "postrain/dataio.hpp"
#include "postrain/nn/layers.hpp"
#include "postrain/rng.hpp"
#include "postrain/tensor.hpp"

namespace postrain::nn {

// 1x1 convolution head: (F, HW) feature map -> (out, HW)
struct Head1x1 {
    Param w;  // (out, F)
    Param b;  // (out)
    long in_ch, out_ch;
    Tensor x_;

    Head1x1(const std::string& name, long f, long out, Rng& rng)
        : w(name + ".w", {out, f}), b(name + ".b", {out}), in_ch(f), out_ch(out) {
        init_param(w.value, Init::torch_linear, f, rng);
        init_param(b.value, Init::torch_linear, f, rng);
    }

    Tensor forward(const Tensor& x, long hw) {
        x_ = x;
        Tensor y({out_ch, hw});
        y.mat(out_ch, hw).noalias() = w.value.mat(out_ch, in_ch) * x.mat(in_ch, hw);
        y.mat(out_ch, hw).colwise() += b.value.vec();
        return y;
    }

    Tensor backward(const Tensor& dy, long hw) {
        auto DY = dy.mat(out_ch, hw);
        w.grad.mat(out_ch, in_ch).noalias() += DY * x_.mat(in_ch, hw).transpose();
        b.grad.vec() += DY.rowwise().sum();
        Tensor dx({in_ch, hw});
        dx.mat(in_ch, hw).noalias() = w.value.mat(out_ch, in_ch).transpose() * DY;
        return dx;
    }

    void params(ParamRefs& out) {
        out.push_back(&w);
        out.push_back(&b);
    }
};

// ---------------------------------------------------------------------------
// Hybrid loss: weighted cross entropy over the 3 rain classes plus an
// alpha-scaled sum-of-squares regression penalty on the rain amount.
// ---------------------------------------------------------------------------

enum class Reduction { sum, mean };

struct LossResult {
    double cls = 0.0;
    double reg = 0.0;
    double hybrid = 0.0;
    Tensor dlogits;  // (3, HW), d hybrid / d logits
    Tensor dreg;     // (1, HW), d hybrid / d reg output (empty when unused)
};

// logits (3, HW); reg (1, HW) or empty; targets indexed per pixel.
inline LossResult hybrid_loss(const Tensor& logits, const Tensor& reg, const GridU8& target_cls,
                              const GridF& target_mm, const std::array<double, 3>& class_weights,
                              double alpha, Reduction reduction = Reduction::sum) {
    const long hw = static_cast<long>(target_cls.v.size());
    if (logits.numel() != 3 * hw) throw ValidationError("hybrid_loss: logits shape mismatch");
    const bool with_reg = reg.numel() != 0;
    if (with_reg && reg.numel() != hw) throw ValidationError("hybrid_loss: regression shape mismatch");
    if (with_reg && static_cast<long>(target_mm.v.size()) != hw)
        throw ValidationError("hybrid_loss: regression target shape mismatch");

    LossResult r;
    r.dlogits = Tensor({3, hw});
    auto L = logits.mat(3, hw);
    auto DL = r.dlogits.mat(3, hw);
    const double scale = reduction == Reduction::sum ? 1.0 : 1.0 / double(hw);
    for (long p = 0; p < hw; ++p) {
        int y = target_cls.v[p];
        if (y < 0 || y >= 3) throw ValidationError("hybrid_loss: target class out of range");
        double w = class_weights[y];
        double m = std::max(L(0, p), std::max(L(1, p), L(2, p)));
        double e0 = std::exp(L(0, p) - m), e1 = std::exp(L(1, p) - m), e2 = std::exp(L(2, p) - m);
        double z = e0 + e1 + e2;
        double logz = m + std::log(z);
        r.cls += w * (logz - L(y, p));
        DL(0, p) = scale * w * (e0 / z - (y == 0 ? 1.0 : 0.0));
        DL(1, p) = scale * w * (e1 / z - (y == 1 ? 1.0 : 0.0));
        DL(2, p) = scale * w * (e2 / z - (y == 2 ? 1.0 : 0.0));
    }
    if (with_reg) {
        r.dreg = Tensor({1, hw});
        for (long p = 0; p < hw; ++p) {
            double d = reg.v()[p] - double(target_mm.v[p]);
            r.reg += d * d;
            r.dreg.v()[p] = scale * alpha * 2.0 * d;
        }
    }
    if (reduction == Reduction::mean) {
        r.cls /= double(hw);
        r.reg /= double(hw);
    }
    r.hybrid = r.cls + alpha * r.reg;
    if (!std::isfinite(r.hybrid)) throw NumericError("hybrid loss is not finite");
    return r;
}

struct HybridLossConfig {
    std::array<double, 3> class_weights{1.0, 5.0, 30.0};
    bool enable_weighting = true;   // false: every class weighs 1
    bool enable_regression = true;  // false: pure classification loss
    double alpha = 100.0;
    bool log1p_target = false;  // regress log1p(rain) instead of raw mm/h
    Reduction reduction = Reduction::sum;
};

inline LossResult hybrid_loss(const Tensor& logits, const Tensor& reg, const GridU8& target_cls,
                              const GridF& target_mm, const HybridLossConfig& cfg) {
    const std::array<double, 3> w =
        cfg.enable_weighting ? cfg.class_weights : std::array<double, 3>{1.0, 1.0, 1.0};
    const Tensor empty;
    const Tensor& r = cfg.enable_regression ? reg : empty;
    if (!cfg.log1p_target) return hybrid_loss(logits, r, target_cls, target_mm, w, cfg.alpha, cfg.reduction);
    GridF tm = target_mm;
    for (float& v : tm.v) v = std::log1p(v);
    return hybrid_loss(logits, r, target_cls, tm, w, cfg.alpha, cfg.reduction);
}

// argmax over class logits; ties resolve toward the higher (rarer) class.
inline RainClassGrid predict_classes(const Tensor& logits, int h, int w) {
    const long hw = static_cast<long>(h) * w;
    if (logits.numel() != 3 * hw) throw ValidationError("predict_classes: logits shape mismatch");
    RainClassGrid out;
    out.grid = GridU8(h, w);
    auto L = logits.mat(3, hw);
    for (long p = 0; p < hw; ++p) {
        int best = 0;
        for (int c = 1; c < 3; ++c)
            if (L(c, p) >= L(best, p)) best = c;
        out.grid.v[p] = static_cast<uint8_t>(best);
    }
    return out;
}

}  // namespace postrain::nn
