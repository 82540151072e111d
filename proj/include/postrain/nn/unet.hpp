#pragma once

#include <string>
#include <vector>

#include "postrain/common.hpp"
#include "postrain/nn/layers.hpp"
#include "postrain/rng.hpp"
#include "postrain/tensor.hpp"

namespace postrain::nn {

struct DoubleConv {
    Conv2d c1, c2;
    Gelu a1, a2;
    long h_ = 0, w_ = 0;

    DoubleConv(const std::string& name, long in_c, long out_c, Rng& rng)
        : c1(name + ".c1", in_c, out_c, 3, rng), c2(name + ".c2", out_c, out_c, 3, rng) {}

    Tensor forward(const Tensor& x, long h, long w) {
        h_ = h;
        w_ = w;
        return a2.forward(c2.forward(a1.forward(c1.forward(x, h, w)), h, w));
    }

    Tensor backward(const Tensor& dy) { return c1.backward(a1.backward(c2.backward(a2.backward(dy)))); }

    void params(ParamRefs& out) {
        c1.params(out);
        c2.params(out);
    }
};

// Classic encoder/decoder with skip connections. forward maps (C, H, W) to a
// (base, H, W) feature map; H and W must divide by 2^levels.
class UNet {
public:
    UNet(const std::string& name, long in_ch, long h, long w, long base, long levels, Rng& rng)
        : in_ch_(in_ch), h_(h), w_(w), base_(base), levels_(levels) {
        if (levels < 1) throw ConfigError("unet: levels must be >= 1");
        if (h % (1L << levels) != 0 || w % (1L << levels) != 0)
            throw ConfigError("unet: input size must divide by 2^levels");
        long c = in_ch;
        for (long i = 0; i < levels; ++i) {
            long f = base << i;
            enc_.emplace_back(name + ".enc" + std::to_string(i), c, f, rng);
            c = f;
        }
        pools_.resize(levels);
        bottom_ = std::make_unique<DoubleConv>(name + ".bottom", base << (levels - 1), base << levels, rng);
        for (long i = levels - 1; i >= 0; --i) {
            long f = base << i;
            ups_.emplace_back();
            upconv_.emplace_back(name + ".up" + std::to_string(i), f * 2, f, 3, rng);
            dec_.emplace_back(name + ".dec" + std::to_string(i), f * 2, f, rng);
        }
    }

    long out_channels() const { return base_; }

    static long param_count(long in_ch, long base, long levels) {
        auto dc = [](long a, long b) { return 9 * a * b + b + 9 * b * b + b; };
        long total = 0;
        long c = in_ch;
        for (long i = 0; i < levels; ++i) {
            total += dc(c, base << i);
            c = base << i;
        }
        total += dc(base << (levels - 1), base << levels);
        for (long i = levels - 1; i >= 0; --i) {
            long f = base << i;
            total += 9 * (f * 2) * f + f;  // up conv
            total += dc(f * 2, f);
        }
        return total;
    }

    Tensor forward(const Tensor& x) {
        long h = h_, w = w_;
        Tensor cur = x;
        skips_.clear();
        for (long i = 0; i < levels_; ++i) {
            cur = enc_[i].forward(cur, h, w);
            skips_.push_back(cur);
            cur = pools_[i].forward(cur, base_ << i, h, w);
            h /= 2;
            w /= 2;
        }
        cur = bottom_->forward(cur, h, w);
        for (long d = 0; d < levels_; ++d) {
            long i = levels_ - 1 - d;
            long f = base_ << i;
            cur = ups_[d].forward(cur, f * 2, h, w);
            h *= 2;
            w *= 2;
            cur = upconv_[d].forward(cur, h, w);
            const Tensor& skip = skips_[i];
            Tensor cat({2 * f, h * w});
            cat.mat(2 * f, h * w).topRows(f) = cur.mat(f, h * w);
            cat.mat(2 * f, h * w).bottomRows(f) = skip.mat(f, h * w);
            cur = dec_[d].forward(cat, h, w);
        }
        Tensor out({base_, h_, w_});
        out.v() = cur.v();
        return out;
    }

    Tensor backward(const Tensor& dy) {
        Tensor g = dy;
        std::vector<Tensor> dskips(levels_);
        for (long d = levels_ - 1; d >= 0; --d) {
            long i = levels_ - 1 - d;
            long f = base_ << i;
            long hw = g.numel() / f;  // dec_[d] output resolution
            Tensor dcat = dec_[d].backward(g);
            Tensor dcur({f, hw});
            dcur.mat(f, hw) = dcat.mat(2 * f, hw).topRows(f);
            dskips[i] = Tensor({f, hw});
            dskips[i].mat(f, hw) = dcat.mat(2 * f, hw).bottomRows(f);
            g = ups_[d].backward(upconv_[d].backward(dcur));
        }
        g = bottom_->backward(g);
        for (long i = levels_ - 1; i >= 0; --i) {
            g = pools_[i].backward(g);
            g.add(dskips[i]);
            g = enc_[i].backward(g);
        }
        return g;
    }

    void params(ParamRefs& out) {
        for (auto& e : enc_) e.params(out);
        bottom_->params(out);
        for (size_t d = 0; d < upconv_.size(); ++d) {
            upconv_[d].params(out);
            dec_[d].params(out);
        }
    }

private:
    long in_ch_, h_, w_, base_, levels_;
    std::vector<DoubleConv> enc_;
    std::vector<MaxPool2x2> pools_;
    std::unique_ptr<DoubleConv> bottom_;
    std::vector<Upsample2x> ups_;
    std::vector<Conv2d> upconv_;
    std::vector<DoubleConv> dec_;
    std::vector<Tensor> skips_;
};

}  // namespace postrain::nn
