#pragma once

#include <memory>
#include <string>

#include "postrain/common.hpp"
#include "postrain/nn/convlstm.hpp"
#include "postrain/nn/swin.hpp"
#include "postrain/nn/unet.hpp"
#include "postrain/rng.hpp"
#include "postrain/tensor.hpp"

namespace postrain::nn {

enum class BackboneKind { swin_unet, unet, conv_lstm };

inline const char* backbone_name(BackboneKind k) {
    switch (k) {
        case BackboneKind::swin_unet: return "swin_unet";
        case BackboneKind::unet: return "unet";
        case BackboneKind::conv_lstm: return "convlstm";
    }
    return "?";
}

inline BackboneKind backbone_from_name(const std::string& s) {
    if (s == "swin_unet") return BackboneKind::swin_unet;
    if (s == "unet") return BackboneKind::unet;
    if (s == "convlstm") return BackboneKind::conv_lstm;
    throw ConfigError("unknown backbone '" + s + "'");
}

// All backbones consume a (channels, Hp, Wp) stack and emit a feature map.
struct BackboneIface {
    virtual ~BackboneIface() = default;
    virtual Tensor forward(const Tensor& x) = 0;
    virtual Tensor backward(const Tensor& dy) = 0;
    virtual long out_channels() const = 0;
    virtual void params(ParamRefs& out) = 0;
};

struct SwinAdapter : BackboneIface {
    SwinUnet m;
    SwinAdapter(const std::string& name, long in_ch, long h, long w, const SwinUnetConfig& cfg, Rng& rng)
        : m(name, in_ch, h, w, cfg, rng) {}
    Tensor forward(const Tensor& x) override { return m.forward(x); }
    Tensor backward(const Tensor& dy) override { return m.backward(dy); }
    long out_channels() const override { return m.out_channels(); }
    void params(ParamRefs& out) override { m.params(out); }
};

struct UnetAdapter : BackboneIface {
    UNet m;
    UnetAdapter(const std::string& name, long in_ch, long h, long w, long base, long levels, Rng& rng)
        : m(name, in_ch, h, w, base, levels, rng) {}
    Tensor forward(const Tensor& x) override { return m.forward(x); }
    Tensor backward(const Tensor& dy) override { return m.backward(dy); }
    long out_channels() const override { return m.out_channels(); }
    void params(ParamRefs& out) override { m.params(out); }
};

struct LstmAdapter : BackboneIface {
    ConvLstm m;
    long t;
    LstmAdapter(const std::string& name, long t_steps, long in_ch, long hidden, long h, long w, Rng& rng)
        : m(name, in_ch, hidden, h, w, rng), t(t_steps) {}
    Tensor forward(const Tensor& x) override { return m.forward(x, t); }
    Tensor backward(const Tensor& dy) override { return m.backward(dy); }
    long out_channels() const override { return m.out_channels(); }
    void params(ParamRefs& out) override { m.params(out); }
};

// Symmetric zero padding up to the next multiple of `multiple`, extra row or
// column on the bottom/right; crop inverts it.
struct Padder {
    long h = 0, w = 0, hp = 0, wp = 0, py = 0, px = 0;

    Padder() = default;
    Padder(long h_, long w_, long multiple) : h(h_), w(w_) {
        hp = (h + multiple - 1) / multiple * multiple;
        wp = (w + multiple - 1) / multiple * multiple;
        py = (hp - h) / 2;
        px = (wp - w) / 2;
    }

    bool identity() const { return hp == h && wp == w; }

    Tensor pad(const Tensor& x, long channels) const {
        if (identity()) return x;
        Tensor y({channels, hp, wp});
        y.zero();
        const double* xv = x.v().data();
        double* yv = y.v().data();
        for (long c = 0; c < channels; ++c)
            for (long yy = 0; yy < h; ++yy)
                std::copy(xv + (c * h + yy) * w, xv + (c * h + yy + 1) * w,
                          yv + (c * hp + yy + py) * wp + px);
        return y;
    }

    Tensor crop(const Tensor& x, long channels) const {
        if (identity()) return x;
        Tensor y({channels, h, w});
        const double* xv = x.v().data();
        double* yv = y.v().data();
        for (long c = 0; c < channels; ++c)
            for (long yy = 0; yy < h; ++yy)
                std::copy(xv + (c * hp + yy + py) * wp + px, xv + (c * hp + yy + py) * wp + px + w,
                          yv + (c * h + yy) * w);
        return y;
    }

    // gradient of crop is pad with zeros; gradient of pad is crop
    Tensor crop_grad(const Tensor& dy, long channels) const { return pad(dy, channels); }
    Tensor pad_grad(const Tensor& dy, long channels) const { return crop(dy, channels); }
};

}  // namespace postrain::nn
