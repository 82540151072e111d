#pragma once

#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "postrain/common.hpp"
#include "postrain/nn/backbone.hpp"
#include "postrain/nn/cam.hpp"
#include "postrain/nn/multitask.hpp"
#include "postrain/rng.hpp"
#include "postrain/tensor.hpp"

namespace postrain::nn {

struct ModelConfig {
    BackboneKind backbone = BackboneKind::swin_unet;
    bool use_cam = true;
    long cam_reduction = 16;
    CamMerge cam_merge = CamMerge::residual_add;
    bool use_regression_head = true;
    SwinUnetConfig swin;
    long unet_base = 16;
    long unet_levels = 2;
    long lstm_hidden = 24;
};

// Constructs the configured backbone for a (T, C, H, W) input. The exact
// H and W given here must already satisfy the backbone's geometry contract;
// a violation raises ConfigError naming the failing constraint.
inline std::unique_ptr<BackboneIface> build_backbone(const ModelConfig& cfg, long t, long c,
                                                     long h, long w, Rng& rng) {
    switch (cfg.backbone) {
        case BackboneKind::swin_unet:
            return std::make_unique<SwinAdapter>("backbone", t * c, h, w, cfg.swin, rng);
        case BackboneKind::unet:
            return std::make_unique<UnetAdapter>("backbone", t * c, h, w, cfg.unet_base,
                                                 cfg.unet_levels, rng);
        case BackboneKind::conv_lstm:
            return std::make_unique<LstmAdapter>("backbone", t, c, cfg.lstm_hidden, h, w, rng);
    }
    throw ConfigError("unknown backbone kind");
}

// Attention on the raw predictor stack, a backbone producing a full
// resolution feature map, and per-pixel classification/regression heads.
// Time steps fold into channels except for the recurrent backbone, which
// keeps the sequence and shares one attention module across frames.
class CamtModel {
public:
    struct Output {
        Tensor logits;  // (3, H*W)
        Tensor reg;     // (1, H*W), empty when the head is disabled
    };

    CamtModel(const ModelConfig& cfg, long t, long c, long h, long w, uint64_t init_seed)
        : cfg_(cfg), t_(t), c_(c), h_(h), w_(w) {
        Rng rng(derive_stream(init_seed, "model_init"));
        const bool recurrent = cfg.backbone == BackboneKind::conv_lstm;
        cam_channels_ = recurrent ? c : t * c;
        fold_channels_ = t * c;
        long multiple = 1;
        switch (cfg.backbone) {
            case BackboneKind::swin_unet:
                // smallest size satisfying both swin constraints: divisible by
                // patch * 2^num_downsamples and window-aligned after patching
                multiple = cfg.swin.patch *
                           std::lcm(1L << (static_cast<long>(cfg.swin.dims.size()) - 1),
                                    cfg.swin.window);
                break;
            case BackboneKind::unet:
                multiple = 1L << cfg.unet_levels;
                break;
            case BackboneKind::conv_lstm:
                multiple = 1;
                break;
        }
        pad_ = Padder(h, w, multiple);
        if (cfg.use_cam)
            cam_ = std::make_unique<ChannelAttention>("cam", cam_channels_, cfg.cam_reduction,
                                                      cfg.cam_merge, rng);
        backbone_ = build_backbone(cfg, t, c, pad_.hp, pad_.wp, rng);
        cls_head_ = std::make_unique<Head1x1>("head_cls", backbone_->out_channels(), 3, rng);
        if (cfg.use_regression_head)
            reg_head_ = std::make_unique<Head1x1>("head_reg", backbone_->out_channels(), 1, rng);
    }

    long height() const { return h_; }
    long width() const { return w_; }
    const ModelConfig& config() const { return cfg_; }

    // x is the (T*C, H, W) normalized predictor stack.
    Output forward(const Tensor& x) {
        const long hw = h_ * w_;
        Tensor cur = x;
        if (cam_) {
            if (cfg_.backbone == BackboneKind::conv_lstm) {
                cam_caches_.resize(t_);
                Tensor gated({fold_channels_, h_, w_});
                for (long ti = 0; ti < t_; ++ti) {
                    Tensor frame({c_, hw});
                    std::copy(cur.v().begin() + ti * c_ * hw, cur.v().begin() + (ti + 1) * c_ * hw,
                              frame.v().begin());
                    Tensor out = cam_->forward(frame, hw, cam_caches_[ti]);
                    std::copy(out.v().begin(), out.v().end(), gated.v().begin() + ti * c_ * hw);
                }
                cur = std::move(gated);
            } else {
                cam_caches_.resize(1);
                cur = cam_->forward(cur, hw, cam_caches_[0]);
            }
        }
        Tensor feat = backbone_->forward(pad_.pad(cur, fold_channels_));
        feat_ = pad_.crop(feat, backbone_->out_channels());
        Output out;
        out.logits = cls_head_->forward(feat_, hw);
        if (reg_head_) out.reg = reg_head_->forward(feat_, hw);
        return out;
    }

    // Consumes d loss / d logits and d loss / d reg; accumulates parameter
    // gradients and returns d loss / d input.
    Tensor backward(const Tensor& dlogits, const Tensor& dreg) {
        const long hw = h_ * w_;
        Tensor dfeat = cls_head_->backward(dlogits, hw);
        if (reg_head_ && dreg.numel() != 0) dfeat.add(reg_head_->backward(dreg, hw));
        Tensor dpad = backbone_->backward(pad_.crop_grad(dfeat, backbone_->out_channels()));
        Tensor dcur = pad_.pad_grad(dpad, fold_channels_);
        if (cam_) {
            if (cfg_.backbone == BackboneKind::conv_lstm) {
                Tensor dx({fold_channels_, h_, w_});
                for (long ti = 0; ti < t_; ++ti) {
                    Tensor dframe({c_, hw});
                    std::copy(dcur.v().begin() + ti * c_ * hw, dcur.v().begin() + (ti + 1) * c_ * hw,
                              dframe.v().begin());
                    Tensor g = cam_->backward(dframe, cam_caches_[ti]);
                    std::copy(g.v().begin(), g.v().end(), dx.v().begin() + ti * c_ * hw);
                }
                return dx;
            }
            return cam_->backward(dcur, cam_caches_[0]);
        }
        return dcur;
    }

    ParamRefs params() {
        ParamRefs out;
        if (cam_) cam_->params(out);
        backbone_->params(out);
        cls_head_->params(out);
        if (reg_head_) reg_head_->params(out);
        return out;
    }

    long param_count() {
        long n = 0;
        for (Param* p : params()) n += p->value.numel();
        return n;
    }

    ChannelAttention* cam() { return cam_.get(); }

private:
    ModelConfig cfg_;
    long t_, c_, h_, w_;
    long cam_channels_ = 0, fold_channels_ = 0;
    Padder pad_;
    std::unique_ptr<ChannelAttention> cam_;
    std::vector<ChannelAttention::Cache> cam_caches_;
    std::unique_ptr<BackboneIface> backbone_;
    std::unique_ptr<Head1x1> cls_head_;
    std::unique_ptr<Head1x1> reg_head_;
    Tensor feat_;
};

}  // namespace postrain::nn
