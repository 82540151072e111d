#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "postrain/common.hpp"
#include "postrain/nn/layers.hpp"
#include "postrain/rng.hpp"
#include "postrain/tensor.hpp"

namespace postrain::nn {

// ---------------------------------------------------------------------------
// Patch embedding: (C, H, W) image -> (H/p * W/p, D) tokens
// ---------------------------------------------------------------------------

struct PatchEmbed {
    long in_ch, patch, dim, h, w, ht, wt;
    Linear proj;
    LayerNorm norm;

    PatchEmbed(const std::string& name, long in_c, long p, long d, long h_img, long w_img, Rng& rng)
        : in_ch(in_c),
          patch(p),
          dim(d),
          h(h_img),
          w(w_img),
          ht(h_img / p),
          wt(w_img / p),
          proj(name + ".proj", in_c * p * p, d, rng, Init::trunc_normal),
          norm(name + ".norm", d) {
        if (h % p != 0 || w % p != 0)
            throw ConfigError("patch embed: image size must be divisible by patch size");
    }

    Tensor gather(const Tensor& x) const {
        Tensor patches({ht * wt, in_ch * patch * patch});
        const double* xv = x.v().data();
        double* pv = patches.v().data();
        for (long ty = 0; ty < ht; ++ty)
            for (long tx = 0; tx < wt; ++tx) {
                double* row = pv + (ty * wt + tx) * in_ch * patch * patch;
                for (long c = 0; c < in_ch; ++c)
                    for (long py = 0; py < patch; ++py)
                        for (long px = 0; px < patch; ++px)
                            row[(c * patch + py) * patch + px] =
                                xv[(c * h + ty * patch + py) * w + tx * patch + px];
            }
        return patches;
    }

    Tensor forward(const Tensor& x) { return norm.forward(proj.forward(gather(x))); }

    Tensor backward(const Tensor& dy) {
        Tensor dp = proj.backward(norm.backward(dy));
        Tensor dx({in_ch, h, w});
        double* xv = dx.v().data();
        const double* pv = dp.v().data();
        for (long ty = 0; ty < ht; ++ty)
            for (long tx = 0; tx < wt; ++tx) {
                const double* row = pv + (ty * wt + tx) * in_ch * patch * patch;
                for (long c = 0; c < in_ch; ++c)
                    for (long py = 0; py < patch; ++py)
                        for (long px = 0; px < patch; ++px)
                            xv[(c * h + ty * patch + py) * w + tx * patch + px] =
                                row[(c * patch + py) * patch + px];
            }
        return dx;
    }

    void params(ParamRefs& out) {
        proj.params(out);
        norm.params(out);
    }
};

// ---------------------------------------------------------------------------
// Windowed multi-head self-attention with cyclic shift
// ---------------------------------------------------------------------------

// Token grids whose sides are not multiples of the window are padded on the
// bottom/right. Pad slots get a unique negative region id so they attend only
// to themselves and are cropped away afterwards; real tokens never see them.
struct WindowAttention {
    long dim, heads, head_dim;
    long ht, wt;
    long window, shift;
    long hp, wp, n, n_windows;
    std::vector<long> gather_;   // window slot -> token index, or -1 for pad
    std::vector<double> mask_;   // (n_windows * n * n) additive mask
    std::vector<long> rel_index_;
    Linear qkv, proj;
    Param rel_bias;  // ((2w-1)^2, heads)

    Tensor qkv_cache_;
    std::vector<Tensor> soft_;

    WindowAttention(const std::string& name, long d, long n_heads, long window_req, long shift_req,
                    long ht_, long wt_, Rng& rng)
        : dim(d),
          heads(n_heads),
          head_dim(d / n_heads),
          ht(ht_),
          wt(wt_),
          window(std::min(ht_, wt_) <= window_req ? std::min(ht_, wt_) : window_req),
          shift(std::min(ht_, wt_) <= window_req ? 0 : shift_req),
          hp((ht_ + window - 1) / window * window),
          wp((wt_ + window - 1) / window * window),
          n(window * window),
          n_windows((hp / window) * (wp / window)),
          qkv(name + ".qkv", d, 3 * d, rng, Init::trunc_normal),
          proj(name + ".proj", d, d, rng, Init::trunc_normal),
          rel_bias(name + ".rel_bias", {(2 * window - 1) * (2 * window - 1), n_heads}) {
        if (d % n_heads != 0) throw ConfigError("attention dim must divide by head count");
        init_param(rel_bias.value, Init::trunc_normal, 0, rng);
        build_indices();
    }

    void build_indices() {
        gather_.assign(n_windows * n, -1);
        std::vector<long> region(n_windows * n, 0);
        const long wr = wp / window;
        for (long wy = 0; wy < hp / window; ++wy)
            for (long wx = 0; wx < wr; ++wx) {
                long wi = wy * wr + wx;
                for (long py = 0; py < window; ++py)
                    for (long px = 0; px < window; ++px) {
                        long k = wi * n + py * window + px;
                        long ry = wy * window + py, rx = wx * window + px;
                        long uy = (ry + shift) % hp, ux = (rx + shift) % wp;
                        if (uy < ht && ux < wt) {
                            gather_[k] = uy * wt + ux;
                            if (shift > 0) {
                                auto band = [this](long r, long np) {
                                    return r < np - window ? 0L : (r < np - shift ? 1L : 2L);
                                };
                                region[k] = band(ry, hp) * 3 + band(rx, wp);
                            }
                        } else {
                            region[k] = -(1 + uy * wp + ux);
                        }
                    }
            }
        mask_.assign(static_cast<size_t>(n_windows) * n * n, 0.0);
        for (long wi = 0; wi < n_windows; ++wi)
            for (long i = 0; i < n; ++i)
                for (long j = 0; j < n; ++j)
                    if (region[wi * n + i] != region[wi * n + j])
                        mask_[(wi * n + i) * n + j] = -1e30;

        rel_index_.resize(n * n);
        for (long i = 0; i < n; ++i)
            for (long j = 0; j < n; ++j) {
                long dy = i / window - j / window + window - 1;
                long dx = i % window - j % window + window - 1;
                rel_index_[i * n + j] = dy * (2 * window - 1) + dx;
            }
    }

    Tensor forward(const Tensor& x) {
        const long rows = n_windows * n;
        Tensor xw({rows, dim});
        auto XW = xw.mat(rows, dim);
        auto X = x.mat(ht * wt, dim);
        for (long k = 0; k < rows; ++k) {
            if (gather_[k] >= 0)
                XW.row(k) = X.row(gather_[k]);
            else
                XW.row(k).setZero();
        }
        qkv_cache_ = qkv.forward(xw);
        auto QKV = qkv_cache_.mat(rows, 3 * dim);
        Tensor ctx({rows, dim});
        auto CTX = ctx.mat(rows, dim);
        soft_.assign(n_windows * heads, Tensor());
        const double scale = 1.0 / std::sqrt(double(head_dim));
        for (long wi = 0; wi < n_windows; ++wi)
            for (long hd = 0; hd < heads; ++hd) {
                MatD Q = QKV.block(wi * n, hd * head_dim, n, head_dim);
                MatD K = QKV.block(wi * n, dim + hd * head_dim, n, head_dim);
                MatD V = QKV.block(wi * n, 2 * dim + hd * head_dim, n, head_dim);
                Tensor a({n, n});
                auto A = a.mat(n, n);
                A.noalias() = Q * K.transpose() * scale;
                const double* bias = rel_bias.value.v().data();
                for (long i = 0; i < n; ++i)
                    for (long j = 0; j < n; ++j)
                        A(i, j) += bias[rel_index_[i * n + j] * heads + hd] +
                                   mask_[(wi * n + i) * n + j];
                softmax_rows_inplace(a, n, n);
                CTX.block(wi * n, hd * head_dim, n, head_dim).noalias() = a.mat(n, n) * V;
                soft_[wi * heads + hd] = std::move(a);
            }
        Tensor ow = proj.forward(ctx);
        Tensor y({ht * wt, dim});
        auto Y = y.mat(ht * wt, dim);
        auto OW = ow.mat(rows, dim);
        for (long k = 0; k < rows; ++k)
            if (gather_[k] >= 0) Y.row(gather_[k]) = OW.row(k);
        return y;
    }

    Tensor backward(const Tensor& dy) {
        const long rows = n_windows * n;
        Tensor dow({rows, dim});
        auto DOW = dow.mat(rows, dim);
        auto DY = dy.mat(ht * wt, dim);
        for (long k = 0; k < rows; ++k) {
            if (gather_[k] >= 0)
                DOW.row(k) = DY.row(gather_[k]);
            else
                DOW.row(k).setZero();
        }
        Tensor dctx = proj.backward(dow);
        auto DCTX = dctx.mat(rows, dim);
        auto QKV = qkv_cache_.mat(rows, 3 * dim);
        Tensor dqkv({rows, 3 * dim});
        auto DQKV = dqkv.mat(rows, 3 * dim);
        const double scale = 1.0 / std::sqrt(double(head_dim));
        double* brad = rel_bias.grad.v().data();
        for (long wi = 0; wi < n_windows; ++wi)
            for (long hd = 0; hd < heads; ++hd) {
                const Tensor& s = soft_[wi * heads + hd];
                MatD Q = QKV.block(wi * n, hd * head_dim, n, head_dim);
                MatD K = QKV.block(wi * n, dim + hd * head_dim, n, head_dim);
                MatD V = QKV.block(wi * n, 2 * dim + hd * head_dim, n, head_dim);
                MatD DO = DCTX.block(wi * n, hd * head_dim, n, head_dim);
                Tensor ds({n, n});
                ds.mat(n, n).noalias() = DO * V.transpose();
                Tensor da = softmax_rows_backward(s, ds, n, n);
                auto DA = da.mat(n, n);
                for (long i = 0; i < n; ++i)
                    for (long j = 0; j < n; ++j)
                        brad[rel_index_[i * n + j] * heads + hd] += DA(i, j);
                DQKV.block(wi * n, hd * head_dim, n, head_dim).noalias() = scale * (DA * K);
                DQKV.block(wi * n, dim + hd * head_dim, n, head_dim).noalias() =
                    scale * (DA.transpose() * Q);
                DQKV.block(wi * n, 2 * dim + hd * head_dim, n, head_dim).noalias() =
                    s.mat(n, n).transpose() * DO;
            }
        Tensor dxw = qkv.backward(dqkv);
        auto DXW = dxw.mat(rows, dim);
        Tensor dx({ht * wt, dim});
        dx.zero();
        auto DX = dx.mat(ht * wt, dim);
        for (long k = 0; k < rows; ++k)
            if (gather_[k] >= 0) DX.row(gather_[k]) += DXW.row(k);
        return dx;
    }

    void params(ParamRefs& out) {
        qkv.params(out);
        proj.params(out);
        out.push_back(&rel_bias);
    }
};

// ---------------------------------------------------------------------------
// Transformer block: pre-norm attention + pre-norm MLP, both residual
// ---------------------------------------------------------------------------

struct SwinBlock {
    LayerNorm ln1, ln2;
    WindowAttention attn;
    Linear fc1, fc2;
    Gelu act;

    SwinBlock(const std::string& name, long dim, long heads, long window, long shift, long ht,
              long wt, long mlp_ratio, Rng& rng)
        : ln1(name + ".ln1", dim),
          ln2(name + ".ln2", dim),
          attn(name + ".attn", dim, heads, window, shift, ht, wt, rng),
          fc1(name + ".fc1", dim, dim * mlp_ratio, rng, Init::trunc_normal),
          fc2(name + ".fc2", dim * mlp_ratio, dim, rng, Init::trunc_normal) {}

    Tensor forward(const Tensor& x) {
        Tensor h = x;
        h.add(attn.forward(ln1.forward(x)));
        Tensor y = h;
        y.add(fc2.forward(act.forward(fc1.forward(ln2.forward(h)))));
        return y;
    }

    Tensor backward(const Tensor& dy) {
        Tensor dh = dy;
        dh.add(ln2.backward(fc1.backward(act.backward(fc2.backward(dy)))));
        Tensor dx = dh;
        dx.add(ln1.backward(attn.backward(dh)));
        return dx;
    }

    void params(ParamRefs& out) {
        ln1.params(out);
        attn.params(out);
        ln2.params(out);
        fc1.params(out);
        fc2.params(out);
    }
};

// ---------------------------------------------------------------------------
// Patch merging (downsample x2, dim x2) and patch expanding (the reverse)
// ---------------------------------------------------------------------------

struct PatchMerging {
    long ht, wt, dim, h2, w2;
    LayerNorm norm;  // over 4*dim
    Linear red;      // 4*dim -> 2*dim, no bias

    PatchMerging(const std::string& name, long ht_, long wt_, long d, Rng& rng)
        : ht(ht_),
          wt(wt_),
          dim(d),
          h2((ht_ + 1) / 2),
          w2((wt_ + 1) / 2),
          norm(name + ".norm", 4 * d),
          red(name + ".red", 4 * d, 2 * d, rng, Init::trunc_normal, false) {}

    // chunk order: (0,0), (1,0), (0,1), (1,1)
    static constexpr long kOff[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};

    Tensor forward(const Tensor& x) {
        Tensor cat({h2 * w2, 4 * dim});
        cat.zero();
        auto X = x.mat(ht * wt, dim);
        auto C = cat.mat(h2 * w2, 4 * dim);
        for (long y = 0; y < h2; ++y)
            for (long xx = 0; xx < w2; ++xx)
                for (int q = 0; q < 4; ++q) {
                    long sy = 2 * y + kOff[q][0], sx = 2 * xx + kOff[q][1];
                    if (sy < ht && sx < wt)
                        C.block(y * w2 + xx, q * dim, 1, dim) = X.row(sy * wt + sx);
                }
        return red.forward(norm.forward(cat));
    }

    Tensor backward(const Tensor& dy) {
        Tensor dcat = norm.backward(red.backward(dy));
        auto DC = dcat.mat(h2 * w2, 4 * dim);
        Tensor dx({ht * wt, dim});
        dx.zero();
        auto DX = dx.mat(ht * wt, dim);
        for (long y = 0; y < h2; ++y)
            for (long xx = 0; xx < w2; ++xx)
                for (int q = 0; q < 4; ++q) {
                    long sy = 2 * y + kOff[q][0], sx = 2 * xx + kOff[q][1];
                    if (sy < ht && sx < wt)
                        DX.row(sy * wt + sx) += DC.block(y * w2 + xx, q * dim, 1, dim);
                }
        return dx;
    }

    void params(ParamRefs& out) {
        norm.params(out);
        red.params(out);
    }
};

struct PatchExpand {
    long ht, wt, dim, factor, out_dim;
    Linear expand;  // dim -> factor^2 * out_dim, no bias
    LayerNorm norm;

    PatchExpand(const std::string& name, long ht_, long wt_, long d, long f, long od, Rng& rng)
        : ht(ht_),
          wt(wt_),
          dim(d),
          factor(f),
          out_dim(od),
          expand(name + ".expand", d, f * f * od, rng, Init::trunc_normal, false),
          norm(name + ".norm", od) {}

    Tensor forward(const Tensor& x) {
        Tensor t = expand.forward(x);
        const long wo = wt * factor;
        Tensor re({ht * factor * wo, out_dim});
        const double* tv = t.v().data();
        double* rv = re.v().data();
        for (long y = 0; y < ht; ++y)
            for (long xx = 0; xx < wt; ++xx)
                for (long p1 = 0; p1 < factor; ++p1)
                    for (long p2 = 0; p2 < factor; ++p2) {
                        const double* src =
                            tv + (y * wt + xx) * factor * factor * out_dim + (p1 * factor + p2) * out_dim;
                        double* dst = rv + ((y * factor + p1) * wo + xx * factor + p2) * out_dim;
                        std::copy(src, src + out_dim, dst);
                    }
        return norm.forward(re);
    }

    Tensor backward(const Tensor& dy) {
        Tensor dre = norm.backward(dy);
        const long wo = wt * factor;
        Tensor dt({ht * wt, factor * factor * out_dim});
        const double* rv = dre.v().data();
        double* tv = dt.v().data();
        for (long y = 0; y < ht; ++y)
            for (long xx = 0; xx < wt; ++xx)
                for (long p1 = 0; p1 < factor; ++p1)
                    for (long p2 = 0; p2 < factor; ++p2) {
                        const double* src = rv + ((y * factor + p1) * wo + xx * factor + p2) * out_dim;
                        double* dst =
                            tv + (y * wt + xx) * factor * factor * out_dim + (p1 * factor + p2) * out_dim;
                        std::copy(src, src + out_dim, dst);
                    }
        return expand.backward(dt);
    }

    void params(ParamRefs& out) {
        expand.params(out);
        norm.params(out);
    }
};

// Crop a token grid to its top-left (th, tw) region.
struct TokenCrop {
    long fh, fw, th, tw, dim;

    Tensor forward(const Tensor& x) const {
        if (fh == th && fw == tw) return x;
        Tensor y({th * tw, dim});
        auto X = x.mat(fh * fw, dim);
        auto Y = y.mat(th * tw, dim);
        for (long yy = 0; yy < th; ++yy)
            for (long xx = 0; xx < tw; ++xx) Y.row(yy * tw + xx) = X.row(yy * fw + xx);
        return y;
    }

    Tensor backward(const Tensor& dy) const {
        if (fh == th && fw == tw) return dy;
        Tensor dx({fh * fw, dim});
        dx.zero();
        auto DY = dy.mat(th * tw, dim);
        auto DX = dx.mat(fh * fw, dim);
        for (long yy = 0; yy < th; ++yy)
            for (long xx = 0; xx < tw; ++xx) DX.row(yy * fw + xx) = DY.row(yy * tw + xx);
        return dx;
    }
};

// ---------------------------------------------------------------------------
// Swin-Unet
// ---------------------------------------------------------------------------

struct SwinUnetConfig {
    long patch = 4;
    long window = 4;
    std::vector<long> depths{2, 2};
    std::vector<long> dims{48, 96};
    std::vector<long> heads{3, 6};
    long mlp_ratio = 4;

    void validate() const {
        if (depths.empty() || depths.size() != dims.size() || dims.size() != heads.size())
            throw ConfigError("swin: depths, dims and heads must have equal nonzero length");
        if (patch < 1 || window < 1 || mlp_ratio < 1)
            throw ConfigError("swin: patch, window, mlp_ratio must be >= 1");
        for (size_t i = 0; i < dims.size(); ++i) {
            if (dims[i] % heads[i] != 0)
                throw ConfigError("swin: dims[" + std::to_string(i) + "] must divide by heads[" +
                                  std::to_string(i) + "]");
            if (i + 1 < dims.size() && dims[i + 1] != 2 * dims[i])
                throw ConfigError("swin: dims must double per stage (merging outputs 2*dim)");
        }
    }
};

// Encoder stages with patch merging between them, mirrored decoder with patch
// expanding and skip fusion, final expansion back to pixel resolution.
// forward maps (C, H, W) to a (dims[0], H, W) feature map.
class SwinUnet {
public:
    // Rejects illegal geometry up front: H and W must divide by
    // patch * 2^num_downsamples, and the stage-0 token grid must divide by the
    // (clamped) window size. Deeper stages may pad internally; stage 0 may not.
    static void check_geometry(const SwinUnetConfig& cfg, long h, long w) {
        cfg.validate();
        const long nd = static_cast<long>(cfg.dims.size()) - 1;
        const long down = cfg.patch << nd;
        if (h % down != 0 || w % down != 0)
            throw ConfigError("swin: input " + std::to_string(h) + "x" + std::to_string(w) +
                              " must divide by patch_size * 2^num_downsamples = " +
                              std::to_string(down));
        const long ht = h / cfg.patch, wt = w / cfg.patch;
        const long we = std::min(ht, wt) <= cfg.window ? std::min(ht, wt) : cfg.window;
        if (ht % we != 0 || wt % we != 0)
            throw ConfigError("swin: post-patch resolution " + std::to_string(ht) + "x" +
                              std::to_string(wt) + " must divide by window size " +
                              std::to_string(we));
    }

    SwinUnet(const std::string& name, long in_ch, long h, long w, const SwinUnetConfig& cfg,
             Rng& rng)
        : cfg_(cfg), in_ch_(in_ch), h_(h), w_(w), embed_(name + ".embed", in_ch, cfg.patch, cfg.dims[0], h, w, rng) {
        check_geometry(cfg, h, w);
        const size_t ns = cfg.dims.size();
        long ht = h / cfg.patch, wt = w / cfg.patch;
        for (size_t s = 0; s < ns; ++s) {
            res_.emplace_back(ht, wt);
            enc_.emplace_back();
            for (long b = 0; b < cfg.depths[s]; ++b)
                enc_.back().emplace_back(name + ".enc" + std::to_string(s) + ".b" + std::to_string(b),
                                         cfg.dims[s], cfg.heads[s], cfg.window,
                                         (b % 2 == 1) ? cfg.window / 2 : 0, ht, wt, cfg.mlp_ratio,
                                         rng);
            if (s + 1 < ns) {
                merges_.emplace_back(name + ".merge" + std::to_string(s), ht, wt, cfg.dims[s], rng);
                ht = merges_.back().h2;
                wt = merges_.back().w2;
            }
        }
        for (size_t s = ns - 1; s-- > 0;) {
            auto [sh, sw] = res_[s];
            auto [bh, bw] = res_[s + 1];
            expands_.emplace_back(name + ".expand" + std::to_string(s), bh, bw, cfg.dims[s + 1], 2,
                                  cfg.dims[s], rng);
            crops_.push_back(TokenCrop{2 * bh, 2 * bw, sh, sw, cfg.dims[s]});
            fuse_.emplace_back(name + ".fuse" + std::to_string(s), 2 * cfg.dims[s], cfg.dims[s], rng,
                               Init::trunc_normal);
            dec_.emplace_back();
            for (long b = 0; b < cfg.depths[s]; ++b)
                dec_.back().emplace_back(name + ".dec" + std::to_string(s) + ".b" + std::to_string(b),
                                         cfg.dims[s], cfg.heads[s], cfg.window,
                                         (b % 2 == 1) ? cfg.window / 2 : 0, sh, sw, cfg.mlp_ratio,
                                         rng);
        }
        final_ = std::make_unique<PatchExpand>(name + ".final", h / cfg.patch, w / cfg.patch,
                                               cfg.dims[0], cfg.patch, cfg.dims[0], rng);
    }

    long out_channels() const { return cfg_.dims[0]; }

    Tensor forward(const Tensor& x) {
        Tensor t = embed_.forward(x);
        skips_.clear();
        const size_t ns = enc_.size();
        for (size_t s = 0; s < ns; ++s) {
            for (auto& blk : enc_[s]) t = blk.forward(t);
            if (s + 1 < ns) {
                skips_.push_back(t);
                t = merges_[s].forward(t);
            }
        }
        for (size_t d = 0; d < dec_.size(); ++d) {
            t = crops_[d].forward(expands_[d].forward(t));
            const Tensor& skip = skips_[skips_.size() - 1 - d];
            long nn = t.numel() / expands_[d].out_dim;
            long dd = expands_[d].out_dim;
            Tensor cat({nn, 2 * dd});
            auto C = cat.mat(nn, 2 * dd);
            C.leftCols(dd) = t.mat(nn, dd);
            C.rightCols(dd) = skip.mat(nn, dd);
            t = fuse_[d].forward(cat);
            for (auto& blk : dec_[d]) t = blk.forward(t);
        }
        t = final_->forward(t);
        // tokens (H*W, D) -> feature map (D, H, W)
        long D = cfg_.dims[0];
        Tensor f({D, h_, w_});
        auto T = t.mat(h_ * w_, D);
        double* fv = f.v().data();
        for (long p = 0; p < h_ * w_; ++p)
            for (long c = 0; c < D; ++c) fv[c * h_ * w_ + p] = T(p, c);
        return f;
    }

    Tensor backward(const Tensor& dfeat) {
        long D = cfg_.dims[0];
        Tensor dt({h_ * w_, D});
        auto DT = dt.mat(h_ * w_, D);
        const double* fv = dfeat.v().data();
        for (long p = 0; p < h_ * w_; ++p)
            for (long c = 0; c < D; ++c) DT(p, c) = fv[c * h_ * w_ + p];
        Tensor g = final_->backward(dt);
        std::vector<Tensor> dskips(skips_.size());
        for (size_t d = dec_.size(); d-- > 0;) {
            for (size_t b = dec_[d].size(); b-- > 0;) g = dec_[d][b].backward(g);
            Tensor dcat = fuse_[d].backward(g);
            long dd = expands_[d].out_dim;
            long nn = dcat.numel() / (2 * dd);
            Tensor dtok({nn, dd});
            Tensor dskip({nn, dd});
            dtok.mat(nn, dd) = dcat.mat(nn, 2 * dd).leftCols(dd);
            dskip.mat(nn, dd) = dcat.mat(nn, 2 * dd).rightCols(dd);
            dskips[skips_.size() - 1 - d] = std::move(dskip);
            g = expands_[d].backward(crops_[d].backward(dtok));
        }
        const size_t ns = enc_.size();
        for (size_t s = ns; s-- > 0;) {
            if (s + 1 < ns) {
                g = merges_[s].backward(g);
                g.add(dskips[s]);
            }
            for (size_t b = enc_[s].size(); b-- > 0;) g = enc_[s][b].backward(g);
        }
        return embed_.backward(g);
    }

    void params(ParamRefs& out) {
        embed_.params(out);
        for (size_t s = 0; s < enc_.size(); ++s) {
            for (auto& blk : enc_[s]) blk.params(out);
            if (s < merges_.size()) merges_[s].params(out);
        }
        for (size_t d = 0; d < dec_.size(); ++d) {
            expands_[d].params(out);
            fuse_[d].params(out);
            for (auto& blk : dec_[d]) blk.params(out);
        }
        final_->params(out);
    }

private:
    SwinUnetConfig cfg_;
    long in_ch_, h_, w_;
    PatchEmbed embed_;
    std::vector<std::pair<long, long>> res_;
    std::vector<std::vector<SwinBlock>> enc_;
    std::vector<PatchMerging> merges_;
    std::vector<PatchExpand> expands_;
    std::vector<TokenCrop> crops_;
    std::vector<Linear> fuse_;
    std::vector<std::vector<SwinBlock>> dec_;
    std::unique_ptr<PatchExpand> final_;
    std::vector<Tensor> skips_;
};

}  // namespace postrain::nn
