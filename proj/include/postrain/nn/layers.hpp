#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "postrain/rng.hpp"
#include "postrain/tensor.hpp"

namespace postrain::nn {

// ---------------------------------------------------------------------------
// init
// ---------------------------------------------------------------------------

enum class Init { torch_linear, trunc_normal, zeros };

inline void init_param(Tensor& t, Init kind, long fan_in, Rng& rng) {
    switch (kind) {
        case Init::torch_linear: {
            double bound = fan_in > 0 ? 1.0 / std::sqrt(double(fan_in)) : 0.0;
            for (double& v : t.v()) v = rng.uniform(-bound, bound);
            break;
        }
        case Init::trunc_normal:
            for (double& v : t.v()) v = rng.trunc_normal(0.02, -2.0, 2.0);
            break;
        case Init::zeros:
            t.zero();
            break;
    }
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

inline double gelu_grad(double x) {
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))) + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
}

struct Gelu {
    Tensor x_;
    Tensor forward(const Tensor& x) {
        x_ = x;
        Tensor y = x;
        for (double& v : y.v()) v = gelu(v);
        return y;
    }
    Tensor backward(const Tensor& dy) {
        Tensor dx = dy;
        for (size_t i = 0; i < dx.v().size(); ++i) dx.v()[i] *= gelu_grad(x_.v()[i]);
        return dx;
    }
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline void softmax_rows_inplace(Tensor& x, long rows, long cols) {
    auto m = x.mat(rows, cols);
    for (long r = 0; r < rows; ++r) {
        double mx = m.row(r).maxCoeff();
        m.row(r) = (m.row(r).array() - mx).exp();
        m.row(r) /= m.row(r).sum();
    }
}

// dz = s .* (ds - rowsum(ds .* s)), with s the cached softmax output.
inline Tensor softmax_rows_backward(const Tensor& s, const Tensor& ds, long rows, long cols) {
    Tensor dz = ds;
    auto S = s.mat(rows, cols);
    auto D = dz.mat(rows, cols);
    for (long r = 0; r < rows; ++r) {
        double dot = (D.row(r).array() * S.row(r).array()).sum();
        D.row(r) = S.row(r).array() * (D.row(r).array() - dot);
    }
    return dz;
}

// ---------------------------------------------------------------------------
// Linear: x (N, in) -> y (N, out)
// ---------------------------------------------------------------------------

struct Linear {
    Param w;  // (out, in)
    Param b;  // (out)
    bool use_bias = true;
    Tensor x_;

    Linear(const std::string& name, long in, long out, Rng& rng,
           Init init = Init::torch_linear, bool bias = true)
        : w(name + ".w", {out, in}), b(name + ".b", {out}), use_bias(bias) {
        init_param(w.value, init, in, rng);
        if (bias) init_param(b.value, init == Init::torch_linear ? Init::torch_linear : Init::zeros, in, rng);
    }

    long in_dim() const { return w.value.shape()[1]; }
    long out_dim() const { return w.value.shape()[0]; }

    Tensor forward(const Tensor& x) {
        x_ = x;
        long n = x.numel() / in_dim();
        Tensor y({n, out_dim()});
        y.mat(n, out_dim()).noalias() = x.mat(n, in_dim()) * w.value.mat(out_dim(), in_dim()).transpose();
        if (use_bias) y.mat(n, out_dim()).rowwise() += b.value.vec().transpose();
        return y;
    }

    Tensor backward(const Tensor& dy) {
        long n = dy.numel() / out_dim();
        auto DY = dy.mat(n, out_dim());
        w.grad.mat(out_dim(), in_dim()).noalias() += DY.transpose() * x_.mat(n, in_dim());
        if (use_bias) b.grad.vec() += DY.colwise().sum().transpose();
        Tensor dx({n, in_dim()});
        dx.mat(n, in_dim()).noalias() = DY * w.value.mat(out_dim(), in_dim());
        return dx;
    }

    void params(ParamRefs& out) {
        out.push_back(&w);
        if (use_bias) out.push_back(&b);
    }
};

// ---------------------------------------------------------------------------
// LayerNorm over the last axis: x (N, D)
// ---------------------------------------------------------------------------

struct LayerNorm {
    Param g, b;
    long dim;
    double eps = 1e-5;
    Tensor xhat_;
    std::vector<double> inv_std_;

    LayerNorm(const std::string& name, long d)
        : g(name + ".g", {d}), b(name + ".b", {d}), dim(d) {
        g.value.fill(1.0);
    }

    Tensor forward(const Tensor& x) {
        long n = x.numel() / dim;
        xhat_ = Tensor({n, dim});
        inv_std_.resize(n);
        Tensor y({n, dim});
        auto X = x.mat(n, dim);
        auto XH = xhat_.mat(n, dim);
        auto Y = y.mat(n, dim);
        for (long r = 0; r < n; ++r) {
            double mean = X.row(r).mean();
            double var = (X.row(r).array() - mean).square().mean();
            double inv = 1.0 / std::sqrt(var + eps);
            inv_std_[r] = inv;
            XH.row(r) = (X.row(r).array() - mean) * inv;
            Y.row(r) = XH.row(r).array() * g.value.vec().transpose().array() +
                       b.value.vec().transpose().array();
        }
        return y;
    }

    Tensor backward(const Tensor& dy) {
        long n = dy.numel() / dim;
        auto DY = dy.mat(n, dim);
        auto XH = xhat_.mat(n, dim);
        Tensor dx({n, dim});
        auto DX = dx.mat(n, dim);
        for (long r = 0; r < n; ++r) {
            g.grad.vec() += (DY.row(r).array() * XH.row(r).array()).matrix().transpose();
            b.grad.vec() += DY.row(r).transpose();
            Eigen::RowVectorXd dyh = DY.row(r).array() * g.value.vec().transpose().array();
            double m1 = dyh.mean();
            double m2 = (dyh.array() * XH.row(r).array()).mean();
            DX.row(r) = (dyh.array() - m1 - XH.row(r).array() * m2) * inv_std_[r];
        }
        return dx;
    }

    void params(ParamRefs& out) {
        out.push_back(&g);
        out.push_back(&b);
    }
};

// ---------------------------------------------------------------------------
// Conv2d, stride 1, zero padding: x (C, H, W) -> y (O, H, W)
// ---------------------------------------------------------------------------

namespace convdetail {

// col matrix layout: rows = C*kh*kw, cols = H*W (one column per output pixel).
inline Tensor im2col(const Tensor& x, long c, long h, long w, long kh, long kw, long ph, long pw) {
    Tensor col({c * kh * kw, h * w});
    auto C = col.mat(c * kh * kw, h * w);
    const double* xv = x.v().data();
    for (long ci = 0; ci < c; ++ci)
        for (long ky = 0; ky < kh; ++ky)
            for (long kx = 0; kx < kw; ++kx) {
                long row = (ci * kh + ky) * kw + kx;
                for (long y = 0; y < h; ++y) {
                    long sy = y + ky - ph;
                    for (long xx = 0; xx < w; ++xx) {
                        long sx = xx + kx - pw;
                        double v = 0.0;
                        if (sy >= 0 && sy < h && sx >= 0 && sx < w)
                            v = xv[(ci * h + sy) * w + sx];
                        C(row, y * w + xx) = v;
                    }
                }
            }
    return col;
}

inline void col2im_add(const Tensor& col, Tensor& dx, long c, long h, long w, long kh, long kw,
                       long ph, long pw) {
    auto C = col.mat(c * kh * kw, h * w);
    double* xv = dx.v().data();
    for (long ci = 0; ci < c; ++ci)
        for (long ky = 0; ky < kh; ++ky)
            for (long kx = 0; kx < kw; ++kx) {
                long row = (ci * kh + ky) * kw + kx;
                for (long y = 0; y < h; ++y) {
                    long sy = y + ky - ph;
                    if (sy < 0 || sy >= h) continue;
                    for (long xx = 0; xx < w; ++xx) {
                        long sx = xx + kx - pw;
                        if (sx < 0 || sx >= w) continue;
                        xv[(ci * h + sy) * w + sx] += C(row, y * w + xx);
                    }
                }
            }
}

}  // namespace convdetail

struct Conv2d {
    Param w;  // (O, C*kh*kw)
    Param b;  // (O)
    long in_ch, out_ch, kh, kw;
    long h_ = 0, w_ = 0;
    Tensor x_;

    Conv2d(const std::string& name, long in_c, long out_c, long k, Rng& rng)
        : w(name + ".w", {out_c, in_c * k * k}),
          b(name + ".b", {out_c}),
          in_ch(in_c),
          out_ch(out_c),
          kh(k),
          kw(k) {
        init_param(w.value, Init::torch_linear, in_c * k * k, rng);
        init_param(b.value, Init::torch_linear, in_c * k * k, rng);
    }

    // stateless pass, for weight sharing across time steps
    Tensor apply(const Tensor& x, long h, long w_img) const {
        Tensor col = convdetail::im2col(x, in_ch, h, w_img, kh, kw, kh / 2, kw / 2);
        Tensor y({out_ch, h * w_img});
        y.mat(out_ch, h * w_img).noalias() =
            w.value.mat(out_ch, in_ch * kh * kw) * col.mat(in_ch * kh * kw, h * w_img);
        y.mat(out_ch, h * w_img).colwise() += b.value.vec();
        return y;
    }

    Tensor grad(const Tensor& x, const Tensor& dy, long h, long w_img) {
        long hw = h * w_img;
        auto DY = dy.mat(out_ch, hw);
        Tensor col = convdetail::im2col(x, in_ch, h, w_img, kh, kw, kh / 2, kw / 2);
        w.grad.mat(out_ch, in_ch * kh * kw).noalias() += DY * col.mat(in_ch * kh * kw, hw).transpose();
        b.grad.vec() += DY.rowwise().sum();
        Tensor dcol({in_ch * kh * kw, hw});
        dcol.mat(in_ch * kh * kw, hw).noalias() = w.value.mat(out_ch, in_ch * kh * kw).transpose() * DY;
        Tensor dx({in_ch, h, w_img});
        dx.zero();
        convdetail::col2im_add(dcol, dx, in_ch, h, w_img, kh, kw, kh / 2, kw / 2);
        return dx;
    }

    Tensor forward(const Tensor& x, long h, long w_img) {
        x_ = x;
        h_ = h;
        w_ = w_img;
        return apply(x, h, w_img);
    }

    Tensor backward(const Tensor& dy) { return grad(x_, dy, h_, w_); }

    void params(ParamRefs& out) {
        out.push_back(&w);
        out.push_back(&b);
    }
};

// ---------------------------------------------------------------------------
// MaxPool2d 2x2 stride 2 and nearest-neighbour 2x upsample
// ---------------------------------------------------------------------------

struct MaxPool2x2 {
    std::vector<long> argmax_;
    long c_ = 0, h_ = 0, w_ = 0;

    Tensor forward(const Tensor& x, long c, long h, long w) {
        c_ = c;
        h_ = h;
        w_ = w;
        long oh = h / 2, ow = w / 2;
        Tensor y({c, oh, ow});
        argmax_.assign(static_cast<size_t>(c) * oh * ow, 0);
        const double* xv = x.v().data();
        double* yv = y.v().data();
        for (long ci = 0; ci < c; ++ci)
            for (long y0 = 0; y0 < oh; ++y0)
                for (long x0 = 0; x0 < ow; ++x0) {
                    long best = (ci * h + 2 * y0) * w + 2 * x0;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            long idx = (ci * h + 2 * y0 + dy) * w + 2 * x0 + dx;
                            if (xv[idx] > xv[best]) best = idx;
                        }
                    long o = (ci * oh + y0) * ow + x0;
                    yv[o] = xv[best];
                    argmax_[o] = best;
                }
        return y;
    }

    Tensor backward(const Tensor& dy) {
        Tensor dx({c_, h_, w_});
        dx.zero();
        for (size_t i = 0; i < argmax_.size(); ++i) dx.v()[argmax_[i]] += dy.v()[i];
        return dx;
    }
};

struct Upsample2x {
    long c_ = 0, h_ = 0, w_ = 0;

    Tensor forward(const Tensor& x, long c, long h, long w) {
        c_ = c;
        h_ = h;
        w_ = w;
        Tensor y({c, 2 * h, 2 * w});
        const double* xv = x.v().data();
        double* yv = y.v().data();
        for (long ci = 0; ci < c; ++ci)
            for (long yy = 0; yy < 2 * h; ++yy)
                for (long xx = 0; xx < 2 * w; ++xx)
                    yv[(ci * 2 * h + yy) * 2 * w + xx] = xv[(ci * h + yy / 2) * w + xx / 2];
        return y;
    }

    Tensor backward(const Tensor& dy) {
        Tensor dx({c_, h_, w_});
        dx.zero();
        const double* dv = dy.v().data();
        for (long ci = 0; ci < c_; ++ci)
            for (long yy = 0; yy < 2 * h_; ++yy)
                for (long xx = 0; xx < 2 * w_; ++xx)
                    dx.v()[(ci * h_ + yy / 2) * w_ + xx / 2] += dv[(ci * 2 * h_ + yy) * 2 * w_ + xx];
        return dx;
    }
};

}  // namespace postrain::nn
