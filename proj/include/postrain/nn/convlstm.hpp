#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "postrain/common.hpp"
#include "postrain/nn/layers.hpp"
#include "postrain/rng.hpp"
#include "postrain/tensor.hpp"

namespace postrain::nn {

// Single-layer ConvLSTM. Consumes a (T, C, H, W) sequence frame by frame and
// emits the last hidden state as a (hidden, H, W) feature map. The gate conv
// sees [x_t, h_{t-1}] stacked on channels; gate order is (i, f, g, o).
class ConvLstm {
public:
    ConvLstm(const std::string& name, long in_ch, long hidden, long h, long w, Rng& rng)
        : in_ch_(in_ch),
          hidden_(hidden),
          h_(h),
          w_(w),
          gates_(name + ".gates", in_ch + hidden, 4 * hidden, 3, rng) {}

    long out_channels() const { return hidden_; }

    Tensor forward(const Tensor& x, long t_steps) {
        const long hw = h_ * w_;
        t_ = t_steps;
        cat_.assign(t_, Tensor());
        gi_.assign(t_, Tensor());
        gf_.assign(t_, Tensor());
        gg_.assign(t_, Tensor());
        go_.assign(t_, Tensor());
        cprev_.assign(t_, Tensor());
        ctanh_.assign(t_, Tensor());
        Tensor h({hidden_, hw}), c({hidden_, hw});
        for (long t = 0; t < t_; ++t) {
            Tensor cat({in_ch_ + hidden_, hw});
            std::copy(x.v().begin() + t * in_ch_ * hw, x.v().begin() + (t + 1) * in_ch_ * hw,
                      cat.v().begin());
            std::copy(h.v().begin(), h.v().end(), cat.v().begin() + in_ch_ * hw);
            Tensor pre = gates_.apply(cat, h_, w_);
            cat_[t] = std::move(cat);
            cprev_[t] = c;
            Tensor i({hidden_, hw}), f({hidden_, hw}), g({hidden_, hw}), o({hidden_, hw});
            const double* pv = pre.v().data();
            for (long k = 0; k < hidden_ * hw; ++k) {
                i.v()[k] = sigmoid(pv[k]);
                f.v()[k] = sigmoid(pv[hidden_ * hw + k]);
                g.v()[k] = std::tanh(pv[2 * hidden_ * hw + k]);
                o.v()[k] = sigmoid(pv[3 * hidden_ * hw + k]);
            }
            Tensor tc({hidden_, hw});
            for (long k = 0; k < hidden_ * hw; ++k) {
                c.v()[k] = f.v()[k] * c.v()[k] + i.v()[k] * g.v()[k];
                tc.v()[k] = std::tanh(c.v()[k]);
                h.v()[k] = o.v()[k] * tc.v()[k];
            }
            gi_[t] = std::move(i);
            gf_[t] = std::move(f);
            gg_[t] = std::move(g);
            go_[t] = std::move(o);
            ctanh_[t] = std::move(tc);
        }
        Tensor out({hidden_, h_, w_});
        out.v() = h.v();
        return out;
    }

    Tensor backward(const Tensor& dy) {
        const long hw = h_ * w_;
        Tensor dx({t_ * in_ch_, h_, w_});
        Tensor dh({hidden_, hw}), dc({hidden_, hw});
        dh.v() = dy.v();
        for (long t = t_ - 1; t >= 0; --t) {
            Tensor dpre({4 * hidden_, hw});
            double* dp = dpre.v().data();
            for (long k = 0; k < hidden_ * hw; ++k) {
                double o = go_[t].v()[k], tc = ctanh_[t].v()[k];
                double dov = dh.v()[k] * tc;
                double dcv = dc.v()[k] + dh.v()[k] * o * (1.0 - tc * tc);
                double iv = gi_[t].v()[k], fv = gf_[t].v()[k], gv = gg_[t].v()[k];
                double div = dcv * gv;
                double dfv = dcv * cprev_[t].v()[k];
                double dgv = dcv * iv;
                dc.v()[k] = dcv * fv;
                dp[k] = div * iv * (1.0 - iv);
                dp[hidden_ * hw + k] = dfv * fv * (1.0 - fv);
                dp[2 * hidden_ * hw + k] = dgv * (1.0 - gv * gv);
                dp[3 * hidden_ * hw + k] = dov * o * (1.0 - o);
            }
            Tensor dcat = gates_.grad(cat_[t], dpre, h_, w_);
            std::copy(dcat.v().begin(), dcat.v().begin() + in_ch_ * hw,
                      dx.v().begin() + t * in_ch_ * hw);
            std::copy(dcat.v().begin() + in_ch_ * hw, dcat.v().end(), dh.v().begin());
        }
        return dx;
    }

    void params(ParamRefs& out) { gates_.params(out); }

private:
    long in_ch_, hidden_, h_, w_;
    long t_ = 0;
    Conv2d gates_;
    std::vector<Tensor> cat_, gi_, gf_, gg_, go_, cprev_, ctanh_;
};

}  // namespace postrain::nn
