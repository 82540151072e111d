#pragma once

#include <string>
#include <vector>

#include "postrain/nn/layers.hpp"
#include "postrain/rng.hpp"
#include "postrain/tensor.hpp"

namespace postrain::nn {

enum class CamMerge { residual_add, gated_multiply };

inline const char* cam_merge_name(CamMerge m) {
    return m == CamMerge::residual_add ? "residual_add" : "gated_multiply";
}

// Channel attention over a (C, H*W) feature map. Global average and max
// pooled descriptors feed one shared two-layer MLP; the summed outputs pass
// through a sigmoid to form per-channel gates in (0, 1). With zero biases a
// zero input yields gates of exactly 0.5.
struct ChannelAttention {
    struct Cache {
        Tensor f;
        long hw = 0;
        Eigen::VectorXd avg, mx, gates;
        Eigen::VectorXd pre_avg, pre_max;  // hidden pre-activations
        std::vector<long> argmax;
    };

    long channels, hidden;
    CamMerge merge;
    Param w0;  // (hidden, C)
    Param b0;  // (hidden)
    Param w1;  // (C, hidden)
    Param b1;  // (C)
    Cache cache_;

    ChannelAttention(const std::string& name, long c, long reduction, CamMerge m, Rng& rng)
        : channels(c),
          hidden(std::max<long>(1, c / reduction)),
          merge(m),
          w0(name + ".w0", {std::max<long>(1, c / reduction), c}),
          b0(name + ".b0", {std::max<long>(1, c / reduction)}),
          w1(name + ".w1", {c, std::max<long>(1, c / reduction)}),
          b1(name + ".b1", {c}) {
        init_param(w0.value, Init::torch_linear, c, rng);
        init_param(w1.value, Init::torch_linear, hidden, rng);
        // zero biases keep the untrained gate at sigmoid(0)
    }

    Eigen::VectorXd mlp(const Eigen::VectorXd& x, Eigen::VectorXd& pre_out) const {
        pre_out = w0.value.mat(hidden, channels) * x + b0.value.vec();
        Eigen::VectorXd a(hidden);
        for (long i = 0; i < hidden; ++i) a(i) = gelu(pre_out(i));
        return w1.value.mat(channels, hidden) * a + b1.value.vec();
    }

    Tensor forward(const Tensor& f, long hw, Cache& cc) const {
        cc.f = f;
        cc.hw = hw;
        auto F = f.mat(channels, hw);
        cc.avg = F.rowwise().mean();
        cc.mx.resize(channels);
        cc.argmax.assign(channels, 0);
        for (long c = 0; c < channels; ++c) {
            long idx = 0;
            cc.mx(c) = F.row(c).maxCoeff(&idx);
            cc.argmax[c] = idx;
        }
        Eigen::VectorXd s = mlp(cc.avg, cc.pre_avg) + mlp(cc.mx, cc.pre_max);
        cc.gates.resize(channels);
        for (long c = 0; c < channels; ++c) cc.gates(c) = sigmoid(s(c));

        Tensor y = f;
        auto Y = y.mat(channels, hw);
        if (merge == CamMerge::residual_add)
            Y.colwise() += cc.gates;
        else
            Y.array().colwise() *= cc.gates.array();
        return y;
    }

    Tensor backward(const Tensor& dy, const Cache& cc) {
        auto DY = dy.mat(channels, cc.hw);
        Tensor dx = dy;
        auto DX = dx.mat(channels, cc.hw);
        Eigen::VectorXd dgate(channels);
        if (merge == CamMerge::residual_add) {
            dgate = DY.rowwise().sum();
        } else {
            dgate = (DY.array() * cc.f.mat(channels, cc.hw).array()).rowwise().sum();
            DX.array().colwise() *= cc.gates.array();
        }
        Eigen::VectorXd ds = dgate.array() * cc.gates.array() * (1.0 - cc.gates.array());

        // shared MLP, two pooled branches
        Eigen::VectorXd davg, dmax;
        mlp_backward(ds, cc.avg, cc.pre_avg, davg);
        mlp_backward(ds, cc.mx, cc.pre_max, dmax);

        DX.colwise() += davg / double(cc.hw);
        for (long c = 0; c < channels; ++c) DX(c, cc.argmax[c]) += dmax(c);
        return dx;
    }

    Tensor forward(const Tensor& f, long hw) { return forward(f, hw, cache_); }
    Tensor backward(const Tensor& dy) { return backward(dy, cache_); }
    const Eigen::VectorXd& last_gates() const { return cache_.gates; }

    void mlp_backward(const Eigen::VectorXd& ds, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& pre, Eigen::VectorXd& dx_out) {
        Eigen::VectorXd a(hidden), dact(hidden);
        for (long i = 0; i < hidden; ++i) {
            a(i) = gelu(pre(i));
            dact(i) = gelu_grad(pre(i));
        }
        w1.grad.mat(channels, hidden).noalias() += ds * a.transpose();
        b1.grad.vec() += ds;
        Eigen::VectorXd da = w1.value.mat(channels, hidden).transpose() * ds;
        Eigen::VectorXd dpre = da.array() * dact.array();
        w0.grad.mat(hidden, channels).noalias() += dpre * x.transpose();
        b0.grad.vec() += dpre;
        dx_out = w0.value.mat(hidden, channels).transpose() * dpre;
    }

    void params(ParamRefs& out) {
        out.push_back(&w0);
        out.push_back(&b0);
        out.push_back(&w1);
        out.push_back(&b1);
    }
};

}  // namespace postrain::nn
