#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "postrain/nn/gradcheck.hpp"
#include "postrain/nn/multitask.hpp"
#include "postrain/rng.hpp"

using namespace postrain;
using namespace postrain::nn;

namespace {

struct Case {
    Tensor logits, reg;
    GridU8 cls;
    GridF mm;
    long hw;
};

Case random_case(Rng& rng, int h, int w) {
    Case c;
    c.hw = long(h) * w;
    c.logits = Tensor({3, c.hw});
    c.reg = Tensor({1, c.hw});
    c.cls = GridU8(h, w);
    c.mm = GridF(h, w);
    for (long i = 0; i < c.logits.numel(); ++i) c.logits.v()[i] = rng.uniform(-3.0, 3.0);
    for (long i = 0; i < c.hw; ++i) c.reg.v()[i] = rng.uniform(0.0, 20.0);
    for (long i = 0; i < c.hw; ++i) c.cls.v[i] = uint8_t(rng.uniform_int(0, 2));
    for (long i = 0; i < c.hw; ++i) c.mm.v[i] = float(rng.uniform(0.0, 20.0));
    return c;
}

const std::array<double, 3> kW{1.0, 5.0, 30.0};

}  // namespace

TEST_CASE("uniform logits give weighted ln(3) per pixel") {
    Tensor logits({3, 1});
    logits.v() = {0.7, 0.7, 0.7};
    GridU8 cls(1, 1);
    GridF mm(1, 1);
    for (int y = 0; y < 3; ++y) {
        cls.v[0] = uint8_t(y);
        LossResult r = hybrid_loss(logits, Tensor{}, cls, mm, kW, 100.0);
        CHECK(std::abs(r.cls - kW[y] * std::log(3.0)) < 1e-12);
        CHECK(r.hybrid == r.cls);
        CHECK(r.reg == 0.0);
        CHECK(r.dreg.numel() == 0);
    }
}

TEST_CASE("loss matches the naive scalar oracle") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        Case c = random_case(rng, 4, 5);
        LossResult r = hybrid_loss(c.logits, c.reg, c.cls, c.mm, kW, 100.0);

        std::vector<int> cls(c.cls.v.begin(), c.cls.v.end());
        std::vector<double> mm(c.mm.v.begin(), c.mm.v.end());
        oracle::LossValue o = oracle::hybrid_loss(c.logits.v(), c.reg.v(), cls, mm,
                                                  {kW[0], kW[1], kW[2]}, 100.0, false);
        CHECK(std::abs(r.cls - o.cls) < 1e-10);
        CHECK(std::abs(r.reg - o.reg) < 1e-10);
        CHECK(std::abs(r.hybrid - o.hybrid) < 1e-8);
    }
}

TEST_CASE("alpha couples the regression term exactly") {
    Rng rng(11);
    Case c = random_case(rng, 3, 3);
    LossResult with = hybrid_loss(c.logits, c.reg, c.cls, c.mm, kW, 100.0);
    LossResult without = hybrid_loss(c.logits, Tensor{}, c.cls, c.mm, kW, 100.0);
    double sse = 0;
    for (long i = 0; i < c.hw; ++i) {
        double d = c.reg.v()[i] - double(c.mm.v[i]);
        sse += d * d;
    }
    CHECK(with.cls == without.cls);
    CHECK(std::abs(with.hybrid - (without.cls + 100.0 * sse)) < 1e-9 * std::abs(with.hybrid));
    // d hybrid / d reg_p = 2 * alpha * (reg_p - mm_p), exactly
    for (long i = 0; i < c.hw; ++i) {
        double want = 2.0 * 100.0 * (c.reg.v()[i] - double(c.mm.v[i]));
        CHECK(with.dreg.v()[i] == want);
    }
}

TEST_CASE("scaling a class weight scales its contribution linearly") {
    Tensor logits({3, 2});
    logits.v() = {0.3, -1.0, 0.1, 0.4, -0.2, 2.0};
    GridU8 cls(1, 2);
    cls.v = {1, 1};
    GridF mm(1, 2);
    std::array<double, 3> w1{1.0, 2.0, 1.0}, w2{1.0, 6.0, 1.0};
    double l1 = hybrid_loss(logits, Tensor{}, cls, mm, w1, 0.0).cls;
    double l2 = hybrid_loss(logits, Tensor{}, cls, mm, w2, 0.0).cls;
    CHECK(l2 == Catch::Approx(3.0 * l1).epsilon(1e-13));
}

TEST_CASE("mean reduction divides by pixel count") {
    Rng rng(13);
    Case c = random_case(rng, 4, 4);
    LossResult s = hybrid_loss(c.logits, c.reg, c.cls, c.mm, kW, 100.0, Reduction::sum);
    LossResult m = hybrid_loss(c.logits, c.reg, c.cls, c.mm, kW, 100.0, Reduction::mean);
    CHECK(m.cls == Catch::Approx(s.cls / 16.0).epsilon(1e-13));
    CHECK(m.reg == Catch::Approx(s.reg / 16.0).epsilon(1e-13));
    CHECK(m.hybrid == Catch::Approx(s.hybrid / 16.0).epsilon(1e-13));
    CHECK(m.dlogits.v()[3] == Catch::Approx(s.dlogits.v()[3] / 16.0).epsilon(1e-13));
}

TEST_CASE("logit gradients match central differences") {
    Rng rng(17);
    Case c = random_case(rng, 3, 4);
    LossResult r = hybrid_loss(c.logits, c.reg, c.cls, c.mm, kW, 100.0);
    // dlogits does not depend on alpha; differencing the alpha=0 loss avoids
    // cancellation against the much larger regression term.
    auto cls_loss = [&] { return hybrid_loss(c.logits, c.reg, c.cls, c.mm, kW, 0.0).hybrid; };
    auto full_loss = [&] { return hybrid_loss(c.logits, c.reg, c.cls, c.mm, kW, 100.0).hybrid; };
    CHECK(check_all_entries(cls_loss, c.logits, r.dlogits) < 1e-5);
    CHECK(check_all_entries(full_loss, c.reg, r.dreg) < 1e-5);
}

TEST_CASE("extreme logits stay finite via the log-sum-exp trick") {
    Tensor logits({3, 1});
    logits.v() = {1000.0, -1000.0, 999.0};
    GridU8 cls(1, 1);
    cls.v = {0};
    GridF mm(1, 1);
    LossResult r = hybrid_loss(logits, Tensor{}, cls, mm, kW, 100.0);
    CHECK(std::isfinite(r.cls));
    CHECK(r.cls < 1.0);  // the true class dominates

    logits.v() = {std::numeric_limits<double>::infinity(), 0.0, 0.0};
    CHECK_THROWS_AS(hybrid_loss(logits, Tensor{}, cls, mm, kW, 100.0), NumericError);
}

TEST_CASE("shape and range validation") {
    Tensor logits({3, 4});
    GridU8 cls(1, 4);
    GridF mm(1, 4);
    Tensor reg({1, 3});
    CHECK_THROWS_AS(hybrid_loss(logits, reg, cls, mm, kW, 100.0), ValidationError);
    cls.v[2] = 7;
    CHECK_THROWS_AS(hybrid_loss(logits, Tensor{}, cls, mm, kW, 100.0), ValidationError);
}

TEST_CASE("config wrapper honors its toggles") {
    Rng rng(19);
    Case c = random_case(rng, 2, 3);
    HybridLossConfig cfg;

    LossResult base = hybrid_loss(c.logits, c.reg, c.cls, c.mm, cfg);
    LossResult manual = hybrid_loss(c.logits, c.reg, c.cls, c.mm, kW, 100.0);
    CHECK(base.hybrid == manual.hybrid);

    cfg.enable_weighting = false;
    LossResult unweighted = hybrid_loss(c.logits, c.reg, c.cls, c.mm, cfg);
    LossResult manual_u =
        hybrid_loss(c.logits, c.reg, c.cls, c.mm, {1.0, 1.0, 1.0}, 100.0);
    CHECK(unweighted.cls == manual_u.cls);

    cfg.enable_weighting = true;
    cfg.enable_regression = false;
    LossResult clsonly = hybrid_loss(c.logits, c.reg, c.cls, c.mm, cfg);
    CHECK(clsonly.reg == 0.0);
    CHECK(clsonly.dreg.numel() == 0);
    CHECK(clsonly.hybrid == clsonly.cls);

    cfg.enable_regression = true;
    cfg.log1p_target = true;
    LossResult logl = hybrid_loss(c.logits, c.reg, c.cls, c.mm, cfg);
    GridF lm = c.mm;
    for (float& v : lm.v) v = std::log1p(v);
    LossResult manual_l = hybrid_loss(c.logits, c.reg, c.cls, lm, kW, 100.0);
    CHECK(logl.reg == manual_l.reg);
}

TEST_CASE("prediction ties resolve to the higher class") {
    Tensor logits({3, 3});
    // pixel 0: all tied -> heavy_rain; pixel 1: classes 0/1 tied -> rain;
    // pixel 2: clear winner 0
    logits.v() = {0.5, 0.9, 3.0,   // class 0 row
                  0.5, 0.9, -1.0,  // class 1 row
                  0.5, 0.2, 0.0};  // class 2 row
    RainClassGrid g = predict_classes(logits, 1, 3);
    CHECK(int(g.grid.v[0]) == 2);
    CHECK(int(g.grid.v[1]) == 1);
    CHECK(int(g.grid.v[2]) == 0);
}

TEST_CASE("1x1 head computes an affine map and exact gradients") {
    Rng rng(23);
    Head1x1 head("h", 5, 3, rng);
    Tensor x({5, 6});
    for (long i = 0; i < x.numel(); ++i) x.v()[i] = rng.uniform(-1.0, 1.0);
    Tensor y = head.forward(x, 6);
    // scalar recomputation
    for (long o = 0; o < 3; ++o)
        for (long p = 0; p < 6; ++p) {
            double s = head.b.value.v()[o];
            for (long i = 0; i < 5; ++i) s += head.w.value.v()[o * 5 + i] * x.v()[i * 6 + p];
            CHECK(y.v()[o * 6 + p] == Catch::Approx(s).epsilon(1e-13));
        }

    std::vector<double> mix(18);
    for (double& m : mix) m = rng.uniform(-1.0, 1.0);
    head.w.grad.zero();
    head.b.grad.zero();
    Tensor dy({3, 6});
    for (long i = 0; i < 18; ++i) dy.v()[i] = mix[i];
    Tensor dx = head.backward(dy, 6);
    auto loss = [&] {
        Tensor out = head.forward(x, 6);
        double s = 0;
        for (long i = 0; i < out.numel(); ++i) s += mix[i] * out.v()[i];
        return s;
    };
    CHECK(check_all_entries(loss, x, dx) < 1e-6);
    CHECK(check_all_entries(loss, head.w.value, head.w.grad) < 1e-6);
    CHECK(check_all_entries(loss, head.b.value, head.b.grad) < 1e-6);
}
