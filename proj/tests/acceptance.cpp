// Acceptance gate: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Runs standalone (no test framework) so the output reads as
// a checklist. Property checks use the scalar oracles; the training-based
// criteria drive the real pipeline end to end on synthetic data.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "postrain/nn/gradcheck.hpp"
#include "postrain/postrain.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace postrain;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "postrain_acceptance";

bool close(double a, double b, double tol) {
    if (std::isnan(a) && std::isnan(b)) return true;
    return std::abs(a - b) <= tol;
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return buf;
}

// --- shared synthetic fixtures ----------------------------------------------

SyntheticSpec spec_from(long h, long w, int n_train, int n_val, int n_test,
                        std::array<double, 3> props, double corr, double smooth, uint64_t seed) {
    ordered_json j;
    j["name"] = "acceptance";
    j["grid_shape"] = {1, 2, h, w};
    j["n_samples"] = {{"train", n_train}, {"val", n_val}, {"test", n_test}};
    j["class_proportions"] = {props[0], props[1], props[2]};
    j["correlation_strength"] = corr;
    j["field_smoothness"] = smooth;
    j["seed"] = seed;
    return synthetic_spec_from_json(j);
}

RainClassGrid random_class_grid(Rng& rng, int h, int w) {
    RainClassGrid g;
    g.grid = GridU8(h, w);
    for (auto& v : g.grid.v) v = uint8_t(rng.uniform_int(0, 2));
    return g;
}

// =============================================================================
// 1. Metric oracle equivalence
// =============================================================================

bool crit_metric_oracle(std::string& note) {
    Rng rng(77);
    Evaluator ev;
    std::array<oracle::Counts, 3> pooled{};
    for (int i = 0; i < 100; ++i) {
        RainClassGrid pred = random_class_grid(rng, 16, 16);
        RainClassGrid obs = random_class_grid(rng, 16, 16);
        std::vector<int> pv(pred.grid.v.begin(), pred.grid.v.end());
        std::vector<int> ov(obs.grid.v.begin(), obs.grid.v.end());

        auto tables = count_contingency(pred, obs);
        for (int k = 0; k < kNumClasses; ++k) {
            oracle::Counts oc = oracle::contingency(pv, ov, k);
            if (tables[k].tp != oc.tp || tables[k].fp != oc.fp || tables[k].tn != oc.tn ||
                tables[k].fn != oc.fn) {
                note = "contingency counts diverge from the oracle";
                return false;
            }
            ClassMetrics m = compute_metrics(tables[k]);
            if (!close(m.csi, oracle::csi(oc), 1e-12) || !close(m.pod, oracle::pod(oc), 1e-12) ||
                !close(m.far, oracle::far(oc), 1e-12) ||
                !close(m.bias, oracle::bias(oc), 1e-12) ||
                !close(m.accuracy, oracle::accuracy(oc), 1e-12) ||
                !close(m.hss, oracle::hss_standard(oc), 1e-12) ||
                !close(m.hss_paper, oracle::hss_paper(oc), 1e-12)) {
                note = "a metric deviates from the scalar formula by more than 1e-12";
                return false;
            }
            pooled[k].tp += oc.tp;
            pooled[k].fp += oc.fp;
            pooled[k].tn += oc.tn;
            pooled[k].fn += oc.fn;
        }
        ev.add(pred, obs);
    }
    MetricsReport rep = ev.report(Aggregation::micro);
    for (int k = 0; k < kNumClasses; ++k) {
        if (ev.pooled()[k].tp != pooled[k].tp || ev.pooled()[k].fn != pooled[k].fn ||
            ev.pooled()[k].fp != pooled[k].fp || ev.pooled()[k].tn != pooled[k].tn) {
            note = "micro-pooled counts diverge from the oracle";
            return false;
        }
        if (!close(rep.per_class[k].csi, oracle::csi(pooled[k]), 1e-12)) {
            note = "micro-aggregated CSI deviates from the pooled oracle";
            return false;
        }
    }
    note = "100 random pairs, counts exact, metrics within 1e-12";
    return true;
}

// =============================================================================
// 2. Closed-form metric cases
// =============================================================================

bool crit_closed_forms(std::string& note) {
    Rng rng(78);
    RainClassGrid obs = random_class_grid(rng, 16, 16);
    auto tables = count_contingency(obs, obs);
    for (int k = 0; k < kNumClasses; ++k) {
        ClassMetrics m = compute_metrics(tables[k]);
        if (m.csi != 1.0 || m.hss != 1.0 || m.pod != 1.0 || m.far != 0.0 || m.bias != 1.0) {
            note = "perfect forecast does not yield CSI=HSS=POD=1, FAR=0, Bias=1";
            return false;
        }
    }
    Contingency c{3, 2, 10, 1};  // tp, fp, tn, fn
    if (metric_csi(c) != 0.5) {
        note = "tp=3, fn=1, fp=2 does not give CSI = 0.5 exactly";
        return false;
    }
    note = "perfect forecast and tp=3,fn=1,fp=2 both exact";
    return true;
}

// =============================================================================
// 3. Loss correctness
// =============================================================================

bool crit_loss(std::string& note) {
    Rng rng(79);
    const std::array<double, 3> w{1.0, 5.0, 30.0};
    for (int inst = 0; inst < 20; ++inst) {
        const long hw = 4;
        Tensor logits({3, hw}), reg({1, hw});
        GridU8 cls(2, 2);
        GridF mm(2, 2);
        for (long i = 0; i < logits.numel(); ++i) logits.v()[i] = rng.uniform(-2.0, 2.0);
        for (long p = 0; p < hw; ++p) {
            cls.v[p] = uint8_t(rng.uniform_int(0, 2));
            mm.v[p] = float(rng.uniform(0.0, 20.0));
            reg.v()[p] = double(mm.v[p]) + rng.uniform(-0.5, 0.5);
        }
        nn::LossResult lr = nn::hybrid_loss(logits, reg, cls, mm, w, 100.0);

        std::vector<double> lo(logits.v().begin(), logits.v().end());
        std::vector<double> ro(reg.v().begin(), reg.v().end());
        std::vector<int> co(cls.v.begin(), cls.v.end());
        std::vector<double> mo(mm.v.begin(), mm.v.end());
        oracle::LossValue ov = oracle::hybrid_loss(lo, ro, co, mo, {w[0], w[1], w[2]}, 100.0, false);
        double rel = std::abs(lr.hybrid - ov.hybrid) / std::max(1.0, std::abs(ov.hybrid));
        if (rel >= 1e-10) {
            note = "hybrid loss deviates from the scalar oracle (rel " + fmt("%.2e", rel) + ")";
            return false;
        }

        // alpha couples exactly: hybrid = cls + 100 * sum((reg - mm)^2)
        double sse = 0.0;
        for (long p = 0; p < hw; ++p) {
            double d = reg.v()[p] - double(mm.v[p]);
            sse += d * d;
        }
        nn::LossResult l0 = nn::hybrid_loss(logits, reg, cls, mm, w, 0.0);
        if (lr.cls != l0.cls || lr.hybrid != lr.cls + 100.0 * sse) {
            note = "alpha=100 does not add exactly 100*sum((reg-mm)^2)";
            return false;
        }
    }

    // single pixel, uniform logits: CE = w_y * ln 3
    for (int y = 0; y < 3; ++y) {
        Tensor logits({3, 1});
        for (long i = 0; i < 3; ++i) logits.v()[i] = 0.7;
        GridU8 cls(1, 1);
        cls.v[0] = uint8_t(y);
        GridF mm(1, 1);
        nn::LossResult lr = nn::hybrid_loss(logits, Tensor{}, cls, mm, w, 100.0);
        if (std::abs(lr.cls - w[y] * std::log(3.0)) > 1e-12) {
            note = "uniform-logit cross entropy is not w_y * ln 3";
            return false;
        }
    }
    note = "20 random instances within 1e-10; ln 3 and alpha coupling exact";
    return true;
}

// =============================================================================
// 4. Gradient checks
// =============================================================================

bool crit_gradients(std::string& note) {
    double worst_loss = 0.0, worst_cam = 0.0, worst_bb = 0.0;

    // (a) hybrid loss wrt logits and reg
    {
        Rng rng(80);
        const long hw = 4;
        Tensor logits({3, hw}), reg({1, hw});
        GridU8 cls(2, 2);
        GridF mm(2, 2);
        for (long i = 0; i < logits.numel(); ++i) logits.v()[i] = rng.uniform(-2.0, 2.0);
        for (long p = 0; p < hw; ++p) {
            cls.v[p] = uint8_t(rng.uniform_int(0, 2));
            mm.v[p] = float(rng.uniform(0.0, 5.0));
            reg.v()[p] = double(mm.v[p]) + rng.uniform(-0.05, 0.05);
        }
        const std::array<double, 3> w{1.0, 5.0, 30.0};
        auto loss = [&] { return nn::hybrid_loss(logits, reg, cls, mm, w, 100.0).hybrid; };
        nn::LossResult lr = nn::hybrid_loss(logits, reg, cls, mm, w, 100.0);
        worst_loss = std::max(nn::check_all_entries(loss, logits, lr.dlogits),
                              nn::check_all_entries(loss, reg, lr.dreg));
        if (worst_loss >= 1e-4) {
            note = "loss gradient rel err " + fmt("%.2e", worst_loss) + " >= 1e-4";
            return false;
        }
    }

    // (b) CAM wrt F, W0, b0, W1, b1
    {
        Rng rng(81);
        const long c = 8, hw = 12;
        nn::ChannelAttention cam("cam", c, 4, nn::CamMerge::residual_add, rng);
        for (long i = 0; i < cam.b0.value.numel(); ++i) cam.b0.value.v()[i] = rng.uniform(-0.3, 0.3);
        for (long i = 0; i < cam.b1.value.numel(); ++i) cam.b1.value.v()[i] = rng.uniform(-0.3, 0.3);
        Tensor f({c, hw});
        do {
            for (long i = 0; i < f.numel(); ++i) f.v()[i] = rng.uniform(-2.0, 2.0);
        } while (nn::channel_max_gap(f, c, hw) < 1e-3);

        std::vector<double> mix(c * hw);
        for (double& m : mix) m = rng.uniform(-1.0, 1.0);
        auto loss = [&] {
            nn::ChannelAttention::Cache cc;
            Tensor y = cam.forward(f, hw, cc);
            double s = 0;
            for (long i = 0; i < y.numel(); ++i) s += mix[i] * y.v()[i];
            return s;
        };
        nn::ChannelAttention::Cache cc;
        cam.forward(f, hw, cc);
        Tensor dy({c, hw});
        for (long i = 0; i < dy.numel(); ++i) dy.v()[i] = mix[i];
        for (Param* p : {&cam.w0, &cam.b0, &cam.w1, &cam.b1}) p->grad.zero();
        Tensor dx = cam.backward(dy, cc);
        worst_cam = nn::check_all_entries(loss, f, dx);
        for (Param* p : {&cam.w0, &cam.b0, &cam.w1, &cam.b1})
            worst_cam = std::max(worst_cam, nn::check_all_entries(loss, p->value, p->grad));
        if (worst_cam >= 1e-4) {
            note = "CAM gradient rel err " + fmt("%.2e", worst_cam) + " >= 1e-4";
            return false;
        }
    }

    // (c) three-parameter probes through each backbone
    {
        const long t = 1, c = 2, h = 4, w = 4;
        for (int which = 0; which < 3; ++which) {
            Rng rng(82 + uint64_t(which));
            nn::ModelConfig cfg;
            long tt = t;
            if (which == 0) {
                cfg.backbone = nn::BackboneKind::swin_unet;
                cfg.swin.patch = 1;
                cfg.swin.window = 2;
                cfg.swin.depths = {1, 1};
                cfg.swin.dims = {4, 8};
                cfg.swin.heads = {2, 2};
                cfg.swin.mlp_ratio = 2;
            } else if (which == 1) {
                cfg.backbone = nn::BackboneKind::unet;
                cfg.unet_base = 4;
                cfg.unet_levels = 1;
            } else {
                cfg.backbone = nn::BackboneKind::conv_lstm;
                cfg.lstm_hidden = 3;
                tt = 2;
            }
            auto bb = nn::build_backbone(cfg, tt, c, h, w, rng);
            Tensor x({tt * c, h, w});
            for (long i = 0; i < x.numel(); ++i) x.v()[i] = rng.uniform(-1.0, 1.0);

            Tensor y0 = bb->forward(x);
            std::vector<double> mix(y0.numel());
            for (double& m : mix) m = rng.uniform(-1.0, 1.0);
            auto loss = [&] {
                Tensor y = bb->forward(x);
                double s = 0;
                for (long i = 0; i < y.numel(); ++i) s += mix[i] * y.v()[i];
                return s;
            };
            ParamRefs refs;
            bb->params(refs);
            for (Param* p : refs) p->grad.zero();
            Tensor dy({y0.numel()});
            for (long i = 0; i < y0.numel(); ++i) dy.v()[i] = mix[i];
            bb->forward(x);
            Tensor dx = bb->backward(dy);
            double worst = 0;
            for (size_t pi : {size_t(0), refs.size() / 2, refs.size() - 1}) {
                Param* p = refs[pi];
                worst = std::max(worst,
                                 nn::check_entries(loss, p->value, p->grad, nn::probe_indices(p->value)));
            }
            worst = std::max(worst, nn::check_entries(loss, x, dx, nn::probe_indices(x)));
            worst_bb = std::max(worst_bb, worst);
            if (worst >= 1e-3) {
                note = std::string("backbone ") + nn::backbone_name(cfg.backbone) +
                       " gradient rel err " + fmt("%.2e", worst) + " >= 1e-3";
                return false;
            }
        }
    }
    note = "worst rel err: loss " + fmt("%.1e", worst_loss) + ", CAM " + fmt("%.1e", worst_cam) +
           ", backbones " + fmt("%.1e", worst_bb);
    return true;
}

// =============================================================================
// 5. CAM invariants
// =============================================================================

bool crit_cam_invariants(std::string& note) {
    const long c = 8, hw = 16;
    for (int inst = 0; inst < 20; ++inst) {
        Rng rng(100 + uint64_t(inst));
        nn::ChannelAttention cam("cam", c, 4, nn::CamMerge::residual_add, rng);
        Tensor f({c, hw});
        for (long i = 0; i < f.numel(); ++i) f.v()[i] = rng.uniform(-3.0, 3.0);

        nn::ChannelAttention::Cache cc;
        cam.forward(f, hw, cc);
        Eigen::VectorXd base = cc.gates;
        for (long ch = 0; ch < c; ++ch)
            if (!(base(ch) > 0.0 && base(ch) < 1.0)) {
                note = "a gate left the open interval (0, 1)";
                return false;
            }

        // zero input, zero biases: every gate is exactly 0.5
        Tensor zero({c, hw});
        nn::ChannelAttention::Cache zc;
        cam.forward(zero, hw, zc);
        for (long ch = 0; ch < c; ++ch)
            if (zc.gates(ch) != 0.5) {
                note = "zero input does not give gates of exactly 0.5";
                return false;
            }

        // cyclic spatial shift leaves the gates unchanged
        long shift = 1 + inst % (hw - 1);
        Tensor fs({c, hw});
        for (long ch = 0; ch < c; ++ch)
            for (long p = 0; p < hw; ++p) fs.v()[ch * hw + (p + shift) % hw] = f.v()[ch * hw + p];
        nn::ChannelAttention::Cache sc;
        cam.forward(fs, hw, sc);
        for (long ch = 0; ch < c; ++ch)
            if (!close(sc.gates(ch), base(ch), 1e-12)) {
                note = "gates change under a cyclic spatial shift";
                return false;
            }

        // permuting channels (and weight rows/columns to match) permutes gates
        std::vector<long> perm(c);
        std::iota(perm.begin(), perm.end(), 0);
        for (long i = c - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, int(i))]);
        nn::ChannelAttention pcam("pcam", c, 4, nn::CamMerge::residual_add, rng);
        Tensor pf({c, hw});
        const long hidden = cam.hidden;
        for (long ch = 0; ch < c; ++ch) {
            for (long p = 0; p < hw; ++p) pf.v()[perm[ch] * hw + p] = f.v()[ch * hw + p];
            for (long i = 0; i < hidden; ++i)
                pcam.w0.value.v()[i * c + perm[ch]] = cam.w0.value.v()[i * c + ch];
            for (long i = 0; i < hidden; ++i)
                pcam.w1.value.v()[perm[ch] * hidden + i] = cam.w1.value.v()[ch * hidden + i];
        }
        pcam.b0.value = cam.b0.value;  // zero either way
        nn::ChannelAttention::Cache pc;
        pcam.forward(pf, hw, pc);
        for (long ch = 0; ch < c; ++ch)
            if (!close(pc.gates(perm[ch]), base(ch), 1e-12)) {
                note = "gates are not equivariant under channel permutation";
                return false;
            }
    }
    note = "20 instances: range, zero-input, shift and permutation all hold";
    return true;
}

// =============================================================================
// 6. Synthetic distribution fidelity
// =============================================================================

bool compare_trees(const fs::path& a, const fs::path& b) {
    std::vector<fs::path> fa, fb;
    for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) fa.push_back(fs::relative(e.path(), a));
    for (const auto& e : fs::recursive_directory_iterator(b))
        if (e.is_regular_file()) fb.push_back(fs::relative(e.path(), b));
    std::sort(fa.begin(), fa.end());
    std::sort(fb.begin(), fb.end());
    if (fa != fb) return false;
    for (const auto& rel : fa)
        if (read_file_bytes(a / rel) != read_file_bytes(b / rel)) return false;
    return true;
}

bool crit_synthetic(std::string& note) {
    SyntheticSpec spec =
        spec_from(128, 128, 48, 8, 8, {0.8724, 0.1157, 0.0119}, 0.85, 4.0, 31);
    fs::path da = kRoot / "synth_a", db = kRoot / "synth_b";
    fs::remove_all(da);
    fs::remove_all(db);
    SyntheticSummary s = generate_synthetic(spec, da);
    if (s.pixels < 1000000) {
        note = "fixture is smaller than 1e6 pixels";
        return false;
    }
    const double target[3] = {87.24, 11.57, 1.19};
    for (int k = 0; k < 3; ++k)
        if (std::abs(s.class_percent[k] - target[k]) > 0.5) {
            note = std::string(class_name(k)) + " share " + fmt("%.3f", s.class_percent[k]) +
                   "% misses target by more than 0.5 pp";
            return false;
        }
    generate_synthetic(spec, db);
    if (!compare_trees(da, db)) {
        note = "regeneration under the same seed is not byte-identical";
        return false;
    }
    fs::remove_all(db);
    note = "shares " + fmt("%.2f", s.class_percent[0]) + "/" + fmt("%.2f", s.class_percent[1]) +
           "/" + fmt("%.2f", s.class_percent[2]) + "% over " + std::to_string(s.pixels) +
           " px; regeneration byte-identical";
    return true;
}

// =============================================================================
// 7. Overfit sanity
// =============================================================================

bool crit_overfit(std::string& note) {
    SyntheticSpec spec = spec_from(64, 64, 20, 4, 4, {0.60, 0.30, 0.10}, 1.0, 6.0, 11);
    fs::path dir = kRoot / "overfit_data";
    fs::remove_all(dir);
    generate_synthetic(spec, dir);

    RunConfig cfg;
    cfg.run_name = "overfit";
    cfg.data.dir = dir.string();
    cfg.model.backbone = nn::BackboneKind::swin_unet;
    cfg.model.swin.patch = 2;
    cfg.model.swin.window = 4;
    cfg.model.swin.depths = {2, 2};
    cfg.model.swin.dims = {24, 48};
    cfg.model.swin.heads = {2, 4};
    cfg.model.swin.mlp_ratio = 2.0;
    cfg.model.cam.reduction = 4;
    cfg.loss.class_weights = {1.0, 2.0, 4.0};
    cfg.loss.alpha = 10.0;
    cfg.loss.reduction = nn::Reduction::mean;
    cfg.optimizer.lr = 1e-3;
    cfg.optimizer.grad_clip = 1.0;
    cfg.train.batch_size = 2;
    cfg.train.epochs = 200;
    cfg.validate();

    PreparedData data = prepare_data(cfg);
    nn::CamtModel model(cfg.model_config(), data.t, data.c, data.h, data.w, 1);
    Adam opt(model.params(), cfg.optimizer);
    Rng shuffle_rng(derive_stream(1, "shuffle"));
    nn::HybridLossConfig lc = cfg.loss_config();

    std::vector<size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), size_t(0));
    double best = 0.0;
    for (int epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (size_t s = 0; s < order.size(); s += cfg.train.batch_size) {
            size_t e = std::min(order.size(), s + cfg.train.batch_size);
            opt.zero_grad();
            for (size_t i = s; i < e; ++i) {
                const TrainSample& ts = data.train[order[i]];
                nn::CamtModel::Output out = model.forward(ts.x);
                nn::LossResult lr = nn::hybrid_loss(out.logits, out.reg, ts.cls, ts.mm, lc);
                model.backward(lr.dlogits, lr.dreg);
            }
            opt.scale_grads(1.0 / double(e - s));
            opt.step();
        }
        if (epoch % 5 == 0) {
            MetricsReport rep = evaluate_samples(model, data.train, cfg, data.manifest.thresholds);
            best = std::max(best, rep.per_class[1].csi);
            if (rep.per_class[1].csi >= 0.9) {
                note = "train rain CSI " + fmt("%.3f", rep.per_class[1].csi) + " at epoch " +
                       std::to_string(epoch);
                return true;
            }
        }
    }
    note = "train rain CSI peaked at " + fmt("%.3f", best) + " within 200 epochs (< 0.9)";
    return false;
}

// =============================================================================
// 8. Ablation direction
// =============================================================================

bool crit_ablation(std::string& note) {
    SyntheticSpec spec = spec_from(48, 48, 40, 6, 10, {0.87, 0.12, 0.01}, 0.65, 0.8, 23);
    fs::path dir = kRoot / "imbalanced_data";
    fs::remove_all(dir);
    SyntheticSummary s = generate_synthetic(spec, dir);
    if (std::abs(s.class_percent[2] - 1.0) > 0.3) {
        note = "heavy-rain mass is not ~1%";
        return false;
    }

    RunConfig base;
    base.data.dir = dir.string();
    base.model.backbone = nn::BackboneKind::unet;
    base.model.unet_base = 8;
    base.model.unet_levels = 2;
    base.model.cam.reduction = 4;
    base.loss.reduction = nn::Reduction::mean;
    base.optimizer.lr = 1e-3;
    base.optimizer.grad_clip = 1.0;
    base.train.batch_size = 4;
    base.train.epochs = 30;
    base.train.seeds = {1, 2, 3};

    auto train_arm = [&](const char* name, bool weighting, bool multitask,
                         bool cam) -> std::vector<double> {
        RunConfig cfg = base;
        cfg.run_name = name;
        cfg.loss.enable_weighting = weighting;
        cfg.model.regression_head = multitask;
        cfg.model.cam.enable = cam;
        cfg.validate();
        fs::path runs = kRoot / "ablation_runs";
        for (uint64_t seed : cfg.train.seeds) fs::remove_all(runs / cfg.run_name / std::to_string(seed));
        TrainOutcome out = run_training(cfg, runs);
        std::vector<double> heavy;
        for (const SeedResult& r : out.seeds) {
            if (!r.ok) throw ValidationError(std::string(name) + ": a seed failed to train");
            heavy.push_back(r.test.per_class[2].csi);
        }
        return heavy;
    };

    std::vector<double> allon = train_arm("allon", true, true, true);
    std::vector<double> wloss_off = train_arm("wloss-off", false, true, true);
    std::vector<double> alloff = train_arm("alloff", false, false, false);

    int wins = 0;
    for (size_t i = 0; i < allon.size(); ++i)
        if (allon[i] > wloss_off[i]) ++wins;
    double alloff_mean = std::accumulate(alloff.begin(), alloff.end(), 0.0) / double(alloff.size());

    std::ostringstream os;
    os << "heavy CSI all-on";
    for (double v : allon) os << " " << fmt("%.3f", v);
    os << " vs no-weighting";
    for (double v : wloss_off) os << " " << fmt("%.3f", v);
    os << " (wins " << wins << "/3); all-off mean " << fmt("%.3f", alloff_mean);
    note = os.str();

    return wins >= 2 && alloff_mean < 0.05;
}

// =============================================================================
// 9. Reproducibility
// =============================================================================

bool crit_reproducibility(std::string& note) {
    SyntheticSpec spec = spec_from(16, 16, 8, 3, 3, {0.70, 0.22, 0.08}, 0.85, 2.0, 5);
    fs::path dir = kRoot / "repro_data";
    fs::remove_all(dir);
    generate_synthetic(spec, dir);

    RunConfig cfg;
    cfg.run_name = "repro";
    cfg.data.dir = dir.string();
    cfg.model.backbone = nn::BackboneKind::unet;
    cfg.model.unet_base = 4;
    cfg.model.unet_levels = 1;
    cfg.model.cam.reduction = 2;
    cfg.optimizer.lr = 3e-3;
    cfg.train.batch_size = 2;
    cfg.train.epochs = 2;
    cfg.train.seeds = {1};
    cfg.validate();

    fs::path ra = kRoot / "repro_a", rb = kRoot / "repro_b";
    fs::remove_all(ra);
    fs::remove_all(rb);
    run_training(cfg, ra);
    run_training(cfg, rb);
    fs::path sa = ra / "repro" / "1", sb = rb / "repro" / "1";
    if (read_file_bytes(sa / "log.jsonl") != read_file_bytes(sb / "log.jsonl")) {
        note = "two identical runs logged different loss sequences";
        return false;
    }
    if (read_file_bytes(sa / "test_metrics.json") != read_file_bytes(sb / "test_metrics.json")) {
        note = "two identical runs produced different test metrics";
        return false;
    }

    // checkpoint round trip reproduces the stored evaluation exactly
    Checkpoint ck = checkpoint_read(sa / "ckpt_best.bin");
    RunConfig stored = config_from_json(ordered_json::parse(read_file_bytes(sa / "config.json")));
    verify_checkpoint_config(ck, stored);
    RunConfig load_cfg = stored;
    load_cfg.data.normalize = false;
    PreparedData data = prepare_data(load_cfg);
    std::vector<TrainSample> test = data.test;
    if (auto stats = checkpoint_stats(ck)) apply_normalization(test, *stats, data.t, data.c);
    nn::CamtModel model(stored.model_config(), data.t, data.c, data.h, data.w, 1);
    load_model_state(model, ck);
    MetricsReport rep = evaluate_samples(model, test, stored, data.manifest.thresholds);
    ordered_json stored_metrics =
        ordered_json::parse(read_file_bytes(sa / "test_metrics.json"))["metrics"];
    if (rep.to_json() != stored_metrics) {
        note = "checkpoint reload does not reproduce the stored test metrics";
        return false;
    }
    note = "byte-identical logs and metrics; checkpoint round trip exact";
    return true;
}

}  // namespace

int main() {
    fs::create_directories(kRoot);
    struct Criterion {
        int id;
        const char* name;
        std::function<bool(std::string&)> fn;
    };
    const std::vector<Criterion> criteria{
        {1, "metric oracle equivalence", crit_metric_oracle},
        {2, "closed-form metric cases", crit_closed_forms},
        {3, "loss correctness", crit_loss},
        {4, "gradient checks", crit_gradients},
        {5, "CAM invariants", crit_cam_invariants},
        {6, "synthetic distribution fidelity", crit_synthetic},
        {7, "overfit sanity", crit_overfit},
        {8, "ablation direction", crit_ablation},
        {9, "reproducibility", crit_reproducibility},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        auto t0 = std::chrono::steady_clock::now();
        std::string note;
        bool ok = false;
        try {
            ok = c.fn(note);
        } catch (const std::exception& e) {
            note = std::string("exception: ") + e.what();
        }
        double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%s] %d. %s: %s (%.1f s)\n", ok ? "PASS" : "FAIL", c.id, c.name, note.c_str(),
                    dt);
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    if (failures) std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
