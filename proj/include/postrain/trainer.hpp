#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "postrain/checkpoint.hpp"
#include "postrain/config.hpp"
#include "postrain/dataio.hpp"
#include "postrain/nn/model.hpp"
#include "postrain/nn/multitask.hpp"
#include "postrain/rng.hpp"
#include "postrain/verification.hpp"

namespace postrain {

// ---------------------------------------------------------------------------
// Data preparation: files -> double tensors + per-pixel targets on the model
// grid, normalized once with frozen train-split statistics.
// ---------------------------------------------------------------------------

struct TrainSample {
    Tensor x;     // (T*C, H, W)
    GridU8 cls;   // class targets on the model grid
    GridF mm;     // regression targets, mm/h on the model grid
};

struct PreparedData {
    DatasetManifest manifest;
    std::string manifest_sha256;
    long t = 0, c = 0, h = 0, w = 0;
    std::vector<TrainSample> train, val, test;
    std::optional<ChannelStats> stats;  // values already rounded to float32

    const std::vector<TrainSample>& split(const std::string& name) const {
        if (name == "train") return train;
        if (name == "val") return val;
        if (name == "test") return test;
        throw ValidationError("unknown split '" + name + "'");
    }
};

namespace traindetail {

// Checkpoints persist float32; using rounded stats everywhere keeps the
// training-time pipeline and the reloaded pipeline numerically identical.
inline ChannelStats round_stats_f32(const ChannelStats& s) {
    ChannelStats out = s;
    for (double& v : out.mean) v = double(float(v));
    for (double& v : out.std) v = double(float(v));
    return out;
}

inline TrainSample build_sample(const NwpSample& s, const RainObservation& obs,
                                const RunConfig& cfg, const ThresholdSpec& th,
                                const std::optional<ChannelStats>& stats) {
    TrainSample out;
    const long h = s.h, w = s.w;
    out.x = Tensor({s.t * s.c, h, w});
    for (size_t i = 0; i < s.tensor.size(); ++i) out.x.v()[i] = double(s.tensor[i]);
    if (stats) {
        const long hw = h * w;
        for (long t = 0; t < s.t; ++t)
            for (long c = 0; c < s.c; ++c) {
                double sd = stats->std[c];
                if (sd == 0.0)
                    throw ValidationError("channel " + std::to_string(c) +
                                          " has zero variance; cannot normalize");
                double mu = stats->mean[c];
                double* p = out.x.v().data() + (t * s.c + c) * hw;
                for (long i = 0; i < hw; ++i) p[i] = (p[i] - mu) / sd;
            }
    }

    const bool same = obs.grid.h == h && obs.grid.w == w;
    if (cfg.data.obs_policy == ObsPolicy::resample_then_classify) {
        GridF mm = same ? obs.grid
                        : resample_grid(obs.grid, int(h), int(w), cfg.data.obs_resample);
        out.cls = classify_rain(RainObservation{mm, obs.timestamp}, th).grid;
        out.mm = std::move(mm);
    } else {
        RainClassGrid native = classify_rain(obs, th);
        out.cls = same ? native.grid : resample_class_grid(native, int(h), int(w), ResampleMethod::nearest).grid;
        out.mm = same ? obs.grid : resample_grid(obs.grid, int(h), int(w), cfg.data.obs_resample);
    }
    return out;
}

}  // namespace traindetail

inline PreparedData prepare_data(const RunConfig& cfg) {
    if (cfg.data.dir.empty()) throw ConfigError("config: data.dir must point at a dataset directory");
    Dataset ds = Dataset::open(cfg.data.dir);
    const DatasetManifest& man = ds.manifest();
    PreparedData out;
    out.manifest = man;
    out.manifest_sha256 =
        sha256_hex(read_file_bytes(std::filesystem::path(cfg.data.dir) / "manifest.json"));
    out.t = man.shape[0];
    out.c = man.shape[1];
    out.h = man.shape[2];
    out.w = man.shape[3];
    if (cfg.data.normalize) {
        ChannelStats st = man.normalization ? *man.normalization : ds.compute_channel_stats("train");
        out.stats = traindetail::round_stats_f32(st);
    }
    auto load = [&](const char* split, std::vector<TrainSample>& dst) {
        for (const auto& id : ds.split_ids(split))
            dst.push_back(traindetail::build_sample(ds.load_sample(id), ds.load_observation(id),
                                                    cfg, man.thresholds, out.stats));
    };
    load("train", out.train);
    load("val", out.val);
    load("test", out.test);
    return out;
}

// Normalizes already-loaded raw samples in place (used when the statistics
// come from a checkpoint rather than from the train split).
inline void apply_normalization(std::vector<TrainSample>& samples, const ChannelStats& stats,
                                long t_steps, long c) {
    for (TrainSample& s : samples) {
        const long hw = s.x.numel() / (t_steps * c);
        for (long t = 0; t < t_steps; ++t)
            for (long ci = 0; ci < c; ++ci) {
                double sd = stats.std[ci];
                if (sd == 0.0)
                    throw ValidationError("channel " + std::to_string(ci) +
                                          " has zero variance; cannot normalize");
                double mu = stats.mean[ci];
                double* p = s.x.v().data() + (t * c + ci) * hw;
                for (long i = 0; i < hw; ++i) p[i] = (p[i] - mu) / sd;
            }
    }
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

class Adam {
public:
    Adam(ParamRefs params, const RunConfig::Optimizer& cfg) : params_(std::move(params)), cfg_(cfg) {
        for (Param* p : params_) {
            m_.emplace_back(p->value.shape());
            v_.emplace_back(p->value.shape());
            m_.back().zero();
            v_.back().zero();
        }
    }

    void zero_grad() {
        for (Param* p : params_) p->grad.zero();
    }

    void scale_grads(double s) {
        for (Param* p : params_)
            for (long i = 0; i < p->grad.numel(); ++i) p->grad.v()[i] *= s;
    }

    void step() {
        if (cfg_.grad_clip > 0.0) {
            double sq = 0.0;
            for (Param* p : params_)
                for (long i = 0; i < p->grad.numel(); ++i) sq += p->grad.v()[i] * p->grad.v()[i];
            double norm = std::sqrt(sq);
            if (norm > cfg_.grad_clip) scale_grads(cfg_.grad_clip / norm);
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
        for (size_t k = 0; k < params_.size(); ++k) {
            Param* p = params_[k];
            for (long i = 0; i < p->value.numel(); ++i) {
                double g = p->grad.v()[i];
                double& m = m_[k].v()[i];
                double& v = v_[k].v()[i];
                m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
                v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g * g;
                p->value.v()[i] -= cfg_.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg_.eps);
            }
        }
    }

    long step_count() const { return t_; }
    const std::vector<Tensor>& m() const { return m_; }
    const std::vector<Tensor>& v() const { return v_; }
    std::vector<Tensor>& m() { return m_; }
    std::vector<Tensor>& v() { return v_; }
    void set_step_count(long t) { t_ = t; }

private:
    ParamRefs params_;
    RunConfig::Optimizer cfg_;
    std::vector<Tensor> m_, v_;
    long t_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoint assembly
// ---------------------------------------------------------------------------

inline Checkpoint make_checkpoint(const RunConfig& cfg, nn::CamtModel& model, const Adam& opt,
                                  const Rng& rng, const std::optional<ChannelStats>& stats) {
    Checkpoint ck;
    ck.config_hash = config_hash_bytes(cfg);
    ParamRefs ps = model.params();
    for (Param* p : ps) ck.tensors.emplace_back("param:" + p->name, prb_from_tensor(p->value));
    for (size_t i = 0; i < ps.size(); ++i) {
        ck.tensors.emplace_back("adam.m:" + ps[i]->name, prb_from_tensor(opt.m()[i]));
        ck.tensors.emplace_back("adam.v:" + ps[i]->name, prb_from_tensor(opt.v()[i]));
    }
    PrbTensor step;
    step.dims = {1};
    step.values = {float(opt.step_count())};
    ck.tensors.emplace_back("adam.t", step);
    ck.tensors.emplace_back("rng", prb_from_bytes(rng.serialize_state()));
    if (stats) {
        PrbTensor mean, sd;
        mean.dims = sd.dims = {uint32_t(stats->mean.size())};
        for (double v : stats->mean) mean.values.push_back(float(v));
        for (double v : stats->std) sd.values.push_back(float(v));
        ck.tensors.emplace_back("norm.mean", mean);
        ck.tensors.emplace_back("norm.std", sd);
    }
    return ck;
}

inline void verify_checkpoint_config(const Checkpoint& ck, const RunConfig& cfg) {
    if (ck.config_hash != config_hash_bytes(cfg))
        throw ValidationError(
            "checkpoint was produced by a different configuration (config hash mismatch)");
}

inline void load_model_state(nn::CamtModel& model, const Checkpoint& ck) {
    for (Param* p : model.params())
        tensor_from_prb(ck.require("param:" + p->name), p->value, p->name);
}

inline std::optional<ChannelStats> checkpoint_stats(const Checkpoint& ck) {
    const PrbTensor* mean = ck.find("norm.mean");
    if (!mean) return std::nullopt;
    const PrbTensor& sd = ck.require("norm.std");
    ChannelStats st;
    for (float v : mean->values) st.mean.push_back(double(v));
    for (float v : sd.values) st.std.push_back(double(v));
    return st;
}

// ---------------------------------------------------------------------------
// Evaluation of a model over prepared samples
// ---------------------------------------------------------------------------

inline RainClassGrid predict_grid(nn::CamtModel& model, const TrainSample& s, const RunConfig& cfg,
                                  const ThresholdSpec& th) {
    nn::CamtModel::Output out = model.forward(s.x);
    const int h = int(model.height()), w = int(model.width());
    if (cfg.eval.source == EvalSource::classification || out.reg.numel() == 0)
        return nn::predict_classes(out.logits, h, w);
    GridF mm(h, w);
    for (long p = 0; p < out.reg.numel(); ++p) {
        double v = out.reg.v()[p];
        if (cfg.loss.log1p_target) v = std::expm1(v);
        mm.v[p] = float(std::max(v, 0.0));
    }
    return classify_rain(RainObservation{mm, ""}, th);
}

inline MetricsReport evaluate_samples(nn::CamtModel& model, const std::vector<TrainSample>& samples,
                                      const RunConfig& cfg, const ThresholdSpec& th) {
    Evaluator ev;
    for (const TrainSample& s : samples) {
        RainClassGrid pred = predict_grid(model, s, cfg, th);
        ev.add(pred, RainClassGrid{s.cls});
    }
    return ev.report(cfg.eval.aggregation);
}

inline double selection_value(const MetricsReport& r, SelectionMetric m) {
    switch (m) {
        case SelectionMetric::rain_csi: return r.per_class[1].csi;
        case SelectionMetric::heavy_csi: return r.per_class[2].csi;
        default: return 0.5 * (r.per_class[1].csi + r.per_class[2].csi);
    }
}

// Best epoch (1-based) over per-epoch selection values; NaN marks an epoch
// where the metric is undefined. Ties resolve to the earliest epoch.
inline int select_best(const std::vector<double>& selection, SelectionMetric metric) {
    int best = -1;
    double best_v = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < selection.size(); ++i)
        if (std::isfinite(selection[i]) && selection[i] > best_v) {
            best_v = selection[i];
            best = int(i) + 1;
        }
    if (best < 0)
        throw ValidationError(std::string("no epoch produced a defined ") +
                              cfgdetail::selection_name(metric) +
                              " on the validation split; enlarge the validation split so it "
                              "contains positive rain pixels");
    return best;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct SeedResult {
    uint64_t seed = 0;
    bool ok = false;
    bool diverged = false;
    std::string message;
    int best_epoch = -1;  // 1-based
    double selection = std::numeric_limits<double>::quiet_NaN();
    MetricsReport test;
    long param_count = 0;
    std::filesystem::path dir;
};

struct TrainOutcome {
    std::filesystem::path run_dir;
    std::vector<SeedResult> seeds;

    int n_ok() const {
        int n = 0;
        for (const auto& s : seeds) n += s.ok;
        return n;
    }
    bool all_diverged() const {
        for (const auto& s : seeds)
            if (!s.diverged) return false;
        return !seeds.empty();
    }
};

inline std::filesystem::path default_runs_root() {
    const char* env = std::getenv("POSTRAIN_RUNS_DIR");
    return (env && *env) ? std::filesystem::path(env) : std::filesystem::path("runs");
}

namespace traindetail {

inline SeedResult train_one_seed(const RunConfig& cfg, const PreparedData& data, uint64_t seed,
                                 const std::filesystem::path& dir, std::ostream* progress) {
    namespace fs = std::filesystem;
    SeedResult res;
    res.seed = seed;
    res.dir = dir;
    fs::create_directories(dir);
    write_file_bytes(dir / "config.json", config_to_json(cfg).dump(2) + "\n");

    nn::CamtModel model(cfg.model_config(), data.t, data.c, data.h, data.w, seed);
    res.param_count = model.param_count();
    Adam opt(model.params(), cfg.optimizer);
    Rng shuffle_rng(derive_stream(seed, "shuffle"));
    const nn::HybridLossConfig lcfg = cfg.loss_config();
    const ThresholdSpec th = data.manifest.thresholds;

    std::ofstream log(dir / "log.jsonl", std::ios::trunc);
    std::ofstream epochs_out(dir / "epochs.jsonl", std::ios::trunc);
    if (!log || !epochs_out) throw IoError("cannot open log files under " + dir.string());

    std::vector<size_t> order(data.train.size());
    long step = 0;
    double best = -std::numeric_limits<double>::infinity();
    int best_epoch = -1;

    try {
        if (data.train.empty()) throw ValidationError("training split is empty");
        for (int epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
            std::iota(order.begin(), order.end(), size_t(0));
            shuffle_rng.shuffle(order);
            for (size_t b = 0; b < order.size(); b += size_t(cfg.train.batch_size)) {
                size_t e = std::min(order.size(), b + size_t(cfg.train.batch_size));
                opt.zero_grad();
                double s_cls = 0.0, s_reg = 0.0, s_hyb = 0.0;
                for (size_t i = b; i < e; ++i) {
                    const TrainSample& s = data.train[order[i]];
                    nn::CamtModel::Output out = model.forward(s.x);
                    nn::LossResult lr = nn::hybrid_loss(out.logits, out.reg, s.cls, s.mm, lcfg);
                    model.backward(lr.dlogits, lr.dreg);
                    s_cls += lr.cls;
                    s_reg += lr.reg;
                    s_hyb += lr.hybrid;
                }
                const double n = double(e - b);
                opt.scale_grads(1.0 / n);
                opt.step();
                ++step;
                ordered_json rec{{"step", step},
                                 {"L_cls", s_cls / n},
                                 {"L_reg", s_reg / n},
                                 {"L_hybrid", s_hyb / n}};
                log << rec.dump() << "\n";
            }
            MetricsReport val = evaluate_samples(model, data.val, cfg, th);
            double sel = selection_value(val, cfg.train.selection_metric);
            ordered_json erec{{"epoch", epoch},
                              {"selection", std::isfinite(sel) ? ordered_json(sel) : ordered_json(nullptr)},
                              {"val", val.to_json()}};
            epochs_out << erec.dump() << "\n";
            log.flush();
            epochs_out.flush();
            if (std::isfinite(sel) && sel > best) {
                best = sel;
                best_epoch = epoch;
                checkpoint_write(dir / "ckpt_best.bin",
                                 make_checkpoint(cfg, model, opt, shuffle_rng, data.stats));
            }
            if (progress)
                (*progress) << "seed " << seed << " epoch " << epoch << "/" << cfg.train.epochs
                            << (std::isfinite(sel)
                                    ? " " + std::string(cfgdetail::selection_name(
                                                cfg.train.selection_metric)) + "=" + std::to_string(sel)
                                    : std::string(" selection undefined"))
                            << "\n";
        }
        if (best_epoch < 0)
            throw ValidationError(std::string("no epoch produced a defined ") +
                                  cfgdetail::selection_name(cfg.train.selection_metric) +
                                  " on the validation split; enlarge the validation split so it "
                                  "contains positive rain pixels");
    } catch (const NumericError& e) {
        res.diverged = true;
        res.message = std::string("seed ") + std::to_string(seed) + " diverged: " + e.what();
        return res;
    } catch (const ValidationError& e) {
        res.message = e.what();
        return res;
    }

    // Test metrics always come from the persisted best checkpoint, so the
    // file on disk is exactly what the reported numbers describe.
    Checkpoint ck = checkpoint_read(dir / "ckpt_best.bin");
    verify_checkpoint_config(ck, cfg);
    nn::CamtModel fresh(cfg.model_config(), data.t, data.c, data.h, data.w, seed);
    load_model_state(fresh, ck);
    MetricsReport test = evaluate_samples(fresh, data.test, cfg, th);
    ordered_json tj{{"seed", seed},
                    {"best_epoch", best_epoch},
                    {"selection", best},
                    {"metrics", test.to_json()}};
    write_file_bytes(dir / "test_metrics.json", tj.dump(2) + "\n");

    res.ok = true;
    res.best_epoch = best_epoch;
    res.selection = best;
    res.test = std::move(test);
    return res;
}

}  // namespace traindetail

// Trains every configured seed; a diverging seed is recorded and skipped, the
// rest continue. cfg.data.manifest_sha256 is pinned to the dataset actually
// used (and verified when pre-set).
inline TrainOutcome run_training(RunConfig cfg, const std::filesystem::path& runs_root = default_runs_root(),
                                 std::ostream* progress = nullptr) {
    cfg.validate();
    PreparedData data = prepare_data(cfg);
    if (cfg.data.manifest_sha256.empty())
        cfg.data.manifest_sha256 = data.manifest_sha256;
    else if (cfg.data.manifest_sha256 != data.manifest_sha256)
        throw ValidationError("config pins manifest_sha256 " + cfg.data.manifest_sha256 +
                              " but the dataset manifest hashes to " + data.manifest_sha256);
    TrainOutcome out;
    out.run_dir = runs_root / cfg.run_name;
    for (uint64_t seed : cfg.train.seeds) {
        SeedResult r = traindetail::train_one_seed(cfg, data, seed, out.run_dir / std::to_string(seed),
                                                   progress);
        if (progress && !r.ok) (*progress) << r.message << "\n";
        out.seeds.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Seed aggregation (mean / population std / best)
// ---------------------------------------------------------------------------

struct AggStat {
    double mean = std::numeric_limits<double>::quiet_NaN();
    double std = std::numeric_limits<double>::quiet_NaN();
    double best = std::numeric_limits<double>::quiet_NaN();
    int n = 0;
};

// Orientation of "best": higher for scores, lower for FAR, closest to 1 for
// frequency bias.
inline AggStat aggregate_values(const std::vector<double>& vals, const std::string& metric) {
    AggStat a;
    std::vector<double> def;
    for (double v : vals)
        if (std::isfinite(v)) def.push_back(v);
    a.n = int(def.size());
    if (def.empty()) return a;
    double s = 0.0, sq = 0.0;
    for (double v : def) {
        s += v;
        sq += v * v;
    }
    a.mean = s / def.size();
    a.std = std::sqrt(std::max(0.0, sq / def.size() - a.mean * a.mean));
    if (metric == "far") {
        a.best = *std::min_element(def.begin(), def.end());
    } else if (metric == "bias") {
        a.best = def[0];
        for (double v : def)
            if (std::abs(v - 1.0) < std::abs(a.best - 1.0)) a.best = v;
    } else {
        a.best = *std::max_element(def.begin(), def.end());
    }
    return a;
}

inline ordered_json agg_to_json(const AggStat& a) {
    auto num = [](double v) {
        return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr);
    };
    return ordered_json{{"mean", num(a.mean)}, {"std", num(a.std)}, {"best", num(a.best)}, {"n", a.n}};
}

inline ordered_json aggregate_seeds(const std::vector<MetricsReport>& reports) {
    ordered_json out;
    out["n_seeds"] = reports.size();
    std::vector<double> acc;
    for (const auto& r : reports) acc.push_back(r.overall_accuracy);
    out["overall_accuracy"] = agg_to_json(aggregate_values(acc, "accuracy"));
    ordered_json classes = ordered_json::array();
    for (int k = 0; k < kNumClasses; ++k) {
        ordered_json cj{{"class", class_name(k)}};
        for (const auto& [name, field] : detail::kMetricFields) {
            std::vector<double> vals;
            for (const auto& r : reports) vals.push_back(r.per_class[k].*field);
            cj[name] = agg_to_json(aggregate_values(vals, name));
        }
        classes.push_back(std::move(cj));
    }
    out["per_class"] = std::move(classes);
    return out;
}

}  // namespace postrain
