#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "postrain/common.hpp"
#include "postrain/nn/model.hpp"
#include "postrain/nn/multitask.hpp"
#include "postrain/sha256.hpp"
#include "postrain/verification.hpp"

namespace postrain {

inline constexpr int kConfigSchemaVersion = 1;

enum class ObsPolicy { resample_then_classify, classify_then_resample };
enum class SelectionMetric { rain_csi, heavy_csi, mean_csi };
enum class EvalSource { classification, regression_threshold };

// Canonical experiment configuration. One JSON schema covers train, evaluate,
// ablate and report; every key is overridable from the command line through
// its dotted path.
struct RunConfig {
    int schema_version = kConfigSchemaVersion;
    std::string run_name = "run";

    struct Data {
        std::string dir;
        bool normalize = true;
        ObsPolicy obs_policy = ObsPolicy::resample_then_classify;
        ResampleMethod obs_resample = ResampleMethod::bilinear;
        std::string manifest_sha256;  // pinned at resolve time, guards report merges
    } data;

    struct Cam {
        bool enable = true;
        long reduction = 16;
        nn::CamMerge merge = nn::CamMerge::residual_add;
    };
    struct Model {
        nn::BackboneKind backbone = nn::BackboneKind::swin_unet;
        Cam cam;
        bool regression_head = true;
        nn::SwinUnetConfig swin;
        long unet_base = 16;
        long unet_levels = 2;
        long lstm_hidden = 24;
    } model;

    struct Loss {
        std::array<double, 3> class_weights{1.0, 5.0, 30.0};
        bool enable_weighting = true;
        double alpha = 100.0;
        bool log1p_target = false;
        nn::Reduction reduction = nn::Reduction::sum;
    } loss;

    struct Optimizer {
        std::string kind = "adam";
        double lr = 1e-4;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
        double grad_clip = 0.0;  // 0 disables clipping
    } optimizer;

    struct Train {
        int batch_size = 1;
        int epochs = 50;
        std::vector<uint64_t> seeds{1, 2, 3};
        SelectionMetric selection_metric = SelectionMetric::rain_csi;
    } train;

    struct Eval {
        Aggregation aggregation = Aggregation::micro;
        EvalSource source = EvalSource::classification;
    } eval;

    void validate() const {
        if (schema_version != kConfigSchemaVersion)
            throw ConfigError("config: unsupported schema_version " + std::to_string(schema_version) +
                              " (expected " + std::to_string(kConfigSchemaVersion) + ")");
        if (run_name.empty()) throw ConfigError("config: run_name must not be empty");
        if (model.cam.reduction < 1) throw ConfigError("config: model.cam.reduction must be >= 1");
        if (model.unet_base < 1 || model.unet_levels < 1)
            throw ConfigError("config: model.unet.base and model.unet.levels must be >= 1");
        if (model.lstm_hidden < 1) throw ConfigError("config: model.lstm.hidden must be >= 1");
        model.swin.validate();
        for (double w : loss.class_weights)
            if (!(w >= 0.0)) throw ConfigError("config: loss.class_weights must be >= 0");
        if (!(loss.alpha >= 0.0)) throw ConfigError("config: loss.alpha must be >= 0");
        if (optimizer.kind != "adam") throw ConfigError("config: optimizer.kind must be 'adam'");
        if (!(optimizer.lr > 0.0)) throw ConfigError("config: optimizer.lr must be > 0");
        if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) ||
            !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0))
            throw ConfigError("config: optimizer betas must lie in [0, 1)");
        if (!(optimizer.eps > 0.0)) throw ConfigError("config: optimizer.eps must be > 0");
        if (!(optimizer.grad_clip >= 0.0)) throw ConfigError("config: optimizer.grad_clip must be >= 0");
        if (train.batch_size < 1) throw ConfigError("config: train.batch_size must be >= 1");
        if (train.epochs < 1) throw ConfigError("config: train.epochs must be >= 1");
        if (train.seeds.empty()) throw ConfigError("config: train.seeds must not be empty");
    }

    nn::ModelConfig model_config() const {
        nn::ModelConfig m;
        m.backbone = model.backbone;
        m.use_cam = model.cam.enable;
        m.cam_reduction = model.cam.reduction;
        m.cam_merge = model.cam.merge;
        m.use_regression_head = model.regression_head;
        m.swin = model.swin;
        m.unet_base = model.unet_base;
        m.unet_levels = model.unet_levels;
        m.lstm_hidden = model.lstm_hidden;
        return m;
    }

    nn::HybridLossConfig loss_config() const {
        nn::HybridLossConfig l;
        l.class_weights = loss.class_weights;
        l.enable_weighting = loss.enable_weighting;
        l.enable_regression = model.regression_head;
        l.alpha = loss.alpha;
        l.log1p_target = loss.log1p_target;
        l.reduction = loss.reduction;
        return l;
    }
};

// ---------------------------------------------------------------------------
// Enum <-> string vocabularies
// ---------------------------------------------------------------------------

namespace cfgdetail {

inline const char* obs_policy_name(ObsPolicy p) {
    return p == ObsPolicy::resample_then_classify ? "resample_then_classify"
                                                  : "classify_then_resample";
}
inline ObsPolicy obs_policy_from(const std::string& s) {
    if (s == "resample_then_classify") return ObsPolicy::resample_then_classify;
    if (s == "classify_then_resample") return ObsPolicy::classify_then_resample;
    throw ConfigError("config: unknown obs_policy '" + s + "'");
}
inline const char* resample_name(ResampleMethod m) {
    return m == ResampleMethod::bilinear ? "bilinear" : "nearest";
}
inline ResampleMethod resample_from(const std::string& s) {
    if (s == "bilinear") return ResampleMethod::bilinear;
    if (s == "nearest") return ResampleMethod::nearest;
    throw ConfigError("config: unknown resample method '" + s + "'");
}
inline const char* selection_name(SelectionMetric m) {
    switch (m) {
        case SelectionMetric::rain_csi: return "rain_csi";
        case SelectionMetric::heavy_csi: return "heavy_csi";
        default: return "mean_csi";
    }
}
inline SelectionMetric selection_from(const std::string& s) {
    if (s == "rain_csi") return SelectionMetric::rain_csi;
    if (s == "heavy_csi") return SelectionMetric::heavy_csi;
    if (s == "mean_csi") return SelectionMetric::mean_csi;
    throw ConfigError("config: unknown selection_metric '" + s + "'");
}
inline const char* eval_source_name(EvalSource s) {
    return s == EvalSource::classification ? "classification" : "regression_threshold";
}
inline EvalSource eval_source_from(const std::string& s) {
    if (s == "classification") return EvalSource::classification;
    if (s == "regression_threshold") return EvalSource::regression_threshold;
    throw ConfigError("config: unknown eval source '" + s + "'");
}
inline const char* reduction_name(nn::Reduction r) {
    return r == nn::Reduction::sum ? "sum" : "mean";
}
inline nn::Reduction reduction_from(const std::string& s) {
    if (s == "sum") return nn::Reduction::sum;
    if (s == "mean") return nn::Reduction::mean;
    throw ConfigError("config: unknown loss reduction '" + s + "'");
}
inline const char* merge_name(nn::CamMerge m) {
    return m == nn::CamMerge::residual_add ? "residual_add" : "gated_multiply";
}
inline nn::CamMerge merge_from(const std::string& s) {
    if (s == "residual_add") return nn::CamMerge::residual_add;
    if (s == "gated_multiply") return nn::CamMerge::gated_multiply;
    throw ConfigError("config: unknown cam merge mode '" + s + "'");
}

inline void expect_keys(const ordered_json& j, const char* where,
                        std::initializer_list<const char*> known) {
    if (!j.is_object()) throw ConfigError(std::string("config: ") + where + " must be an object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* k : known)
            if (key == k) { ok = true; break; }
        if (!ok)
            throw ConfigError(std::string("config: unknown key '") + (*where ? where : "") +
                              (*where ? "." : "") + key + "'");
    }
}

}  // namespace cfgdetail

// ---------------------------------------------------------------------------
// Serialization (canonical key order; hash-stable)
// ---------------------------------------------------------------------------

inline ordered_json config_to_json(const RunConfig& c) {
    using namespace cfgdetail;
    ordered_json j;
    j["schema_version"] = c.schema_version;
    j["run_name"] = c.run_name;
    j["data"] = {{"dir", c.data.dir},
                 {"normalize", c.data.normalize},
                 {"obs_policy", obs_policy_name(c.data.obs_policy)},
                 {"obs_resample", resample_name(c.data.obs_resample)},
                 {"manifest_sha256", c.data.manifest_sha256}};
    j["model"] = {{"backbone", nn::backbone_name(c.model.backbone)},
                  {"cam",
                   {{"enable", c.model.cam.enable},
                    {"reduction", c.model.cam.reduction},
                    {"merge", merge_name(c.model.cam.merge)}}},
                  {"regression_head", c.model.regression_head},
                  {"swin",
                   {{"patch", c.model.swin.patch},
                    {"window", c.model.swin.window},
                    {"depths", c.model.swin.depths},
                    {"dims", c.model.swin.dims},
                    {"heads", c.model.swin.heads},
                    {"mlp_ratio", c.model.swin.mlp_ratio}}},
                  {"unet", {{"base", c.model.unet_base}, {"levels", c.model.unet_levels}}},
                  {"lstm", {{"hidden", c.model.lstm_hidden}}}};
    j["loss"] = {{"class_weights", c.loss.class_weights},
                 {"enable_weighting", c.loss.enable_weighting},
                 {"alpha", c.loss.alpha},
                 {"log1p_target", c.loss.log1p_target},
                 {"reduction", reduction_name(c.loss.reduction)}};
    j["optimizer"] = {{"kind", c.optimizer.kind},     {"lr", c.optimizer.lr},
                      {"beta1", c.optimizer.beta1},   {"beta2", c.optimizer.beta2},
                      {"eps", c.optimizer.eps},       {"grad_clip", c.optimizer.grad_clip}};
    j["train"] = {{"batch_size", c.train.batch_size},
                  {"epochs", c.train.epochs},
                  {"seeds", c.train.seeds},
                  {"selection_metric", selection_name(c.train.selection_metric)}};
    j["eval"] = {{"aggregation", aggregation_name(c.eval.aggregation)},
                 {"source", eval_source_name(c.eval.source)}};
    return j;
}

inline RunConfig config_from_json(const ordered_json& j) {
    using namespace cfgdetail;
    RunConfig c;
    try {
        expect_keys(j, "", {"schema_version", "run_name", "data", "model", "loss", "optimizer",
                            "train", "eval"});
        c.schema_version = j.value("schema_version", c.schema_version);
        c.run_name = j.value("run_name", c.run_name);
        if (j.contains("data")) {
            const auto& d = j.at("data");
            expect_keys(d, "data", {"dir", "normalize", "obs_policy", "obs_resample", "manifest_sha256"});
            c.data.dir = d.value("dir", c.data.dir);
            c.data.normalize = d.value("normalize", c.data.normalize);
            if (d.contains("obs_policy"))
                c.data.obs_policy = obs_policy_from(d.at("obs_policy").get<std::string>());
            if (d.contains("obs_resample"))
                c.data.obs_resample = resample_from(d.at("obs_resample").get<std::string>());
            c.data.manifest_sha256 = d.value("manifest_sha256", c.data.manifest_sha256);
        }
        if (j.contains("model")) {
            const auto& m = j.at("model");
            expect_keys(m, "model", {"backbone", "cam", "regression_head", "swin", "unet", "lstm"});
            if (m.contains("backbone"))
                c.model.backbone = nn::backbone_from_name(m.at("backbone").get<std::string>());
            if (m.contains("cam")) {
                const auto& cam = m.at("cam");
                expect_keys(cam, "model.cam", {"enable", "reduction", "merge"});
                c.model.cam.enable = cam.value("enable", c.model.cam.enable);
                c.model.cam.reduction = cam.value("reduction", c.model.cam.reduction);
                if (cam.contains("merge"))
                    c.model.cam.merge = merge_from(cam.at("merge").get<std::string>());
            }
            c.model.regression_head = m.value("regression_head", c.model.regression_head);
            if (m.contains("swin")) {
                const auto& s = m.at("swin");
                expect_keys(s, "model.swin", {"patch", "window", "depths", "dims", "heads", "mlp_ratio"});
                c.model.swin.patch = s.value("patch", c.model.swin.patch);
                c.model.swin.window = s.value("window", c.model.swin.window);
                if (s.contains("depths")) c.model.swin.depths = s.at("depths").get<std::vector<long>>();
                if (s.contains("dims")) c.model.swin.dims = s.at("dims").get<std::vector<long>>();
                if (s.contains("heads")) c.model.swin.heads = s.at("heads").get<std::vector<long>>();
                c.model.swin.mlp_ratio = s.value("mlp_ratio", c.model.swin.mlp_ratio);
            }
            if (m.contains("unet")) {
                const auto& u = m.at("unet");
                expect_keys(u, "model.unet", {"base", "levels"});
                c.model.unet_base = u.value("base", c.model.unet_base);
                c.model.unet_levels = u.value("levels", c.model.unet_levels);
            }
            if (m.contains("lstm")) {
                const auto& l = m.at("lstm");
                expect_keys(l, "model.lstm", {"hidden"});
                c.model.lstm_hidden = l.value("hidden", c.model.lstm_hidden);
            }
        }
        if (j.contains("loss")) {
            const auto& l = j.at("loss");
            expect_keys(l, "loss",
                        {"class_weights", "enable_weighting", "alpha", "log1p_target", "reduction"});
            if (l.contains("class_weights")) {
                auto cw = l.at("class_weights");
                if (!cw.is_array() || cw.size() != 3)
                    throw ConfigError("config: loss.class_weights must be a 3-element array");
                for (int i = 0; i < 3; ++i) c.loss.class_weights[i] = cw[i].get<double>();
            }
            c.loss.enable_weighting = l.value("enable_weighting", c.loss.enable_weighting);
            c.loss.alpha = l.value("alpha", c.loss.alpha);
            c.loss.log1p_target = l.value("log1p_target", c.loss.log1p_target);
            if (l.contains("reduction"))
                c.loss.reduction = reduction_from(l.at("reduction").get<std::string>());
        }
        if (j.contains("optimizer")) {
            const auto& o = j.at("optimizer");
            expect_keys(o, "optimizer", {"kind", "lr", "beta1", "beta2", "eps", "grad_clip"});
            c.optimizer.kind = o.value("kind", c.optimizer.kind);
            c.optimizer.lr = o.value("lr", c.optimizer.lr);
            c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
            c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
            c.optimizer.eps = o.value("eps", c.optimizer.eps);
            c.optimizer.grad_clip = o.value("grad_clip", c.optimizer.grad_clip);
        }
        if (j.contains("train")) {
            const auto& t = j.at("train");
            expect_keys(t, "train", {"batch_size", "epochs", "seeds", "selection_metric"});
            c.train.batch_size = t.value("batch_size", c.train.batch_size);
            c.train.epochs = t.value("epochs", c.train.epochs);
            if (t.contains("seeds")) c.train.seeds = t.at("seeds").get<std::vector<uint64_t>>();
            if (t.contains("selection_metric"))
                c.train.selection_metric = selection_from(t.at("selection_metric").get<std::string>());
        }
        if (j.contains("eval")) {
            const auto& e = j.at("eval");
            expect_keys(e, "eval", {"aggregation", "source"});
            if (e.contains("aggregation"))
                c.eval.aggregation = aggregation_from_name(e.at("aggregation").get<std::string>());
            if (e.contains("source"))
                c.eval.source = eval_source_from(e.at("source").get<std::string>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: malformed value: ") + e.what());
    }
    c.validate();
    return c;
}

// Canonical serialization hash; identifies a configuration in checkpoints.
inline std::string config_hash_hex(const RunConfig& c) {
    return sha256_hex(config_to_json(c).dump());
}
inline std::array<uint8_t, 32> config_hash_bytes(const RunConfig& c) {
    return sha256_bytes(config_to_json(c).dump());
}

// ---------------------------------------------------------------------------
// Dotted-path overrides
// ---------------------------------------------------------------------------

// Applies "a.b.c=value" onto a JSON tree. The value parses as JSON when it
// can (numbers, booleans, arrays), otherwise it is taken as a string. Unknown
// keys survive here and are rejected by the strict config_from_json pass.
inline void apply_override(ordered_json& j, const std::string& spec) {
    auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override '" + spec + "' is not of the form key.path=value");
    std::string path = spec.substr(0, eq);
    std::string raw = spec.substr(eq + 1);

    ordered_json value = ordered_json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;

    ordered_json* node = &j;
    size_t start = 0;
    while (true) {
        size_t dot = path.find('.', start);
        std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) throw ConfigError("override '" + spec + "' has an empty path segment");
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        if (!node->is_object() && !node->is_null())
            throw ConfigError("override '" + spec + "': '" + key + "' is not an object");
        start = dot + 1;
    }
}

// Dotted key -> default value listing, for --help and documentation.
inline void flatten_json(const ordered_json& j, const std::string& prefix,
                         std::vector<std::pair<std::string, std::string>>& out) {
    for (const auto& [key, val] : j.items()) {
        std::string path = prefix.empty() ? key : prefix + "." + key;
        if (val.is_object())
            flatten_json(val, path, out);
        else
            out.emplace_back(path, val.dump());
    }
}

inline std::vector<std::pair<std::string, std::string>> config_key_listing() {
    std::vector<std::pair<std::string, std::string>> out;
    flatten_json(config_to_json(RunConfig{}), "", out);
    return out;
}

}  // namespace postrain
