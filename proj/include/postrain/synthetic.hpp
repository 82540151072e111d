#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "postrain/common.hpp"
#include "postrain/dataio.hpp"
#include "postrain/prb.hpp"
#include "postrain/rng.hpp"

namespace postrain {

// ---------------------------------------------------------------------------
// Spec
// ---------------------------------------------------------------------------

struct SyntheticSpec {
    std::string name = "synthetic";
    long t = 1, c = 4, h = 64, w = 64;
    int n_train = 8, n_val = 4, n_test = 4;
    ThresholdSpec thresholds{0.1f, 10.0f};
    // Target class fractions (no rain, rain, heavy rain), summing to 1.
    std::array<double, 3> class_proportions{0.8724, 0.1157, 0.0119};
    double correlation_strength = 0.85;  // channel-to-truth coupling in [0, 1]
    double field_smoothness = 4.0;       // Gaussian length scale in cells
    double vmax = 40.0;                  // heaviest generated rain rate, mm/h
    uint64_t seed = 1;

    void validate() const {
        if (t <= 0 || c <= 0 || h < 2 || w < 2)
            throw ValidationError("synthetic spec: grid_shape entries must be positive (H, W >= 2)");
        if (n_train < 0 || n_val < 0 || n_test < 0 || n_train + n_val + n_test == 0)
            throw ValidationError("synthetic spec: sample counts must be >= 0 and not all zero");
        thresholds.validate();
        double sum = class_proportions[0] + class_proportions[1] + class_proportions[2];
        if (std::abs(sum - 1.0) > 1e-9)
            throw ValidationError("synthetic spec: class_proportions must sum to 1, got " +
                                  std::to_string(sum));
        for (double p : class_proportions)
            if (!(p >= 0.0)) throw ValidationError("synthetic spec: class_proportions must be >= 0");
        if (!(correlation_strength >= 0.0 && correlation_strength <= 1.0))
            throw ValidationError("synthetic spec: correlation_strength must lie in [0, 1]");
        if (!(field_smoothness >= 0.0))
            throw ValidationError("synthetic spec: field_smoothness must be >= 0");
        if (!(vmax > thresholds.heavy_threshold))
            throw ValidationError("synthetic spec: vmax must exceed the heavy threshold");
    }
};

inline SyntheticSpec synthetic_spec_from_json(const ordered_json& j) {
    static const std::array<const char*, 9> known{
        "name",      "grid_shape",           "n_samples", "thresholds", "class_proportions",
        "correlation_strength", "field_smoothness", "vmax",      "seed"};
    for (const auto& [key, _] : j.items())
        if (std::find_if(known.begin(), known.end(),
                         [&](const char* k) { return key == k; }) == known.end())
            throw ValidationError("synthetic spec: unknown key '" + key + "'");
    SyntheticSpec s;
    try {
        if (j.contains("name")) s.name = j.at("name").get<std::string>();
        if (j.contains("grid_shape")) {
            auto sh = j.at("grid_shape");
            if (!sh.is_array() || sh.size() != 4)
                throw ValidationError("synthetic spec: grid_shape must be [T, C, H, W]");
            s.t = sh[0].get<long>();
            s.c = sh[1].get<long>();
            s.h = sh[2].get<long>();
            s.w = sh[3].get<long>();
        }
        if (j.contains("n_samples")) {
            s.n_train = j.at("n_samples").value("train", s.n_train);
            s.n_val = j.at("n_samples").value("val", s.n_val);
            s.n_test = j.at("n_samples").value("test", s.n_test);
        }
        if (j.contains("thresholds")) {
            s.thresholds.rain_threshold = j.at("thresholds").at("rain").get<float>();
            s.thresholds.heavy_threshold = j.at("thresholds").at("heavy").get<float>();
        }
        if (j.contains("class_proportions")) {
            auto p = j.at("class_proportions");
            if (!p.is_array() || p.size() != 3)
                throw ValidationError("synthetic spec: class_proportions must be a 3-element array");
            for (int i = 0; i < 3; ++i) s.class_proportions[i] = p[i].get<double>();
        }
        if (j.contains("correlation_strength"))
            s.correlation_strength = j.at("correlation_strength").get<double>();
        if (j.contains("field_smoothness")) s.field_smoothness = j.at("field_smoothness").get<double>();
        if (j.contains("vmax")) s.vmax = j.at("vmax").get<double>();
        if (j.contains("seed")) s.seed = j.at("seed").get<uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("invalid synthetic spec: ") + e.what());
    }
    s.validate();
    return s;
}

inline ordered_json synthetic_spec_to_json(const SyntheticSpec& s) {
    ordered_json j;
    j["name"] = s.name;
    j["grid_shape"] = {s.t, s.c, s.h, s.w};
    j["n_samples"] = {{"train", s.n_train}, {"val", s.n_val}, {"test", s.n_test}};
    j["thresholds"] = {{"rain", s.thresholds.rain_threshold}, {"heavy", s.thresholds.heavy_threshold}};
    j["class_proportions"] = {s.class_proportions[0], s.class_proportions[1], s.class_proportions[2]};
    j["correlation_strength"] = s.correlation_strength;
    j["field_smoothness"] = s.field_smoothness;
    j["vmax"] = s.vmax;
    j["seed"] = s.seed;
    return j;
}

// ---------------------------------------------------------------------------
// Field synthesis
// ---------------------------------------------------------------------------

namespace detail {

// Gaussian taps normalized to unit L2 norm. Circular convolution of iid
// N(0, 1) noise with such a kernel keeps every pixel exactly N(0, 1).
inline std::vector<double> l2_gauss_kernel(double sigma) {
    if (sigma <= 0.0) return {1.0};
    int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double ss = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        double v = std::exp(-0.5 * (double(i) * i) / (sigma * sigma));
        k[i + radius] = v;
        ss += v * v;
    }
    double inv = 1.0 / std::sqrt(ss);
    for (double& v : k) v *= inv;
    return k;
}

inline void circ_conv_rows(GridD& g, const std::vector<double>& k) {
    int radius = (static_cast<int>(k.size()) - 1) / 2;
    std::vector<double> row(g.w);
    for (int y = 0; y < g.h; ++y) {
        for (int x = 0; x < g.w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                int xx = (x + i) % g.w;
                if (xx < 0) xx += g.w;
                acc += k[i + radius] * g.at(y, xx);
            }
            row[x] = acc;
        }
        for (int x = 0; x < g.w; ++x) g.at(y, x) = row[x];
    }
}

inline void circ_conv_cols(GridD& g, const std::vector<double>& k) {
    int radius = (static_cast<int>(k.size()) - 1) / 2;
    std::vector<double> col(g.h);
    for (int x = 0; x < g.w; ++x) {
        for (int y = 0; y < g.h; ++y) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                int yy = (y + i) % g.h;
                if (yy < 0) yy += g.h;
                acc += k[i + radius] * g.at(yy, x);
            }
            col[y] = acc;
        }
        for (int y = 0; y < g.h; ++y) g.at(y, x) = col[y];
    }
}

// Smooth standard-normal field from a dedicated RNG stream.
inline GridD smooth_field(Rng& rng, int h, int w, const std::vector<double>& kernel) {
    GridD g(h, w);
    for (double& v : g.v) v = rng.normal();
    if (kernel.size() > 1) {
        circ_conv_rows(g, kernel);
        circ_conv_cols(g, kernel);
    }
    return g;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

struct SyntheticSummary {
    uint64_t pixels = 0;
    std::array<uint64_t, 3> class_counts{};
    std::array<double, 3> class_percent{};
    int samples = 0;
};

// Writes a complete dataset directory. Observations are a monotone piecewise
// linear map of a smooth latent field; the two cut points are empirical
// quantiles pooled over every generated latent pixel, so realized class
// proportions match the requested ones to within one pixel per class.
// Everything is keyed off (seed, sample, purpose) streams: regenerating with
// the same spec reproduces the directory byte for byte.
inline SyntheticSummary generate_synthetic(const SyntheticSpec& spec,
                                           const std::filesystem::path& out_dir) {
    spec.validate();
    for (double p : spec.class_proportions)
        if (p == 0.0)
            throw ValidationError(
                "synthetic spec: a zero class proportion is unattainable, every threshold "
                "interval carries positive mass");
    namespace fs = std::filesystem;
    fs::create_directories(out_dir / "tensors");
    fs::create_directories(out_dir / "obs");

    const int n_total = spec.n_train + spec.n_val + spec.n_test;
    auto kernel = detail::l2_gauss_kernel(spec.field_smoothness);

    auto sample_id = [&](int i) {
        const char* split = i < spec.n_train ? "train" : (i < spec.n_train + spec.n_val ? "val" : "test");
        int local = i < spec.n_train ? i
                    : i < spec.n_train + spec.n_val ? i - spec.n_train
                                                    : i - spec.n_train - spec.n_val;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%s_%04d", split, local);
        return std::string(buf);
    };

    // Pass 1: latent truth fields, pooled for quantile calibration.
    std::vector<GridD> latents;
    latents.reserve(n_total);
    std::vector<double> pool;
    pool.reserve(static_cast<size_t>(n_total) * spec.h * spec.w);
    for (int i = 0; i < n_total; ++i) {
        Rng rng(derive_stream(spec.seed, "latent", {static_cast<uint64_t>(i)}));
        latents.push_back(detail::smooth_field(rng, static_cast<int>(spec.h), static_cast<int>(spec.w), kernel));
        pool.insert(pool.end(), latents.back().v.begin(), latents.back().v.end());
    }
    std::vector<double> sorted = pool;
    std::sort(sorted.begin(), sorted.end());
    const size_t n_pool = sorted.size();
    auto quantile_cut = [&](double frac) {
        size_t idx = static_cast<size_t>(std::floor(frac * double(n_pool)));
        idx = std::min(idx, n_pool - 1);
        return sorted[idx];
    };
    const double a1 = quantile_cut(spec.class_proportions[0]);
    const double a2 = quantile_cut(spec.class_proportions[0] + spec.class_proportions[1]);
    const double lmin = sorted.front(), lmax = sorted.back();
    const double rain = spec.thresholds.rain_threshold;
    const double heavy = spec.thresholds.heavy_threshold;

    auto latent_to_mm = [&](double z) {
        if (z < a1) {
            double f = (a1 > lmin) ? (z - lmin) / (a1 - lmin) : 0.0;
            return std::max(0.0, f) * rain * 0.999;
        }
        if (z < a2) {
            double f = (z - a1) / (a2 - a1);
            return rain + f * (heavy - rain) * 0.999;
        }
        double f = (lmax > a2) ? (z - a2) / (lmax - a2) : 0.0;
        return heavy + std::min(1.0, f) * (spec.vmax - heavy);
    };
    // float32 storage must preserve the class chosen in double precision.
    auto to_f32_in_class = [&](double v, int k) {
        float f = static_cast<float>(v);
        ThresholdSpec th = spec.thresholds;
        auto cls = [&](float x) { return x >= th.heavy_threshold ? 2 : (x >= th.rain_threshold ? 1 : 0); };
        for (int guard = 0; guard < 8 && cls(f) != k; ++guard)
            f = std::nextafterf(f, cls(f) > k ? -std::numeric_limits<float>::infinity()
                                              : std::numeric_limits<float>::infinity());
        return std::max(f, 0.0f);
    };

    // Per-channel affine so channels carry distinct scales and offsets.
    Rng chan_rng(derive_stream(spec.seed, "channel_affine"));
    std::vector<double> ch_scale(spec.c), ch_offset(spec.c);
    for (long c = 0; c < spec.c; ++c) {
        ch_scale[c] = chan_rng.uniform(0.5, 2.0);
        ch_offset[c] = chan_rng.uniform(-1.0, 1.0);
    }
    const double rho = spec.correlation_strength;
    const double noise_w = std::sqrt(std::max(0.0, 1.0 - rho * rho));

    SyntheticSummary summary;
    summary.samples = n_total;

    DatasetManifest man;
    man.name = spec.name;
    man.shape = {spec.t, spec.c, spec.h, spec.w};
    for (long c = 0; c < spec.c; ++c) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "ch%02ld", c);
        man.channel_names.emplace_back(buf);
    }
    man.thresholds = spec.thresholds;
    man.splits["train"] = {};
    man.splits["val"] = {};
    man.splits["test"] = {};

    // Pass 2: map observations, synthesize predictor channels, write files.
    for (int i = 0; i < n_total; ++i) {
        const std::string id = sample_id(i);
        const GridD& latent = latents[i];

        PrbTensor obs;
        obs.dims = {static_cast<uint32_t>(spec.h), static_cast<uint32_t>(spec.w)};
        obs.values.resize(latent.v.size());
        for (size_t p = 0; p < latent.v.size(); ++p) {
            double z = latent.v[p];
            int k = z < a1 ? 0 : (z < a2 ? 1 : 2);
            obs.values[p] = to_f32_in_class(latent_to_mm(z), k);
            ++summary.class_counts[k];
        }
        summary.pixels += latent.v.size();

        PrbTensor x;
        x.dims = {static_cast<uint32_t>(spec.t), static_cast<uint32_t>(spec.c),
                  static_cast<uint32_t>(spec.h), static_cast<uint32_t>(spec.w)};
        x.values.resize(static_cast<size_t>(spec.t) * spec.c * spec.h * spec.w);
        size_t off = 0;
        for (long t = 0; t < spec.t; ++t) {
            for (long c = 0; c < spec.c; ++c) {
                Rng nrng(derive_stream(spec.seed, "noise",
                                       {static_cast<uint64_t>(i), static_cast<uint64_t>(t),
                                        static_cast<uint64_t>(c)}));
                GridD noise = detail::smooth_field(nrng, static_cast<int>(spec.h),
                                                   static_cast<int>(spec.w), kernel);
                for (size_t p = 0; p < latent.v.size(); ++p) {
                    double v = rho * latent.v[p] + noise_w * noise.v[p];
                    x.values[off + p] = static_cast<float>(ch_scale[c] * v + ch_offset[c]);
                }
                off += latent.v.size();
            }
        }

        prb_write(out_dir / "obs" / (id + ".prb"), obs);
        prb_write(out_dir / "tensors" / (id + ".prb"), x);
        if (i < spec.n_train)
            man.splits["train"].push_back(id);
        else if (i < spec.n_train + spec.n_val)
            man.splits["val"].push_back(id);
        else
            man.splits["test"].push_back(id);
    }

    for (int k = 0; k < 3; ++k)
        summary.class_percent[k] = 100.0 * double(summary.class_counts[k]) / double(summary.pixels);

    write_file_bytes(out_dir / "manifest.json", manifest_to_json(man).dump(2) + "\n");
    return summary;
}

}  // namespace postrain
