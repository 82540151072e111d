#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "postrain/common.hpp"
#include "postrain/prb.hpp"

namespace postrain {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

// One (T, C, H, W) stack of NWP predictor fields.
struct NwpSample {
    long t = 0, c = 0, h = 0, w = 0;
    std::vector<float> tensor;  // row-major, W fastest
    std::string timestamp;      // ISO-8601
    int lead_time_hours = 0;

    size_t numel() const { return static_cast<size_t>(t) * c * h * w; }
    float& at(long ti, long ci, long yi, long xi) {
        return tensor[((static_cast<size_t>(ti) * c + ci) * h + yi) * w + xi];
    }
    const float& at(long ti, long ci, long yi, long xi) const {
        return tensor[((static_cast<size_t>(ti) * c + ci) * h + yi) * w + xi];
    }
};

// Observed rain rate in mm/h.
struct RainObservation {
    GridF grid;
    std::string timestamp;
};

struct ThresholdSpec {
    float rain_threshold = 0.1f;
    float heavy_threshold = 10.0f;

    void validate() const {
        if (!(rain_threshold >= 0.0f) || !(rain_threshold < heavy_threshold) ||
            !std::isfinite(heavy_threshold))
            throw ValidationError("thresholds must satisfy 0 <= rain < heavy, got rain=" +
                                  std::to_string(rain_threshold) +
                                  " heavy=" + std::to_string(heavy_threshold));
    }
};

// 3-class discretization: 0 = no rain, 1 = rain, 2 = heavy rain.
struct RainClassGrid {
    GridU8 grid;
};

inline constexpr int kNumClasses = 3;
inline const char* class_name(int k) {
    switch (k) {
        case 0: return "no_rain";
        case 1: return "rain";
        case 2: return "heavy_rain";
        default: return "?";
    }
}

struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> std;
};

struct SampleMeta {
    std::string timestamp;
    int lead_time_hours = 0;
};

struct DatasetManifest {
    std::string name;
    std::array<long, 4> shape{};  // (T, C, H, W)
    std::vector<std::string> channel_names;
    ThresholdSpec thresholds;
    std::map<std::string, std::vector<std::string>> splits;  // train / val / test
    std::optional<ChannelStats> normalization;
    std::map<std::string, SampleMeta> sample_meta;

    void validate() const;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// Half-open intervals per the dataset statistics tables:
// [0, rain) -> 0, [rain, heavy) -> 1, [heavy, inf) -> 2.
inline RainClassGrid classify_rain(const RainObservation& obs, const ThresholdSpec& spec) {
    spec.validate();
    RainClassGrid out;
    out.grid = GridU8(obs.grid.h, obs.grid.w);
    for (int y = 0; y < obs.grid.h; ++y) {
        for (int x = 0; x < obs.grid.w; ++x) {
            float v = obs.grid.at(y, x);
            if (!std::isfinite(v) || v < 0.0f)
                throw ValidationError("rain value at cell (" + std::to_string(y) + ", " +
                                      std::to_string(x) + ") is invalid: " + std::to_string(v));
            uint8_t k = 0;
            if (v >= spec.heavy_threshold)
                k = 2;
            else if (v >= spec.rain_threshold)
                k = 1;
            out.grid.at(y, x) = k;
        }
    }
    return out;
}

enum class ResampleMethod { bilinear, nearest };

namespace detail {

// align-corners source coordinate of target index i.
inline double src_coord(int i, int n_src, int n_dst) {
    if (n_dst == 1) return 0.0;
    return static_cast<double>(i) * (n_src - 1) / (n_dst - 1);
}

}  // namespace detail

template <typename T>
Grid<T> resample_grid(const Grid<T>& g, int th, int tw, ResampleMethod method) {
    if (g.h < 2 || g.w < 2 || th < 2 || tw < 2)
        throw ValidationError("resample_grid requires source and target dims >= 2");
    for (T v : g.v)
        if (!std::isfinite(static_cast<double>(v)))
            throw ValidationError("resample_grid: non-finite input value");
    Grid<T> out(th, tw);
    for (int y = 0; y < th; ++y) {
        double sy = detail::src_coord(y, g.h, th);
        for (int x = 0; x < tw; ++x) {
            double sx = detail::src_coord(x, g.w, tw);
            if (method == ResampleMethod::nearest) {
                int ny = std::min(g.h - 1, static_cast<int>(std::lround(sy)));
                int nx = std::min(g.w - 1, static_cast<int>(std::lround(sx)));
                out.at(y, x) = g.at(ny, nx);
            } else {
                int y0 = static_cast<int>(std::floor(sy));
                int x0 = static_cast<int>(std::floor(sx));
                int y1 = std::min(y0 + 1, g.h - 1);
                int x1 = std::min(x0 + 1, g.w - 1);
                double fy = sy - y0, fx = sx - x0;
                double v = (1 - fy) * (1 - fx) * static_cast<double>(g.at(y0, x0)) +
                           (1 - fy) * fx * static_cast<double>(g.at(y0, x1)) +
                           fy * (1 - fx) * static_cast<double>(g.at(y1, x0)) +
                           fy * fx * static_cast<double>(g.at(y1, x1));
                out.at(y, x) = static_cast<T>(v);
            }
        }
    }
    return out;
}

// Class labels may only be resampled with nearest; bilinear would invent
// fractional classes.
inline RainClassGrid resample_class_grid(const RainClassGrid& g, int th, int tw,
                                         ResampleMethod method) {
    if (method != ResampleMethod::nearest)
        throw ValidationError("class grids must be resampled with method=nearest");
    if (g.grid.h < 2 || g.grid.w < 2 || th < 2 || tw < 2)
        throw ValidationError("resample requires source and target dims >= 2");
    RainClassGrid out;
    out.grid = GridU8(th, tw);
    for (int y = 0; y < th; ++y) {
        int ny = std::min(g.grid.h - 1, static_cast<int>(std::lround(detail::src_coord(y, g.grid.h, th))));
        for (int x = 0; x < tw; ++x) {
            int nx = std::min(g.grid.w - 1, static_cast<int>(std::lround(detail::src_coord(x, g.grid.w, tw))));
            out.grid.at(y, x) = g.grid.at(ny, nx);
        }
    }
    return out;
}

// Per-channel z-score with frozen stats (computed on the training split only).
inline NwpSample normalize_channels(const NwpSample& s, const ChannelStats& stats) {
    if (static_cast<long>(stats.mean.size()) != s.c || static_cast<long>(stats.std.size()) != s.c)
        throw ValidationError("normalization stats have " + std::to_string(stats.mean.size()) +
                              " channels, sample has " + std::to_string(s.c));
    for (long c = 0; c < s.c; ++c)
        if (!(stats.std[c] > 0.0))
            throw ValidationError("channel " + std::to_string(c) +
                                  " has non-positive std; cannot normalize a degenerate channel");
    NwpSample out = s;
    for (long t = 0; t < s.t; ++t)
        for (long c = 0; c < s.c; ++c)
            for (long y = 0; y < s.h; ++y)
                for (long x = 0; x < s.w; ++x)
                    out.at(t, c, y, x) = static_cast<float>(
                        (static_cast<double>(s.at(t, c, y, x)) - stats.mean[c]) / stats.std[c]);
    return out;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

inline void DatasetManifest::validate() const {
    for (long d : shape)
        if (d <= 0) throw ValidationError("manifest shape entries must be positive");
    if (static_cast<long>(channel_names.size()) != shape[1])
        throw ValidationError("manifest channel_names has " + std::to_string(channel_names.size()) +
                              " entries but shape declares C=" + std::to_string(shape[1]));
    thresholds.validate();
    // Split ID lists must be pairwise disjoint.
    std::map<std::string, std::string> seen;
    for (const auto& [split, ids] : splits) {
        for (const auto& id : ids) {
            auto [it, fresh] = seen.emplace(id, split);
            if (!fresh)
                throw ValidationError("sample ID '" + id + "' appears in splits '" + it->second +
                                      "' and '" + split + "'");
        }
    }
    if (normalization) {
        if (static_cast<long>(normalization->mean.size()) != shape[1] ||
            static_cast<long>(normalization->std.size()) != shape[1])
            throw ValidationError("manifest normalization stats must have C entries");
    }
}

inline ordered_json manifest_to_json(const DatasetManifest& m) {
    ordered_json j;
    j["name"] = m.name;
    j["shape"] = {m.shape[0], m.shape[1], m.shape[2], m.shape[3]};
    j["channel_names"] = m.channel_names;
    j["thresholds"] = {{"rain", m.thresholds.rain_threshold}, {"heavy", m.thresholds.heavy_threshold}};
    ordered_json splits;
    for (const char* s : {"train", "val", "test"}) {
        auto it = m.splits.find(s);
        splits[s] = (it == m.splits.end()) ? std::vector<std::string>{} : it->second;
    }
    j["splits"] = splits;
    if (m.normalization) {
        j["normalization"] = {{"mean", m.normalization->mean}, {"std", m.normalization->std}};
    }
    if (!m.sample_meta.empty()) {
        ordered_json meta;
        for (const auto& [id, sm] : m.sample_meta)
            meta[id] = {{"timestamp", sm.timestamp}, {"lead_time_hours", sm.lead_time_hours}};
        j["sample_meta"] = meta;
    }
    return j;
}

inline DatasetManifest manifest_from_json(const ordered_json& j) {
    DatasetManifest m;
    try {
        m.name = j.at("name").get<std::string>();
        auto sh = j.at("shape");
        if (!sh.is_array() || sh.size() != 4)
            throw ValidationError("manifest shape must be a 4-element array (T, C, H, W)");
        for (int i = 0; i < 4; ++i) m.shape[i] = sh[i].get<long>();
        m.channel_names = j.at("channel_names").get<std::vector<std::string>>();
        m.thresholds.rain_threshold = j.at("thresholds").at("rain").get<float>();
        m.thresholds.heavy_threshold = j.at("thresholds").at("heavy").get<float>();
        for (const char* s : {"train", "val", "test"})
            if (j.at("splits").contains(s))
                m.splits[s] = j.at("splits").at(s).get<std::vector<std::string>>();
        if (j.contains("normalization")) {
            ChannelStats st;
            st.mean = j.at("normalization").at("mean").get<std::vector<double>>();
            st.std = j.at("normalization").at("std").get<std::vector<double>>();
            m.normalization = std::move(st);
        }
        if (j.contains("sample_meta")) {
            for (const auto& [id, sm] : j.at("sample_meta").items()) {
                SampleMeta meta;
                meta.timestamp = sm.value("timestamp", "");
                meta.lead_time_hours = sm.value("lead_time_hours", 0);
                m.sample_meta[id] = meta;
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("invalid manifest.json: ") + e.what());
    }
    m.validate();
    return m;
}

// ---------------------------------------------------------------------------
// Dataset directory: manifest.json + tensors/<id>.prb + obs/<id>.prb
// ---------------------------------------------------------------------------

class Dataset {
public:
    static Dataset open(const std::filesystem::path& root) {
        Dataset ds;
        ds.root_ = root;
        auto manifest_path = root / "manifest.json";
        if (!std::filesystem::exists(manifest_path))
            throw IoError("no manifest.json under " + root.string());
        ordered_json j;
        try {
            j = ordered_json::parse(read_file_bytes(manifest_path));
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError("manifest.json does not parse: " + std::string(e.what()));
        }
        ds.manifest_ = manifest_from_json(j);
        return ds;
    }

    const DatasetManifest& manifest() const { return manifest_; }
    const std::filesystem::path& root() const { return root_; }

    const std::vector<std::string>& split_ids(const std::string& split) const {
        auto it = manifest_.splits.find(split);
        if (it == manifest_.splits.end())
            throw ValidationError("dataset has no split named '" + split + "'");
        return it->second;
    }

    // All IDs in manifest order (train, then val, then test).
    std::vector<std::string> all_ids() const {
        std::vector<std::string> ids;
        for (const char* s : {"train", "val", "test"}) {
            auto it = manifest_.splits.find(s);
            if (it != manifest_.splits.end())
                ids.insert(ids.end(), it->second.begin(), it->second.end());
        }
        return ids;
    }

    NwpSample load_sample(const std::string& id) const {
        auto path = root_ / "tensors" / (id + ".prb");
        if (!std::filesystem::exists(path))
            throw IoError("sample '" + id + "': tensor file missing (" + path.string() + ")");
        PrbTensor t = prb_read(path);
        if (t.dims.size() != 4)
            throw ValidationError("sample '" + id + "': tensor rank " +
                                  std::to_string(t.dims.size()) + ", expected 4");
        for (int i = 0; i < 4; ++i)
            if (static_cast<long>(t.dims[i]) != manifest_.shape[i])
                throw ValidationError("sample '" + id + "': shape mismatch at axis " +
                                      std::to_string(i) + " (file " + std::to_string(t.dims[i]) +
                                      ", manifest " + std::to_string(manifest_.shape[i]) + ")");
        if (!all_finite(t.values))
            throw ValidationError("sample '" + id + "': tensor payload contains NaN/Inf");
        NwpSample s;
        s.t = manifest_.shape[0];
        s.c = manifest_.shape[1];
        s.h = manifest_.shape[2];
        s.w = manifest_.shape[3];
        s.tensor = std::move(t.values);
        auto mit = manifest_.sample_meta.find(id);
        if (mit != manifest_.sample_meta.end()) {
            s.timestamp = mit->second.timestamp;
            s.lead_time_hours = mit->second.lead_time_hours;
        }
        return s;
    }

    RainObservation load_observation(const std::string& id) const {
        auto path = root_ / "obs" / (id + ".prb");
        if (!std::filesystem::exists(path))
            throw IoError("sample '" + id + "': observation file missing (" + path.string() + ")");
        PrbTensor t = prb_read(path);
        if (t.dims.size() != 2)
            throw ValidationError("sample '" + id + "': observation rank " +
                                  std::to_string(t.dims.size()) + ", expected 2");
        RainObservation obs;
        obs.grid.h = static_cast<int>(t.dims[0]);
        obs.grid.w = static_cast<int>(t.dims[1]);
        obs.grid.v = std::move(t.values);
        for (float v : obs.grid.v)
            if (!std::isfinite(v) || v < 0.0f)
                throw ValidationError("sample '" + id + "': observation has negative/non-finite value");
        auto mit = manifest_.sample_meta.find(id);
        if (mit != manifest_.sample_meta.end()) obs.timestamp = mit->second.timestamp;
        return obs;
    }

    // Population mean/std per channel over a split; the caller freezes these.
    ChannelStats compute_channel_stats(const std::string& split) const {
        const auto& ids = split_ids(split);
        if (ids.empty()) throw ValidationError("cannot compute stats on empty split '" + split + "'");
        long C = manifest_.shape[1];
        std::vector<double> sum(C, 0.0), sumsq(C, 0.0);
        double count = 0.0;
        for (const auto& id : ids) {
            NwpSample s = load_sample(id);
            for (long t = 0; t < s.t; ++t)
                for (long c = 0; c < C; ++c)
                    for (long y = 0; y < s.h; ++y)
                        for (long x = 0; x < s.w; ++x) {
                            double v = s.at(t, c, y, x);
                            sum[c] += v;
                            sumsq[c] += v * v;
                        }
            count += static_cast<double>(s.t) * s.h * s.w;
        }
        ChannelStats st;
        st.mean.resize(C);
        st.std.resize(C);
        for (long c = 0; c < C; ++c) {
            st.mean[c] = sum[c] / count;
            double var = sumsq[c] / count - st.mean[c] * st.mean[c];
            st.std[c] = std::sqrt(std::max(var, 0.0));
        }
        return st;
    }

private:
    std::filesystem::path root_;
    DatasetManifest manifest_;
};

}  // namespace postrain
