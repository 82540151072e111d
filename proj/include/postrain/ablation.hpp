#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "postrain/config.hpp"
#include "postrain/trainer.hpp"

namespace postrain {

// The three framework components the ablation harness can disable.
inline const std::array<const char*, 3> kAblationToggles{"weighted_loss", "multitask", "cam"};

inline RunConfig apply_ablation_toggles(RunConfig cfg, const std::array<bool, 3>& on) {
    cfg.loss.enable_weighting = on[0];
    cfg.model.regression_head = on[1];
    cfg.model.cam.enable = on[2];
    return cfg;
}

struct AblationCell {
    std::array<bool, 3> on{true, true, true};
    std::string label;
    std::string run_name;
    long param_count = 0;
    TrainOutcome outcome;
    AggStat rain_csi, heavy_csi, rain_hss, heavy_hss;
};

struct AblationTable {
    std::vector<std::string> varied;  // which toggles were swept
    std::vector<AblationCell> cells;  // cells[0] has every varied toggle on
};

namespace abldetail {

inline int toggle_index(const std::string& name) {
    for (int i = 0; i < 3; ++i)
        if (name == kAblationToggles[i]) return i;
    throw ConfigError("unknown ablation toggle '" + name + "' (expected weighted_loss, multitask, cam)");
}

inline void cell_aggregates(AblationCell& cell) {
    std::vector<double> rc, hc, rh, hh;
    for (const SeedResult& s : cell.outcome.seeds) {
        if (!s.ok) continue;
        rc.push_back(s.test.per_class[1].csi);
        hc.push_back(s.test.per_class[2].csi);
        rh.push_back(s.test.per_class[1].hss);
        hh.push_back(s.test.per_class[2].hss);
        cell.param_count = s.param_count;
    }
    cell.rain_csi = aggregate_values(rc, "csi");
    cell.heavy_csi = aggregate_values(hc, "csi");
    cell.rain_hss = aggregate_values(rh, "hss");
    cell.heavy_hss = aggregate_values(hh, "hss");
}

}  // namespace abldetail

// Sweeps every on/off combination of the requested toggles (all three when
// none are named), each combination trained over the configured seeds. The
// first cell keeps every varied toggle enabled and serves as the delta
// baseline.
inline AblationTable run_ablation(const RunConfig& base, std::vector<std::string> toggles,
                                  const std::filesystem::path& runs_root = default_runs_root(),
                                  std::ostream* progress = nullptr) {
    if (toggles.empty()) toggles = {kAblationToggles.begin(), kAblationToggles.end()};
    std::vector<int> vary;
    for (const auto& t : toggles) {
        int idx = abldetail::toggle_index(t);
        for (int v : vary)
            if (v == idx) throw ConfigError("ablation toggle '" + t + "' listed twice");
        vary.push_back(idx);
    }

    AblationTable table;
    table.varied = toggles;
    const int n = int(vary.size());
    for (int mask = 0; mask < (1 << n); ++mask) {
        AblationCell cell;
        cell.on = {base.loss.enable_weighting, base.model.regression_head, base.model.cam.enable};
        for (int j = 0; j < n; ++j) cell.on[vary[j]] = ((mask >> j) & 1) == 0;
        cell.label = std::string("wloss:") + (cell.on[0] ? "on" : "off") +
                     " mtl:" + (cell.on[1] ? "on" : "off") + " cam:" + (cell.on[2] ? "on" : "off");
        cell.run_name = base.run_name + "-w" + (cell.on[0] ? "1" : "0") + "m" +
                        (cell.on[1] ? "1" : "0") + "c" + (cell.on[2] ? "1" : "0");

        RunConfig cfg = apply_ablation_toggles(base, cell.on);
        cfg.run_name = cell.run_name;
        if (progress) (*progress) << "[ablate] " << cell.label << "\n";
        cell.outcome = run_training(cfg, runs_root, progress);
        abldetail::cell_aggregates(cell);
        table.cells.push_back(std::move(cell));
    }
    return table;
}

inline ordered_json ablation_to_json(const AblationTable& t) {
    auto num = [](double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); };
    auto delta_pct = [&](double v, double base) -> ordered_json {
        if (!std::isfinite(v) || !std::isfinite(base) || base == 0.0) return nullptr;
        return 100.0 * (v - base) / base;
    };
    ordered_json out;
    out["varied"] = t.varied;
    ordered_json rows = ordered_json::array();
    const AblationCell* base = t.cells.empty() ? nullptr : &t.cells.front();
    for (const AblationCell& c : t.cells) {
        ordered_json row;
        row["label"] = c.label;
        row["run_name"] = c.run_name;
        row["weighted_loss"] = c.on[0];
        row["multitask"] = c.on[1];
        row["cam"] = c.on[2];
        row["param_count"] = c.param_count;
        auto metric = [&](const char* key, const AggStat& a, const AggStat& b) {
            row[key] = agg_to_json(a);
            row[key]["delta_pct"] = base ? delta_pct(a.mean, b.mean) : ordered_json(nullptr);
        };
        metric("rain_csi", c.rain_csi, base->rain_csi);
        metric("heavy_csi", c.heavy_csi, base->heavy_csi);
        metric("rain_hss", c.rain_hss, base->rain_hss);
        metric("heavy_hss", c.heavy_hss, base->heavy_hss);
        ordered_json seeds = ordered_json::array();
        for (const SeedResult& s : c.outcome.seeds) {
            seeds.push_back(ordered_json{{"seed", s.seed},
                                         {"ok", s.ok},
                                         {"diverged", s.diverged},
                                         {"best_epoch", s.ok ? ordered_json(s.best_epoch) : ordered_json(nullptr)},
                                         {"rain_csi", s.ok ? num(s.test.per_class[1].csi) : ordered_json(nullptr)},
                                         {"heavy_csi", s.ok ? num(s.test.per_class[2].csi) : ordered_json(nullptr)}});
        }
        row["seeds"] = std::move(seeds);
        rows.push_back(std::move(row));
    }
    out["rows"] = std::move(rows);
    return out;
}

}  // namespace postrain
