#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "postrain/ablation.hpp"
#include "postrain/bmp.hpp"
#include "postrain/checkpoint.hpp"
#include "postrain/config.hpp"
#include "postrain/trainer.hpp"
#include "postrain/verification.hpp"

namespace postrain {

// ---------------------------------------------------------------------------
// Run artifact loading
// ---------------------------------------------------------------------------

struct RunArtifacts {
    std::filesystem::path dir;
    RunConfig cfg;
    uint64_t seed = 0;
    bool has_test = false;
    MetricsReport test;
    int best_epoch = -1;
    double selection = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::array<double, 4>> steps;  // step, L_cls, L_reg, L_hybrid
};

inline RunArtifacts load_run_artifacts(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    RunArtifacts r;
    r.dir = dir;
    auto cfg_path = dir / "config.json";
    if (!fs::exists(cfg_path)) throw IoError("no config.json under " + dir.string());
    try {
        r.cfg = config_from_json(ordered_json::parse(read_file_bytes(cfg_path)));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("config.json under " + dir.string() + " does not parse: " + e.what());
    }
    // seed = directory name by convention
    try {
        r.seed = std::stoull(dir.filename().string());
    } catch (...) {
        r.seed = 0;
    }
    auto test_path = dir / "test_metrics.json";
    if (fs::exists(test_path)) {
        try {
            ordered_json tj = ordered_json::parse(read_file_bytes(test_path));
            r.test = MetricsReport::from_json(tj.at("metrics"));
            r.best_epoch = tj.value("best_epoch", -1);
            if (tj.contains("selection") && tj.at("selection").is_number())
                r.selection = tj.at("selection").get<double>();
            r.has_test = true;
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError("test_metrics.json under " + dir.string() +
                                  " does not parse: " + e.what());
        }
    }
    auto log_path = dir / "log.jsonl";
    if (fs::exists(log_path)) {
        std::istringstream in(read_file_bytes(log_path));
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            ordered_json j = ordered_json::parse(line, nullptr, false);
            if (j.is_discarded()) throw ValidationError("malformed log line under " + dir.string());
            r.steps.push_back({j.value("step", 0.0), j.value("L_cls", 0.0), j.value("L_reg", 0.0),
                               j.value("L_hybrid", 0.0)});
        }
    }
    return r;
}

// Accepts seed-level run directories and run roots holding seed directories.
inline std::vector<std::filesystem::path> expand_run_dirs(const std::vector<std::filesystem::path>& in) {
    namespace fs = std::filesystem;
    std::vector<fs::path> out;
    for (const auto& p : in) {
        if (fs::exists(p / "config.json")) {
            out.push_back(p);
            continue;
        }
        std::vector<fs::path> subs;
        if (fs::is_directory(p))
            for (const auto& e : fs::directory_iterator(p))
                if (e.is_directory() && fs::exists(e.path() / "config.json")) subs.push_back(e.path());
        if (subs.empty()) throw IoError("no run artifacts (config.json) under " + p.string());
        std::sort(subs.begin(), subs.end());
        out.insert(out.end(), subs.begin(), subs.end());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Formatting helpers
// ---------------------------------------------------------------------------

namespace repdetail {

inline std::string fnum(double v, int prec = 3) {
    if (!std::isfinite(v)) return "n/a";
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return buf;
}

inline std::string csv_num(double v) {
    return ordered_json(v).dump();  // shortest round-trip; NaN becomes null
}

inline std::string pad_left(const std::string& s, size_t w) {
    return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
}
inline std::string pad_right(const std::string& s, size_t w) {
    return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}

inline const std::array<Rgb, 3> kClassPalette{Rgb{232, 232, 232},   // no_rain
                                              Rgb{70, 130, 180},    // rain
                                              Rgb{200, 40, 60}};    // heavy_rain

inline const std::array<Rgb, 6> kSeriesPalette{Rgb{31, 119, 180}, Rgb{255, 127, 14},
                                               Rgb{44, 160, 44},  Rgb{214, 39, 40},
                                               Rgb{148, 103, 189}, Rgb{140, 86, 75}};

}  // namespace repdetail

// Aligned verification table over the rain-bearing classes, both HSS variants.
inline std::string format_metric_table(const MetricsReport& r) {
    using repdetail::fnum;
    using repdetail::pad_left;
    using repdetail::pad_right;
    std::ostringstream out;
    out << pad_right("class", 12);
    for (const char* h : {"Acc", "POD", "CSI", "FAR", "Bias", "HSS", "HSS(paper)"})
        out << pad_left(h, 11);
    out << "\n";
    for (int k = 1; k < kNumClasses; ++k) {
        const ClassMetrics& m = r.per_class[k];
        out << pad_right(class_name(k), 12);
        for (double v : {m.accuracy, m.pod, m.csi, m.far, m.bias, m.hss, m.hss_paper})
            out << pad_left(fnum(v), 11);
        out << "\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Ablation rendering
// ---------------------------------------------------------------------------

inline std::string ablation_markdown(const AblationTable& t) {
    using repdetail::fnum;
    std::ostringstream out;
    out << "| weighted_loss | multitask | cam | params | rain CSI | heavy CSI | rain HSS | heavy HSS |\n";
    out << "|---|---|---|---|---|---|---|---|\n";
    const AblationCell* base = t.cells.empty() ? nullptr : &t.cells.front();
    auto cellv = [&](const AggStat& a, const AggStat& b, bool is_base) {
        std::string s = fnum(a.mean);
        if (!is_base && std::isfinite(a.mean) && std::isfinite(b.mean) && b.mean != 0.0)
            s += " (" + fnum(100.0 * (a.mean - b.mean) / b.mean, 1) + "%)";
        return s;
    };
    for (const AblationCell& c : t.cells) {
        bool is_base = &c == base;
        out << "| " << (c.on[0] ? "on" : "off") << " | " << (c.on[1] ? "on" : "off") << " | "
            << (c.on[2] ? "on" : "off") << " | " << c.param_count << " | "
            << cellv(c.rain_csi, base->rain_csi, is_base) << " | "
            << cellv(c.heavy_csi, base->heavy_csi, is_base) << " | "
            << cellv(c.rain_hss, base->rain_hss, is_base) << " | "
            << cellv(c.heavy_hss, base->heavy_hss, is_base) << " |\n";
    }
    return out.str();
}

inline std::string ablation_csv(const AblationTable& t) {
    using repdetail::csv_num;
    std::ostringstream out;
    out << "weighted_loss,multitask,cam,param_count,rain_csi_mean,rain_csi_delta_pct,"
           "heavy_csi_mean,heavy_csi_delta_pct,rain_hss_mean,rain_hss_delta_pct,"
           "heavy_hss_mean,heavy_hss_delta_pct\n";
    const AblationCell* base = t.cells.empty() ? nullptr : &t.cells.front();
    auto delta = [&](const AggStat& a, const AggStat& b) {
        if (!std::isfinite(a.mean) || !std::isfinite(b.mean) || b.mean == 0.0)
            return std::numeric_limits<double>::quiet_NaN();
        return 100.0 * (a.mean - b.mean) / b.mean;
    };
    for (const AblationCell& c : t.cells) {
        out << (c.on[0] ? 1 : 0) << ',' << (c.on[1] ? 1 : 0) << ',' << (c.on[2] ? 1 : 0) << ','
            << c.param_count << ',' << csv_num(c.rain_csi.mean) << ','
            << csv_num(delta(c.rain_csi, base->rain_csi)) << ',' << csv_num(c.heavy_csi.mean) << ','
            << csv_num(delta(c.heavy_csi, base->heavy_csi)) << ',' << csv_num(c.rain_hss.mean) << ','
            << csv_num(delta(c.rain_hss, base->rain_hss)) << ',' << csv_num(c.heavy_hss.mean) << ','
            << csv_num(delta(c.heavy_hss, base->heavy_hss)) << "\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Charts
// ---------------------------------------------------------------------------

namespace repdetail {

struct GroupSummary {
    std::string name;
    std::vector<const RunArtifacts*> runs;  // only runs with test metrics
    ordered_json agg;
};

inline Image csi_bar_chart(const std::vector<GroupSummary>& groups) {
    const int bar_w = 34, gap = 14, group_gap = 30;
    const int left = 50, top = 30, plot_h = 220, bottom = 58;
    int x = left + 20;
    std::vector<std::pair<int, std::string>> group_label_pos;
    int bars_per_group = 2;  // rain, heavy_rain
    int width = left + 40 +
                int(groups.size()) * (bars_per_group * (bar_w + gap) + group_gap);
    Image img(std::max(width, 320), top + plot_h + bottom);
    Rgb black{0, 0, 0}, grey{200, 200, 200};

    for (int i = 0; i <= 5; ++i) {
        int y = top + plot_h - i * plot_h / 5;
        img.hline(left, img.width() - 16, y, i == 0 ? black : grey);
        img.text(8, y - 3, fnum(i * 0.2, 1), black);
    }
    img.vline(left, top, top + plot_h, black);
    img.text(left, 8, "CSI by class (mean over seeds)", black);

    for (const GroupSummary& g : groups) {
        int gx = x;
        for (int k = 1; k < kNumClasses; ++k) {
            double mean = std::numeric_limits<double>::quiet_NaN();
            const auto& cj = g.agg.at("per_class")[k].at("csi").at("mean");
            if (cj.is_number()) mean = cj.get<double>();
            if (std::isfinite(mean)) {
                int h = int(std::lround(std::clamp(mean, 0.0, 1.0) * plot_h));
                img.fill_rect(x, top + plot_h - h, bar_w, h, kClassPalette[k]);
                img.text(x, top + plot_h - h - 10, fnum(mean, 2), black);
            } else {
                img.text(x + 4, top + plot_h - 12, "n/a", black);
            }
            x += bar_w + gap;
        }
        group_label_pos.emplace_back((gx + x - gap) / 2, g.name);
        x += group_gap;
    }
    for (auto& [cx, name] : group_label_pos) {
        std::string label = name.size() > 18 ? name.substr(0, 18) : name;
        img.text(std::max(0, cx - text_width(label) / 2), top + plot_h + 8, label, black);
    }
    int lx = left, ly = top + plot_h + 28;
    for (int k = 1; k < kNumClasses; ++k) {
        img.fill_rect(lx, ly, 10, 10, kClassPalette[k]);
        img.text(lx + 14, ly + 1, class_name(k), black);
        lx += 14 + text_width(class_name(k)) + 24;
    }
    return img;
}

inline Image loss_curve_chart(const std::vector<const RunArtifacts*>& runs) {
    const int left = 72, top = 30, plot_w = 460, plot_h = 230, bottom = 56;
    Image img(left + plot_w + 24, top + plot_h + bottom);
    Rgb black{0, 0, 0}, grey{210, 210, 210};
    double max_step = 1.0, max_loss = 0.0, min_loss = std::numeric_limits<double>::infinity();
    for (const RunArtifacts* r : runs)
        for (const auto& s : r->steps) {
            max_step = std::max(max_step, s[0]);
            max_loss = std::max(max_loss, s[3]);
            min_loss = std::min(min_loss, s[3]);
        }
    if (!std::isfinite(min_loss)) min_loss = 0.0;
    if (max_loss <= min_loss) max_loss = min_loss + 1.0;

    img.text(left, 8, "L_hybrid per optimization step", black);
    for (int i = 0; i <= 4; ++i) {
        int y = top + plot_h - i * plot_h / 4;
        img.hline(left, left + plot_w, y, i == 0 ? black : grey);
        double v = min_loss + (max_loss - min_loss) * i / 4.0;
        img.text(4, y - 3, fnum(v, v >= 100 ? 0 : 3), black);
    }
    img.vline(left, top, top + plot_h, black);
    img.text(left + plot_w / 2 - 12, top + plot_h + 10, "step", black);

    int ly = top + plot_h + 26, lx = left;
    for (size_t i = 0; i < runs.size(); ++i) {
        const RunArtifacts* r = runs[i];
        Rgb c = kSeriesPalette[i % kSeriesPalette.size()];
        int px = -1, py = -1;
        for (const auto& s : r->steps) {
            int x = left + int(std::lround((s[0] - 1.0) / std::max(1.0, max_step - 1.0) * plot_w));
            int y = top + plot_h -
                    int(std::lround((s[3] - min_loss) / (max_loss - min_loss) * plot_h));
            if (px >= 0) img.line(px, py, x, y, c);
            px = x;
            py = y;
        }
        std::string label = r->cfg.run_name + "/" + std::to_string(r->seed);
        img.fill_rect(lx, ly + 2, 10, 3, c);
        img.text(lx + 14, ly - 1, label, black);
        lx += 14 + text_width(label) + 20;
        if (lx > img.width() - 120) {
            lx = left;
            ly += 12;
        }
    }
    return img;
}

inline Image class_map_image(const GridU8& obs, const GridU8& pred, const std::string& sample_id) {
    const int h = obs.h, w = obs.w;
    int cell = std::max(1, 256 / std::max(h, w));
    const int panel_w = w * cell, panel_h = h * cell;
    const int margin = 16, title_h = 26, legend_h = 30;
    Image img(margin * 3 + panel_w * 2, title_h + panel_h + legend_h + margin);
    Rgb black{0, 0, 0};
    img.text(margin, 8, "observed vs predicted classes (" + sample_id + ")", black);

    auto draw = [&](const GridU8& g, int x0) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                img.fill_rect(x0 + x * cell, title_h + y * cell, cell, cell,
                              kClassPalette[std::min<int>(g.at(y, x), 2)]);
    };
    draw(obs, margin);
    draw(pred, margin * 2 + panel_w);
    img.text(margin, title_h + panel_h + 4, "observed", black);
    img.text(margin * 2 + panel_w, title_h + panel_h + 4, "predicted", black);
    int lx = margin, ly = title_h + panel_h + legend_h - 12;
    for (int k = 0; k < kNumClasses; ++k) {
        img.fill_rect(lx, ly, 10, 10, kClassPalette[k]);
        img.text(lx + 14, ly + 1, class_name(k), black);
        lx += 14 + text_width(class_name(k)) + 22;
    }
    return img;
}

}  // namespace repdetail

// ---------------------------------------------------------------------------
// Report emission
// ---------------------------------------------------------------------------

// Writes summary.md / summary.csv, a CSI bar chart, loss curves and
// observed-vs-predicted class maps (each chart with its data CSV) into
// out_dir. Refuses runs that trained on different datasets.
inline void write_report(const std::vector<std::filesystem::path>& run_dirs_in,
                         const std::filesystem::path& out_dir, int max_class_maps = 2) {
    namespace fs = std::filesystem;
    using repdetail::csv_num;
    using repdetail::fnum;

    std::vector<fs::path> dirs = expand_run_dirs(run_dirs_in);
    if (dirs.empty()) throw ValidationError("report: no run directories given");
    std::vector<RunArtifacts> runs;
    for (const auto& d : dirs) runs.push_back(load_run_artifacts(d));

    std::string hash;
    for (const RunArtifacts& r : runs) {
        const std::string& h = r.cfg.data.manifest_sha256;
        if (hash.empty()) hash = h;
        if (h != hash)
            throw ValidationError("report: runs mix different datasets (manifest hash " + hash +
                                  " vs " + h + " in " + r.dir.string() + "); report them separately");
    }

    std::map<std::string, repdetail::GroupSummary> groups;
    for (const RunArtifacts& r : runs) {
        auto& g = groups[r.cfg.run_name];
        g.name = r.cfg.run_name;
        if (r.has_test) g.runs.push_back(&r);
    }
    std::vector<repdetail::GroupSummary> ordered;
    for (auto& [name, g] : groups) {
        std::vector<MetricsReport> reps;
        for (const RunArtifacts* r : g.runs) reps.push_back(r->test);
        g.agg = aggregate_seeds(reps);
        ordered.push_back(std::move(g));
    }

    fs::create_directories(out_dir);

    // summary table
    std::ostringstream md, csv;
    md << "# Run summary\n\n";
    md << "Test metrics aggregated over seeds (mean, population std, best).\n\n";
    md << "| run | seeds | class | CSI mean(std) | CSI best | HSS mean(std) | HSS best | POD | FAR | Bias | Acc |\n";
    md << "|---|---|---|---|---|---|---|---|---|---|---|\n";
    csv << "run,n_seeds,class,csi_mean,csi_std,csi_best,hss_mean,hss_std,hss_best,pod_mean,"
           "far_mean,bias_mean,accuracy_mean\n";
    for (const auto& g : ordered) {
        for (int k = 1; k < kNumClasses; ++k) {
            const auto& cj = g.agg.at("per_class")[k];
            auto stat = [&](const char* m, const char* f) -> double {
                const auto& v = cj.at(m).at(f);
                return v.is_number() ? v.get<double>() : std::numeric_limits<double>::quiet_NaN();
            };
            md << "| " << g.name << " | " << g.runs.size() << " | " << class_name(k) << " | "
               << fnum(stat("csi", "mean")) << "(" << fnum(stat("csi", "std")) << ") | "
               << fnum(stat("csi", "best")) << " | " << fnum(stat("hss", "mean")) << "("
               << fnum(stat("hss", "std")) << ") | " << fnum(stat("hss", "best")) << " | "
               << fnum(stat("pod", "mean")) << " | " << fnum(stat("far", "mean")) << " | "
               << fnum(stat("bias", "mean")) << " | " << fnum(stat("accuracy", "mean")) << " |\n";
            csv << g.name << ',' << g.runs.size() << ',' << class_name(k) << ','
                << csv_num(stat("csi", "mean")) << ',' << csv_num(stat("csi", "std")) << ','
                << csv_num(stat("csi", "best")) << ',' << csv_num(stat("hss", "mean")) << ','
                << csv_num(stat("hss", "std")) << ',' << csv_num(stat("hss", "best")) << ','
                << csv_num(stat("pod", "mean")) << ',' << csv_num(stat("far", "mean")) << ','
                << csv_num(stat("bias", "mean")) << ',' << csv_num(stat("accuracy", "mean")) << "\n";
        }
    }
    md << "\nDataset manifest sha256: " << (hash.empty() ? "(unset)" : hash) << "\n";
    write_file_bytes(out_dir / "summary.md", md.str());
    write_file_bytes(out_dir / "summary.csv", csv.str());

    // CSI bars
    repdetail::csi_bar_chart(ordered).save(out_dir / "csi_bars.bmp");
    {
        std::ostringstream c;
        c << "run,class,csi_mean\n";
        for (const auto& g : ordered)
            for (int k = 1; k < kNumClasses; ++k) {
                const auto& v = g.agg.at("per_class")[k].at("csi").at("mean");
                c << g.name << ',' << class_name(k) << ','
                  << (v.is_number() ? csv_num(v.get<double>()) : "null") << "\n";
            }
        write_file_bytes(out_dir / "csi_bars.csv", c.str());
    }

    // loss curves
    std::vector<const RunArtifacts*> with_steps;
    for (const RunArtifacts& r : runs)
        if (!r.steps.empty()) with_steps.push_back(&r);
    repdetail::loss_curve_chart(with_steps).save(out_dir / "loss_curves.bmp");
    {
        std::ostringstream c;
        c << "run,seed,step,L_cls,L_reg,L_hybrid\n";
        for (const RunArtifacts* r : with_steps)
            for (const auto& s : r->steps)
                c << r->cfg.run_name << ',' << r->seed << ',' << long(s[0]) << ',' << csv_num(s[1])
                  << ',' << csv_num(s[2]) << ',' << csv_num(s[3]) << "\n";
        write_file_bytes(out_dir / "loss_curves.csv", c.str());
    }

    // class maps from the first run with a checkpoint
    for (const RunArtifacts& r : runs) {
        if (!r.has_test || !fs::exists(r.dir / "ckpt_best.bin")) continue;
        Checkpoint ck = checkpoint_read(r.dir / "ckpt_best.bin");
        verify_checkpoint_config(ck, r.cfg);
        PreparedData data = prepare_data(r.cfg);
        nn::CamtModel model(r.cfg.model_config(), data.t, data.c, data.h, data.w, r.seed);
        load_model_state(model, ck);
        Dataset ds = Dataset::open(r.cfg.data.dir);
        const auto& ids = ds.split_ids("test");
        int n = int(std::min<size_t>({size_t(max_class_maps), data.test.size(), ids.size()}));
        for (int i = 0; i < n; ++i) {
            RainClassGrid pred = predict_grid(model, data.test[i], r.cfg, data.manifest.thresholds);
            repdetail::class_map_image(data.test[i].cls, pred.grid, ids[i])
                .save(out_dir / ("class_map_" + ids[i] + ".bmp"));
            std::ostringstream c;
            c << "y,x,observed,predicted\n";
            for (int y = 0; y < data.test[i].cls.h; ++y)
                for (int x = 0; x < data.test[i].cls.w; ++x)
                    c << y << ',' << x << ',' << int(data.test[i].cls.at(y, x)) << ','
                      << int(pred.grid.at(y, x)) << "\n";
            write_file_bytes(out_dir / ("class_map_" + ids[i] + ".csv"), c.str());
        }
        break;
    }
}

}  // namespace postrain
