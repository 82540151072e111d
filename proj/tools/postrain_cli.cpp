// postrain: NWP precipitation post-processing toolkit.
//
// Subcommands: gen-synthetic, validate-data, train, evaluate, ablate, report.
// Exit codes: 0 success, 1 I/O failure, 2 validation/config failure,
// 3 training diverged on every seed.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "postrain/postrain.hpp"

namespace fs = std::filesystem;
using namespace postrain;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitValidation = 2;
constexpr int kExitDiverged = 3;

std::string config_keys_footer() {
    std::string out = "Configuration keys (set with --override key=value):\n";
    for (const auto& [key, def] : config_key_listing()) out += "  " + key + " = " + def + "\n";
    return out;
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    ordered_json j;
    if (path.empty()) {
        j = config_to_json(RunConfig{});
    } else {
        try {
            j = ordered_json::parse(read_file_bytes(path));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config file " + path + " does not parse: " + e.what());
        }
    }
    for (const std::string& ov : overrides) apply_override(j, ov);
    return config_from_json(j);  // rejects unknown keys before any work
}

void require_fresh_or_overwrite(const fs::path& dir, bool overwrite) {
    if (!fs::exists(dir)) return;
    if (!overwrite)
        throw ValidationError(dir.string() + " already exists; pass --overwrite to replace it");
    fs::remove_all(dir);
}

void print_seed_summaries(const TrainOutcome& out) {
    for (const SeedResult& s : out.seeds) {
        if (s.ok) {
            std::printf("seed %llu: best epoch %d (%s), artifacts in %s\n",
                        (unsigned long long)s.seed, s.best_epoch,
                        repdetail::fnum(s.selection).c_str(), s.dir.string().c_str());
            std::fputs(format_metric_table(s.test).c_str(), stdout);
        } else {
            std::printf("seed %llu: FAILED (%s)\n", (unsigned long long)s.seed, s.message.c_str());
        }
    }
}

int run_cli(int argc, char** argv) {
    CLI::App app{"postrain: precipitation forecast post-processing toolkit"};
    app.require_subcommand(1);
    app.footer(config_keys_footer());

    // --- gen-synthetic ---
    auto* gen = app.add_subcommand("gen-synthetic", "Generate a synthetic imbalanced rain dataset");
    std::string gen_spec, gen_out;
    bool gen_overwrite = false;
    gen->add_option("--spec", gen_spec, "Synthetic spec JSON file")->required();
    gen->add_option("--out", gen_out, "Output dataset directory")->required();
    gen->add_flag("--overwrite", gen_overwrite, "Replace an existing dataset directory");

    // --- validate-data ---
    auto* val = app.add_subcommand("validate-data", "Validate a dataset directory");
    std::string val_dir;
    val->add_option("--data", val_dir, "Dataset directory")->required();

    // --- train ---
    auto* trn = app.add_subcommand("train", "Train over all configured seeds");
    std::string trn_config, trn_runs;
    std::vector<std::string> trn_over;
    bool trn_overwrite = false;
    trn->add_option("--config", trn_config, "Experiment config JSON")->required();
    trn->add_option("--override", trn_over, "Dotted-path config override key=value")
        ->take_all()
        ->allow_extra_args(false);
    trn->add_option("--runs-dir", trn_runs, "Run root (default POSTRAIN_RUNS_DIR or ./runs)");
    trn->add_flag("--overwrite", trn_overwrite, "Replace existing run directories");

    // --- evaluate ---
    auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset split");
    std::string ev_ckpt, ev_config, ev_data, ev_split = "test", ev_out;
    std::vector<std::string> ev_over;
    ev->add_option("--ckpt", ev_ckpt, "Checkpoint file (ckpt_best.bin)")->required();
    ev->add_option("--config", ev_config, "Config JSON (default: config.json beside the checkpoint)");
    ev->add_option("--data", ev_data, "Dataset directory (default: data.dir from the config)");
    ev->add_option("--split", ev_split, "Split to evaluate (train|val|test)");
    ev->add_option("--out", ev_out, "Write the metrics report JSON (and CSV) here");
    ev->add_option("--override", ev_over, "Dotted-path config override key=value")
        ->take_all()
        ->allow_extra_args(false);

    // --- ablate ---
    auto* abl = app.add_subcommand("ablate", "Sweep component on/off combinations");
    std::string abl_config, abl_runs, abl_toggles, abl_out;
    std::vector<std::string> abl_over;
    bool abl_overwrite = false;
    abl->add_option("--config", abl_config, "Experiment config JSON")->required();
    abl->add_option("--toggles", abl_toggles,
                    "Comma-separated subset of weighted_loss,multitask,cam (default: all)");
    abl->add_option("--override", abl_over, "Dotted-path config override key=value")
        ->take_all()
        ->allow_extra_args(false);
    abl->add_option("--runs-dir", abl_runs, "Run root (default POSTRAIN_RUNS_DIR or ./runs)");
    abl->add_option("--out", abl_out, "Table output directory (default <runs>/<run_name>-ablation)");
    abl->add_flag("--overwrite", abl_overwrite, "Replace existing run directories");

    // --- report ---
    auto* rep = app.add_subcommand("report", "Render summary tables and plots from runs");
    std::vector<std::string> rep_dirs;
    std::string rep_out;
    rep->add_option("runs", rep_dirs, "Run directories (seed dirs or run roots)")->required();
    rep->add_option("--out", rep_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitValidation;  // --help stays 0, usage errors map to 2
    }

    if (gen->parsed()) {
        SyntheticSpec spec = synthetic_spec_from_json(ordered_json::parse(read_file_bytes(gen_spec)));
        fs::path out_dir(gen_out);
        if (fs::exists(out_dir / "manifest.json") && !gen_overwrite)
            throw ValidationError(out_dir.string() +
                                  " already holds a dataset; pass --overwrite to regenerate");
        SyntheticSummary s = generate_synthetic(spec, out_dir);
        std::printf("wrote %d samples (%llu pixels) to %s\n", s.samples,
                    (unsigned long long)s.pixels, out_dir.string().c_str());
        for (int k = 0; k < kNumClasses; ++k)
            std::printf("  %-10s %12llu px  %7.3f%%\n", class_name(k),
                        (unsigned long long)s.class_counts[k], s.class_percent[k]);
        return kExitOk;
    }

    if (val->parsed()) {
        Dataset ds = Dataset::open(val_dir);
        ds.manifest().validate();
        size_t n = 0;
        for (const auto& id : ds.all_ids()) {
            ds.load_sample(id);
            ds.load_observation(id);
            ++n;
        }
        std::printf("ok: %zu samples, shape (%ld, %ld, %ld, %ld), splits", n,
                    ds.manifest().shape[0], ds.manifest().shape[1], ds.manifest().shape[2],
                    ds.manifest().shape[3]);
        for (const auto& [name, ids] : ds.manifest().splits)
            std::printf(" %s=%zu", name.c_str(), ids.size());
        std::printf("\n");
        return kExitOk;
    }

    if (trn->parsed()) {
        RunConfig cfg = load_config(trn_config, trn_over);
        fs::path runs_root = trn_runs.empty() ? default_runs_root() : fs::path(trn_runs);
        for (uint64_t seed : cfg.train.seeds)
            require_fresh_or_overwrite(runs_root / cfg.run_name / std::to_string(seed), trn_overwrite);
        TrainOutcome out = run_training(cfg, runs_root, &std::cerr);
        print_seed_summaries(out);
        if (out.all_diverged()) return kExitDiverged;
        if (out.n_ok() == 0) return kExitValidation;
        return kExitOk;
    }

    if (ev->parsed()) {
        fs::path ckpt_path(ev_ckpt);
        std::string cfg_path = ev_config;
        if (cfg_path.empty()) {
            fs::path beside = ckpt_path.parent_path() / "config.json";
            if (!fs::exists(beside))
                throw ValidationError("no --config given and no config.json beside " + ev_ckpt);
            cfg_path = beside.string();
        }
        RunConfig cfg = load_config(cfg_path, ev_over);
        if (!ev_data.empty()) {
            cfg.data.dir = ev_data;
            cfg.data.manifest_sha256.clear();  // evaluating an explicit other dataset
        }
        Checkpoint ck = checkpoint_read(ckpt_path);
        if (ev_over.empty() && ev_data.empty()) verify_checkpoint_config(ck, cfg);

        std::optional<ChannelStats> stats = checkpoint_stats(ck);
        RunConfig load_cfg = cfg;
        load_cfg.data.normalize = false;  // stats come from the checkpoint
        PreparedData data = prepare_data(load_cfg);
        std::vector<TrainSample> samples = data.split(ev_split);
        if (stats) apply_normalization(samples, *stats, data.t, data.c);

        nn::CamtModel model(cfg.model_config(), data.t, data.c, data.h, data.w, 1);
        load_model_state(model, ck);
        MetricsReport report = evaluate_samples(model, samples, cfg, data.manifest.thresholds);

        std::fputs(format_metric_table(report).c_str(), stdout);
        std::string js = report.to_json().dump(2) + "\n";
        if (!ev_out.empty()) {
            write_file_bytes(ev_out, js);
            fs::path csv = fs::path(ev_out).replace_extension(".csv");
            std::string c = "class,accuracy,pod,csi,far,bias,hss,hss_paper\n";
            for (int k = 0; k < kNumClasses; ++k) {
                const ClassMetrics& m = report.per_class[k];
                c += std::string(class_name(k));
                for (double v : {m.accuracy, m.pod, m.csi, m.far, m.bias, m.hss, m.hss_paper})
                    c += "," + repdetail::csv_num(v);
                c += "\n";
            }
            write_file_bytes(csv, c);
        } else {
            std::fputs(js.c_str(), stdout);
        }
        return kExitOk;
    }

    if (abl->parsed()) {
        RunConfig cfg = load_config(abl_config, abl_over);
        fs::path runs_root = abl_runs.empty() ? default_runs_root() : fs::path(abl_runs);
        std::vector<std::string> toggles;
        if (!abl_toggles.empty()) {
            size_t start = 0;
            while (start <= abl_toggles.size()) {
                size_t comma = abl_toggles.find(',', start);
                std::string t = abl_toggles.substr(
                    start, comma == std::string::npos ? std::string::npos : comma - start);
                if (!t.empty()) toggles.push_back(t);
                if (comma == std::string::npos) break;
                start = comma + 1;
            }
        }
        {
            // Validate names and clear stale run dirs before any training.
            std::vector<std::string> all =
                toggles.empty() ? std::vector<std::string>{kAblationToggles.begin(),
                                                           kAblationToggles.end()}
                                : toggles;
            int n = int(all.size());
            for (int mask = 0; mask < (1 << n); ++mask) {
                std::array<bool, 3> on{cfg.loss.enable_weighting, cfg.model.regression_head,
                                       cfg.model.cam.enable};
                for (int j = 0; j < n; ++j) {
                    int idx = abldetail::toggle_index(all[j]);
                    on[idx] = ((mask >> j) & 1) == 0;
                }
                std::string name = cfg.run_name + "-w" + (on[0] ? "1" : "0") + "m" +
                                   (on[1] ? "1" : "0") + "c" + (on[2] ? "1" : "0");
                for (uint64_t seed : cfg.train.seeds)
                    require_fresh_or_overwrite(runs_root / name / std::to_string(seed),
                                               abl_overwrite);
            }
        }
        AblationTable table = run_ablation(cfg, toggles, runs_root, &std::cerr);
        fs::path out_dir = abl_out.empty() ? runs_root / (cfg.run_name + "-ablation")
                                           : fs::path(abl_out);
        fs::create_directories(out_dir);
        write_file_bytes(out_dir / "ablation.json", ablation_to_json(table).dump(2) + "\n");
        write_file_bytes(out_dir / "ablation.md", ablation_markdown(table));
        write_file_bytes(out_dir / "ablation.csv", ablation_csv(table));
        std::fputs(ablation_markdown(table).c_str(), stdout);
        std::printf("tables written to %s\n", out_dir.string().c_str());

        bool any_ok = false, all_diverged = true;
        for (const AblationCell& c : table.cells) {
            if (c.outcome.n_ok() > 0) any_ok = true;
            if (!c.outcome.all_diverged()) all_diverged = false;
        }
        if (!any_ok) return all_diverged ? kExitDiverged : kExitValidation;
        return kExitOk;
    }

    if (rep->parsed()) {
        std::vector<fs::path> dirs(rep_dirs.begin(), rep_dirs.end());
        write_report(dirs, rep_out);
        std::printf("report written to %s\n", rep_out.c_str());
        return kExitOk;
    }

    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitValidation;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitValidation;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const nlohmann::json::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitValidation;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    }
}
