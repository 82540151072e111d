#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include <nlohmann/json.hpp>

#include "postrain/common.hpp"
#include "postrain/dataio.hpp"

namespace postrain {

// ---------------------------------------------------------------------------
// Contingency counts, one-vs-rest per class
// ---------------------------------------------------------------------------

struct Contingency {
    uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

    uint64_t total() const { return tp + fp + tn + fn; }
    Contingency& operator+=(const Contingency& o) {
        tp += o.tp;
        fp += o.fp;
        tn += o.tn;
        fn += o.fn;
        return *this;
    }
};

// One-vs-rest tables for all classes in a single pass. A non-null mask
// excludes cells where it is false (ungauged locations) from every table.
inline std::array<Contingency, kNumClasses> count_contingency(const RainClassGrid& pred,
                                                              const RainClassGrid& obs,
                                                              const Grid<uint8_t>* mask = nullptr) {
    if (!pred.grid.same_shape(obs.grid))
        throw ValidationError("prediction and observation grids differ in shape");
    if (mask && !mask->same_shape(obs.grid))
        throw ValidationError("evaluation mask differs in shape from the grids");
    std::array<Contingency, kNumClasses> out{};
    for (size_t i = 0; i < pred.grid.v.size(); ++i) {
        if (mask && !mask->v[i]) continue;
        int p = pred.grid.v[i], o = obs.grid.v[i];
        for (int k = 0; k < kNumClasses; ++k) {
            bool pp = (p == k), oo = (o == k);
            if (pp && oo)
                ++out[k].tp;
            else if (pp && !oo)
                ++out[k].fp;
            else if (!pp && oo)
                ++out[k].fn;
            else
                ++out[k].tn;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Skill scores
// ---------------------------------------------------------------------------

enum class HssVariant { standard, paper_verbatim };

namespace detail {
inline double safe_div(double num, double den) {
    return den == 0.0 ? std::numeric_limits<double>::quiet_NaN() : num / den;
}
}  // namespace detail

inline double metric_csi(const Contingency& c) {
    return detail::safe_div(double(c.tp), double(c.tp + c.fn + c.fp));
}
inline double metric_pod(const Contingency& c) {
    return detail::safe_div(double(c.tp), double(c.tp + c.fn));
}
inline double metric_far(const Contingency& c) {
    return detail::safe_div(double(c.fp), double(c.tp + c.fp));
}
inline double metric_bias(const Contingency& c) {
    return detail::safe_div(double(c.tp + c.fp), double(c.tp + c.fn));
}
inline double metric_accuracy(const Contingency& c) {
    return detail::safe_div(double(c.tp + c.tn), double(c.total()));
}

inline double metric_hss(const Contingency& c, HssVariant variant = HssVariant::standard) {
    double tp = double(c.tp), fp = double(c.fp), tn = double(c.tn), fn = double(c.fn);
    double num = 2.0 * (tp * tn - fn * fp);
    double den;
    if (variant == HssVariant::standard)
        den = (tp + fn) * (fn + tn) + (tp + fp) * (fp + tn);
    else
        den = fp * fp + tn * tn + 2.0 * tp * fn + (fp + tn) * (tp + fp);
    return detail::safe_div(num, den);
}

struct ClassMetrics {
    double csi = 0, pod = 0, far = 0, bias = 0, accuracy = 0, hss = 0, hss_paper = 0;
};

inline ClassMetrics compute_metrics(const Contingency& c) {
    ClassMetrics m;
    m.csi = metric_csi(c);
    m.pod = metric_pod(c);
    m.far = metric_far(c);
    m.bias = metric_bias(c);
    m.accuracy = metric_accuracy(c);
    m.hss = metric_hss(c, HssVariant::standard);
    m.hss_paper = metric_hss(c, HssVariant::paper_verbatim);
    return m;
}

// ---------------------------------------------------------------------------
// Split-level evaluation
// ---------------------------------------------------------------------------

enum class Aggregation { micro, macro };

inline const char* aggregation_name(Aggregation a) {
    return a == Aggregation::micro ? "micro" : "macro";
}

inline Aggregation aggregation_from_name(const std::string& s) {
    if (s == "micro") return Aggregation::micro;
    if (s == "macro") return Aggregation::macro;
    throw ValidationError("unknown aggregation '" + s + "'");
}

struct MetricsReport {
    std::string aggregation = "micro";
    uint64_t samples = 0;
    uint64_t cells = 0;
    double overall_accuracy = std::numeric_limits<double>::quiet_NaN();
    std::array<Contingency, kNumClasses> counts{};  // pooled, always
    std::array<ClassMetrics, kNumClasses> per_class{};

    ordered_json to_json() const;
    static MetricsReport from_json(const ordered_json& j);
};

namespace detail {

// NaN is not representable in JSON; the sentinel is null.
inline ordered_json json_num(double v) {
    if (!std::isfinite(v)) return nullptr;
    return v;
}
inline double num_json(const ordered_json& j) {
    if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
    return j.get<double>();
}

inline constexpr std::array<std::pair<const char*, double ClassMetrics::*>, 7> kMetricFields{{
    {"csi", &ClassMetrics::csi},
    {"pod", &ClassMetrics::pod},
    {"far", &ClassMetrics::far},
    {"bias", &ClassMetrics::bias},
    {"accuracy", &ClassMetrics::accuracy},
    {"hss", &ClassMetrics::hss},
    {"hss_paper", &ClassMetrics::hss_paper},
}};

}  // namespace detail

inline ordered_json MetricsReport::to_json() const {
    ordered_json j;
    j["aggregation"] = aggregation;
    j["samples"] = samples;
    j["cells"] = cells;
    j["overall_accuracy"] = detail::json_num(overall_accuracy);
    ordered_json classes;
    for (int k = 0; k < kNumClasses; ++k) {
        ordered_json cj;
        cj["counts"] = {{"tp", counts[k].tp}, {"fp", counts[k].fp}, {"tn", counts[k].tn}, {"fn", counts[k].fn}};
        for (const auto& [name, field] : detail::kMetricFields)
            cj[name] = detail::json_num(per_class[k].*field);
        classes[class_name(k)] = cj;
    }
    j["classes"] = classes;
    return j;
}

inline MetricsReport MetricsReport::from_json(const ordered_json& j) {
    MetricsReport r;
    try {
        r.aggregation = j.at("aggregation").get<std::string>();
        r.samples = j.at("samples").get<uint64_t>();
        r.cells = j.at("cells").get<uint64_t>();
        r.overall_accuracy = detail::num_json(j.at("overall_accuracy"));
        for (int k = 0; k < kNumClasses; ++k) {
            const auto& cj = j.at("classes").at(class_name(k));
            r.counts[k].tp = cj.at("counts").at("tp").get<uint64_t>();
            r.counts[k].fp = cj.at("counts").at("fp").get<uint64_t>();
            r.counts[k].tn = cj.at("counts").at("tn").get<uint64_t>();
            r.counts[k].fn = cj.at("counts").at("fn").get<uint64_t>();
            for (const auto& [name, field] : detail::kMetricFields)
                r.per_class[k].*field = detail::num_json(cj.at(name));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("invalid metrics report: ") + e.what());
    }
    return r;
}

// Streams (pred, obs) pairs and produces a MetricsReport. Micro pools counts
// over all cells first; macro averages per-sample metric values, skipping
// samples where a metric is undefined.
class Evaluator {
public:
    void add(const RainClassGrid& pred, const RainClassGrid& obs,
             const Grid<uint8_t>* mask = nullptr) {
        auto tables = count_contingency(pred, obs, mask);
        for (int k = 0; k < kNumClasses; ++k) {
            pooled_[k] += tables[k];
            ClassMetrics m = compute_metrics(tables[k]);
            int fi = 0;
            for (const auto& [name, field] : detail::kMetricFields) {
                (void)name;
                double v = m.*field;
                if (std::isfinite(v)) {
                    macro_sum_[k][fi] += v;
                    ++macro_n_[k][fi];
                }
                ++fi;
            }
        }
        for (size_t i = 0; i < pred.grid.v.size(); ++i) {
            if (mask && !mask->v[i]) continue;
            if (pred.grid.v[i] == obs.grid.v[i]) ++correct_;
            ++cells_;
        }
        ++samples_;
    }

    uint64_t samples() const { return samples_; }

    const std::array<Contingency, kNumClasses>& pooled() const { return pooled_; }

    MetricsReport report(Aggregation agg = Aggregation::micro) const {
        MetricsReport r;
        r.aggregation = aggregation_name(agg);
        r.samples = samples_;
        r.cells = cells_;
        r.overall_accuracy = detail::safe_div(double(correct_), double(cells_));
        r.counts = pooled_;
        for (int k = 0; k < kNumClasses; ++k) {
            if (agg == Aggregation::micro) {
                r.per_class[k] = compute_metrics(pooled_[k]);
            } else {
                int fi = 0;
                for (const auto& [name, field] : detail::kMetricFields) {
                    (void)name;
                    r.per_class[k].*field = detail::safe_div(macro_sum_[k][fi], double(macro_n_[k][fi]));
                    ++fi;
                }
            }
        }
        return r;
    }

private:
    std::array<Contingency, kNumClasses> pooled_{};
    std::array<std::array<double, 7>, kNumClasses> macro_sum_{};
    std::array<std::array<uint64_t, 7>, kNumClasses> macro_n_{};
    uint64_t samples_ = 0;
    uint64_t cells_ = 0;
    uint64_t correct_ = 0;
};

}  // namespace postrain
