#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "oracles.hpp"
#include "postrain/synthetic.hpp"

using namespace postrain;
namespace fs = std::filesystem;

static SyntheticSpec small_spec() {
    SyntheticSpec s;
    s.name = "unit";
    s.t = 1;
    s.c = 2;
    s.h = 32;
    s.w = 32;
    s.n_train = 6;
    s.n_val = 2;
    s.n_test = 2;
    s.field_smoothness = 2.0;
    s.seed = 42;
    return s;
}

TEST_CASE("spec validation") {
    SyntheticSpec s = small_spec();
    s.validate();

    SECTION("proportions must sum to 1") {
        s.class_proportions = {0.9, 0.2, 0.1};
        CHECK_THROWS_AS(s.validate(), ValidationError);
        s.class_proportions = {87.24, 11.57, 1.19};  // percentages, not fractions
        CHECK_THROWS_AS(s.validate(), ValidationError);
    }
    SECTION("negative proportion") {
        s.class_proportions = {1.1, -0.2, 0.1};
        CHECK_THROWS_AS(s.validate(), ValidationError);
    }
    SECTION("correlation bounds") {
        s.correlation_strength = 1.5;
        CHECK_THROWS_AS(s.validate(), ValidationError);
    }
    SECTION("vmax below heavy threshold") {
        s.vmax = 5.0;
        CHECK_THROWS_AS(s.validate(), ValidationError);
    }
    SECTION("no samples at all") {
        s.n_train = s.n_val = s.n_test = 0;
        CHECK_THROWS_AS(s.validate(), ValidationError);
    }
    SECTION("tiny grid") {
        s.h = 1;
        CHECK_THROWS_AS(s.validate(), ValidationError);
    }
}

TEST_CASE("spec JSON round trip and unknown-key rejection") {
    SyntheticSpec s = small_spec();
    ordered_json j = synthetic_spec_to_json(s);
    SyntheticSpec back = synthetic_spec_from_json(j);
    CHECK(back.name == s.name);
    CHECK(back.h == s.h);
    CHECK(back.n_train == s.n_train);
    CHECK(back.class_proportions == s.class_proportions);
    CHECK(back.seed == s.seed);

    j["typo_key"] = 3;
    CHECK_THROWS_AS(synthetic_spec_from_json(j), ValidationError);
}

TEST_CASE("generated dataset hits the requested class mix") {
    SyntheticSpec s = small_spec();
    s.n_train = 20;  // 20*1024 + 4*1024 pixels, enough for a 1.5pp check
    fs::path dir = fs::temp_directory_path() / "postrain_syn_mix";
    fs::remove_all(dir);
    SyntheticSummary sum = generate_synthetic(s, dir);

    CHECK(sum.samples == 24);
    CHECK(sum.pixels == uint64_t(24) * 32 * 32);
    for (int k = 0; k < 3; ++k)
        CHECK(sum.class_percent[k] ==
              Catch::Approx(100.0 * s.class_proportions[k]).margin(1.5));

    // Re-derive the class counts from the files themselves.
    Dataset ds = Dataset::open(dir);
    std::array<uint64_t, 3> counts{};
    for (const auto& id : ds.all_ids()) {
        RainClassGrid g = classify_rain(ds.load_observation(id), ds.manifest().thresholds);
        for (uint8_t v : g.grid.v) counts[v]++;
    }
    CHECK(counts == sum.class_counts);
    fs::remove_all(dir);
}

TEST_CASE("regeneration is byte identical; a different seed is not") {
    SyntheticSpec s = small_spec();
    fs::path d1 = fs::temp_directory_path() / "postrain_syn_a";
    fs::path d2 = fs::temp_directory_path() / "postrain_syn_b";
    fs::path d3 = fs::temp_directory_path() / "postrain_syn_c";
    for (const auto& d : {d1, d2, d3}) fs::remove_all(d);
    generate_synthetic(s, d1);
    generate_synthetic(s, d2);
    SyntheticSpec s2 = s;
    s2.seed = 43;
    generate_synthetic(s2, d3);

    bool all_same = true, any_diff_seed = false;
    for (const auto& e : fs::recursive_directory_iterator(d1)) {
        if (!e.is_regular_file()) continue;
        fs::path rel = fs::relative(e.path(), d1);
        if (read_file_bytes(e.path()) != read_file_bytes(d2 / rel)) all_same = false;
        if (read_file_bytes(e.path()) != read_file_bytes(d3 / rel)) any_diff_seed = true;
    }
    CHECK(all_same);
    CHECK(any_diff_seed);
    for (const auto& d : {d1, d2, d3}) fs::remove_all(d);
}

TEST_CASE("correlation strength couples predictors to the truth") {
    SyntheticSpec hi = small_spec();
    hi.correlation_strength = 0.95;
    hi.n_train = 8;
    SyntheticSpec lo = hi;
    lo.correlation_strength = 0.0;
    lo.seed = hi.seed;

    auto channel_obs_corr = [](const SyntheticSpec& spec) {
        fs::path dir = fs::temp_directory_path() / ("postrain_syn_corr_" + spec.name);
        fs::remove_all(dir);
        generate_synthetic(spec, dir);
        Dataset ds = Dataset::open(dir);
        std::vector<double> ch, ob;
        for (const auto& id : ds.split_ids("train")) {
            NwpSample s = ds.load_sample(id);
            RainObservation o = ds.load_observation(id);
            for (int i = 0; i < s.h * s.w; ++i) {
                ch.push_back(s.tensor[i]);  // t=0, c=0
                ob.push_back(o.grid.v[i]);
            }
        }
        fs::remove_all(dir);
        return oracle::pearson(ch, ob);
    };

    hi.name = "hi";
    lo.name = "lo";
    double r_hi = channel_obs_corr(hi);
    double r_lo = channel_obs_corr(lo);
    CHECK(std::abs(r_hi) > 0.35);  // monotone but nonlinear map damps |r|
    CHECK(std::abs(r_lo) < 0.05);
    CHECK(std::abs(r_hi) > std::abs(r_lo) + 0.3);
}

TEST_CASE("a zero class proportion is rejected at generation") {
    SyntheticSpec s = small_spec();
    s.class_proportions = {0.9881, 0.0119, 0.0};
    s.validate();  // the spec itself is well formed
    fs::path dir = fs::temp_directory_path() / "postrain_syn_zero";
    fs::remove_all(dir);
    CHECK_THROWS_WITH(generate_synthetic(s, dir),
                      Catch::Matchers::ContainsSubstring("unattainable"));
    fs::remove_all(dir);
}

TEST_CASE("observations are clean mm/h values") {
    SyntheticSpec s = small_spec();
    fs::path dir = fs::temp_directory_path() / "postrain_syn_rng";
    fs::remove_all(dir);
    generate_synthetic(s, dir);
    Dataset ds = Dataset::open(dir);
    float peak = 0.0f;
    for (const auto& id : ds.all_ids()) {
        RainObservation o = ds.load_observation(id);
        for (float v : o.grid.v) {
            REQUIRE(std::isfinite(v));
            REQUIRE(v >= 0.0f);
            peak = std::max(peak, v);
        }
    }
    CHECK(peak <= float(s.vmax));
    CHECK(peak > ds.manifest().thresholds.heavy_threshold);
    fs::remove_all(dir);
}
