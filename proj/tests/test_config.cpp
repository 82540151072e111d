#include <catch2/catch_amalgamated.hpp>

#include "postrain/config.hpp"

using namespace postrain;

TEST_CASE("defaults survive a JSON round trip") {
    RunConfig c;
    c.data.dir = "data/x";
    RunConfig back = config_from_json(config_to_json(c));
    CHECK(back.run_name == "run");
    CHECK(back.data.dir == "data/x");
    CHECK(back.model.backbone == nn::BackboneKind::swin_unet);
    CHECK(back.model.cam.enable == true);
    CHECK(back.model.cam.reduction == 16);
    CHECK(back.loss.class_weights == std::array<double, 3>{1.0, 5.0, 30.0});
    CHECK(back.loss.alpha == 100.0);
    CHECK(back.optimizer.lr == 1e-4);
    CHECK(back.train.seeds == std::vector<uint64_t>{1, 2, 3});
    CHECK(back.train.selection_metric == SelectionMetric::rain_csi);
    CHECK(back.eval.aggregation == Aggregation::micro);
}

TEST_CASE("unknown keys are rejected at every nesting level") {
    ordered_json j = config_to_json(RunConfig{});
    SECTION("top level") {
        j["lr"] = 0.01;  // classic typo for optimizer.lr
        CHECK_THROWS_AS(config_from_json(j), ConfigError);
    }
    SECTION("data block") {
        j["data"]["normalise"] = true;
        CHECK_THROWS_AS(config_from_json(j), ConfigError);
    }
    SECTION("model block") {
        j["model"]["backbon"] = "unet";
        CHECK_THROWS_AS(config_from_json(j), ConfigError);
    }
    SECTION("cam block") {
        j["model"]["cam"]["reduct"] = 8;
        CHECK_THROWS_AS(config_from_json(j), ConfigError);
    }
    SECTION("swin block") {
        j["model"]["swin"]["windows"] = 7;
        CHECK_THROWS_AS(config_from_json(j), ConfigError);
    }
    SECTION("loss block") {
        j["loss"]["weights"] = {1, 2, 3};
        CHECK_THROWS_AS(config_from_json(j), ConfigError);
    }
    SECTION("optimizer block") {
        j["optimizer"]["momentum"] = 0.9;
        CHECK_THROWS_AS(config_from_json(j), ConfigError);
    }
    SECTION("train block") {
        j["train"]["epoch"] = 10;
        CHECK_THROWS_AS(config_from_json(j), ConfigError);
    }
    SECTION("eval block") {
        j["eval"]["agg"] = "micro";
        CHECK_THROWS_AS(config_from_json(j), ConfigError);
    }
}

TEST_CASE("malformed values are config errors, not crashes") {
    ordered_json j = config_to_json(RunConfig{});
    SECTION("wrong type") {
        j["optimizer"]["lr"] = "fast";
        CHECK_THROWS_AS(config_from_json(j), ConfigError);
    }
    SECTION("bad enum string") {
        j["model"]["backbone"] = "transformer";
        CHECK_THROWS_AS(config_from_json(j), ConfigError);
    }
    SECTION("bad schema version") {
        j["schema_version"] = 999;
        CHECK_THROWS_AS(config_from_json(j), ConfigError);
    }
    SECTION("weights arity") {
        j["loss"]["class_weights"] = {1.0, 5.0};
        CHECK_THROWS_AS(config_from_json(j), ConfigError);
    }
}

TEST_CASE("validation inspects value ranges") {
    RunConfig c;
    SECTION("lr") {
        c.optimizer.lr = 0.0;
        CHECK_THROWS_AS(c.validate(), ConfigError);
    }
    SECTION("epochs") {
        c.train.epochs = 0;
        CHECK_THROWS_AS(c.validate(), ConfigError);
    }
    SECTION("seeds") {
        c.train.seeds.clear();
        CHECK_THROWS_AS(c.validate(), ConfigError);
    }
    SECTION("negative weight") {
        c.loss.class_weights[1] = -2.0;
        CHECK_THROWS_AS(c.validate(), ConfigError);
    }
    SECTION("optimizer kind") {
        c.optimizer.kind = "sgd";
        CHECK_THROWS_AS(c.validate(), ConfigError);
    }
}

TEST_CASE("dotted overrides reach nested keys and parse JSON literals") {
    ordered_json j = config_to_json(RunConfig{});
    apply_override(j, "optimizer.lr=0.01");
    apply_override(j, "model.backbone=unet");
    apply_override(j, "loss.class_weights=[1,2,3]");
    apply_override(j, "model.cam.enable=false");
    apply_override(j, "train.seeds=[9]");
    apply_override(j, "run_name=sweep-a");
    RunConfig c = config_from_json(j);
    CHECK(c.optimizer.lr == 0.01);
    CHECK(c.model.backbone == nn::BackboneKind::unet);
    CHECK(c.loss.class_weights == std::array<double, 3>{1.0, 2.0, 3.0});
    CHECK(c.model.cam.enable == false);
    CHECK(c.train.seeds == std::vector<uint64_t>{9});
    CHECK(c.run_name == "sweep-a");
}

TEST_CASE("an override with an unknown key is rejected before any work") {
    ordered_json j = config_to_json(RunConfig{});
    apply_override(j, "optimizer.learning_rate=0.01");
    CHECK_THROWS_AS(config_from_json(j), ConfigError);

    ordered_json j2 = config_to_json(RunConfig{});
    CHECK_THROWS_AS(apply_override(j2, "no_equals_sign"), ConfigError);
    CHECK_THROWS_AS(apply_override(j2, "=5"), ConfigError);
}

TEST_CASE("config hash is stable and value sensitive") {
    RunConfig a;
    RunConfig b;
    CHECK(config_hash_hex(a) == config_hash_hex(b));
    CHECK(config_hash_hex(a).size() == 64);
    b.optimizer.lr = 2e-4;
    CHECK(config_hash_hex(a) != config_hash_hex(b));

    auto bytes = config_hash_bytes(a);
    std::string hex;
    for (uint8_t v : bytes) {
        char buf[3];
        snprintf(buf, 3, "%02x", v);
        hex += buf;
    }
    CHECK(hex == config_hash_hex(a));
}

TEST_CASE("the key listing covers exactly the accepted schema") {
    auto keys = config_key_listing();
    REQUIRE(!keys.empty());

    // every listed key is accepted as an override target
    for (const auto& [key, def] : keys) {
        ordered_json j = config_to_json(RunConfig{});
        apply_override(j, key + "=" + def);
        RunConfig c = config_from_json(j);  // must not throw
        (void)c;
    }

    // and the listing includes the headline knobs with their defaults
    auto find = [&](const std::string& k) -> std::string {
        for (const auto& [key, def] : keys)
            if (key == k) return def;
        return "<missing>";
    };
    CHECK(find("optimizer.lr") == "0.0001");
    CHECK(find("loss.alpha") == "100.0");
    CHECK(find("loss.class_weights") == "[1.0,5.0,30.0]");
    CHECK(find("model.cam.enable") == "true");
    CHECK(find("train.selection_metric") == "\"rain_csi\"");
    CHECK(find("data.obs_policy") == "\"resample_then_classify\"");
}

TEST_CASE("loss and model config projections honor the toggles") {
    RunConfig c;
    c.model.regression_head = false;
    nn::HybridLossConfig l = c.loss_config();
    CHECK(l.enable_regression == false);  // no head means no regression term
    nn::ModelConfig m = c.model_config();
    CHECK(m.use_regression_head == false);

    c.model.cam.enable = false;
    CHECK(c.model_config().use_cam == false);
}
