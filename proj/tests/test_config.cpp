#include <doctest.h>

#include <fstream>

#include "cmtda/config.hpp"
#include "test_util.hpp"

using namespace cmtda;
using cmtda::test::TempDir;

TEST_CASE("run config round trips through its canonical form") {
    RunConfig cfg;
    cfg.seed = 42;
    cfg.manifest_path = "data/manifest.tsv";
    cfg.steps = {"night", "rain"};
    cfg.base.iters = 77;
    cfg.base.flags.replay = false;
    cfg.step_overrides[2]["iters"] = "33";

    const RunConfig back = RunConfig::from_map(cfg.to_map());
    CHECK(back.canonical_text() == cfg.canonical_text());
    CHECK(back.hash() == cfg.hash());
    CHECK(back.seed == 42);
    CHECK(back.base.iters == 77);
    CHECK_FALSE(back.base.flags.replay);
    CHECK(back.step_config(1).iters == 77);
    CHECK(back.step_config(2).iters == 33);
    CHECK(back.step_config(2).alpha.total_iters == 33);
}

TEST_CASE("config hash is stable and sensitive") {
    RunConfig a, b;
    a.manifest_path = b.manifest_path = "m.tsv";
    CHECK(a.hash() == b.hash());
    b.seed = 999;
    CHECK(a.hash() != b.hash());
}

TEST_CASE("config files parse with comments and overrides") {
    TempDir tmp("cfg");
    const std::string path = tmp / "run.cfg";
    {
        std::ofstream os(path);
        os << "# training seed\n";
        os << "seed=5\n";
        os << "manifest=m.tsv\n";
        os << "steps=night,rain,fog,snow\n";
        os << "iters=120  # trailing comment\n";
        os << "flags.blending=0\n";
        os << "step3.lr=0.005\n";
    }
    const RunConfig cfg = load_run_config(path);
    CHECK(cfg.seed == 5);
    CHECK(cfg.base.iters == 120);
    CHECK_FALSE(cfg.base.flags.blending);
    CHECK(cfg.step_config(3).lr == doctest::Approx(0.005f));
    CHECK(cfg.step_config(1).lr == cfg.base.lr);

    SUBCASE("unknown keys are rejected") {
        std::ofstream os(path, std::ios::app);
        os << "mystery=1\n";
        os.close();
        CHECK_THROWS_AS(load_run_config(path), ConfigError);
    }
    SUBCASE("duplicate step domains are rejected") {
        std::map<std::string, std::string> kv = cfg.to_map();
        kv["steps"] = "night,night";
        CHECK_THROWS_AS(RunConfig::from_map(kv), ConfigError);
    }
}

TEST_CASE("ablation presets map onto the mechanism flags") {
    RunConfig cfg;
    apply_ablation_preset(cfg, "baseline");
    CHECK_FALSE(cfg.base.flags.model_mask);
    CHECK_FALSE(cfg.base.flags.feature_mask);
    CHECK_FALSE(cfg.base.flags.blending);
    CHECK_FALSE(cfg.base.flags.replay);
    CHECK(cfg.base.flags.with_source);

    apply_ablation_preset(cfg, "model");
    CHECK(cfg.base.flags.model_mask);
    CHECK_FALSE(cfg.base.flags.feature_mask);

    apply_ablation_preset(cfg, "model-feature");
    CHECK(cfg.base.flags.feature_mask);
    CHECK_FALSE(cfg.base.flags.replay);

    apply_ablation_preset(cfg, "model-feature-replay");
    CHECK(cfg.base.flags.replay);
    CHECK_FALSE(cfg.base.flags.blending);

    apply_ablation_preset(cfg, "none");
    CHECK(cfg.base.flags.blending);

    apply_ablation_preset(cfg, "blending");
    CHECK(cfg.base.flags.blending);
    CHECK_FALSE(cfg.base.flags.model_mask);

    CHECK_THROWS_AS(apply_ablation_preset(cfg, "bogus"), ConfigError);
}

TEST_CASE("override strings must be key=value") {
    std::map<std::string, std::string> kv;
    apply_override(kv, "lr=0.5");
    CHECK(kv["lr"] == "0.5");
    CHECK_THROWS_AS(apply_override(kv, "oops"), ConfigError);
}
