#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "cmtda/trainer.hpp"
#include "test_util.hpp"

using namespace cmtda;
using cmtda::test::TempDir;

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(CMTDA_BIN) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    if (WIFEXITED(status)) return WEXITSTATUS(status);
    return -1;
}

RunConfig micro_config(const std::string& manifest, std::uint64_t seed,
                       std::vector<std::string> steps) {
    RunConfig cfg;
    cfg.seed = seed;
    cfg.manifest_path = manifest;
    cfg.steps = std::move(steps);
    cfg.arch.encoder_widths = {8, 12, 16};
    cfg.arch.decoder_widths = {12};
    cfg.base.iters = 6;
    cfg.base.batch_size = 2;
    cfg.base.crop = 32;
    cfg.base.lr = 0.02f;
    cfg.base.ema_decay = 0.9f;
    cfg.base.log_every = 2;
    cfg.source_iters = 20;
    cfg.source_lr = 0.05f;
    return cfg;
}

struct MicroData {
    TempDir tmp{"integ"};
    std::string manifest_path;

    MicroData() {
        BenchmarkSpec spec;
        spec.image_size = 32;
        spec.sizes = {10, 4, 8, 4};
        spec.domains = {"night", "rain"};
        build_benchmark(tmp / "data", spec);
        manifest_path = tmp / "data/manifest.tsv";
    }
};

}  // namespace

TEST_CASE("source training reaches 80% mIoU on the toy benchmark in 200 iterations") {
    TempDir tmp("src80");
    BenchmarkSpec spec;
    spec.sizes = {160, 32, 2, 2};
    spec.domains = {"night"};
    const Manifest m = build_benchmark(tmp / "data", spec);
    DatasetView train(m, "source", "train", true);
    DatasetView val(m, "source", "val", true);

    ArchDescriptor arch;
    arch.encoder_widths = {16, 32, 64};
    arch.decoder_widths = {32};
    SegNet model(arch);
    Rng rng = Rng::derive(11, kRngInit);
    model.init_params(rng);
    train_source(model, train, 200, 0.05f, 0.9f, 8, 64, 11);
    const EvalResult ev = evaluate_model(model, val, 5);
    MESSAGE("source-val mIoU after 200 iters: " << 100.0 * ev.miou << "%");
    CHECK(ev.miou > 0.80);
}

TEST_CASE("run_sequence on a micro benchmark") {
    MicroData data;

    SUBCASE("K=1 yields a 1x1 metric matrix") {
        RunConfig cfg = micro_config(data.manifest_path, 3, {"night"});
        const MetricMatrix mm = run_sequence(cfg, data.tmp / "run_k1");
        CHECK(mm.num_targets() == 1);
        CHECK(mm.has(0, 0));
        CHECK(accumulated_forgetting(mm) == 0.0);
    }
    SUBCASE("evaluation after step k covers exactly targets 1..k") {
        RunConfig cfg = micro_config(data.manifest_path, 3, {"night", "rain"});
        const MetricMatrix mm = run_sequence(cfg, data.tmp / "run_k2");
        CHECK(mm.has(0, 0));
        CHECK(mm.has(0, 1));
        CHECK(mm.has(1, 1));
        CHECK_FALSE(mm.has(1, 0));
    }
    SUBCASE("rerun with the same seed reproduces the metric matrix bit-for-bit") {
        RunConfig cfg = micro_config(data.manifest_path, 5, {"night", "rain"});
        run_sequence(cfg, data.tmp / "run_a");
        run_sequence(cfg, data.tmp / "run_b");
        CHECK(cmtda::test::file_bytes(data.tmp / "run_a/metrics.json") ==
              cmtda::test::file_bytes(data.tmp / "run_b/metrics.json"));
    }
    SUBCASE("config drift on an existing run directory is rejected") {
        RunConfig cfg = micro_config(data.manifest_path, 6, {"night"});
        run_sequence(cfg, data.tmp / "run_drift");
        cfg.base.iters += 1;
        CHECK_THROWS_AS(run_sequence(cfg, data.tmp / "run_drift"), ConfigError);
    }
    SUBCASE("resume skips completed steps and reproduces the same metrics") {
        RunConfig cfg = micro_config(data.manifest_path, 7, {"night", "rain"});
        const MetricMatrix full = run_sequence(cfg, data.tmp / "run_resume");
        const MetricMatrix again = run_sequence(cfg, data.tmp / "run_resume", /*resume=*/true);
        for (int k = 0; k < 2; ++k)
            for (int s = k; s < 2; ++s)
                CHECK(full.get(k, s) == doctest::Approx(again.get(k, s)).epsilon(1e-12));
    }
    SUBCASE("without-source mode demands an init checkpoint") {
        RunConfig cfg = micro_config(data.manifest_path, 8, {"night"});
        cfg.base.flags.with_source = false;
        CHECK_THROWS_AS(run_sequence(cfg, data.tmp / "run_wo"), ConfigError);
    }
}

TEST_CASE("without-source run skips source supervision but still adapts") {
    MicroData data;
    // mint an init checkpoint by training source briefly
    RunConfig warm = micro_config(data.manifest_path, 9, {"night"});
    run_sequence(warm, data.tmp / "warm");

    RunConfig cfg = micro_config(data.manifest_path, 9, {"night", "rain"});
    cfg.base.flags.with_source = false;
    cfg.init_checkpoint = data.tmp / "warm/source.ckpt";
    const MetricMatrix mm = run_sequence(cfg, data.tmp / "run_wo2");
    CHECK(mm.has(1, 1));
    // prototypes stayed untouched: every class count is zero
    const ClassPrototypes p = load_prototypes(data.tmp / "run_wo2/step_1/protos.pt0");
    for (int c = 0; c < p.num_classes; ++c) CHECK(p.count[static_cast<std::size_t>(c)] == 0);
}

TEST_CASE("CLI exit codes and smoke flow") {
    MicroData data;

    SUBCASE("missing required option is a usage error (exit 2)") {
        CHECK(run_cli("generate-data") == 2);
        CHECK(run_cli("run") == 2);
        CHECK(run_cli("report") == 2);
    }
    SUBCASE("unknown subcommand is a usage error (exit 2)") {
        CHECK(run_cli("frobnicate") == 2);
    }
    SUBCASE("report on a missing run directory fails with exit 1") {
        CHECK(run_cli("report --run " + data.tmp.str() + "/definitely_missing") == 1);
    }
    SUBCASE("generate-data refuses to overwrite without --force") {
        const std::string out = data.tmp / "gen";
        const std::string args = "generate-data --out " + out +
                                 " --size 32 --source-train 2 --source-val 1 --target-train 2 "
                                 "--target-val 1";
        CHECK(run_cli(args) == 0);
        CHECK(run_cli(args) == 1);
        CHECK(run_cli(args + " --force") == 0);
    }
    SUBCASE("run + report round trip through the CLI") {
        const std::string run_dir = data.tmp / "clirun";
        const std::string args =
            "run --manifest " + data.manifest_path + " --out " + run_dir +
            " --seed 4 --steps night --ablation baseline"
            " --set iters=4 --set batch_size=2 --set crop=32 --set source_iters=10"
            " --set arch.encoder_widths=8,12,16 --set arch.decoder_widths=12";
        CHECK(run_cli(args) == 0);
        CHECK(fs::exists(run_dir + "/metrics.json"));
        CHECK(run_cli("report --run " + run_dir) == 0);
        CHECK(fs::exists(run_dir + "/report/report.txt"));
        CHECK(fs::exists(run_dir + "/report/report.csv"));
        CHECK(fs::exists(run_dir + "/report/forgetting_curves.png"));

        // compose-preview over the micro dataset
        CHECK(run_cli("compose-preview --manifest " + data.manifest_path +
                      " --from night --onto rain --out " + (data.tmp / "prev") +
                      " --count 1 --accumulate 4") == 0);
        CHECK(fs::exists(data.tmp / "prev/preview_00_composed.png"));
    }
}
