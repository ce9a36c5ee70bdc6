#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "cmtda/config.hpp"
#include "cmtda/image_io.hpp"
#include "cmtda/metrics.hpp"
#include "cmtda/synthdata.hpp"
#include "cmtda/trainer.hpp"
#include "cmtda/weather.hpp"

namespace fs = std::filesystem;
using namespace cmtda;

namespace {

// Relative output paths can be redirected under CMTDA_RUN_ROOT.
std::string resolve_out(const std::string& out) {
    const char* root = std::getenv("CMTDA_RUN_ROOT");
    if (root && *root && fs::path(out).is_relative()) return (fs::path(root) / out).string();
    return out;
}

int cmd_generate_data(const std::string& out, std::uint64_t seed, int image_size, int source_train,
                      int source_val, int target_train, int target_val, bool force) {
    const std::string dir = resolve_out(out);
    if (fs::exists(dir) && !fs::is_empty(dir)) {
        if (!force) {
            std::cerr << "error: output directory exists (use --force to overwrite): " << dir
                      << "\n";
            return 1;
        }
        fs::remove_all(dir);
    }
    BenchmarkSpec spec;
    spec.seed = seed;
    spec.image_size = image_size;
    spec.sizes = {source_train, source_val, target_train, target_val};
    const Manifest m = build_benchmark(dir, spec);
    std::cout << "wrote " << m.entries.size() << " images under " << dir << "\n";
    return 0;
}

int cmd_run(const std::string& config_file, const std::vector<std::string>& overrides,
            const std::string& manifest, const std::string& out, std::uint64_t seed, bool seed_set,
            const std::string& ablation, bool without_source, const std::string& init_ckpt,
            const std::string& steps, bool resume) {
    RunConfig cfg;
    if (!config_file.empty()) cfg = load_run_config(config_file);
    auto kv = cfg.to_map();
    if (!manifest.empty()) kv["manifest"] = manifest;
    if (seed_set) kv["seed"] = std::to_string(seed);
    if (!init_ckpt.empty()) kv["init_checkpoint"] = init_ckpt;
    if (!steps.empty()) kv["steps"] = steps;
    for (const auto& o : overrides) apply_override(kv, o);
    cfg = RunConfig::from_map(kv);
    if (!ablation.empty()) apply_ablation_preset(cfg, ablation);
    if (without_source) {
        cfg.base.flags.with_source = false;
        if (cfg.init_checkpoint.empty())
            throw ConfigError("--without-source requires --init-checkpoint");
    }
    if (cfg.manifest_path.empty()) throw ConfigError("run needs a dataset manifest (--manifest)");

    const std::string run_dir = resolve_out(out);
    const MetricMatrix mm = run_sequence(cfg, run_dir, resume);
    std::cout << "run " << cfg.hash() << " complete: mIoU avg "
              << 100.0 * miou_average(mm) << "%, A.F. " << 100.0 * accumulated_forgetting(mm)
              << "\n";
    std::cout << "metrics: " << run_dir << "/metrics.json\n";
    return 0;
}

int cmd_report(const std::string& run_dir_in, const std::string& out, const std::string& compare,
               const std::string& label, const std::string& label2) {
    const std::string run_dir = resolve_out(run_dir_in);
    const std::string metrics = run_dir + "/metrics.json";
    if (!fs::exists(metrics)) {
        std::cerr << "error: no metrics.json under " << run_dir << "\n";
        return 1;
    }
    const MetricMatrix mm = load_metrics_json(metrics);
    const std::string out_dir = out.empty() ? run_dir + "/report" : resolve_out(out);
    render_report(mm, out_dir, label);
    if (!compare.empty()) {
        const std::string other = resolve_out(compare) + "/metrics.json";
        if (!fs::exists(other)) {
            std::cerr << "error: no metrics.json under " << compare << "\n";
            return 1;
        }
        render_comparison(mm, label, load_metrics_json(other), label2, out_dir);
    }
    std::cout << "report written to " << out_dir << "\n";
    return 0;
}

int cmd_compose_preview(const std::string& manifest_path, const std::string& from,
                        const std::string& onto, const std::string& out, int count, int accumulate,
                        std::uint64_t seed) {
    const Manifest manifest = load_manifest(manifest_path);
    DatasetView source_dom(manifest, from, "train", false);
    DatasetView target_dom(manifest, onto, "train", false);

    const Tensor& first = source_dom.image(0);
    WeatherVector wv(from, 3, first.h, first.w);
    const int n_acc = std::min(accumulate, source_dom.size());
    for (int i = 0; i < n_acc; ++i)
        accumulate_weather(wv, resize_bilinear(source_dom.image(i), first.h, first.w));

    const std::string dir = resolve_out(out);
    fs::create_directories(dir);
    ComposeParams params;
    Rng rng(seed);
    for (int i = 0; i < std::min(count, target_dom.size()); ++i) {
        const Tensor& img = target_dom.image(i);
        const ComposeResult res = compose(img, wv, params, rng);
        char name[64];
        std::snprintf(name, sizeof name, "preview_%02d_original.png", i);
        write_png_rgb(dir + "/" + name, img);
        std::snprintf(name, sizeof name, "preview_%02d_composed.png", i);
        write_png_rgb(dir + "/" + name, res.image);
    }
    std::cout << "previews written to " << dir << " (weather vector from " << n_acc << " images)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sequential multi-target adaptation for segmentation under adverse weather"};
    app.require_subcommand(1);

    // generate-data
    auto* gen = app.add_subcommand("generate-data", "Generate the synthetic weather benchmark");
    std::string gen_out;
    std::uint64_t gen_seed = 7;
    int gen_size = 128, gen_src_train = 400, gen_src_val = 100, gen_tgt_train = 200,
        gen_tgt_val = 50;
    bool gen_force = false;
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--seed", gen_seed, "generation seed");
    gen->add_option("--size", gen_size, "image size (pixels)");
    gen->add_option("--source-train", gen_src_train, "source train images");
    gen->add_option("--source-val", gen_src_val, "source val images");
    gen->add_option("--target-train", gen_tgt_train, "train images per target");
    gen->add_option("--target-val", gen_tgt_val, "val images per target");
    gen->add_flag("--force", gen_force, "overwrite an existing directory");

    // run
    auto* run = app.add_subcommand("run", "Run a sequential adaptation");
    std::string run_cfg, run_manifest, run_out, run_ablation, run_init, run_steps;
    std::vector<std::string> run_sets;
    std::uint64_t run_seed = 1;
    bool run_wo_source = false, run_resume = false;
    run->add_option("--config", run_cfg, "config file (key=value lines)");
    run->add_option("--manifest", run_manifest, "dataset manifest path");
    run->add_option("--out", run_out, "run directory")->required();
    auto* seed_opt = run->add_option("--seed", run_seed, "training seed");
    run->add_option("--ablation", run_ablation,
                    "preset: none|full|baseline|model|model-feature|model-feature-replay|blending");
    run->add_flag("--without-source", run_wo_source, "drop source supervision and feature masks");
    run->add_option("--init-checkpoint", run_init, "source-trained checkpoint to start from");
    run->add_option("--steps", run_steps, "comma-separated target domains");
    run->add_option("--set", run_sets, "config override key=value")->take_all();
    run->add_flag("--resume", run_resume, "reuse completed steps of an existing run");

    // report
    auto* rep = app.add_subcommand("report", "Render tables and curves for a run");
    std::string rep_run, rep_out, rep_cmp, rep_label = "run", rep_label2 = "other";
    rep->add_option("--run", rep_run, "run directory")->required();
    rep->add_option("--out", rep_out, "report output directory");
    rep->add_option("--compare", rep_cmp, "second run directory for side-by-side");
    rep->add_option("--label", rep_label, "label of the first run");
    rep->add_option("--label2", rep_label2, "label of the second run");

    // compose-preview
    auto* prev = app.add_subcommand("compose-preview", "Render weather composition samples");
    std::string pv_manifest, pv_from, pv_onto, pv_out;
    int pv_count = 4, pv_acc = 50;
    std::uint64_t pv_seed = 1;
    prev->add_option("--manifest", pv_manifest, "dataset manifest")->required();
    prev->add_option("--from", pv_from, "domain providing the weather vector")->required();
    prev->add_option("--onto", pv_onto, "domain receiving the composition")->required();
    prev->add_option("--out", pv_out, "output directory")->required();
    prev->add_option("--count", pv_count, "number of previews");
    prev->add_option("--accumulate", pv_acc, "images averaged into the weather vector");
    prev->add_option("--seed", pv_seed, "draw seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed())
            return cmd_generate_data(gen_out, gen_seed, gen_size, gen_src_train, gen_src_val,
                                     gen_tgt_train, gen_tgt_val, gen_force);
        if (run->parsed())
            return cmd_run(run_cfg, run_sets, run_manifest, run_out, run_seed,
                           seed_opt->count() > 0, run_ablation, run_wo_source, run_init, run_steps,
                           run_resume);
        if (rep->parsed()) return cmd_report(rep_run, rep_out, rep_cmp, rep_label, rep_label2);
        if (prev->parsed())
            return cmd_compose_preview(pv_manifest, pv_from, pv_onto, pv_out, pv_count, pv_acc,
                                       pv_seed);
    } catch (const ConfigError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
