#pragma once

#include <map>
#include <string>
#include <vector>

#include "cmtda/masks.hpp"
#include "cmtda/net.hpp"
#include "cmtda/weather.hpp"

namespace cmtda {

struct StepFlags {
    bool model_mask = true;
    bool feature_mask = true;
    bool blending = true;
    bool replay = true;
    bool with_source = true;
};

// Everything one adaptation step needs. Produced from RunConfig with
// per-step overrides applied.
struct StepConfig {
    int step_index = 1;  // 1-based
    int iters = 150;
    int batch_size = 4;
    int crop = 64;
    float lr = 0.01f;
    float momentum = 0.9f;
    float ema_decay = 0.98f;
    float proto_decay = 0.99f;
    AlphaSchedule alpha{0.8, 0.2, 150};
    ComposeParams compose;
    StepFlags flags;
    bool soft_pseudo_labels = false;
    bool eq3_alt_denominator = false;
    int log_every = 25;
    int debug_dump_every = 0;
};

// Full run description with a canonical flat key=value form; the hash of the
// canonical form names the run and guards resumes.
struct RunConfig {
    std::uint64_t seed = 1;
    std::string manifest_path;
    std::vector<std::string> steps{"night", "rain", "fog", "snow"};
    ArchDescriptor arch;
    StepConfig base;
    int source_iters = 600;
    float source_lr = 0.03f;
    std::string init_checkpoint;  // optional; required in without-source mode

    // Raw per-step overrides, e.g. step_overrides[2]["iters"] = "80".
    std::map<int, std::map<std::string, std::string>> step_overrides;

    StepConfig step_config(int step_index) const;  // 1-based

    std::map<std::string, std::string> to_map() const;
    static RunConfig from_map(const std::map<std::string, std::string>& kv);

    std::string canonical_text() const;  // sorted key=value lines, resolved defaults
    std::string hash() const;
};

// key=value lines; '#' starts a comment.
RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& cfg, const std::string& path);

// Applies "key=value" strings on top of an existing map.
void apply_override(std::map<std::string, std::string>& kv, const std::string& assignment);

// Named flag presets mirroring the ablation ladder: "baseline" (all off),
// "model", "model-feature", "model-feature-replay", "blending", and
// "full"/"none" (all on). with_source is untouched.
void apply_ablation_preset(RunConfig& cfg, const std::string& name);

}  // namespace cmtda
