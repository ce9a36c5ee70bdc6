#include "cmtda/config.hpp"

#include <fstream>
#include <sstream>

namespace cmtda {
namespace {

std::string join_csv(const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += v[i];
    }
    return s;
}

std::string join_csv(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(v[i]);
    }
    return s;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(tok);
    return out;
}

std::vector<int> split_csv_ints(const std::string& s) {
    std::vector<int> out;
    for (const auto& t : split_csv(s)) out.push_back(std::stoi(t));
    return out;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

bool parse_bool(const std::string& s) {
    if (s == "1" || s == "true" || s == "on") return true;
    if (s == "0" || s == "false" || s == "off") return false;
    throw ConfigError("not a boolean: " + s);
}


}  // namespace

StepConfig RunConfig::step_config(int step_index) const {
    StepConfig sc = base;
    sc.step_index = step_index;
    auto ov = step_overrides.find(step_index);
    if (ov != step_overrides.end()) {
        for (const auto& [k, v] : ov->second) {
            if (k == "iters")
                sc.iters = std::stoi(v);
            else if (k == "batch_size")
                sc.batch_size = std::stoi(v);
            else if (k == "crop")
                sc.crop = std::stoi(v);
            else if (k == "lr")
                sc.lr = std::stof(v);
            else if (k == "ema_decay")
                sc.ema_decay = std::stof(v);
            else
                throw ConfigError("unsupported per-step override: " + k);
        }
    }
    sc.alpha.total_iters = sc.iters;
    return sc;
}

std::map<std::string, std::string> RunConfig::to_map() const {
    std::map<std::string, std::string> kv;
    kv["seed"] = std::to_string(seed);
    kv["manifest"] = manifest_path;
    kv["steps"] = join_csv(steps);
    kv["arch.encoder_widths"] = join_csv(arch.encoder_widths);
    kv["arch.decoder_widths"] = join_csv(arch.decoder_widths);
    kv["arch.num_classes"] = std::to_string(arch.num_classes);
    kv["arch.stride"] = std::to_string(arch.stride);
    kv["iters"] = std::to_string(base.iters);
    kv["batch_size"] = std::to_string(base.batch_size);
    kv["crop"] = std::to_string(base.crop);
    kv["lr"] = fmt(base.lr);
    kv["momentum"] = fmt(base.momentum);
    kv["ema_decay"] = fmt(base.ema_decay);
    kv["proto_decay"] = fmt(base.proto_decay);
    kv["alpha_start"] = fmt(base.alpha.alpha_start);
    kv["alpha_end"] = fmt(base.alpha.alpha_end);
    kv["sigma_lo"] = fmt(base.compose.sigma_lo);
    kv["sigma_hi"] = fmt(base.compose.sigma_hi);
    kv["area_lo"] = fmt(base.compose.area_lo);
    kv["area_hi"] = fmt(base.compose.area_hi);
    kv["flags.model_mask"] = base.flags.model_mask ? "1" : "0";
    kv["flags.feature_mask"] = base.flags.feature_mask ? "1" : "0";
    kv["flags.blending"] = base.flags.blending ? "1" : "0";
    kv["flags.replay"] = base.flags.replay ? "1" : "0";
    kv["flags.with_source"] = base.flags.with_source ? "1" : "0";
    kv["soft_pseudo_labels"] = base.soft_pseudo_labels ? "1" : "0";
    kv["eq3_alt_denominator"] = base.eq3_alt_denominator ? "1" : "0";
    kv["log_every"] = std::to_string(base.log_every);
    kv["debug_dump_every"] = std::to_string(base.debug_dump_every);
    kv["source_iters"] = std::to_string(source_iters);
    kv["source_lr"] = fmt(source_lr);
    kv["init_checkpoint"] = init_checkpoint;
    for (const auto& [step, m] : step_overrides)
        for (const auto& [k, v] : m) kv["step" + std::to_string(step) + "." + k] = v;
    return kv;
}

RunConfig RunConfig::from_map(const std::map<std::string, std::string>& kv) {
    RunConfig c;
    for (const auto& [key, val] : kv) {
        if (key == "seed")
            c.seed = std::stoull(val);
        else if (key == "manifest")
            c.manifest_path = val;
        else if (key == "steps")
            c.steps = split_csv(val);
        else if (key == "arch.encoder_widths")
            c.arch.encoder_widths = split_csv_ints(val);
        else if (key == "arch.decoder_widths")
            c.arch.decoder_widths = split_csv_ints(val);
        else if (key == "arch.num_classes")
            c.arch.num_classes = std::stoi(val);
        else if (key == "arch.stride")
            c.arch.stride = std::stoi(val);
        else if (key == "iters")
            c.base.iters = std::stoi(val);
        else if (key == "batch_size")
            c.base.batch_size = std::stoi(val);
        else if (key == "crop")
            c.base.crop = std::stoi(val);
        else if (key == "lr")
            c.base.lr = std::stof(val);
        else if (key == "momentum")
            c.base.momentum = std::stof(val);
        else if (key == "ema_decay")
            c.base.ema_decay = std::stof(val);
        else if (key == "proto_decay")
            c.base.proto_decay = std::stof(val);
        else if (key == "alpha_start")
            c.base.alpha.alpha_start = std::stod(val);
        else if (key == "alpha_end")
            c.base.alpha.alpha_end = std::stod(val);
        else if (key == "sigma_lo")
            c.base.compose.sigma_lo = std::stod(val);
        else if (key == "sigma_hi")
            c.base.compose.sigma_hi = std::stod(val);
        else if (key == "area_lo")
            c.base.compose.area_lo = std::stod(val);
        else if (key == "area_hi")
            c.base.compose.area_hi = std::stod(val);
        else if (key == "flags.model_mask")
            c.base.flags.model_mask = parse_bool(val);
        else if (key == "flags.feature_mask")
            c.base.flags.feature_mask = parse_bool(val);
        else if (key == "flags.blending")
            c.base.flags.blending = parse_bool(val);
        else if (key == "flags.replay")
            c.base.flags.replay = parse_bool(val);
        else if (key == "flags.with_source")
            c.base.flags.with_source = parse_bool(val);
        else if (key == "soft_pseudo_labels")
            c.base.soft_pseudo_labels = parse_bool(val);
        else if (key == "eq3_alt_denominator")
            c.base.eq3_alt_denominator = parse_bool(val);
        else if (key == "log_every")
            c.base.log_every = std::stoi(val);
        else if (key == "debug_dump_every")
            c.base.debug_dump_every = std::stoi(val);
        else if (key == "source_iters")
            c.source_iters = std::stoi(val);
        else if (key == "source_lr")
            c.source_lr = std::stof(val);
        else if (key == "init_checkpoint")
            c.init_checkpoint = val;
        else if (key.rfind("step", 0) == 0 && key.find('.') != std::string::npos) {
            const auto dot = key.find('.');
            const int step = std::stoi(key.substr(4, dot - 4));
            c.step_overrides[step][key.substr(dot + 1)] = val;
        } else {
            throw ConfigError("unknown config key: " + key);
        }
    }
    if (c.steps.empty()) throw ConfigError("config needs at least one step");
    for (std::size_t i = 0; i < c.steps.size(); ++i)
        for (std::size_t j = i + 1; j < c.steps.size(); ++j)
            if (c.steps[i] == c.steps[j]) throw ConfigError("duplicate step domain: " + c.steps[i]);
    c.base.alpha.total_iters = c.base.iters;
    c.arch.validate();
    return c;
}

std::string RunConfig::canonical_text() const {
    // std::map iterates in sorted key order already
    std::string s;
    for (const auto& [k, v] : to_map()) {
        s += k;
        s += '=';
        s += v;
        s += '\n';
    }
    return s;
}

std::string RunConfig::hash() const {
    const std::string c = canonical_text();
    return hex64(fnv1a(c.data(), c.size()));
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FileMissingError("cannot open config: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(is, line)) {
        const auto hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
        while (!line.empty() && (line.back() == ' ' || line.back() == '\r')) line.pop_back();
        if (line.empty()) continue;
        apply_override(kv, line);
    }
    return RunConfig::from_map(kv);
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw FileMissingError("cannot write config: " + path);
    os << cfg.canonical_text();
}

void apply_override(std::map<std::string, std::string>& kv, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("expected key=value, got: " + assignment);
    kv[assignment.substr(0, eq)] = assignment.substr(eq + 1);
}

void apply_ablation_preset(RunConfig& cfg, const std::string& name) {
    StepFlags& f = cfg.base.flags;
    const bool ws = f.with_source;
    if (name == "full" || name == "none") {
        f = StepFlags{true, true, true, true, ws};
    } else if (name == "baseline") {
        f = StepFlags{false, false, false, false, ws};
    } else if (name == "model") {
        f = StepFlags{true, false, false, false, ws};
    } else if (name == "model-feature") {
        f = StepFlags{true, true, false, false, ws};
    } else if (name == "model-feature-replay") {
        f = StepFlags{true, true, false, true, ws};
    } else if (name == "blending") {
        f = StepFlags{false, false, true, false, ws};
    } else {
        throw ConfigError("unknown ablation preset: " + name);
    }
}

}  // namespace cmtda
