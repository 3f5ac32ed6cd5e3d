// Copyright (C) 2026 emaglab contributors
// SPDX-License-Identifier: Apache-2.0
#include "emaglab/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "emaglab/errors.hpp"

namespace emaglab {

namespace {

using json = nlohmann::ordered_json;

void expect_keys(const json& obj, const std::string& section,
                 const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigError("section '" + section + "' must be an object");
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.count(key))
            throw ConfigError("unknown key '" + key + "' in section '" + section + "'");
    }
}

const json& require(const json& obj, const std::string& section, const std::string& key) {
    if (!obj.contains(key))
        throw ConfigError("missing required key '" + key + "' in section '" + section + "'");
    return obj.at(key);
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback) {
    if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
    return obj.at(key).get<T>();
}

ToyModelConfig parse_model(const json& m) {
    expect_keys(m, "model",
                {"image_size", "patch", "d_model", "layers", "heads", "classes",
                 "joint_attention", "n_txt_tokens", "checkpoint"});
    ToyModelConfig cfg;
    cfg.image_size = get_or(m, "image_size", 8);
    cfg.patch = get_or(m, "patch", 2);
    cfg.d_model = get_or(m, "d_model", 32);
    cfg.n_layers = get_or(m, "layers", 4);
    cfg.n_heads = get_or(m, "heads", 2);
    cfg.n_classes = get_or(m, "classes", 2);
    cfg.joint_attention = get_or(m, "joint_attention", false);
    cfg.n_txt_tokens = get_or(m, "n_txt_tokens", 4);
    if (cfg.n_layers < 4)
        throw ConfigError("model: at least 4 layers are required so a middle-layer range exists");
    cfg.validate();
    return cfg;
}

GuidanceConfig parse_guidance(const json& g, int schedule_steps) {
    expect_keys(g, "guidance",
                {"mode", "class_id", "w_cfg", "w_e", "lambda", "beta", "halflife", "window",
                 "layer_range", "autoguidance_scale", "weak_checkpoint", "pag_scale", "seg_scale",
                 "sag", "s2", "apg", "cads"});
    GuidanceConfig cfg;
    cfg.mode = guidance_mode_from_name(require(g, "guidance", "mode").get<std::string>());
    if (g.contains("class_id") && !g.at("class_id").is_null())
        cfg.class_id = g.at("class_id").get<int>();
    cfg.w_cfg = get_or(g, "w_cfg", cfg.w_cfg);
    cfg.w_e = get_or(g, "w_e", cfg.w_e);
    cfg.lambda = get_or(g, "lambda", cfg.lambda);
    if (g.contains("beta") && g.contains("halflife") && !g.at("halflife").is_null())
        throw ConfigError("guidance: give either 'beta' or 'halflife', not both");
    if (g.contains("halflife") && !g.at("halflife").is_null())
        cfg.beta = beta_from_halflife(g.at("halflife").get<double>());
    else
        cfg.beta = get_or(g, "beta", cfg.beta);

    // Window defaults follow the tail schedule: start at t_max, stop at
    // floor(0.2 * t_max), warm up for as many steps as the stop index.
    cfg.window.tau_s = schedule_steps;
    cfg.window.tau_e = static_cast<int>(std::floor(0.2 * schedule_steps));
    cfg.window.delta_t = cfg.window.tau_e;
    if (g.contains("window")) {
        const json& w = g.at("window");
        expect_keys(w, "guidance.window", {"tau_s", "tau_e", "delta_t"});
        cfg.window.tau_s = get_or(w, "tau_s", cfg.window.tau_s);
        cfg.window.tau_e = get_or(w, "tau_e", cfg.window.tau_e);
        cfg.window.delta_t = get_or(w, "delta_t", cfg.window.delta_t);
    }
    if (cfg.is_emag()) cfg.window.validate(schedule_steps);  // fail before any model IO
    if (g.contains("layer_range")) {
        const json& r = g.at("layer_range");
        if (!r.is_array() || r.size() != 2)
            throw ConfigError("guidance.layer_range must be [min, max]");
        cfg.layer_min = r.at(0).get<int>();
        cfg.layer_max = r.at(1).get<int>();
    }
    cfg.autoguidance_scale = get_or(g, "autoguidance_scale", cfg.autoguidance_scale);
    cfg.pag_scale = get_or(g, "pag_scale", cfg.pag_scale);
    cfg.seg_scale = get_or(g, "seg_scale", cfg.seg_scale);
    if (g.contains("sag")) {
        const json& s = g.at("sag");
        expect_keys(s, "guidance.sag", {"scale", "layer", "threshold", "kernel", "sigma"});
        cfg.sag_scale = get_or(s, "scale", cfg.sag_scale);
        cfg.sag_layer = get_or(s, "layer", cfg.sag_layer);
        cfg.sag_threshold = get_or(s, "threshold", cfg.sag_threshold);
        cfg.sag_kernel = get_or(s, "kernel", cfg.sag_kernel);
        cfg.sag_sigma = get_or(s, "sigma", cfg.sag_sigma);
    }
    if (g.contains("s2")) {
        const json& s = g.at("s2");
        expect_keys(s, "guidance.s2", {"scale", "drop_prob"});
        cfg.s2_scale = get_or(s, "scale", cfg.s2_scale);
        cfg.s2_drop_prob = get_or(s, "drop_prob", cfg.s2_drop_prob);
    }
    if (g.contains("apg") && !g.at("apg").is_null()) {
        const json& a = g.at("apg");
        expect_keys(a, "guidance.apg", {"beta", "r", "eta_parallel"});
        ApgParams p;
        p.beta = get_or(a, "beta", p.beta);
        p.r = get_or(a, "r", p.r);
        p.eta_parallel = get_or(a, "eta_parallel", p.eta_parallel);
        cfg.apg = p;
    }
    if (g.contains("cads") && !g.at("cads").is_null()) {
        const json& c = g.at("cads");
        expect_keys(c, "guidance.cads", {"tau1", "tau2", "s", "psi"});
        CadsParams p;
        p.tau1 = get_or(c, "tau1", p.tau1);
        p.tau2 = get_or(c, "tau2", p.tau2);
        p.s = get_or(c, "s", p.s);
        p.psi = get_or(c, "psi", p.psi);
        p.validate();
        cfg.cads = p;
    }
    return cfg;
}

}  // namespace

NoiseSchedule RunConfig::make_schedule() const {
    if (!has_schedule) throw ConfigError("missing required section 'schedule'");
    return NoiseSchedule::make(schedule_kind, schedule_steps);
}

RunConfig parse_config(const nlohmann::ordered_json& doc) {
    if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
    expect_keys(doc, "(root)",
                {"model", "schedule", "train", "guidance", "sample", "sweep", "metrics"});
    RunConfig cfg;
    cfg.raw = doc;

    if (doc.contains("schedule")) {
        const json& s = doc.at("schedule");
        expect_keys(s, "schedule", {"kind", "steps"});
        cfg.has_schedule = true;
        cfg.schedule_kind = schedule_kind_from_name(get_or<std::string>(s, "kind", "vp"));
        cfg.schedule_steps = get_or(s, "steps", cfg.schedule_kind == ScheduleKind::VpDiscrete ? 50 : 26);
        if (cfg.schedule_steps < 1) throw ConfigError("schedule.steps must be >= 1");
    }

    if (doc.contains("model")) {
        const json& m = doc.at("model");
        if (m.contains("checkpoint") && !m.at("checkpoint").is_null()) {
            expect_keys(m, "model", {"checkpoint"});
            cfg.checkpoint = m.at("checkpoint").get<std::string>();
        } else {
            cfg.model = parse_model(m);
            if (cfg.has_schedule) cfg.model->max_timestep = cfg.schedule_steps;
        }
    }

    if (doc.contains("train")) {
        const json& t = doc.at("train");
        expect_keys(t, "train", {"mode", "steps", "batch", "lr", "cond_drop", "seed"});
        TrainConfig tc;
        const std::string mode = require(t, "train", "mode").get<std::string>();
        if (mode == "eps") tc.mode = TrainMode::Epsilon;
        else if (mode == "velocity") tc.mode = TrainMode::Velocity;
        else throw ConfigError("train.mode must be 'eps' or 'velocity'");
        tc.steps = get_or(t, "steps", tc.steps);
        tc.batch = get_or(t, "batch", tc.batch);
        tc.lr = get_or(t, "lr", tc.lr);
        tc.cond_drop = get_or(t, "cond_drop", tc.cond_drop);
        tc.seed = get_or(t, "seed", tc.seed);
        if (tc.steps < 0) throw ConfigError("train.steps must be >= 0");
        if (tc.cond_drop < 0.0 || tc.cond_drop > 1.0)
            throw ConfigError("train.cond_drop must be in [0, 1]");
        cfg.train = tc;
    }

    if (doc.contains("guidance")) {
        if (!cfg.has_schedule)
            throw ConfigError("guidance section requires a schedule section");
        cfg.guidance = parse_guidance(doc.at("guidance"), cfg.schedule_steps);
        const json& g = doc.at("guidance");
        if (g.contains("weak_checkpoint") && !g.at("weak_checkpoint").is_null())
            cfg.weak_checkpoint = g.at("weak_checkpoint").get<std::string>();
        if (cfg.guidance->mode == GuidanceMode::Autoguidance && !cfg.weak_checkpoint)
            throw ConfigError("autoguidance mode requires guidance.weak_checkpoint");
    }

    if (doc.contains("sample")) {
        const json& s = doc.at("sample");
        expect_keys(s, "sample", {"n_samples", "seed", "dump_trajectory"});
        cfg.has_sample = true;
        cfg.sample.n_samples = get_or(s, "n_samples", cfg.sample.n_samples);
        cfg.sample.seed = get_or(s, "seed", cfg.sample.seed);
        cfg.sample.dump_trajectory = get_or(s, "dump_trajectory", cfg.sample.dump_trajectory);
        if (cfg.sample.n_samples < 1) throw ConfigError("sample.n_samples must be >= 1");
    }

    if (doc.contains("sweep")) {
        const json& s = doc.at("sweep");
        expect_keys(s, "sweep", {"w_cfg", "w_e", "seeds"});
        cfg.has_sweep = true;
        if (s.contains("w_cfg")) cfg.sweep.w_cfg = s.at("w_cfg").get<std::vector<double>>();
        if (s.contains("w_e")) cfg.sweep.w_e = s.at("w_e").get<std::vector<double>>();
        cfg.sweep.seeds = get_or(s, "seeds", cfg.sweep.seeds);
        if (cfg.sweep.w_cfg.empty() || cfg.sweep.w_e.empty() || cfg.sweep.seeds < 1)
            throw ConfigError("sweep grid must be nonempty with seeds >= 1");
    }

    if (doc.contains("metrics")) {
        const json& m = doc.at("metrics");
        expect_keys(m, "metrics", {"k", "n_reference", "reference_seed"});
        cfg.metrics.k = get_or(m, "k", cfg.metrics.k);
        cfg.metrics.n_reference = get_or(m, "n_reference", cfg.metrics.n_reference);
        cfg.metrics.reference_seed = get_or(m, "reference_seed", cfg.metrics.reference_seed);
        if (cfg.metrics.k < 1) throw ConfigError("metrics.k must be >= 1");
    }
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    nlohmann::ordered_json doc;
    try {
        doc = nlohmann::ordered_json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config " + path + " is not valid JSON: " + e.what());
    }
    return parse_config(doc);
}

std::string config_hash(const RunConfig& cfg) {
    nlohmann::ordered_json stripped = cfg.raw;
    if (stripped.contains("sample") && stripped.at("sample").is_object())
        stripped.at("sample").erase("seed");
    if (stripped.contains("train") && stripped.at("train").is_object())
        stripped.at("train").erase("seed");
    const std::string s = stripped.dump();
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace emaglab
