// Copyright (C) 2026 emaglab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "emaglab/denoiser.hpp"
#include "emaglab/sampler.hpp"

namespace emaglab {

struct MetricsSection {
    int k = 3;
    int n_reference = 256;
    uint64_t reference_seed = 1234;
};

struct SampleSection {
    int n_samples = 8;
    uint64_t seed = 0;
    bool dump_trajectory = true;
};

struct SweepSection {
    std::vector<double> w_cfg{3.0};
    std::vector<double> w_e{1.25, 1.5, 1.75, 2.0};
    int seeds = 4;
};

/// Parsed and validated experiment configuration. A single JSON document
/// carries sections {model, schedule, train, guidance, sample, sweep,
/// metrics}; unknown keys anywhere are rejected with the offending key name.
struct RunConfig {
    nlohmann::ordered_json raw;

    std::optional<ToyModelConfig> model;      // model hyperparameters (train)
    std::optional<std::string> checkpoint;    // model.checkpoint (sample/sweep)

    bool has_schedule = false;
    ScheduleKind schedule_kind = ScheduleKind::VpDiscrete;
    int schedule_steps = 50;

    std::optional<TrainConfig> train;

    std::optional<GuidanceConfig> guidance;
    std::optional<std::string> weak_checkpoint;

    bool has_sample = false;
    SampleSection sample;
    bool has_sweep = false;
    SweepSection sweep;
    MetricsSection metrics;

    NoiseSchedule make_schedule() const;
};

RunConfig parse_config(const nlohmann::ordered_json& doc);
RunConfig load_config(const std::string& path);

/// FNV-1a hash of the canonical config serialization with per-run seeds
/// stripped, hex encoded. Output paths are pure functions of (hash, seed).
std::string config_hash(const RunConfig& cfg);

}  // namespace emaglab
