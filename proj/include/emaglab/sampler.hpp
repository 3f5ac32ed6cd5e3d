// Copyright (C) 2026 emaglab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "emaglab/combinators.hpp"
#include "emaglab/denoiser.hpp"
#include "emaglab/guidance.hpp"
#include "emaglab/schedule.hpp"

namespace emaglab {

enum class GuidanceMode { None, Cfg, Emag, EmagI, Autoguidance, Pag, Seg, Sag, S2 };

std::string guidance_mode_name(GuidanceMode m);
GuidanceMode guidance_mode_from_name(const std::string& name);

/// Every scale and window the sampler understands. Baseline-specific knobs
/// are ignored by modes that do not use them.
struct GuidanceConfig {
    GuidanceMode mode = GuidanceMode::Cfg;
    std::optional<int> class_id;  // empty -> unconditional run

    double w_cfg = 7.0;
    double w_e = 1.75;
    double lambda = 1.0;
    double beta = 0.988;
    GuidanceWindow window;
    int layer_min = 1;
    int layer_max = 2;

    double autoguidance_scale = 2.0;
    double pag_scale = 3.0;
    double seg_scale = 2.0;
    double sag_scale = 0.1;
    int sag_layer = 1;
    double sag_threshold = 1.0;
    int sag_kernel = 9;
    double sag_sigma = 1.0;
    double s2_scale = 0.25;
    double s2_drop_prob = 0.1;

    std::optional<ApgParams> apg;
    std::optional<CadsParams> cads;

    bool is_emag() const { return mode == GuidanceMode::Emag || mode == GuidanceMode::EmagI; }
    void validate(const NoiseSchedule& schedule, const ToyModelConfig& model) const;
};

/// One reverse step of a recorded trajectory.
struct StepRecord {
    int t = 0;
    double time = 0.0;  // DDIM: t itself (decreasing); flow: 1 - sigma (increasing)
    Tensor x;           // latent entering the step
    BranchPredictions branches;
    std::optional<Tensor> weak;      // autoguidance weak-model branch
    std::optional<Tensor> dropped;   // layer-dropped sub-network branch
    std::optional<Tensor> degraded;  // blurred-input branch
    Tensor combined;
    bool emag_applied = false;       // attention replacement happened this step
    int selected_layer = -1;
    std::map<int, double> deltas;    // per candidate layer
    std::vector<double> entropy_per_layer;  // clean guided branch, nats
};

struct SamplerTrajectory {
    GuidanceConfig guidance;
    ScheduleKind schedule_kind = ScheduleKind::VpDiscrete;
    int schedule_steps = 0;
    uint64_t seed = 0;
    std::vector<StepRecord> steps;
    Tensor final_x;
};

/// Runs the reverse process for one trajectory. Deterministic per
/// (seed, guidance, schedule, params). `weak_model` is only consulted in
/// autoguidance mode. Throws DivergenceError with the step index if a latent
/// goes non-finite.
SamplerTrajectory run_sampler(const ToyModelParams& model, const GuidanceConfig& guidance,
                              const NoiseSchedule& schedule, uint64_t seed,
                              const ToyModelParams* weak_model = nullptr);

}  // namespace emaglab
