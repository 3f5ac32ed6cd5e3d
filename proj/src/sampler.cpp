// Copyright (C) 2026 emaglab contributors
// SPDX-License-Identifier: Apache-2.0
#include "emaglab/sampler.hpp"

#include <cmath>

#include "emaglab/errors.hpp"
#include "emaglab/metrics.hpp"
#include "emaglab/rng.hpp"

namespace emaglab {

std::string guidance_mode_name(GuidanceMode m) {
    switch (m) {
        case GuidanceMode::None: return "none";
        case GuidanceMode::Cfg: return "cfg";
        case GuidanceMode::Emag: return "emag";
        case GuidanceMode::EmagI: return "emag_i";
        case GuidanceMode::Autoguidance: return "autoguidance";
        case GuidanceMode::Pag: return "pag";
        case GuidanceMode::Seg: return "seg";
        case GuidanceMode::Sag: return "sag";
        case GuidanceMode::S2: return "s2";
    }
    throw ConfigError("unknown guidance mode");
}

GuidanceMode guidance_mode_from_name(const std::string& name) {
    if (name == "none") return GuidanceMode::None;
    if (name == "cfg") return GuidanceMode::Cfg;
    if (name == "emag") return GuidanceMode::Emag;
    if (name == "emag_i") return GuidanceMode::EmagI;
    if (name == "autoguidance") return GuidanceMode::Autoguidance;
    if (name == "pag") return GuidanceMode::Pag;
    if (name == "seg") return GuidanceMode::Seg;
    if (name == "sag") return GuidanceMode::Sag;
    if (name == "s2") return GuidanceMode::S2;
    throw ConfigError("unknown guidance mode '" + name + "'");
}

void GuidanceConfig::validate(const NoiseSchedule& schedule, const ToyModelConfig& model) const {
    if (w_cfg < 0.0) throw ConfigError("w_cfg must be >= 0");
    if (w_e < 0.0) throw ConfigError("w_e must be >= 0");
    if (lambda < 0.0 || lambda > 1.0) throw ConfigError("lambda must be in [0, 1]");
    if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("ema beta must be in (0, 1)");
    if (class_id && (*class_id < 0 || *class_id >= model.n_classes))
        throw ConfigError("class id " + std::to_string(*class_id) + " out of range");

    const bool uses_layer_range =
        is_emag() || mode == GuidanceMode::Pag || mode == GuidanceMode::Seg;
    if (uses_layer_range) {
        if (layer_min < 0 || layer_max >= model.n_layers || layer_min > layer_max)
            throw ConfigError("layer range [" + std::to_string(layer_min) + ", " +
                              std::to_string(layer_max) + "] does not fit a model with " +
                              std::to_string(model.n_layers) + " layers");
    }
    if (is_emag()) window.validate(schedule.steps());
    if (mode == GuidanceMode::Cfg && !class_id)
        throw ConfigError("cfg mode requires a class id; use mode 'none' for unconditional runs");
    if (mode == GuidanceMode::Sag) {
        if (sag_layer < 0 || sag_layer >= model.n_layers)
            throw ConfigError("sag layer out of range");
        if (sag_kernel < 1 || sag_kernel % 2 == 0) throw ConfigError("sag kernel must be odd");
        if (!(sag_sigma > 0.0)) throw ConfigError("sag sigma must be positive");
    }
    if (mode == GuidanceMode::S2 && (s2_drop_prob < 0.0 || s2_drop_prob > 1.0))
        throw ConfigError("s2 drop probability must be in [0, 1]");
    if ((apg || cads) && !(mode == GuidanceMode::Cfg || is_emag()))
        throw ConfigError("apg/cads compose only with cfg or emag modes");
    if ((apg || cads) && !class_id)
        throw ConfigError("apg/cads require a conditional run");
    if (cads) cads->validate();
}

namespace {

struct StepCapture {
    std::vector<double> entropies;          // per layer
    std::map<int, Tensor> candidate_attn;   // post-softmax maps of candidate layers
};

// Observer wiring for the clean guided-branch forward: records per-layer mean
// entropy and keeps copies of the candidate layers' maps when requested.
void add_observers(AttentionHookBus& bus, StepCapture& cap, int n_layers, int cand_min,
                   int cand_max, bool keep_candidates) {
    cap.entropies.assign(static_cast<size_t>(n_layers), 0.0);
    bus.observers.push_back([&cap, cand_min, cand_max, keep_candidates](int layer, const Tensor& a) {
        cap.entropies[static_cast<size_t>(layer)] = attention_entropy(a);
        if (keep_candidates && layer >= cand_min && layer <= cand_max)
            cap.candidate_attn[layer] = a;
    });
}

void checked_latent(const Tensor& x, int t) {
    if (!x.all_finite())
        throw DivergenceError("latent diverged at step " + std::to_string(t));
}

}  // namespace

SamplerTrajectory run_sampler(const ToyModelParams& model, const GuidanceConfig& guidance,
                              const NoiseSchedule& schedule, uint64_t seed,
                              const ToyModelParams* weak_model) {
    const ToyModelConfig& cfg = model.config;
    guidance.validate(schedule, cfg);
    if (cfg.max_timestep != schedule.steps())
        throw ConfigError("model timestep table does not match schedule step count");
    if (guidance.mode == GuidanceMode::Autoguidance) {
        if (!weak_model) throw ConfigError("autoguidance mode needs a weak model checkpoint");
        if (weak_model->config.image_size != cfg.image_size ||
            weak_model->config.max_timestep != cfg.max_timestep ||
            weak_model->config.n_classes != cfg.n_classes)
            throw ConfigError("weak model is incompatible with the strong model");
    }

    const TokenLayout layout{cfg.n_img_tokens(), cfg.joint_attention ? cfg.n_txt_tokens : 0};
    const EmagVariant variant =
        guidance.mode == GuidanceMode::EmagI ? EmagVariant::ImageOnly : EmagVariant::Full;
    const bool conditional = guidance.class_id.has_value();
    const BranchKind ema_branch =
        conditional ? BranchKind::Conditional : BranchKind::Unconditional;

    SamplerTrajectory traj;
    traj.guidance = guidance;
    traj.schedule_kind = schedule.kind();
    traj.schedule_steps = schedule.steps();
    traj.seed = seed;

    CounterRng init_rng(seed, RngStream::InitLatent);
    CounterRng cads_rng(seed, RngStream::CadsNoise);
    CounterRng drop_rng(seed, RngStream::LayerDrop);

    Tensor x = init_rng.gaussian_tensor({cfg.image_size, cfg.image_size});

    EmaState ema;
    ema.beta = guidance.beta;
    ApgState apg_state;

    const int T = schedule.steps();
    for (int t = T; t >= 1; --t) {
        checked_latent(x, t);
        StepRecord rec;
        rec.t = t;
        rec.time = schedule.kind() == ScheduleKind::VpDiscrete
                       ? static_cast<double>(t)
                       : 1.0 - schedule.sigma(t);
        rec.x = x;

        // Conditioning overrides (annealing) are drawn before any forward so
        // branch evaluations never consume randomness.
        std::optional<Tensor> cads_class_override;
        std::optional<Tensor> cads_text_override;
        if (guidance.cads && conditional) {
            const double t_norm = schedule.kind() == ScheduleKind::VpDiscrete
                                      ? static_cast<double>(t) / T
                                      : schedule.sigma(t);
            const Tensor& c_table = model.find("class_embed");
            Tensor c_vec = Tensor::zeros({1, cfg.d_model});
            for (int64_t j = 0; j < cfg.d_model; ++j)
                c_vec.data[static_cast<size_t>(j)] = c_table.at(*guidance.class_id, j);
            const Tensor c_noise = cads_rng.gaussian_tensor({1, cfg.d_model});
            cads_class_override = cads_anneal(c_vec, t_norm, *guidance.cads, c_noise);
            if (cfg.joint_attention) {
                const Tensor& txt = model.find("text_embed");
                Tensor t_block = Tensor::zeros({cfg.n_txt_tokens, cfg.d_model});
                for (int64_t r = 0; r < cfg.n_txt_tokens; ++r)
                    for (int64_t j = 0; j < cfg.d_model; ++j)
                        t_block.at(r, j) =
                            txt.at(static_cast<int64_t>(*guidance.class_id) * cfg.n_txt_tokens + r, j);
                const Tensor t_noise =
                    cads_rng.gaussian_tensor({cfg.n_txt_tokens, cfg.d_model});
                cads_text_override = cads_anneal(t_block, t_norm, *guidance.cads, t_noise);
            }
        }
        // The layer-drop mask stream also advances outside the branch code.
        std::set<int> drop_mask;
        if (guidance.mode == GuidanceMode::S2) {
            for (int l = 0; l < cfg.n_layers; ++l) {
                if (drop_rng.uniform() < guidance.s2_drop_prob) drop_mask.insert(l);
            }
        }

        const bool in_window = guidance.is_emag() && guidance.window.contains(t);
        const bool is_sag = guidance.mode == GuidanceMode::Sag;
        const int capture_min = is_sag ? guidance.sag_layer : guidance.layer_min;
        const int capture_max = is_sag ? guidance.sag_layer : guidance.layer_max;

        // Clean guided-branch forward with diagnostics observers.
        StepCapture cap;
        AttentionHookBus guided_bus;
        add_observers(guided_bus, cap, cfg.n_layers, capture_min, capture_max,
                      in_window || is_sag);
        if (cads_class_override) guided_bus.class_embedding_override = cads_class_override;
        if (cads_text_override) guided_bus.text_tokens_override = cads_text_override;
        const std::optional<int> guided_class = guidance.class_id;
        const Tensor eps_guided = forward(model, x, t, guided_class, guided_bus);
        if (conditional) rec.branches.cond = eps_guided;
        else rec.branches.uncond = eps_guided;
        rec.entropy_per_layer = cap.entropies;

        // Unconditional companion branch where the mode needs one.
        const bool needs_uncond_companion =
            conditional &&
            (guidance.mode == GuidanceMode::Cfg || guidance.is_emag() ||
             guidance.mode == GuidanceMode::Pag || guidance.mode == GuidanceMode::Seg ||
             guidance.mode == GuidanceMode::Sag || guidance.mode == GuidanceMode::S2);
        if (needs_uncond_companion) {
            const AttentionHookBus empty_bus;
            rec.branches.uncond = forward(model, x, t, std::nullopt, empty_bus);
        }

        Tensor combined;
        auto cfg_or_apg = [&](const Tensor& eps_u, const Tensor& eps_c) {
            return guidance.apg ? apg_combine(eps_u, eps_c, guidance.w_cfg, *guidance.apg, apg_state)
                                : cfg_combine(eps_u, eps_c, guidance.w_cfg);
        };

        switch (guidance.mode) {
            case GuidanceMode::None: {
                combined = eps_guided;
                break;
            }
            case GuidanceMode::Cfg: {
                combined = cfg_or_apg(*rec.branches.uncond, *rec.branches.cond);
                break;
            }
            case GuidanceMode::Emag:
            case GuidanceMode::EmagI: {
                bool replace_active = false;
                int selected = -1;
                if (in_window) {
                    const int64_t k = ++ema.step_count[ema_branch];
                    for (int l = guidance.layer_min; l <= guidance.layer_max; ++l) {
                        const Tensor block =
                            emag_extract_block(cap.candidate_attn.at(l), layout, variant);
                        ema_update(ema, l, ema_branch, block);
                        rec.deltas[l] = layer_delta(*ema.find(l, ema_branch), block);
                    }
                    selected = select_layer(rec.deltas, guidance.layer_min, guidance.layer_max);
                    rec.selected_layer = selected;
                    replace_active = k > guidance.window.delta_t;
                }
                if (replace_active) {
                    const Tensor ema_block = *ema.find(selected, ema_branch);
                    AttentionHookBus pert_bus;
                    if (cads_class_override) pert_bus.class_embedding_override = cads_class_override;
                    if (cads_text_override) pert_bus.text_tokens_override = cads_text_override;
                    pert_bus.attention[selected] = [&](const Tensor& a) {
                        return emag_partition_apply(a, layout, variant,
                                                    [&](const Tensor& block) {
                                                        return blend_replace(block, ema_block,
                                                                             guidance.lambda);
                                                    });
                    };
                    const Tensor eps_pert = forward(model, x, t, guided_class, pert_bus);
                    rec.emag_applied = true;
                    if (conditional) {
                        rec.branches.cond_perturbed = eps_pert;
                        const Tensor contrasted = emag_stage(*rec.branches.cond, eps_pert, guidance.w_e);
                        combined = cfg_or_apg(*rec.branches.uncond, contrasted);
                    } else {
                        rec.branches.uncond_perturbed = eps_pert;
                        combined = emag_unconditional(*rec.branches.uncond, eps_pert, guidance.w_e);
                    }
                } else {
                    combined = conditional ? cfg_or_apg(*rec.branches.uncond, *rec.branches.cond)
                                           : *rec.branches.uncond;
                }
                break;
            }
            case GuidanceMode::Autoguidance: {
                const AttentionHookBus empty_bus;
                const Tensor eps_weak = forward(*weak_model, x, t, guided_class, empty_bus);
                rec.weak = eps_weak;
                combined = autoguidance_combine(eps_weak, eps_guided, guidance.autoguidance_scale);
                break;
            }
            case GuidanceMode::Pag: {
                AttentionHookBus pert_bus;
                for (int l = guidance.layer_min; l <= guidance.layer_max; ++l)
                    pert_bus.attention[l] = [](const Tensor& a) { return pag_identity_attention(a); };
                const Tensor eps_pert = forward(model, x, t, guided_class, pert_bus);
                if (conditional) {
                    rec.branches.cond_perturbed = eps_pert;
                    const Tensor contrasted = pag_combine(eps_guided, eps_pert, guidance.pag_scale);
                    combined = cfg_combine(*rec.branches.uncond, contrasted, guidance.w_cfg);
                } else {
                    rec.branches.uncond_perturbed = eps_pert;
                    combined = pag_combine(eps_guided, eps_pert, guidance.pag_scale);
                }
                break;
            }
            case GuidanceMode::Seg: {
                // The smoothing acts on the unconditional path only.
                AttentionHookBus pert_bus;
                const int64_t avg_rows = layout.n_img;
                for (int l = guidance.layer_min; l <= guidance.layer_max; ++l)
                    pert_bus.query[l] = [avg_rows](const Tensor& q) {
                        return seg_query_mean(q, avg_rows);
                    };
                const Tensor eps_pert_u = forward(model, x, t, std::nullopt, pert_bus);
                rec.branches.uncond_perturbed = eps_pert_u;
                if (conditional) {
                    const Tensor smoothed_u =
                        pag_combine(*rec.branches.uncond, eps_pert_u, guidance.seg_scale);
                    combined = cfg_combine(smoothed_u, *rec.branches.cond, guidance.w_cfg);
                } else {
                    combined = pag_combine(eps_guided, eps_pert_u, guidance.seg_scale);
                }
                break;
            }
            case GuidanceMode::Sag: {
                // Mask from the clean forward's attention at the mask layer.
                const Tensor mask = sag_token_mask(cap.candidate_attn.at(guidance.sag_layer),
                                                   layout, cfg.grid(), guidance.sag_threshold);
                const Tensor degraded_x =
                    sag_degrade_latent(x, mask, guidance.sag_kernel, guidance.sag_sigma);
                const AttentionHookBus empty_bus;
                const Tensor eps_degraded = forward(model, degraded_x, t, guided_class, empty_bus);
                rec.degraded = eps_degraded;
                if (conditional) {
                    const Tensor contrasted =
                        pag_combine(eps_guided, eps_degraded, guidance.sag_scale);
                    combined = cfg_combine(*rec.branches.uncond, contrasted, guidance.w_cfg);
                } else {
                    combined = pag_combine(eps_guided, eps_degraded, guidance.sag_scale);
                }
                break;
            }
            case GuidanceMode::S2: {
                AttentionHookBus drop_bus;
                drop_bus.dropped_layers = drop_mask;
                const Tensor eps_dropped = forward(model, x, t, guided_class, drop_bus);
                rec.dropped = eps_dropped;
                const Tensor base =
                    conditional ? cfg_combine(*rec.branches.uncond, *rec.branches.cond, guidance.w_cfg)
                                : eps_guided;
                combined = s2_combine(base, eps_dropped, guidance.s2_scale);
                break;
            }
        }

        rec.combined = combined;
        if (schedule.kind() == ScheduleKind::VpDiscrete) {
            x = ddim_step(x, combined, t, t - 1, schedule);
        } else {
            x = flow_euler_step(x, combined, schedule.sigma(t - 1) - schedule.sigma(t));
        }
        traj.steps.push_back(std::move(rec));
    }
    checked_latent(x, 0);
    traj.final_x = x;
    return traj;
}

}  // namespace emaglab
