// Copyright (C) 2026 emaglab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>

#include "emaglab/tensor.hpp"

namespace emaglab {

/// Per-step denoiser outputs a guidance rule may consume. All present tensors
/// share one shape; absent branches were not evaluated in that mode.
struct BranchPredictions {
    std::optional<Tensor> uncond;
    std::optional<Tensor> cond;
    std::optional<Tensor> cond_perturbed;
    std::optional<Tensor> uncond_perturbed;
};

/// eps_u + w * (eps_c - eps_u). Exact at w == 0 and w == 1.
Tensor cfg_combine(const Tensor& eps_uncond, const Tensor& eps_cond, double w);

/// eps_weak + w * (eps_strong - eps_weak).
Tensor autoguidance_combine(const Tensor& eps_weak, const Tensor& eps_strong, double w);

/// eps + w * (eps - eps_perturbed); the attention-perturbation family rule.
Tensor pag_combine(const Tensor& eps, const Tensor& eps_perturbed, double w);

/// First EMAG stage: eps' + w_e * (eps - eps'), shared by the conditional and
/// unconditional updates. Collapses exactly to eps at w_e == 1.
Tensor emag_stage(const Tensor& eps, const Tensor& eps_perturbed, double w_e);

/// Two-stage conditional EMAG update: the perturbed-conditional contrast,
/// then a CFG-style update with the contrasted conditional prediction.
/// Requires uncond, cond and cond_perturbed.
Tensor emag_conditional(const BranchPredictions& preds, double w_e, double w_cfg);

/// Unconditional EMAG update: eps' + w_e * (eps - eps').
Tensor emag_unconditional(const Tensor& eps, const Tensor& eps_perturbed, double w_e);

/// CFG output minus the layer-dropped sub-network prediction scaled by s.
Tensor s2_combine(const Tensor& cfg_out, const Tensor& eps_perturbed_dropped, double s);

struct ApgParams {
    double beta = -0.5;          // momentum coefficient
    double r = 7.5;              // norm clamp; +infinity disables it
    double eta_parallel = 0.0;   // weight of the parallel component
};

/// Per-trajectory momentum carried across steps.
struct ApgState {
    Tensor momentum;
    bool initialized = false;
};

struct OrthoDecomposition {
    Tensor parallel;
    Tensor orthogonal;
};

/// Splits v into components parallel and orthogonal to `onto`. A zero `onto`
/// vector makes everything orthogonal.
OrthoDecomposition project_onto(const Tensor& v, const Tensor& onto);

/// Projected guidance update: momentum + norm rescale on the CFG difference,
/// parallel component down-weighted, applied around eps_cond:
///   out = eps_c + (w - 1) * (delta_orth + eta_par * delta_par)
Tensor apg_combine(const Tensor& eps_uncond, const Tensor& eps_cond, double w,
                   const ApgParams& params, ApgState& state);

struct CadsParams {
    double tau1 = 0.6;
    double tau2 = 0.9;
    double s = 0.25;   // noise scale
    double psi = 1.0;  // mean/std restoration mix
    void validate() const;
};

/// Annealing coefficient: 1 for t_norm <= tau1, 0 for t_norm >= tau2, linear
/// in between. t_norm is the remaining-noise fraction (1 at the start).
double cads_gamma(double t_norm, double tau1, double tau2);

/// sqrt(gamma)*c + s*sqrt(1-gamma)*noise, followed by a psi-weighted
/// restoration of c's per-tensor mean and standard deviation.
Tensor cads_anneal(const Tensor& cond_embedding, double t_norm, const CadsParams& params,
                   const Tensor& noise);

}  // namespace emaglab
