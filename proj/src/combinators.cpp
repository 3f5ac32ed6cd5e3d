// Copyright (C) 2026 emaglab contributors
// SPDX-License-Identifier: Apache-2.0
#include "emaglab/combinators.hpp"

#include <cmath>

#include "emaglab/errors.hpp"

namespace emaglab {

Tensor cfg_combine(const Tensor& eps_uncond, const Tensor& eps_cond, double w) {
    return lerp(eps_uncond, eps_cond, w);
}

Tensor autoguidance_combine(const Tensor& eps_weak, const Tensor& eps_strong, double w) {
    return lerp(eps_weak, eps_strong, w);
}

Tensor pag_combine(const Tensor& eps, const Tensor& eps_perturbed, double w) {
    // eps + w * (eps - eps_perturbed) == eps_perturbed + (1 + w) * (eps - eps_perturbed),
    // written in the first form to keep w == 0 exact.
    if (w == 0.0) return eps;
    Tensor out = eps;
    for (size_t i = 0; i < out.data.size(); ++i) {
        if (eps.data[i] != eps_perturbed.data[i])
            out.data[i] = eps.data[i] + w * (eps.data[i] - eps_perturbed.data[i]);
    }
    return out;
}

Tensor emag_stage(const Tensor& eps, const Tensor& eps_perturbed, double w_e) {
    return lerp(eps_perturbed, eps, w_e);
}

Tensor emag_conditional(const BranchPredictions& preds, double w_e, double w_cfg) {
    if (!preds.uncond || !preds.cond || !preds.cond_perturbed)
        throw ConfigError("emag_conditional needs uncond, cond and cond_perturbed branches");
    const Tensor contrasted = emag_stage(*preds.cond, *preds.cond_perturbed, w_e);
    return cfg_combine(*preds.uncond, contrasted, w_cfg);
}

Tensor emag_unconditional(const Tensor& eps, const Tensor& eps_perturbed, double w_e) {
    return emag_stage(eps, eps_perturbed, w_e);
}

Tensor s2_combine(const Tensor& cfg_out, const Tensor& eps_perturbed_dropped, double s) {
    if (s == 0.0) return cfg_out;
    Tensor out = cfg_out;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= s * eps_perturbed_dropped.data[i];
    return out;
}

OrthoDecomposition project_onto(const Tensor& v, const Tensor& onto) {
    const double denom = dot(onto, onto);
    OrthoDecomposition d;
    if (denom == 0.0) {
        d.parallel = Tensor::zeros(v.shape);
        d.orthogonal = v;
        return d;
    }
    const double coeff = dot(v, onto) / denom;
    d.parallel = scale(onto, coeff);
    d.orthogonal = sub(v, d.parallel);
    return d;
}

Tensor apg_combine(const Tensor& eps_uncond, const Tensor& eps_cond, double w,
                   const ApgParams& params, ApgState& state) {
    Tensor delta = sub(eps_cond, eps_uncond);
    if (state.initialized && params.beta != 0.0) {
        if (!state.momentum.same_shape(delta))
            throw DimensionError("apg momentum shape changed mid-trajectory");
        for (size_t i = 0; i < delta.data.size(); ++i)
            delta.data[i] += params.beta * state.momentum.data[i];
    }
    state.momentum = delta;
    state.initialized = true;

    const double norm = l2_norm(delta);
    if (std::isfinite(params.r) && norm > params.r && norm > 0.0) {
        delta = scale(delta, params.r / norm);
    }
    const OrthoDecomposition d = project_onto(delta, eps_cond);
    Tensor out = eps_cond;
    const double g = w - 1.0;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] += g * (d.orthogonal.data[i] + params.eta_parallel * d.parallel.data[i]);
    return out;
}

void CadsParams::validate() const {
    if (!(tau1 < tau2)) throw ConfigError("cads requires tau1 < tau2");
    if (s < 0.0) throw ConfigError("cads noise scale must be >= 0");
    if (psi < 0.0 || psi > 1.0) throw ConfigError("cads psi must be in [0, 1]");
}

double cads_gamma(double t_norm, double tau1, double tau2) {
    if (!(tau1 < tau2)) throw ConfigError("cads requires tau1 < tau2");
    if (t_norm <= tau1) return 1.0;
    if (t_norm >= tau2) return 0.0;
    return (tau2 - t_norm) / (tau2 - tau1);
}

Tensor cads_anneal(const Tensor& cond_embedding, double t_norm, const CadsParams& params,
                   const Tensor& noise) {
    params.validate();
    if (!cond_embedding.same_shape(noise))
        throw DimensionError("cads_anneal: conditioning/noise shape mismatch");
    const double gamma = cads_gamma(t_norm, params.tau1, params.tau2);
    if (gamma == 1.0) return cond_embedding;  // schedule endpoint: conditioning untouched

    const double a = std::sqrt(gamma);
    const double b = params.s * std::sqrt(1.0 - gamma);
    Tensor mixed = Tensor::zeros(cond_embedding.shape);
    for (size_t i = 0; i < mixed.data.size(); ++i)
        mixed.data[i] = a * cond_embedding.data[i] + b * noise.data[i];

    if (params.psi == 0.0) return mixed;
    const double mu_in = mean_value(cond_embedding);
    const double sd_in = stddev_value(cond_embedding);
    const double mu_mix = mean_value(mixed);
    const double sd_mix = stddev_value(mixed);
    if (sd_mix == 0.0) return mixed;
    Tensor out = mixed;
    for (size_t i = 0; i < out.data.size(); ++i) {
        const double rescaled = (mixed.data[i] - mu_mix) / sd_mix * sd_in + mu_in;
        out.data[i] = params.psi * rescaled + (1.0 - params.psi) * mixed.data[i];
    }
    return out;
}

}  // namespace emaglab
