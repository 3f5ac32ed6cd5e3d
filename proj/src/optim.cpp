// Copyright (C) 2026 emaglab contributors
// SPDX-License-Identifier: Apache-2.0
#include "emaglab/optim.hpp"

#include <cmath>

#include "emaglab/errors.hpp"

namespace emaglab {

void adam_step(std::vector<Tensor*>& params, const std::vector<std::string>& names,
               const std::vector<const Tensor*>& grads, AdamState& state, const AdamConfig& cfg) {
    if (params.size() != grads.size() || params.size() != names.size()) {
        throw DimensionError("adam_step: params/grads/names length mismatch");
    }
    if (state.m.empty()) {
        for (const Tensor* p : params) {
            state.m.push_back(Tensor::zeros(p->shape));
            state.v.push_back(Tensor::zeros(p->shape));
        }
    }
    for (size_t i = 0; i < params.size(); ++i) {
        if (!grads[i]->same_shape(*params[i])) {
            throw DimensionError("adam_step: gradient shape mismatch for " + names[i]);
        }
        if (!grads[i]->all_finite()) {
            throw DivergenceError("non-finite gradient for parameter '" + names[i] + "'");
        }
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        for (size_t j = 0; j < p.data.size(); ++j) {
            m.data[j] = cfg.beta1 * m.data[j] + (1.0 - cfg.beta1) * g.data[j];
            v.data[j] = cfg.beta2 * v.data[j] + (1.0 - cfg.beta2) * g.data[j] * g.data[j];
            const double mhat = m.data[j] / bc1;
            const double vhat = v.data[j] / bc2;
            p.data[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

}  // namespace emaglab
