// Copyright (C) 2026 emaglab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "emaglab/tensor.hpp"

namespace emaglab {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment buffers, aligned index-for-index with the parameter
/// list handed to adam_step.
struct AdamState {
    int64_t step = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
};

/// One bias-corrected Adam update, in place. Deterministic given identical
/// inputs. Throws DivergenceError naming the parameter if its gradient is
/// non-finite.
void adam_step(std::vector<Tensor*>& params, const std::vector<std::string>& names,
               const std::vector<const Tensor*>& grads, AdamState& state, const AdamConfig& cfg);

}  // namespace emaglab
