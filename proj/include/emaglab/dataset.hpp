// Copyright (C) 2026 emaglab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "emaglab/rng.hpp"
#include "emaglab/tensor.hpp"

namespace emaglab {

/// Procedural 8x8 grayscale shapes: class 0 is a filled square, class 1 a
/// plus sign, both with jittered position and intensity. Pixels live in
/// [-1, 1] with background -1.
struct DatasetConfig {
    int image_size = 8;
    int n_classes = 2;
    double min_intensity = 0.7;
    double max_intensity = 1.0;
    bool jitter_position = true;  // false pins every shape to a fixed spot
};

Tensor make_sample(const DatasetConfig& cfg, int class_id, CounterRng& rng);

/// Deterministic evaluation set: `count` samples cycling through classes.
std::vector<std::pair<Tensor, int>> make_eval_set(const DatasetConfig& cfg, int count,
                                                  uint64_t seed);

}  // namespace emaglab
