// Copyright (C) 2026 emaglab contributors
// SPDX-License-Identifier: Apache-2.0
#include "emaglab/dataset.hpp"

#include "emaglab/errors.hpp"

namespace emaglab {

Tensor make_sample(const DatasetConfig& cfg, int class_id, CounterRng& rng) {
    if (class_id < 0 || class_id >= cfg.n_classes)
        throw ConfigError("dataset class id " + std::to_string(class_id) + " out of range");
    const int n = cfg.image_size;
    Tensor img = Tensor::full({n, n}, -1.0);
    const double intensity =
        cfg.min_intensity + (cfg.max_intensity - cfg.min_intensity) * rng.uniform();
    const double fg = 2.0 * intensity - 1.0;
    if (class_id == 0) {
        // 4x4 filled square
        const int64_t r0 = cfg.jitter_position ? rng.uniform_int(0, n - 4) : (n - 4) / 2;
        const int64_t c0 = cfg.jitter_position ? rng.uniform_int(0, n - 4) : (n - 4) / 2;
        for (int64_t r = r0; r < r0 + 4; ++r)
            for (int64_t c = c0; c < c0 + 4; ++c) img.at(r, c) = fg;
    } else {
        // plus sign with arm length 2
        const int64_t rc = cfg.jitter_position ? rng.uniform_int(2, n - 3) : n / 2;
        const int64_t cc = cfg.jitter_position ? rng.uniform_int(2, n - 3) : n / 2;
        for (int64_t d = -2; d <= 2; ++d) {
            img.at(rc, cc + d) = fg;
            img.at(rc + d, cc) = fg;
        }
    }
    return img;
}

std::vector<std::pair<Tensor, int>> make_eval_set(const DatasetConfig& cfg, int count,
                                                  uint64_t seed) {
    CounterRng rng(seed, RngStream::DatasetShape);
    std::vector<std::pair<Tensor, int>> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        const int cls = i % cfg.n_classes;
        out.emplace_back(make_sample(cfg, cls, rng), cls);
    }
    return out;
}

}  // namespace emaglab
