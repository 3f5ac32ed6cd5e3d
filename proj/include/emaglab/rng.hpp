// Copyright (C) 2026 emaglab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "emaglab/tensor.hpp"

namespace emaglab {

// Named sub-streams so consumers never fight over a shared cursor. Branch
// evaluations inside one sampler step draw nothing; all noise is pulled from
// these streams by the harness before the branches run.
enum class RngStream : uint64_t {
    ParamInit = 1,
    DatasetShape = 2,
    TrainBatch = 3,
    TrainNoise = 4,
    TrainCondDrop = 5,
    InitLatent = 6,
    CadsNoise = 7,
    LayerDrop = 8,
};

/// Counter-based deterministic generator (splitmix64 core). A value is a pure
/// function of (seed, stream, counter), so independent streams can be drawn in
/// any order without coupling.
class CounterRng {
  public:
    CounterRng(uint64_t seed, uint64_t stream);
    CounterRng(uint64_t seed, RngStream stream) : CounterRng(seed, static_cast<uint64_t>(stream)) {}

    uint64_t next_u64();
    double uniform();        // (0, 1]
    double gaussian();       // standard normal, Box-Muller
    int64_t uniform_int(int64_t lo, int64_t hi);  // inclusive bounds
    Tensor gaussian_tensor(std::vector<int64_t> shape);

  private:
    uint64_t base_;
    uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace emaglab
