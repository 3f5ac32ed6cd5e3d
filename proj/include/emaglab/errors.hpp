// Copyright (C) 2026 emaglab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace emaglab {

// Shape or dimension mismatch in a tensor operation.
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid user-supplied configuration. Maps to CLI exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values encountered during training or sampling. CLI exit code 3.
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

// An attention hook violated its contract (wrong shape or non-stochastic rows).
struct HookContractError : std::runtime_error {
    explicit HookContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// File read/write failure.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace emaglab
