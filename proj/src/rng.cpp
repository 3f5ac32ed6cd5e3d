// Copyright (C) 2026 emaglab contributors
// SPDX-License-Identifier: Apache-2.0
#include "emaglab/rng.hpp"

#include <cmath>

namespace emaglab {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}
}  // namespace

CounterRng::CounterRng(uint64_t seed, uint64_t stream)
    : base_(splitmix64(splitmix64(seed) ^ splitmix64(stream * 0xd1b54a32d192ed03ULL))) {}

uint64_t CounterRng::next_u64() { return splitmix64(base_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

double CounterRng::uniform() {
    // Top 53 bits, mapped to (0, 1] so log() in Box-Muller is always finite.
    const uint64_t bits = next_u64() >> 11;
    return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
}

double CounterRng::gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(kTwoPi * u2);
    has_spare_ = true;
    return r * std::cos(kTwoPi * u2);
}

int64_t CounterRng::uniform_int(int64_t lo, int64_t hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo + 1);
    return lo + static_cast<int64_t>(next_u64() % span);
}

Tensor CounterRng::gaussian_tensor(std::vector<int64_t> shape) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = gaussian();
    return t;
}

}  // namespace emaglab
