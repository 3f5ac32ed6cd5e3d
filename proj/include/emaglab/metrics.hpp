// Copyright (C) 2026 emaglab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "emaglab/tensor.hpp"

namespace emaglab {

/// Continuous Hopfield instance: stored patterns as columns of a (d, N)
/// matrix, a state/query vector of length d and inverse temperature beta > 0.
struct HopfieldInstance {
    Tensor patterns;  // (d, N)
    Tensor query;     // (d)
    double beta = 1.0;

    int64_t dim() const;
    int64_t count() const;
    double max_pattern_norm() const;  // recomputed on every call
    void validate() const;
};

/// Energy of the modern Hopfield network:
///   -lse(beta, X^T z) + 0.5 z^T z + beta^-1 log N + 0.5 M^2
/// with a stabilized log-sum-exp.
double hopfield_energy(const HopfieldInstance& inst);

/// One retrieval step: z_new = X softmax(beta X^T z).
Tensor hopfield_update(const HopfieldInstance& inst);

/// Mean token-wise entropy of a stochastic attention map, in nats; p log p is
/// taken as 0 at p == 0.
double attention_entropy(const Tensor& attention);

/// Squared Gaussian-Fréchet distance between two feature sets, each a (n, d)
/// matrix of rows. Unbiased covariances plus a 1e-6 ridge; the matrix square
/// root runs through a symmetric eigendecomposition with eigenvalues clamped
/// at 0.
double frechet_gaussian(const Tensor& real_features, const Tensor& fake_features);

struct PrdcResult {
    double precision = 0.0;
    double recall = 0.0;
    double density = 0.0;
    double coverage = 0.0;
};

/// k-NN manifold estimates of precision/recall/density/coverage. Euclidean
/// metric; a point's k-NN radius excludes the point itself, and zero radii
/// count as empty balls.
PrdcResult prdc(const Tensor& real_features, const Tensor& fake_features, int k);

struct MetricReport {
    double frechet = 0.0;
    PrdcResult prdc;
    int n_real = 0;
    int n_fake = 0;
};

}  // namespace emaglab
