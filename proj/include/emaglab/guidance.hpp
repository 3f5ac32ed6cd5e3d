// Copyright (C) 2026 emaglab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <utility>

#include "emaglab/tensor.hpp"

namespace emaglab {

/// Sampling-step window for EMA accumulation and attention replacement.
/// Steps run high-to-low noise (t = t_max .. 1); the window is active for
/// tau_e < t <= tau_s, and replacement additionally waits out the first
/// delta_t in-window steps (EMA warmup).
struct GuidanceWindow {
    int tau_s = 0;
    int tau_e = 0;
    int delta_t = 0;

    void validate(int t_max) const;
    bool contains(int t) const { return tau_e < t && t <= tau_s; }
};

/// beta = 2^(-1/H): the EMA's gap to a constant input halves every H steps.
double beta_from_halflife(double halflife);

/// Which branch of the sampler an EMA buffer belongs to. Conditional and
/// unconditional branches see different attention and never share buffers.
enum class BranchKind { Conditional, Unconditional };

/// Per-(layer, branch) exponential moving averages of attention maps plus the
/// per-branch in-window step counter. Buffers live for one trajectory.
struct EmaState {
    struct Buffer {
        Tensor ema;
        bool initialized = false;
    };

    double beta = 0.988;
    std::map<std::pair<int, BranchKind>, Buffer> buffers;
    std::map<BranchKind, int64_t> step_count;

    const Tensor* find(int layer, BranchKind branch) const;
};

/// E <- A on the first call, then E <- beta*E + (1-beta)*A. Throws if the
/// attention shape changes between calls (states are per trajectory).
void ema_update(EmaState& state, int layer, BranchKind branch, const Tensor& attention);

/// Mean absolute elementwise difference over all entries of the tracked map.
double layer_delta(const Tensor& ema, const Tensor& attention);

/// argmax of delta over [layer_min, layer_max]; ties break to the lowest
/// index. Every candidate layer must have an entry.
int select_layer(const std::map<int, double>& deltas, int layer_min, int layer_max);

/// (1-lambda)*A + lambda*E with exact endpoints; rows are re-normalized only
/// if floating error pushed a row sum off 1 by more than 1e-9, and entries in
/// [-1e-12, 0) are clamped to 0.
Tensor blend_replace(const Tensor& attention, const Tensor& ema, double lambda);

/// Key/query split of a joint attention map: the first n_img tokens are image
/// tokens, the rest text tokens.
struct TokenLayout {
    int n_img = 0;
    int n_txt = 0;
    int n_tokens() const { return n_img + n_txt; }
};

enum class EmagVariant { Full, ImageOnly };

/// Extracts the block the variant tracks from a (1, H, Q, K) attention map:
/// image-query rows and, for ImageOnly, image-key columns only. With no text
/// tokens both variants cover the whole map.
Tensor emag_extract_block(const Tensor& attention, const TokenLayout& layout, EmagVariant variant);

/// Applies `op` to the variant's block and reassembles the full map. Rows and
/// columns outside the block are returned bit-identical to the input.
Tensor emag_partition_apply(const Tensor& attention, const TokenLayout& layout, EmagVariant variant,
                            const std::function<Tensor(const Tensor&)>& op);

// --- baseline perturbations --------------------------------------------

/// Identity attention: every query attends only to itself. Requires Q == K.
Tensor pag_identity_attention(const Tensor& attention);

/// Replaces the first n_avg_rows query rows with their channel-wise mean
/// (mean over those rows, per column). Queries are (tokens, d_model).
Tensor seg_query_mean(const Tensor& queries, int64_t n_avg_rows);

/// Per-token mask from an attention map: head-mean, then column sums over
/// queries, thresholded. Returns a (grid, grid) 0/1 tensor over image tokens.
Tensor sag_token_mask(const Tensor& attention, const TokenLayout& layout, int grid,
                      double threshold);

/// Separable Gaussian blur with symmetric boundary handling.
Tensor gaussian_blur2d(const Tensor& image, int kernel, double sigma);

/// Nearest-neighbor upscale of the token mask to latent resolution, then
/// blur-and-composite: masked pixels take the blurred image.
Tensor sag_degrade_latent(const Tensor& latent, const Tensor& token_mask, int kernel, double sigma);

}  // namespace emaglab
