// Copyright (C) 2026 emaglab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "emaglab/autodiff.hpp"
#include "emaglab/dataset.hpp"
#include "emaglab/optim.hpp"
#include "emaglab/schedule.hpp"
#include "emaglab/tensor.hpp"

namespace emaglab {

/// Small diffusion transformer: patch embedding, learned positions, additive
/// timestep/class conditioning (with a null class), pre-LN blocks with
/// hookable self-attention, and an optional joint mode that appends learned
/// pseudo-text tokens per class so image->image and image->text attention
/// blocks genuinely exist.
struct ToyModelConfig {
    int image_size = 8;
    int patch = 2;
    int d_model = 32;
    int n_layers = 4;
    int n_heads = 2;
    int n_classes = 2;
    bool joint_attention = false;
    int n_txt_tokens = 4;  // per class, joint mode only
    int max_timestep = 50; // timestep table covers [0, max_timestep]

    int grid() const { return image_size / patch; }
    int n_img_tokens() const { return grid() * grid(); }
    int n_tokens() const { return n_img_tokens() + (joint_attention ? n_txt_tokens : 0); }
    int patch_dim() const { return patch * patch; }
    int head_dim() const { return d_model / n_heads; }
    int null_class() const { return n_classes; }
    void validate() const;
};

struct ToyModelParams {
    ToyModelConfig config;
    std::vector<std::pair<std::string, Tensor>> tensors;  // fixed order

    static ToyModelParams init(const ToyModelConfig& cfg, uint64_t seed);

    const Tensor& find(const std::string& name) const;
    Tensor& find(const std::string& name);
    int64_t total_parameters() const;
};

/// Interceptors and observers for the per-layer attention pipeline. Attention
/// interceptors receive the post-softmax map with shape (1, heads, Q, K) and
/// must return a replacement of identical shape whose rows stay stochastic
/// (sum 1 within 1e-9, entries >= -1e-12); the bus asserts this. Query
/// interceptors receive the pre-score query matrix (tokens, d_model).
/// Observers see every layer's post-softmax map before interception.
struct AttentionHookBus {
    std::map<int, std::function<Tensor(const Tensor&)>> attention;
    std::map<int, std::function<Tensor(const Tensor&)>> query;
    std::vector<std::function<void(int, const Tensor&)>> observers;
    std::set<int> dropped_layers;  // transformer blocks skipped entirely

    // Conditioning overrides (condition annealing). When set they replace the
    // class-embedding row / pseudo-text block for this forward only.
    std::optional<Tensor> class_embedding_override;
    std::optional<Tensor> text_tokens_override;

    bool empty() const {
        return attention.empty() && query.empty() && observers.empty() && dropped_layers.empty() &&
               !class_embedding_override && !text_tokens_override;
    }
};

/// One denoiser evaluation. `class_id` empty means the null class. The
/// prediction has the same shape as x_t (epsilon or velocity depending on how
/// the model was trained).
Tensor forward(const ToyModelParams& params, const Tensor& x_t, int t,
               std::optional<int> class_id, const AttentionHookBus& hooks);

Tensor patchify(const Tensor& image, int patch);
Tensor unpatchify(const Tensor& tokens, int image_size, int patch);

enum class TrainMode { Epsilon, Velocity };

struct TrainConfig {
    TrainMode mode = TrainMode::Epsilon;
    int steps = 2000;
    int batch = 8;
    double lr = 1e-3;
    double cond_drop = 0.1;  // probability of training a sample with the null class
    uint64_t seed = 0;
};

struct TrainResult {
    ToyModelParams params;
    std::vector<double> loss_curve;  // one entry per step (step 0 row = initial loss)
};

/// Trains the denoiser on the procedural dataset. Epsilon mode pairs with the
/// VP schedule, velocity mode with the rectified-flow schedule. Deterministic
/// given (config, schedule, dataset, train) inputs.
TrainResult train(const ToyModelConfig& model_cfg, const NoiseSchedule& schedule,
                  const DatasetConfig& data_cfg, const TrainConfig& train_cfg);

/// Mean loss of `params` on a held-out batch; same target convention as train.
double eval_loss(const ToyModelParams& params, const NoiseSchedule& schedule,
                 const DatasetConfig& data_cfg, TrainMode mode, int batch, uint64_t seed);

}  // namespace emaglab
