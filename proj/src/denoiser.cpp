// Copyright (C) 2026 emaglab contributors
// SPDX-License-Identifier: Apache-2.0
#include "emaglab/denoiser.hpp"

#include <cmath>

#include "emaglab/errors.hpp"

namespace emaglab {

void ToyModelConfig::validate() const {
    if (image_size < 2 || patch < 1 || image_size % patch != 0)
        throw ConfigError("model: image_size must be a positive multiple of patch");
    if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0)
        throw ConfigError("model: d_model must be divisible by n_heads");
    if (n_layers < 1) throw ConfigError("model: n_layers must be >= 1");
    if (n_classes < 1) throw ConfigError("model: n_classes must be >= 1");
    if (joint_attention && n_txt_tokens < 1)
        throw ConfigError("model: joint mode needs n_txt_tokens >= 1");
    if (max_timestep < 1) throw ConfigError("model: max_timestep must be >= 1");
}

namespace {

Tensor init_weight(std::vector<int64_t> shape, CounterRng& rng, double std) {
    Tensor t = rng.gaussian_tensor(std::move(shape));
    for (double& v : t.data) v *= std;
    return t;
}

double xavier_std(int64_t fan_in, int64_t fan_out) {
    return std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace

ToyModelParams ToyModelParams::init(const ToyModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    ToyModelParams p;
    p.config = cfg;
    CounterRng rng(seed, RngStream::ParamInit);
    const int64_t d = cfg.d_model;
    const int64_t pd = cfg.patch_dim();
    constexpr double kEmbedStd = 0.02;

    auto push = [&](const std::string& name, Tensor t) { p.tensors.emplace_back(name, std::move(t)); };

    push("patch_embed.w", init_weight({pd, d}, rng, xavier_std(pd, d)));
    push("patch_embed.b", Tensor::zeros({1, d}));
    push("pos_embed", init_weight({cfg.n_img_tokens(), d}, rng, kEmbedStd));
    push("time_embed", init_weight({cfg.max_timestep + 1, d}, rng, kEmbedStd));
    push("class_embed", init_weight({cfg.n_classes + 1, d}, rng, kEmbedStd));
    if (cfg.joint_attention) {
        push("text_embed",
             init_weight({static_cast<int64_t>(cfg.n_classes + 1) * cfg.n_txt_tokens, d}, rng,
                         kEmbedStd));
    }
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string pre = "layer" + std::to_string(l) + ".";
        push(pre + "ln1.g", Tensor::full({1, d}, 1.0));
        push(pre + "ln1.b", Tensor::zeros({1, d}));
        push(pre + "attn.wq", init_weight({d, d}, rng, xavier_std(d, d)));
        push(pre + "attn.bq", Tensor::zeros({1, d}));
        push(pre + "attn.wk", init_weight({d, d}, rng, xavier_std(d, d)));
        push(pre + "attn.bk", Tensor::zeros({1, d}));
        push(pre + "attn.wv", init_weight({d, d}, rng, xavier_std(d, d)));
        push(pre + "attn.bv", Tensor::zeros({1, d}));
        push(pre + "attn.wo", init_weight({d, d}, rng, xavier_std(d, d)));
        push(pre + "attn.bo", Tensor::zeros({1, d}));
        push(pre + "ln2.g", Tensor::full({1, d}, 1.0));
        push(pre + "ln2.b", Tensor::zeros({1, d}));
        push(pre + "mlp.w1", init_weight({d, 4 * d}, rng, xavier_std(d, 4 * d)));
        push(pre + "mlp.b1", Tensor::zeros({1, 4 * d}));
        push(pre + "mlp.w2", init_weight({4 * d, d}, rng, xavier_std(4 * d, d)));
        push(pre + "mlp.b2", Tensor::zeros({1, d}));
    }
    push("head.ln.g", Tensor::full({1, d}, 1.0));
    push("head.ln.b", Tensor::zeros({1, d}));
    push("head.w", init_weight({d, pd}, rng, kEmbedStd));
    push("head.b", Tensor::zeros({1, pd}));
    return p;
}

const Tensor& ToyModelParams::find(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return t;
    }
    throw ConfigError("unknown parameter '" + name + "'");
}

Tensor& ToyModelParams::find(const std::string& name) {
    for (auto& [n, t] : tensors) {
        if (n == name) return t;
    }
    throw ConfigError("unknown parameter '" + name + "'");
}

int64_t ToyModelParams::total_parameters() const {
    int64_t n = 0;
    for (const auto& [name, t] : tensors) n += t.numel();
    return n;
}

Tensor patchify(const Tensor& image, int patch) {
    if (image.shape.size() != 2 || image.rows() != image.cols())
        throw DimensionError("patchify expects a square image");
    const int64_t n = image.rows();
    if (n % patch != 0) throw DimensionError("image size not divisible by patch");
    const int64_t g = n / patch;
    Tensor out = Tensor::zeros({g * g, static_cast<int64_t>(patch) * patch});
    for (int64_t pr = 0; pr < g; ++pr)
        for (int64_t pc = 0; pc < g; ++pc) {
            const int64_t tok = pr * g + pc;
            int64_t k = 0;
            for (int64_t r = 0; r < patch; ++r)
                for (int64_t c = 0; c < patch; ++c)
                    out.at(tok, k++) = image.at(pr * patch + r, pc * patch + c);
        }
    return out;
}

Tensor unpatchify(const Tensor& tokens, int image_size, int patch) {
    const int64_t g = image_size / patch;
    if (tokens.rows() != g * g || tokens.cols() != static_cast<int64_t>(patch) * patch)
        throw DimensionError("unpatchify shape mismatch");
    Tensor out = Tensor::zeros({image_size, image_size});
    for (int64_t pr = 0; pr < g; ++pr)
        for (int64_t pc = 0; pc < g; ++pc) {
            const int64_t tok = pr * g + pc;
            int64_t k = 0;
            for (int64_t r = 0; r < patch; ++r)
                for (int64_t c = 0; c < patch; ++c)
                    out.at(pr * patch + r, pc * patch + c) = tokens.at(tok, k++);
        }
    return out;
}

namespace {

struct ParamIds {
    std::vector<std::pair<std::string, GradTape::Id>> ids;
    GradTape::Id get(const std::string& name) const {
        for (const auto& [n, id] : ids) {
            if (n == name) return id;
        }
        throw ConfigError("unknown parameter '" + name + "'");
    }
};

ParamIds make_param_leaves(GradTape& tape, const ToyModelParams& params, bool requires_grad) {
    ParamIds out;
    out.ids.reserve(params.tensors.size());
    for (const auto& [name, t] : params.tensors) out.ids.emplace_back(name, tape.leaf(t, requires_grad));
    return out;
}

void check_attention_replacement(const Tensor& replacement, const std::vector<int64_t>& shape,
                                 int layer) {
    if (replacement.shape != shape) {
        throw HookContractError("attention hook at layer " + std::to_string(layer) +
                                " returned shape " + shape_str(replacement.shape) + ", expected " +
                                shape_str(shape));
    }
    const int64_t k = shape.back();
    const int64_t rows = replacement.numel() / k;
    for (int64_t r = 0; r < rows; ++r) {
        double sum = 0.0;
        for (int64_t j = 0; j < k; ++j) {
            const double v = replacement.data[static_cast<size_t>(r * k + j)];
            if (v < -1e-12) {
                throw HookContractError("attention hook at layer " + std::to_string(layer) +
                                        " returned a negative entry");
            }
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            throw HookContractError("attention hook at layer " + std::to_string(layer) +
                                    " returned a non-stochastic row (sum " + format_double(sum) +
                                    ")");
        }
    }
}

// Shared forward graph for training and inference. `hooks` may only be
// non-empty on a non-tracking tape.
GradTape::Id build_forward(GradTape& tape, const ParamIds& pid, const ToyModelConfig& cfg,
                           GradTape::Id x_patched, int t, std::optional<int> class_id,
                           const AttentionHookBus& hooks) {
    if (tape.tracking() && !hooks.empty())
        throw HookContractError("hooks are not supported on the training path");
    if (t < 0 || t > cfg.max_timestep)
        throw ConfigError("forward: timestep " + std::to_string(t) + " out of table range");
    const int cls = class_id.value_or(cfg.null_class());
    if (cls < 0 || cls > cfg.null_class())
        throw ConfigError("forward: class id " + std::to_string(cls) + " out of range");

    const int64_t d = cfg.d_model;
    const int64_t n_img = cfg.n_img_tokens();
    const int64_t n_tok = cfg.n_tokens();
    const int64_t heads = cfg.n_heads;
    const int64_t dh = cfg.head_dim();

    auto tok = tape.add(tape.add_rowvec(tape.matmul(x_patched, pid.get("patch_embed.w")),
                                        pid.get("patch_embed.b")),
                        pid.get("pos_embed"));
    const auto t_emb = tape.slice_rows(pid.get("time_embed"), t, t + 1);
    GradTape::Id c_emb;
    if (hooks.class_embedding_override) {
        c_emb = tape.constant(hooks.class_embedding_override->reshaped({1, d}));
    } else {
        c_emb = tape.slice_rows(pid.get("class_embed"), cls, cls + 1);
    }
    tok = tape.add_rowvec(tape.add_rowvec(tok, t_emb), c_emb);

    auto x = tok;
    if (cfg.joint_attention) {
        GradTape::Id txt;
        if (hooks.text_tokens_override) {
            txt = tape.constant(hooks.text_tokens_override->reshaped({cfg.n_txt_tokens, d}));
        } else {
            txt = tape.slice_rows(pid.get("text_embed"), static_cast<int64_t>(cls) * cfg.n_txt_tokens,
                                  static_cast<int64_t>(cls + 1) * cfg.n_txt_tokens);
        }
        x = tape.concat_rows({tok, tape.add_rowvec(txt, t_emb)});
    }

    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int l = 0; l < cfg.n_layers; ++l) {
        if (hooks.dropped_layers.count(l)) continue;
        const std::string pre = "layer" + std::to_string(l) + ".";
        auto h = tape.layer_norm(x, pid.get(pre + "ln1.g"), pid.get(pre + "ln1.b"));
        auto q = tape.add_rowvec(tape.matmul(h, pid.get(pre + "attn.wq")), pid.get(pre + "attn.bq"));
        if (auto it = hooks.query.find(l); it != hooks.query.end()) {
            Tensor replaced = it->second(tape.value(q));
            if (replaced.shape != tape.value(q).shape)
                throw HookContractError("query hook at layer " + std::to_string(l) +
                                        " changed the query shape");
            q = tape.constant(std::move(replaced));
        }
        auto k = tape.add_rowvec(tape.matmul(h, pid.get(pre + "attn.wk")), pid.get(pre + "attn.bk"));
        auto v = tape.add_rowvec(tape.matmul(h, pid.get(pre + "attn.wv")), pid.get(pre + "attn.bv"));

        std::vector<GradTape::Id> score_mats;
        score_mats.reserve(static_cast<size_t>(heads));
        for (int64_t hh = 0; hh < heads; ++hh) {
            const auto qh = tape.slice_cols(q, hh * dh, (hh + 1) * dh);
            const auto kh = tape.slice_cols(k, hh * dh, (hh + 1) * dh);
            score_mats.push_back(tape.scale(tape.matmul(qh, tape.transpose(kh)), inv_sqrt_dh));
        }
        auto attn = tape.softmax_lastdim(tape.stack_mats(score_mats));  // (H, Q, K)

        if (!hooks.observers.empty() || hooks.attention.count(l)) {
            const Tensor attn4d = tape.value(attn).reshaped({1, heads, n_tok, n_tok});
            for (const auto& obs : hooks.observers) obs(l, attn4d);
            if (auto it = hooks.attention.find(l); it != hooks.attention.end()) {
                Tensor replaced = it->second(attn4d);
                check_attention_replacement(replaced, attn4d.shape, l);
                attn = tape.constant(replaced.reshaped({heads, n_tok, n_tok}));
            }
        }

        std::vector<GradTape::Id> ctx_heads;
        ctx_heads.reserve(static_cast<size_t>(heads));
        for (int64_t hh = 0; hh < heads; ++hh) {
            const auto vh = tape.slice_cols(v, hh * dh, (hh + 1) * dh);
            ctx_heads.push_back(tape.matmul(tape.unstack_mat(attn, hh), vh));
        }
        auto attn_out = tape.add_rowvec(tape.matmul(tape.concat_cols(ctx_heads), pid.get(pre + "attn.wo")),
                                        pid.get(pre + "attn.bo"));
        x = tape.add(x, attn_out);

        auto h2 = tape.layer_norm(x, pid.get(pre + "ln2.g"), pid.get(pre + "ln2.b"));
        auto mlp = tape.add_rowvec(
            tape.matmul(tape.gelu(tape.add_rowvec(tape.matmul(h2, pid.get(pre + "mlp.w1")),
                                                  pid.get(pre + "mlp.b1"))),
                        pid.get(pre + "mlp.w2")),
            pid.get(pre + "mlp.b2"));
        x = tape.add(x, mlp);
    }

    auto img_rows = cfg.joint_attention ? tape.slice_rows(x, 0, n_img) : x;
    auto out = tape.layer_norm(img_rows, pid.get("head.ln.g"), pid.get("head.ln.b"));
    return tape.add_rowvec(tape.matmul(out, pid.get("head.w")), pid.get("head.b"));
}

}  // namespace

Tensor forward(const ToyModelParams& params, const Tensor& x_t, int t,
               std::optional<int> class_id, const AttentionHookBus& hooks) {
    GradTape tape(false);
    const ParamIds pid = make_param_leaves(tape, params, false);
    const auto xp = tape.constant(patchify(x_t, params.config.patch));
    const auto pred = build_forward(tape, pid, params.config, xp, t, class_id, hooks);
    return unpatchify(tape.value(pred), params.config.image_size, params.config.patch);
}

TrainResult train(const ToyModelConfig& model_cfg, const NoiseSchedule& schedule,
                  const DatasetConfig& data_cfg, const TrainConfig& train_cfg) {
    model_cfg.validate();
    if (train_cfg.mode == TrainMode::Epsilon && schedule.kind() != ScheduleKind::VpDiscrete)
        throw ConfigError("epsilon training requires the vp schedule");
    if (train_cfg.mode == TrainMode::Velocity && schedule.kind() != ScheduleKind::RectifiedFlow)
        throw ConfigError("velocity training requires the flow schedule");
    if (model_cfg.max_timestep != schedule.steps())
        throw ConfigError("model timestep table does not match schedule step count");
    if (data_cfg.n_classes != model_cfg.n_classes)
        throw ConfigError("dataset and model disagree on class count");
    if (train_cfg.batch < 1) throw ConfigError("train batch must be >= 1");

    TrainResult result;
    result.params = ToyModelParams::init(model_cfg, train_cfg.seed);
    result.loss_curve.push_back(eval_loss(result.params, schedule, data_cfg, train_cfg.mode,
                                          train_cfg.batch, train_cfg.seed ^ 0x5eedc0deULL));

    CounterRng rng_batch(train_cfg.seed, RngStream::TrainBatch);
    CounterRng rng_noise(train_cfg.seed, RngStream::TrainNoise);
    CounterRng rng_drop(train_cfg.seed, RngStream::TrainCondDrop);

    AdamConfig adam_cfg;
    adam_cfg.lr = train_cfg.lr;
    AdamState adam_state;
    const AttentionHookBus no_hooks;

    for (int step = 0; step < train_cfg.steps; ++step) {
        GradTape tape(true);
        const ParamIds pid = make_param_leaves(tape, result.params, true);
        std::vector<GradTape::Id> losses;
        losses.reserve(static_cast<size_t>(train_cfg.batch));
        for (int b = 0; b < train_cfg.batch; ++b) {
            const int cls = static_cast<int>(rng_batch.uniform_int(0, model_cfg.n_classes - 1));
            const Tensor x0 = make_sample(data_cfg, cls, rng_batch);
            const int t = static_cast<int>(rng_batch.uniform_int(1, schedule.steps()));
            const Tensor noise = rng_noise.gaussian_tensor(x0.shape);
            const Tensor x_in = forward_corrupt(x0, t, noise, schedule);
            const Tensor target = train_cfg.mode == TrainMode::Epsilon ? noise : sub(noise, x0);
            const std::optional<int> cond =
                rng_drop.uniform() < train_cfg.cond_drop ? std::nullopt : std::optional<int>(cls);
            const auto pred = build_forward(tape, pid, model_cfg,
                                            tape.constant(patchify(x_in, model_cfg.patch)), t, cond,
                                            no_hooks);
            losses.push_back(tape.mse(pred, tape.constant(patchify(target, model_cfg.patch))));
        }
        const auto loss = tape.mean_of(losses);
        const double loss_value = tape.value(loss).data[0];
        if (!std::isfinite(loss_value))
            throw DivergenceError("training loss diverged at step " + std::to_string(step));
        result.loss_curve.push_back(loss_value);

        tape.backward(loss);
        std::vector<Tensor*> param_ptrs;
        std::vector<const Tensor*> grad_ptrs;
        std::vector<std::string> names;
        param_ptrs.reserve(result.params.tensors.size());
        for (size_t i = 0; i < result.params.tensors.size(); ++i) {
            param_ptrs.push_back(&result.params.tensors[i].second);
            grad_ptrs.push_back(&tape.grad(pid.ids[i].second));
            names.push_back(result.params.tensors[i].first);
        }
        adam_step(param_ptrs, names, grad_ptrs, adam_state, adam_cfg);
    }
    return result;
}

double eval_loss(const ToyModelParams& params, const NoiseSchedule& schedule,
                 const DatasetConfig& data_cfg, TrainMode mode, int batch, uint64_t seed) {
    CounterRng rng_batch(seed, RngStream::TrainBatch);
    CounterRng rng_noise(seed, RngStream::TrainNoise);
    const AttentionHookBus no_hooks;
    double total = 0.0;
    for (int b = 0; b < batch; ++b) {
        const int cls = b % params.config.n_classes;
        const Tensor x0 = make_sample(data_cfg, cls, rng_batch);
        const int t = static_cast<int>(rng_batch.uniform_int(1, schedule.steps()));
        const Tensor noise = rng_noise.gaussian_tensor(x0.shape);
        const Tensor x_in = forward_corrupt(x0, t, noise, schedule);
        const Tensor target = mode == TrainMode::Epsilon ? noise : sub(noise, x0);
        const Tensor pred = forward(params, x_in, t, cls, no_hooks);
        const Tensor diff = sub(pred, target);
        total += dot(diff, diff) / static_cast<double>(diff.numel());
    }
    return total / static_cast<double>(batch);
}

}  // namespace emaglab
