// Copyright (C) 2026 emaglab contributors
// SPDX-License-Identifier: Apache-2.0
#include "emaglab/guidance.hpp"

#include <cmath>

#include "emaglab/errors.hpp"

namespace emaglab {

void GuidanceWindow::validate(int t_max) const {
    // Denoising runs in reverse, so the ordering is t_0 < tau_e < tau_s <= t_max.
    if (!(0 < tau_e && tau_e < tau_s && tau_s <= t_max)) {
        throw ConfigError("guidance window must satisfy 0 < tau_e < tau_s <= t_max, got tau_e=" +
                          std::to_string(tau_e) + " tau_s=" + std::to_string(tau_s) +
                          " t_max=" + std::to_string(t_max));
    }
    if (delta_t < 0) throw ConfigError("guidance window warmup delta_t must be >= 0");
}

double beta_from_halflife(double halflife) {
    if (!(halflife > 0.0)) throw ConfigError("halflife must be positive");
    return std::exp2(-1.0 / halflife);
}

const Tensor* EmaState::find(int layer, BranchKind branch) const {
    const auto it = buffers.find({layer, branch});
    if (it == buffers.end() || !it->second.initialized) return nullptr;
    return &it->second.ema;
}

void ema_update(EmaState& state, int layer, BranchKind branch, const Tensor& attention) {
    auto& buf = state.buffers[{layer, branch}];
    if (!buf.initialized) {
        buf.ema = attention;
        buf.initialized = true;
        return;
    }
    if (!buf.ema.same_shape(attention)) {
        throw DimensionError("ema_update: attention shape changed from " +
                             shape_str(buf.ema.shape) + " to " + shape_str(attention.shape) +
                             "; reinitialize the state per trajectory");
    }
    const double b = state.beta;
    for (size_t i = 0; i < buf.ema.data.size(); ++i)
        buf.ema.data[i] = b * buf.ema.data[i] + (1.0 - b) * attention.data[i];
}

double layer_delta(const Tensor& ema, const Tensor& attention) {
    return mean_abs_diff(ema, attention);
}

int select_layer(const std::map<int, double>& deltas, int layer_min, int layer_max) {
    if (layer_min > layer_max) throw ConfigError("select_layer: empty layer range");
    int best = layer_min;
    double best_delta = -1.0;
    for (int l = layer_min; l <= layer_max; ++l) {
        const auto it = deltas.find(l);
        if (it == deltas.end())
            throw ConfigError("select_layer: no delta for layer " + std::to_string(l));
        if (it->second > best_delta) {
            best_delta = it->second;
            best = l;
        }
    }
    return best;
}

Tensor blend_replace(const Tensor& attention, const Tensor& ema, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw ConfigError("blend_replace: lambda must be in [0, 1]");
    Tensor out = lerp(attention, ema, lambda);
    // Exact endpoints need no cleanup; blends can accumulate float error.
    if (lambda != 0.0 && lambda != 1.0) {
        const int64_t k = out.shape.back();
        const int64_t rows = out.numel() / k;
        for (int64_t r = 0; r < rows; ++r) {
            double* row = out.data.data() + r * k;
            double sum = 0.0;
            for (int64_t j = 0; j < k; ++j) {
                if (row[j] < 0.0 && row[j] >= -1e-12) row[j] = 0.0;
                sum += row[j];
            }
            if (std::abs(sum - 1.0) > 1e-9 && sum > 0.0) {
                const double inv = 1.0 / sum;
                for (int64_t j = 0; j < k; ++j) row[j] *= inv;
            }
        }
    }
    return out;
}

namespace {

void check_attention_4d(const Tensor& attention) {
    if (attention.shape.size() != 4)
        throw DimensionError("expected attention of shape (batch, heads, Q, K), got " +
                             shape_str(attention.shape));
}

struct BlockSpec {
    int64_t q0, q1;  // query rows
    int64_t k0, k1;  // key columns
};

BlockSpec block_for(const Tensor& attention, const TokenLayout& layout, EmagVariant variant) {
    check_attention_4d(attention);
    const int64_t q = attention.shape[2], k = attention.shape[3];
    if (layout.n_tokens() != q || layout.n_tokens() != k)
        throw DimensionError("token layout does not tile the attention map: layout " +
                             std::to_string(layout.n_tokens()) + " tokens vs map " +
                             shape_str(attention.shape));
    const int64_t k_end = variant == EmagVariant::ImageOnly ? layout.n_img : k;
    return BlockSpec{0, layout.n_img, 0, k_end};
}

}  // namespace

Tensor emag_extract_block(const Tensor& attention, const TokenLayout& layout,
                          EmagVariant variant) {
    const BlockSpec b = block_for(attention, layout, variant);
    const int64_t batch = attention.shape[0], heads = attention.shape[1];
    const int64_t q = attention.shape[2], k = attention.shape[3];
    const int64_t bq = b.q1 - b.q0, bk = b.k1 - b.k0;
    Tensor out = Tensor::zeros({batch, heads, bq, bk});
    for (int64_t n = 0; n < batch * heads; ++n) {
        const double* src = attention.data.data() + n * q * k;
        double* dst = out.data.data() + n * bq * bk;
        for (int64_t r = 0; r < bq; ++r)
            for (int64_t c = 0; c < bk; ++c) dst[r * bk + c] = src[(b.q0 + r) * k + (b.k0 + c)];
    }
    return out;
}

Tensor emag_partition_apply(const Tensor& attention, const TokenLayout& layout,
                            EmagVariant variant, const std::function<Tensor(const Tensor&)>& op) {
    const BlockSpec b = block_for(attention, layout, variant);
    Tensor block = emag_extract_block(attention, layout, variant);
    Tensor new_block = op(block);
    if (!new_block.same_shape(block))
        throw DimensionError("emag_partition_apply: op changed the block shape");
    Tensor out = attention;
    const int64_t batch = attention.shape[0], heads = attention.shape[1];
    const int64_t q = attention.shape[2], k = attention.shape[3];
    const int64_t bq = b.q1 - b.q0, bk = b.k1 - b.k0;
    for (int64_t n = 0; n < batch * heads; ++n) {
        double* dst = out.data.data() + n * q * k;
        const double* src = new_block.data.data() + n * bq * bk;
        for (int64_t r = 0; r < bq; ++r)
            for (int64_t c = 0; c < bk; ++c) dst[(b.q0 + r) * k + (b.k0 + c)] = src[r * bk + c];
    }
    return out;
}

Tensor pag_identity_attention(const Tensor& attention) {
    check_attention_4d(attention);
    const int64_t q = attention.shape[2], k = attention.shape[3];
    if (q != k)
        throw DimensionError("identity attention needs a square map, got " +
                             shape_str(attention.shape));
    Tensor out = Tensor::zeros(attention.shape);
    const int64_t mats = attention.shape[0] * attention.shape[1];
    for (int64_t n = 0; n < mats; ++n) {
        double* dst = out.data.data() + n * q * k;
        for (int64_t r = 0; r < q; ++r) dst[r * k + r] = 1.0;
    }
    return out;
}

Tensor seg_query_mean(const Tensor& queries, int64_t n_avg_rows) {
    if (queries.shape.size() != 2) throw DimensionError("seg_query_mean expects (tokens, d)");
    const int64_t rows = queries.rows(), cols = queries.cols();
    if (n_avg_rows < 1 || n_avg_rows > rows)
        throw DimensionError("seg_query_mean: row count out of range");
    Tensor out = queries;
    std::vector<double> mean(static_cast<size_t>(cols), 0.0);
    for (int64_t r = 0; r < n_avg_rows; ++r)
        for (int64_t c = 0; c < cols; ++c) mean[static_cast<size_t>(c)] += queries.at(r, c);
    for (double& v : mean) v /= static_cast<double>(n_avg_rows);
    for (int64_t r = 0; r < n_avg_rows; ++r)
        for (int64_t c = 0; c < cols; ++c) out.at(r, c) = mean[static_cast<size_t>(c)];
    return out;
}

Tensor sag_token_mask(const Tensor& attention, const TokenLayout& layout, int grid,
                      double threshold) {
    check_attention_4d(attention);
    if (layout.n_img != grid * grid)
        throw DimensionError("sag_token_mask: image token count does not form the grid");
    const int64_t heads = attention.shape[0] * attention.shape[1];
    const int64_t q = attention.shape[2], k = attention.shape[3];
    if (layout.n_tokens() != q || layout.n_tokens() != k)
        throw DimensionError("sag_token_mask: layout does not tile the attention map");
    // Head-mean, then total attention mass received per image token (sum of
    // its key column over image queries).
    Tensor mask = Tensor::zeros({grid, grid});
    for (int64_t tok = 0; tok < layout.n_img; ++tok) {
        double mass = 0.0;
        for (int64_t n = 0; n < heads; ++n) {
            const double* mat = attention.data.data() + n * q * k;
            for (int64_t r = 0; r < layout.n_img; ++r) mass += mat[r * k + tok];
        }
        mass /= static_cast<double>(heads);
        mask.data[static_cast<size_t>(tok)] = mass > threshold ? 1.0 : 0.0;
    }
    return mask;
}

Tensor gaussian_blur2d(const Tensor& image, int kernel, double sigma) {
    if (image.shape.size() != 2) throw DimensionError("gaussian_blur2d expects a 2-d image");
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("blur kernel must be odd and positive");
    if (!(sigma > 0.0)) throw ConfigError("blur sigma must be positive");
    const int radius = kernel / 2;
    std::vector<double> w(static_cast<size_t>(kernel));
    double norm = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
        w[static_cast<size_t>(i + radius)] = v;
        norm += v;
    }
    for (double& v : w) v /= norm;

    const int64_t rows = image.rows(), cols = image.cols();
    auto reflect = [](int64_t idx, int64_t n) {
        // symmetric padding: ... 2 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
        while (idx < 0 || idx >= n) {
            if (idx < 0) idx = -idx - 1;
            if (idx >= n) idx = 2 * n - idx - 1;
        }
        return idx;
    };
    Tensor tmp = Tensor::zeros(image.shape);
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i)
                s += w[static_cast<size_t>(i + radius)] * image.at(r, reflect(c + i, cols));
            tmp.at(r, c) = s;
        }
    Tensor out = Tensor::zeros(image.shape);
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i)
                s += w[static_cast<size_t>(i + radius)] * tmp.at(reflect(r + i, rows), c);
            out.at(r, c) = s;
        }
    return out;
}

Tensor sag_degrade_latent(const Tensor& latent, const Tensor& token_mask, int kernel,
                          double sigma) {
    if (latent.shape.size() != 2 || token_mask.shape.size() != 2)
        throw DimensionError("sag_degrade_latent expects 2-d latent and mask");
    bool any = false;
    for (double v : token_mask.data) {
        if (v != 0.0) any = true;
    }
    if (!any) return latent;  // empty mask leaves the latent untouched
    const int64_t n = latent.rows();
    const int64_t g = token_mask.rows();
    if (n % g != 0) throw DimensionError("sag_degrade_latent: mask grid does not divide latent");
    const int64_t cell = n / g;
    const Tensor blurred = gaussian_blur2d(latent, kernel, sigma);
    Tensor out = latent;
    for (int64_t r = 0; r < n; ++r)
        for (int64_t c = 0; c < n; ++c) {
            if (token_mask.at(r / cell, c / cell) != 0.0) out.at(r, c) = blurred.at(r, c);
        }
    return out;
}

}  // namespace emaglab
