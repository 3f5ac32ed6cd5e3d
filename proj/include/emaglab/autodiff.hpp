// Copyright (C) 2026 emaglab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "emaglab/tensor.hpp"

namespace emaglab {

/// Reverse-mode tape over Tensor primitives. A tape is rebuilt for every
/// training step; nodes hold the forward value plus a closure that scatters
/// the node's gradient to its parents. With tracking disabled the same ops
/// run value-only, which is the inference path.
class GradTape {
  public:
    using Id = int32_t;

    explicit GradTape(bool track = true) : track_(track) {}

    bool tracking() const { return track_; }

    Id leaf(Tensor value, bool requires_grad);
    Id constant(Tensor value) { return leaf(std::move(value), false); }

    const Tensor& value(Id id) const { return nodes_[static_cast<size_t>(id)].value; }
    const Tensor& grad(Id id) const;

    /// Backpropagates from a scalar root. Gradients accumulate on every node
    /// with requires_grad; shapes always equal the forward values' shapes.
    void backward(Id root);

    // --- primitives -------------------------------------------------------
    Id matmul(Id a, Id b);
    Id transpose(Id a);
    Id add(Id a, Id b);
    Id sub(Id a, Id b);
    Id add_rowvec(Id a, Id v);  // v has shape (1, C) or (C); broadcast over rows
    Id scale(Id a, double s);
    Id gelu(Id a);  // exact erf formulation
    Id softmax_lastdim(Id a);
    Id layer_norm(Id x, Id gain, Id bias);  // normalizes the last axis
    Id slice_rows(Id a, int64_t r0, int64_t r1);
    Id slice_cols(Id a, int64_t c0, int64_t c1);
    Id concat_rows(const std::vector<Id>& parts);
    Id concat_cols(const std::vector<Id>& parts);
    Id stack_mats(const std::vector<Id>& mats);  // H x (Q,K) -> (H,Q,K)
    Id unstack_mat(Id a, int64_t index);         // (H,Q,K) -> (Q,K)
    Id reshape(Id a, std::vector<int64_t> new_shape);
    Id mse(Id pred, Id target);                  // scalar mean squared error
    Id mean_of(const std::vector<Id>& scalars);  // average of scalar nodes

    size_t node_count() const { return nodes_.size(); }

  private:
    struct Node {
        Tensor value;
        Tensor grad;  // allocated lazily in backward()
        std::function<void(GradTape&)> backprop;
        bool requires_grad = false;
        bool grad_ready = false;
    };

    Id push(Tensor value, bool requires_grad, std::function<void(GradTape&)> backprop);
    Tensor& grad_buf(Id id);
    void accumulate(Id id, const Tensor& g);
    bool any_requires(const std::vector<Id>& ids) const;

    std::vector<Node> nodes_;
    bool track_;
};

double gelu_scalar(double x);
double gelu_grad_scalar(double x);

}  // namespace emaglab
