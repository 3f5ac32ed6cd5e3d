// Copyright (C) 2026 emaglab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace emaglab {

/// Dense row-major tensor of 64-bit floats. Shapes are explicit; there is no
/// broadcasting beyond the few helpers the toy model needs.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int64_t> shape_in, std::vector<double> data_in);

    static Tensor zeros(std::vector<int64_t> shape);
    static Tensor full(std::vector<int64_t> shape, double value);
    static Tensor scalar(double value);

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    bool empty() const { return data.empty(); }

    // 2-d accessors; throw DimensionError when rank != 2.
    int64_t rows() const;
    int64_t cols() const;
    double& at(int64_t r, int64_t c);
    double at(int64_t r, int64_t c) const;

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;

    // Shape-only change; element count must match.
    Tensor reshaped(std::vector<int64_t> new_shape) const;
};

int64_t shape_numel(const std::vector<int64_t>& shape);
std::string shape_str(const std::vector<int64_t>& shape);

// Core dense ops. All of them validate shapes and are deterministic.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose2d(const Tensor& a);

/// Numerically stabilized softmax over the last axis. Every row of the result
/// is nonnegative and sums to 1 within 1e-12.
Tensor softmax_rows(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor hadamard(const Tensor& a, const Tensor& b);

/// a + w * (b - a), the shared primitive behind every linear guidance rule.
/// Endpoints are exact: w == 0 returns a, w == 1 returns b, and elements with
/// a[i] == b[i] pass through unchanged, so algebraic reductions of guidance
/// formulas hold bitwise.
Tensor lerp(const Tensor& a, const Tensor& b, double w);

double mean_abs_diff(const Tensor& a, const Tensor& b);
double l2_norm(const Tensor& a);
double dot(const Tensor& a, const Tensor& b);
double mean_value(const Tensor& a);
double stddev_value(const Tensor& a);  // population std

// Shortest round-trip decimal formatting, locale independent.
std::string format_double(double v);
double parse_double(const std::string& s);

// Flat CSV layout: first line is the comma-joined shape, then one value per
// line. Used for debug dumps, checkpoints and trajectory files.
void write_tensor_csv(const std::string& path, const Tensor& t);
Tensor read_tensor_csv(const std::string& path);

}  // namespace emaglab
