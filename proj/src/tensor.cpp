// Copyright (C) 2026 emaglab contributors
// SPDX-License-Identifier: Apache-2.0
#include "emaglab/tensor.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "emaglab/errors.hpp"

namespace emaglab {

Tensor::Tensor(std::vector<int64_t> shape_in, std::vector<double> data_in)
    : shape(std::move(shape_in)), data(std::move(data_in)) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
        throw DimensionError("tensor data size " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }
}

Tensor Tensor::zeros(std::vector<int64_t> shape) {
    const int64_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0));
}

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
    const int64_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

int64_t Tensor::rows() const {
    if (shape.size() != 2) throw DimensionError("rows() on tensor of shape " + shape_str(shape));
    return shape[0];
}

int64_t Tensor::cols() const {
    if (shape.size() != 2) throw DimensionError("cols() on tensor of shape " + shape_str(shape));
    return shape[1];
}

double& Tensor::at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
double Tensor::at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }

bool Tensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Tensor Tensor::reshaped(std::vector<int64_t> new_shape) const {
    if (shape_numel(new_shape) != numel()) {
        throw DimensionError("cannot reshape " + shape_str(shape) + " to " + shape_str(new_shape));
    }
    return Tensor(std::move(new_shape), data);
}

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 0) throw DimensionError("negative dimension in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const std::vector<int64_t>& shape) {
    std::string s = "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape.size() != 2 || b.shape.size() != 2) {
        throw DimensionError("matmul expects rank-2 operands, got " + shape_str(a.shape) + " and " +
                             shape_str(b.shape));
    }
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul inner dimensions disagree: " + shape_str(a.shape) + " x " +
                             shape_str(b.shape));
    }
    const int64_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out = Tensor::zeros({m, n});
    // i-k-j loop order keeps the inner loop contiguous in b and out.
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a.data.data() + i * k;
        double* orow = out.data.data() + i * n;
        for (int64_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            const double* brow = b.data.data() + kk * n;
            for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

Tensor transpose2d(const Tensor& a) {
    const int64_t r = a.rows(), c = a.cols();
    Tensor out = Tensor::zeros({c, r});
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) out.data[static_cast<size_t>(j * r + i)] = a.data[static_cast<size_t>(i * c + j)];
    return out;
}

Tensor softmax_rows(const Tensor& x) {
    if (x.shape.empty()) throw DimensionError("softmax_rows on empty tensor");
    const int64_t k = x.shape.back();
    if (k <= 0) throw DimensionError("softmax_rows needs a nonempty last axis");
    const int64_t rows = x.numel() / k;
    Tensor out = Tensor::zeros(x.shape);
    for (int64_t r = 0; r < rows; ++r) {
        const double* in = x.data.data() + r * k;
        double* o = out.data.data() + r * k;
        double mx = in[0];
        for (int64_t j = 1; j < k; ++j) mx = std::max(mx, in[j]);
        double sum = 0.0;
        for (int64_t j = 0; j < k; ++j) {
            o[j] = std::exp(in[j] - mx);
            sum += o[j];
        }
        const double inv = 1.0 / sum;
        for (int64_t j = 0; j < k; ++j) o[j] *= inv;
    }
    return out;
}

static void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": shapes differ, " + shape_str(a.shape) + " vs " +
                             shape_str(b.shape));
    }
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

Tensor scale(const Tensor& a, double s) {
    Tensor out = a;
    for (double& v : out.data) v *= s;
    return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "hadamard");
    Tensor out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
    return out;
}

Tensor lerp(const Tensor& a, const Tensor& b, double w) {
    check_same_shape(a, b, "lerp");
    if (w == 0.0) return a;
    if (w == 1.0) return b;
    Tensor out = a;
    for (size_t i = 0; i < out.data.size(); ++i) {
        // Equal operands pass through so x + w*(x - x) cannot flip a zero sign.
        if (a.data[i] != b.data[i]) out.data[i] = a.data[i] + w * (b.data[i] - a.data[i]);
    }
    return out;
}

double mean_abs_diff(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mean_abs_diff");
    if (a.data.empty()) return 0.0;
    double s = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
    return s / static_cast<double>(a.data.size());
}

double l2_norm(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data) s += v * v;
    return std::sqrt(s);
}

double dot(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "dot");
    double s = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

double mean_value(const Tensor& a) {
    if (a.data.empty()) return 0.0;
    double s = 0.0;
    for (double v : a.data) s += v;
    return s / static_cast<double>(a.data.size());
}

double stddev_value(const Tensor& a) {
    if (a.data.empty()) return 0.0;
    const double mu = mean_value(a);
    double s = 0.0;
    for (double v : a.data) s += (v - mu) * (v - mu);
    return std::sqrt(s / static_cast<double>(a.data.size()));
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{}) throw IoError("cannot parse '" + s + "' as a number");
    return v;
}

void write_tensor_csv(const std::string& path, const Tensor& t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    for (size_t i = 0; i < t.shape.size(); ++i) {
        if (i > 0) f << ',';
        f << t.shape[i];
    }
    f << '\n';
    for (double v : t.data) f << format_double(v) << '\n';
    if (!f) throw IoError("write failed for " + path);
}

Tensor read_tensor_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::string header;
    if (!std::getline(f, header)) throw IoError("empty tensor file " + path);
    std::vector<int64_t> shape;
    std::stringstream hs(header);
    std::string field;
    while (std::getline(hs, field, ',')) shape.push_back(std::stoll(field));
    const int64_t n = shape_numel(shape);
    std::vector<double> data;
    data.reserve(static_cast<size_t>(n));
    std::string line;
    while (std::getline(f, line) && static_cast<int64_t>(data.size()) < n) {
        if (line.empty()) continue;
        data.push_back(parse_double(line));
    }
    if (static_cast<int64_t>(data.size()) != n) {
        throw IoError("tensor file " + path + " has " + std::to_string(data.size()) +
                      " values, expected " + std::to_string(n));
    }
    return Tensor(std::move(shape), std::move(data));
}

}  // namespace emaglab
