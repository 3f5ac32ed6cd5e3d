// Copyright (C) 2026 emaglab contributors
// SPDX-License-Identifier: Apache-2.0
#include "emaglab/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "emaglab/errors.hpp"

namespace emaglab {

int64_t HopfieldInstance::dim() const { return patterns.rows(); }
int64_t HopfieldInstance::count() const { return patterns.cols(); }

double HopfieldInstance::max_pattern_norm() const {
    double best = 0.0;
    for (int64_t j = 0; j < count(); ++j) {
        double s = 0.0;
        for (int64_t i = 0; i < dim(); ++i) s += patterns.at(i, j) * patterns.at(i, j);
        best = std::max(best, std::sqrt(s));
    }
    return best;
}

void HopfieldInstance::validate() const {
    if (patterns.shape.size() != 2 || count() < 1)
        throw DimensionError("hopfield patterns must be a (d, N) matrix with N >= 1");
    if (query.numel() != dim()) throw DimensionError("hopfield query length must equal d");
    if (!(beta > 0.0)) throw ConfigError("hopfield beta must be positive");
}

namespace {

// X^T z: similarity of the query with every stored pattern.
std::vector<double> pattern_scores(const HopfieldInstance& inst) {
    const int64_t d = inst.dim(), n = inst.count();
    std::vector<double> s(static_cast<size_t>(n), 0.0);
    for (int64_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int64_t i = 0; i < d; ++i)
            acc += inst.patterns.at(i, j) * inst.query.data[static_cast<size_t>(i)];
        s[static_cast<size_t>(j)] = acc;
    }
    return s;
}

}  // namespace

double hopfield_energy(const HopfieldInstance& inst) {
    inst.validate();
    const std::vector<double> scores = pattern_scores(inst);
    double mx = scores[0];
    for (double v : scores) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : scores) sum += std::exp(inst.beta * (v - mx));
    const double lse = mx + std::log(sum) / inst.beta;

    double qq = 0.0;
    for (double v : inst.query.data) qq += v * v;
    const double m = inst.max_pattern_norm();
    return -lse + 0.5 * qq + std::log(static_cast<double>(inst.count())) / inst.beta +
           0.5 * m * m;
}

Tensor hopfield_update(const HopfieldInstance& inst) {
    inst.validate();
    std::vector<double> scores = pattern_scores(inst);
    Tensor logits({1, inst.count()}, std::move(scores));
    for (double& v : logits.data) v *= inst.beta;
    const Tensor p = softmax_rows(logits);
    Tensor out = Tensor::zeros(inst.query.shape);
    for (int64_t i = 0; i < inst.dim(); ++i) {
        double acc = 0.0;
        for (int64_t j = 0; j < inst.count(); ++j)
            acc += inst.patterns.at(i, j) * p.data[static_cast<size_t>(j)];
        out.data[static_cast<size_t>(i)] = acc;
    }
    return out;
}

double attention_entropy(const Tensor& attention) {
    if (attention.shape.empty()) throw DimensionError("attention_entropy on empty tensor");
    const int64_t k = attention.shape.back();
    const int64_t rows = attention.numel() / k;
    double total = 0.0;
    for (int64_t r = 0; r < rows; ++r) {
        const double* p = attention.data.data() + r * k;
        double h = 0.0;
        for (int64_t j = 0; j < k; ++j) {
            if (p[j] > 0.0) h -= p[j] * std::log(p[j]);
        }
        total += h;
    }
    return total / static_cast<double>(rows);
}

namespace {

constexpr double kCovRidge = 1e-6;

void fit_moments(const Tensor& feats, Eigen::VectorXd& mean, Eigen::MatrixXd& cov) {
    const int64_t n = feats.rows(), d = feats.cols();
    mean = Eigen::VectorXd::Zero(d);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) mean(j) += feats.at(i, j);
    mean /= static_cast<double>(n);
    cov = Eigen::MatrixXd::Zero(d, d);
    if (n > 1) {
        for (int64_t i = 0; i < n; ++i) {
            Eigen::VectorXd row(d);
            for (int64_t j = 0; j < d; ++j) row(j) = feats.at(i, j) - mean(j);
            cov.noalias() += row * row.transpose();
        }
        cov /= static_cast<double>(n - 1);
    }
    cov.diagonal().array() += kCovRidge;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    if (es.info() != Eigen::Success) throw DivergenceError("eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues();
    for (int i = 0; i < ev.size(); ++i) ev(i) = std::sqrt(std::max(ev(i), 0.0));
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_gaussian(const Tensor& real_features, const Tensor& fake_features) {
    if (real_features.shape.size() != 2 || fake_features.shape.size() != 2)
        throw DimensionError("frechet_gaussian expects (n, d) feature matrices");
    if (real_features.cols() != fake_features.cols())
        throw DimensionError("frechet_gaussian feature dimensions differ");
    if (real_features.rows() < 2 || fake_features.rows() < 2)
        throw DimensionError("frechet_gaussian needs at least 2 samples per set");

    Eigen::VectorXd mu_r, mu_f;
    Eigen::MatrixXd cov_r, cov_f;
    fit_moments(real_features, mu_r, cov_r);
    fit_moments(fake_features, mu_f, cov_f);

    const double mean_term = (mu_r - mu_f).squaredNorm();
    const Eigen::MatrixXd sqrt_r = psd_sqrt(cov_r);
    // tr((S_r S_f)^1/2) computed through the symmetric product S_r^1/2 S_f S_r^1/2.
    const Eigen::MatrixXd inner = sqrt_r * cov_f * sqrt_r;
    const Eigen::MatrixXd cross = psd_sqrt(0.5 * (inner + inner.transpose()));
    const double tr = cov_r.trace() + cov_f.trace() - 2.0 * cross.trace();
    const double value = mean_term + tr;
    if (!std::isfinite(value)) throw DivergenceError("frechet distance is not finite");
    // Tiny negatives from float error collapse to 0.
    return value < 0.0 && value > -1e-8 ? 0.0 : value;
}

namespace {

double sq_dist(const Tensor& a, int64_t i, const Tensor& b, int64_t j) {
    const int64_t d = a.cols();
    const double* pa = a.data.data() + i * d;
    const double* pb = b.data.data() + j * d;
    double s = 0.0;
    for (int64_t c = 0; c < d; ++c) {
        const double diff = pa[c] - pb[c];
        s += diff * diff;
    }
    return s;
}

// Squared k-NN radius of each point within its own set, self excluded.
std::vector<double> knn_sq_radii(const Tensor& feats, int k) {
    const int64_t n = feats.rows();
    std::vector<double> radii(static_cast<size_t>(n));
    std::vector<double> dists;
    for (int64_t i = 0; i < n; ++i) {
        dists.clear();
        for (int64_t j = 0; j < n; ++j) {
            if (j != i) dists.push_back(sq_dist(feats, i, feats, j));
        }
        std::nth_element(dists.begin(), dists.begin() + (k - 1), dists.end());
        radii[static_cast<size_t>(i)] = dists[static_cast<size_t>(k - 1)];
    }
    return radii;
}

bool in_ball(double sq_d, double sq_radius) { return sq_radius > 0.0 && sq_d <= sq_radius; }

}  // namespace

PrdcResult prdc(const Tensor& real_features, const Tensor& fake_features, int k) {
    if (real_features.shape.size() != 2 || fake_features.shape.size() != 2)
        throw DimensionError("prdc expects (n, d) feature matrices");
    if (real_features.cols() != fake_features.cols())
        throw DimensionError("prdc feature dimensions differ");
    if (k < 1) throw ConfigError("prdc needs k >= 1");
    const int64_t n_real = real_features.rows();
    const int64_t n_fake = fake_features.rows();
    if (n_real < k + 1 || n_fake < k + 1)
        throw ConfigError("prdc needs at least k+1 points per set");

    const std::vector<double> real_radii = knn_sq_radii(real_features, k);
    const std::vector<double> fake_radii = knn_sq_radii(fake_features, k);

    PrdcResult r;
    int64_t density_hits = 0;
    for (int64_t f = 0; f < n_fake; ++f) {
        bool inside_any = false;
        for (int64_t i = 0; i < n_real; ++i) {
            const double d = sq_dist(fake_features, f, real_features, i);
            if (in_ball(d, real_radii[static_cast<size_t>(i)])) {
                inside_any = true;
                ++density_hits;
            }
        }
        if (inside_any) r.precision += 1.0;
    }
    r.precision /= static_cast<double>(n_fake);
    r.density = static_cast<double>(density_hits) / (static_cast<double>(k) * n_fake);

    for (int64_t i = 0; i < n_real; ++i) {
        bool inside_any = false;
        for (int64_t f = 0; f < n_fake; ++f) {
            if (in_ball(sq_dist(real_features, i, fake_features, f),
                        fake_radii[static_cast<size_t>(f)])) {
                inside_any = true;
                break;
            }
        }
        if (inside_any) r.recall += 1.0;
    }
    r.recall /= static_cast<double>(n_real);

    for (int64_t i = 0; i < n_real; ++i) {
        for (int64_t f = 0; f < n_fake; ++f) {
            if (in_ball(sq_dist(real_features, i, fake_features, f),
                        real_radii[static_cast<size_t>(i)])) {
                r.coverage += 1.0;
                break;
            }
        }
    }
    r.coverage /= static_cast<double>(n_real);
    return r;
}

}  // namespace emaglab
