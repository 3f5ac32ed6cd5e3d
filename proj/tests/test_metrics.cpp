// Copyright (C) 2026 emaglab contributors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "emaglab/metrics.hpp"
#include "emaglab/rng.hpp"
#include "emaglab/tensor.hpp"

using namespace emaglab;

namespace {

HopfieldInstance random_instance(uint64_t seed, int64_t d, int64_t n, double beta) {
    CounterRng rng(seed, 55);
    HopfieldInstance inst;
    inst.patterns = rng.gaussian_tensor({d, n});
    inst.query = rng.gaussian_tensor({d});
    inst.beta = beta;
    return inst;
}

// Direct, unstabilized evaluation of the energy for the oracle path.
double energy_direct(const HopfieldInstance& inst) {
    const int64_t d = inst.dim(), n = inst.count();
    double sum = 0.0;
    for (int64_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (int64_t i = 0; i < d; ++i)
            s += inst.patterns.at(i, j) * inst.query.data[static_cast<size_t>(i)];
        sum += std::exp(inst.beta * s);
    }
    const double lse = std::log(sum) / inst.beta;
    double qq = 0.0;
    for (double v : inst.query.data) qq += v * v;
    return -lse + 0.5 * qq + std::log(static_cast<double>(n)) / inst.beta +
           0.5 * inst.max_pattern_norm() * inst.max_pattern_norm();
}

}  // namespace

TEST_CASE("hopfield energy: analytic cases") {
    // N=1 with the query at the stored pattern: energy is exactly 0
    CounterRng rng(1, 2);
    const Tensor x1 = rng.gaussian_tensor({5});
    HopfieldInstance inst;
    inst.patterns = x1.reshaped({5, 1});
    inst.query = x1;
    inst.beta = 1.7;
    CHECK(std::abs(hopfield_energy(inst)) < 1e-10);

    // zero query: lse over zero scores cancels the beta^-1 log N term, E = M^2/2
    HopfieldInstance zq = random_instance(2, 4, 6, 0.9);
    zq.query = Tensor::zeros({4});
    const double m = zq.max_pattern_norm();
    CHECK(hopfield_energy(zq) == doctest::Approx(0.5 * m * m).epsilon(1e-12));
}

TEST_CASE("hopfield energy matches the direct-summation oracle") {
    for (uint64_t s = 0; s < 50; ++s) {
        const HopfieldInstance inst = random_instance(100 + s, 2 + s % 7, 1 + s % 11, 0.2 + 0.1 * (s % 9));
        CHECK(std::abs(hopfield_energy(inst) - energy_direct(inst)) < 1e-10);
    }
}

TEST_CASE("hopfield update: single pattern retrieves in one step") {
    const HopfieldInstance inst = random_instance(3, 6, 1, 2.0);
    const Tensor z = hopfield_update(inst);
    for (int64_t i = 0; i < 6; ++i) CHECK(z.data[static_cast<size_t>(i)] == inst.patterns.at(i, 0));
}

TEST_CASE("hopfield update converges to a fixed point on separated patterns") {
    // well separated patterns at large beta: iterate, then one more update
    // moves less than 1e-6
    HopfieldInstance inst;
    inst.patterns = Tensor::zeros({4, 3});
    inst.patterns.at(0, 0) = 4.0;
    inst.patterns.at(1, 1) = 4.0;
    inst.patterns.at(2, 2) = 4.0;
    inst.query = Tensor({4}, {3.0, 0.5, 0.1, 0.0});
    inst.beta = 4.0;
    for (int i = 0; i < 50; ++i) inst.query = hopfield_update(inst);
    const Tensor next = hopfield_update(inst);
    double dist = 0.0;
    for (size_t i = 0; i < next.data.size(); ++i) {
        const double d = next.data[i] - inst.query.data[i];
        dist += d * d;
    }
    CHECK(std::sqrt(dist) < 1e-6);
}

TEST_CASE("hopfield energy is non-increasing along updates") {
    CounterRng pick(9, 1);
    for (int trial = 0; trial < 1000; ++trial) {
        const int64_t d = 1 + static_cast<int64_t>(pick.uniform_int(0, 7));
        const int64_t n = 1 + static_cast<int64_t>(pick.uniform_int(0, 15));
        const double beta = 0.1 + 3.9 * pick.uniform();
        HopfieldInstance inst = random_instance(5000 + static_cast<uint64_t>(trial), d, n, beta);
        const double e0 = hopfield_energy(inst);
        inst.query = hopfield_update(inst);
        const double e1 = hopfield_energy(inst);
        CHECK(e1 <= e0 + 1e-8);
    }
}

TEST_CASE("attention entropy: uniform, one-hot, oracle, range") {
    const Tensor uniform = Tensor::full({1, 1, 4, 16}, 1.0 / 16.0);
    CHECK(attention_entropy(uniform) == doctest::Approx(std::log(16.0)).epsilon(1e-12));
    CHECK(attention_entropy(uniform) == doctest::Approx(2.7726).epsilon(1e-4));

    Tensor onehot = Tensor::zeros({1, 1, 3, 8});
    for (int64_t r = 0; r < 3; ++r) onehot.data[static_cast<size_t>(r * 8 + (r % 8))] = 1.0;
    CHECK(attention_entropy(onehot) == 0.0);

    CounterRng rng(4, 6);
    const Tensor a = softmax_rows(rng.gaussian_tensor({2, 3, 5, 7}));
    double want = 0.0;
    const int64_t k = 7, rows = a.numel() / k;
    for (int64_t r = 0; r < rows; ++r) {
        for (int64_t j = 0; j < k; ++j) {
            const double p = a.data[static_cast<size_t>(r * k + j)];
            if (p > 0.0) want -= p * std::log(p);
        }
    }
    want /= static_cast<double>(rows);
    CHECK(std::abs(attention_entropy(a) - want) < 1e-12);

    for (uint64_t s = 0; s < 20; ++s) {
        CounterRng r2(s, 7);
        const Tensor rows_t = softmax_rows(r2.gaussian_tensor({4, 9}));
        const double h = attention_entropy(rows_t);
        CHECK(h >= 0.0);
        CHECK(h <= std::log(9.0) + 1e-12);
    }
}

TEST_CASE("frechet: identical sets give 0") {
    CounterRng rng(5, 8);
    const Tensor feats = rng.gaussian_tensor({40, 6});
    CHECK(std::abs(frechet_gaussian(feats, feats)) < 1e-8);
}

TEST_CASE("frechet: equal covariance, shifted mean gives ||shift||^2") {
    CounterRng rng(6, 8);
    const Tensor a = rng.gaussian_tensor({60, 5});
    Tensor b = a;
    const std::vector<double> shift{0.5, -1.0, 0.25, 2.0, -0.75};
    for (int64_t i = 0; i < b.rows(); ++i)
        for (int64_t j = 0; j < 5; ++j) b.at(i, j) += shift[static_cast<size_t>(j)];
    double want = 0.0;
    for (double v : shift) want += v * v;
    CHECK(frechet_gaussian(a, b) == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("frechet: 1-d matches the scalar closed form") {
    CounterRng rng(7, 8);
    const Tensor a = rng.gaussian_tensor({200, 1});
    Tensor b = rng.gaussian_tensor({150, 1});
    for (double& v : b.data) v = 0.7 * v + 2.0;

    auto moments = [](const Tensor& t) {
        double mu = 0.0;
        for (double v : t.data) mu += v;
        mu /= static_cast<double>(t.data.size());
        double var = 0.0;
        for (double v : t.data) var += (v - mu) * (v - mu);
        var /= static_cast<double>(t.data.size() - 1);  // unbiased, matching the implementation
        return std::pair<double, double>{mu, var + 1e-6};  // same ridge
    };
    const auto [mu1, v1] = moments(a);
    const auto [mu2, v2] = moments(b);
    const double want = (mu1 - mu2) * (mu1 - mu2) +
                        (std::sqrt(v1) - std::sqrt(v2)) * (std::sqrt(v1) - std::sqrt(v2));
    CHECK(std::abs(frechet_gaussian(a, b) - want) < 1e-10);
}

TEST_CASE("frechet is symmetric") {
    CounterRng rng(8, 8);
    const Tensor a = rng.gaussian_tensor({50, 4});
    Tensor b = rng.gaussian_tensor({45, 4});
    for (double& v : b.data) v = 1.3 * v - 0.4;
    CHECK(frechet_gaussian(a, b) == doctest::Approx(frechet_gaussian(b, a)).epsilon(1e-9));
}

namespace {

// Fully independent O(n^2) PRDC oracle with explicitly sorted distances.
PrdcResult prdc_brute(const Tensor& real, const Tensor& fake, int k) {
    auto dist = [](const Tensor& a, int64_t i, const Tensor& b, int64_t j) {
        double s = 0.0;
        for (int64_t c = 0; c < a.cols(); ++c) {
            const double d = a.at(i, c) - b.at(j, c);
            s += d * d;
        }
        return std::sqrt(s);
    };
    auto radii = [&](const Tensor& t) {
        std::vector<double> out;
        for (int64_t i = 0; i < t.rows(); ++i) {
            std::vector<double> ds;
            for (int64_t j = 0; j < t.rows(); ++j)
                if (i != j) ds.push_back(dist(t, i, t, j));
            std::sort(ds.begin(), ds.end());
            out.push_back(ds[static_cast<size_t>(k - 1)]);
        }
        return out;
    };
    const auto rr = radii(real);
    const auto rf = radii(fake);
    PrdcResult res;
    int hits = 0;
    for (int64_t f = 0; f < fake.rows(); ++f) {
        bool any = false;
        for (int64_t i = 0; i < real.rows(); ++i) {
            if (rr[static_cast<size_t>(i)] > 0.0 && dist(fake, f, real, i) <= rr[static_cast<size_t>(i)]) {
                any = true;
                ++hits;
            }
        }
        res.precision += any ? 1.0 : 0.0;
    }
    res.precision /= static_cast<double>(fake.rows());
    res.density = static_cast<double>(hits) / (k * static_cast<double>(fake.rows()));
    for (int64_t i = 0; i < real.rows(); ++i) {
        bool any = false;
        for (int64_t f = 0; f < fake.rows(); ++f)
            if (rf[static_cast<size_t>(f)] > 0.0 && dist(real, i, fake, f) <= rf[static_cast<size_t>(f)])
                any = true;
        res.recall += any ? 1.0 : 0.0;
    }
    res.recall /= static_cast<double>(real.rows());
    for (int64_t i = 0; i < real.rows(); ++i) {
        bool any = false;
        for (int64_t f = 0; f < fake.rows(); ++f)
            if (rr[static_cast<size_t>(i)] > 0.0 && dist(real, i, fake, f) <= rr[static_cast<size_t>(i)])
                any = true;
        res.coverage += any ? 1.0 : 0.0;
    }
    res.coverage /= static_cast<double>(real.rows());
    return res;
}

}  // namespace

TEST_CASE("prdc: identical sets saturate precision, recall and coverage") {
    CounterRng rng(9, 8);
    const Tensor feats = rng.gaussian_tensor({25, 3});
    const PrdcResult r = prdc(feats, feats, 3);
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 1.0);
    CHECK(r.coverage == 1.0);
    CHECK(r.density > 0.0);
}

TEST_CASE("prdc: far-separated sets score zero") {
    CounterRng rng(10, 8);
    const Tensor a = rng.gaussian_tensor({15, 3});
    Tensor b = rng.gaussian_tensor({15, 3});
    for (double& v : b.data) v += 1e6;
    const PrdcResult r = prdc(a, b, 3);
    CHECK(r.precision == 0.0);
    CHECK(r.recall == 0.0);
    CHECK(r.density == 0.0);
    CHECK(r.coverage == 0.0);
}

TEST_CASE("prdc matches the brute-force oracle on 20-point sets") {
    for (uint64_t s = 0; s < 10; ++s) {
        CounterRng rng(40 + s, 8);
        const Tensor real = rng.gaussian_tensor({20, 4});
        Tensor fake = rng.gaussian_tensor({20, 4});
        for (double& v : fake.data) v = 0.8 * v + 0.3;
        const PrdcResult got = prdc(real, fake, 3);
        const PrdcResult want = prdc_brute(real, fake, 3);
        CHECK(got.precision == want.precision);
        CHECK(got.recall == want.recall);
        CHECK(got.density == doctest::Approx(want.density).epsilon(1e-12));
        CHECK(got.coverage == want.coverage);
    }
}

TEST_CASE("prdc matches brute force on mixed sizes up to 50 points") {
    CounterRng pick(11, 8);
    for (int trial = 0; trial < 8; ++trial) {
        const int64_t nr = 8 + pick.uniform_int(0, 42);
        const int64_t nf = 8 + pick.uniform_int(0, 42);
        const int k = 1 + static_cast<int>(pick.uniform_int(0, 4));
        CounterRng rng(900 + static_cast<uint64_t>(trial), 8);
        const Tensor real = rng.gaussian_tensor({nr, 3});
        const Tensor fake = rng.gaussian_tensor({nf, 3});
        const PrdcResult got = prdc(real, fake, k);
        const PrdcResult want = prdc_brute(real, fake, k);
        CHECK(got.precision == want.precision);
        CHECK(got.recall == want.recall);
        CHECK(got.density == doctest::Approx(want.density).epsilon(1e-12));
        CHECK(got.coverage == want.coverage);
    }
}

TEST_CASE("prdc handles duplicate points as empty balls") {
    // every real point duplicated: k=1 radius is 0, so no ball contains anything
    Tensor real = Tensor::zeros({6, 2});
    for (int64_t i = 0; i < 6; ++i) {
        real.at(i, 0) = static_cast<double>(i / 2);  // three pairs of duplicates
        real.at(i, 1) = 0.0;
    }
    CounterRng rng(12, 8);
    const Tensor fake = rng.gaussian_tensor({6, 2});
    const PrdcResult r = prdc(real, fake, 1);
    CHECK(r.precision == 0.0);
    CHECK(r.density == 0.0);
    CHECK(r.coverage == 0.0);
}
