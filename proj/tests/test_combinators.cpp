// Copyright (C) 2026 emaglab contributors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "emaglab/combinators.hpp"
#include "emaglab/errors.hpp"
#include "emaglab/rng.hpp"

using namespace emaglab;

namespace {

Tensor rt(std::vector<int64_t> shape, uint64_t seed) {
    CounterRng rng(seed, 88);
    return rng.gaussian_tensor(std::move(shape));
}

double scalar(const Tensor& t) { return t.data[0]; }

}  // namespace

TEST_CASE("cfg_combine reductions and scalar example") {
    const Tensor u = rt({3, 3}, 1), c = rt({3, 3}, 2);
    CHECK(cfg_combine(u, c, 1.0).data == c.data);
    CHECK(cfg_combine(u, c, 0.0).data == u.data);
    CHECK(scalar(cfg_combine(Tensor::scalar(0.0), Tensor::scalar(1.0), 7.0)) == 7.0);
}

TEST_CASE("autoguidance_combine reductions") {
    const Tensor weak = rt({2, 2}, 3), strong = rt({2, 2}, 4);
    CHECK(autoguidance_combine(weak, strong, 1.0).data == strong.data);
    CHECK(autoguidance_combine(weak, weak, 5.0).data == weak.data);
    CHECK(scalar(autoguidance_combine(Tensor::scalar(2.0), Tensor::scalar(4.0), 1.5)) == 5.0);
}

TEST_CASE("pag_combine reductions") {
    const Tensor e = rt({2, 2}, 5), p = rt({2, 2}, 6);
    CHECK(pag_combine(e, p, 0.0).data == e.data);
    CHECK(pag_combine(e, e, 3.0).data == e.data);
    CHECK(scalar(pag_combine(Tensor::scalar(1.0), Tensor::scalar(0.5), 2.0)) == 2.0);
}

TEST_CASE("emag conditional update: reductions and closed-form oracle") {
    BranchPredictions preds;
    preds.uncond = rt({2, 3}, 7);
    preds.cond = rt({2, 3}, 8);
    preds.cond_perturbed = rt({2, 3}, 9);

    // w_e == 1 collapses to plain cfg bitwise
    const Tensor reduced = emag_conditional(preds, 1.0, 7.0);
    const Tensor cfg = cfg_combine(*preds.uncond, *preds.cond, 7.0);
    CHECK(reduced.data == cfg.data);

    // w_e == 0 is cfg with the perturbed conditional
    const Tensor swapped = emag_conditional(preds, 0.0, 7.0);
    const Tensor cfg_pert = cfg_combine(*preds.uncond, *preds.cond_perturbed, 7.0);
    CHECK(swapped.data == cfg_pert.data);

    // scalar example: eps_u=0, eps_c=1, eps'_c=0.8, w_e=1.75, w_cfg=7
    BranchPredictions s;
    s.uncond = Tensor::scalar(0.0);
    s.cond = Tensor::scalar(1.0);
    s.cond_perturbed = Tensor::scalar(0.8);
    const double got = scalar(emag_conditional(s, 1.75, 7.0));
    CHECK(got == doctest::Approx(8.05).epsilon(1e-12));
    // brute-force substitution oracle: eps_u + w*(eps' + w_e*(eps_c - eps') - eps_u)
    const double want = 0.0 + 7.0 * (0.8 + 1.75 * (1.0 - 0.8) - 0.0);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));

    BranchPredictions missing;
    missing.uncond = Tensor::scalar(0.0);
    missing.cond = Tensor::scalar(1.0);
    CHECK_THROWS_AS(emag_conditional(missing, 1.0, 1.0), ConfigError);
}

TEST_CASE("emag unconditional update") {
    const Tensor e = rt({2, 2}, 10), p = rt({2, 2}, 11);
    CHECK(emag_unconditional(e, p, 1.0).data == e.data);
    CHECK(emag_unconditional(e, e, 9.0).data == e.data);
    CHECK(scalar(emag_unconditional(Tensor::scalar(0.5), Tensor::scalar(0.3), 5.125)) ==
          doctest::Approx(1.325).epsilon(1e-12));
}

TEST_CASE("s2_combine") {
    const Tensor base = rt({2, 2}, 12), dropped = rt({2, 2}, 13);
    CHECK(s2_combine(base, dropped, 0.0).data == base.data);
    CHECK(scalar(s2_combine(Tensor::scalar(7.0), Tensor::scalar(1.0), 0.25)) == 6.75);
}

TEST_CASE("apg decomposition identities on random pairs") {
    CounterRng rng(21, 4);
    for (int trial = 0; trial < 1000; ++trial) {
        const Tensor v = rng.gaussian_tensor({8});
        const Tensor onto = rng.gaussian_tensor({8});
        const OrthoDecomposition d = project_onto(v, onto);
        // reconstruction: parallel + orthogonal == v
        for (size_t i = 0; i < v.data.size(); ++i)
            CHECK(std::abs(d.parallel.data[i] + d.orthogonal.data[i] - v.data[i]) < 1e-10);
        // orthogonality
        CHECK(std::abs(dot(d.parallel, d.orthogonal)) < 1e-10);
    }
}

TEST_CASE("project_onto handles a zero direction") {
    const Tensor v = rt({4}, 14);
    const OrthoDecomposition d = project_onto(v, Tensor::zeros({4}));
    CHECK(d.orthogonal.data == v.data);
    for (double x : d.parallel.data) CHECK(x == 0.0);
}

TEST_CASE("apg reduces to cfg with no momentum, no clamp, full parallel weight") {
    const Tensor u = rt({6}, 15), c = rt({6}, 16);
    ApgParams p;
    p.beta = 0.0;
    p.r = std::numeric_limits<double>::infinity();
    p.eta_parallel = 1.0;
    ApgState st;
    const Tensor got = apg_combine(u, c, 4.0, p, st);
    const Tensor want = cfg_combine(u, c, 4.0);
    for (size_t i = 0; i < got.data.size(); ++i)
        CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
}

TEST_CASE("apg suppresses a parallel update entirely") {
    // delta parallel to eps_c and eta_parallel = 0 -> output equals eps_c
    Tensor c = rt({5}, 17);
    Tensor u = sub(c, scale(c, 0.25));  // delta = 0.25 * c, parallel by construction
    ApgParams p;
    p.beta = 0.0;
    p.r = std::numeric_limits<double>::infinity();
    p.eta_parallel = 0.0;
    ApgState st;
    const Tensor got = apg_combine(u, c, 9.0, p, st);
    for (size_t i = 0; i < got.data.size(); ++i)
        CHECK(got.data[i] == doctest::Approx(c.data[i]).epsilon(1e-10));
}

TEST_CASE("apg momentum accumulates across steps and the clamp bounds the update") {
    const Tensor u = Tensor::zeros({4});
    Tensor c({4}, {10.0, 0.0, 0.0, 0.0});
    ApgParams p;
    p.beta = -0.5;
    p.r = 0.5;
    p.eta_parallel = 1.0;
    ApgState st;
    (void)apg_combine(u, c, 2.0, p, st);
    CHECK(st.initialized);
    // second call: momentum term beta * prev shrinks the raw delta
    const Tensor out = apg_combine(u, c, 2.0, p, st);
    // after momentum the clamped update has norm <= r, so |out - c| <= (w-1)*r
    double dist = 0.0;
    for (size_t i = 0; i < out.data.size(); ++i) {
        const double d = out.data[i] - c.data[i];
        dist += d * d;
    }
    CHECK(std::sqrt(dist) <= (2.0 - 1.0) * p.r + 1e-12);
}

TEST_CASE("cads gamma schedule and anneal endpoints") {
    CHECK(cads_gamma(0.5, 0.6, 0.9) == 1.0);
    CHECK(cads_gamma(0.95, 0.6, 0.9) == 0.0);
    CHECK(cads_gamma(0.75, 0.6, 0.9) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK_THROWS_AS(cads_gamma(0.5, 0.9, 0.6), ConfigError);

    CadsParams params;  // tau1=0.6 tau2=0.9 s=0.25 psi=1
    const Tensor c = rt({1, 8}, 18);
    const Tensor noise = rt({1, 8}, 19);

    // t_norm <= tau1: conditioning untouched
    CHECK(cads_anneal(c, 0.4, params, noise).data == c.data);

    // t_norm >= tau2 with psi=0: pure scaled noise
    CadsParams nopsi = params;
    nopsi.psi = 0.0;
    const Tensor late = cads_anneal(c, 0.95, nopsi, noise);
    for (size_t i = 0; i < late.data.size(); ++i)
        CHECK(late.data[i] == doctest::Approx(0.25 * noise.data[i]).epsilon(1e-12));

    // gamma = 0.5 formula oracle (before rescaling)
    const Tensor mid = cads_anneal(c, 0.75, nopsi, noise);
    const double a = std::sqrt(0.5);
    for (size_t i = 0; i < mid.data.size(); ++i)
        CHECK(mid.data[i] ==
              doctest::Approx(a * c.data[i] + 0.25 * a * noise.data[i]).epsilon(1e-12));

    CadsParams bad;
    bad.tau1 = 0.9;
    bad.tau2 = 0.6;
    CHECK_THROWS_AS(cads_anneal(c, 0.5, bad, noise), ConfigError);
}

TEST_CASE("cads psi restores mean and std of the conditioning") {
    CadsParams params;  // psi = 1
    const Tensor c = rt({1, 64}, 20);
    const Tensor noise = rt({1, 64}, 21);
    const Tensor out = cads_anneal(c, 0.95, params, noise);  // gamma = 0
    CHECK(mean_value(out) == doctest::Approx(mean_value(c)).epsilon(1e-10));
    CHECK(stddev_value(out) == doctest::Approx(stddev_value(c)).epsilon(1e-10));
}

TEST_CASE("combinators are affine: scaling inputs scales outputs") {
    const Tensor u = rt({4}, 22), c = rt({4}, 23), p = rt({4}, 24);
    const double k = -2.5;
    auto check_affine = [&](const Tensor& out, const Tensor& out_scaled) {
        for (size_t i = 0; i < out.data.size(); ++i)
            CHECK(out_scaled.data[i] == doctest::Approx(k * out.data[i]).epsilon(1e-12));
    };
    check_affine(cfg_combine(u, c, 3.0), cfg_combine(scale(u, k), scale(c, k), 3.0));
    check_affine(pag_combine(u, p, 2.0), pag_combine(scale(u, k), scale(p, k), 2.0));
    check_affine(emag_unconditional(u, p, 5.125),
                 emag_unconditional(scale(u, k), scale(p, k), 5.125));
    check_affine(s2_combine(u, p, 0.25), s2_combine(scale(u, k), scale(p, k), 0.25));
}
