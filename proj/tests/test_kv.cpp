// SPDX-License-Identifier: MIT
#include <chaosflow/expansion.hpp>
#include <chaosflow/experiments.hpp>
#include <chaosflow/kv.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace chaosflow;

namespace {

template <class F>
Errc code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return Errc::ConfigError;
}

SemigroupConfig small() {
    SemigroupConfig c;
    c.n_time = 32;
    c.n_y = 160;
    return c;
}

double bump(double y) { return std::exp(-(y + 0.5) * (y + 0.5)); }

}  // namespace

TEST(Semigroup, IdentityAtEqualTimes) {
    const Semigroup sg = Semigroup::conditioned(Barrier::constant(1.0), 1.0, small());
    const auto f = sg.sample(7, bump);
    EXPECT_EQ(sg.apply(7, 7, f), f);
    EXPECT_EQ(code_of([&] { (void)sg.apply(8, 7, f); }), Errc::InvalidArgument);
    EXPECT_EQ(code_of([&] { (void)sg.apply(0, 7, std::vector<double>(3)); }), Errc::LengthMismatch);
    EXPECT_EQ(code_of([&] { (void)semigroup_apply(sg, 0.0, 0.3, f); }), Errc::InvalidArgument);
}

TEST(Semigroup, FreeLinearPreserved) {
    for (double c : {0.0, 0.7}) {
        const Semigroup sg = Semigroup::free(c, 1.0, small());
        const auto f = sg.sample(sg.n_time(), [](double y) { return y; });
        const auto u = sg.apply(0, sg.n_time(), f);
        for (std::size_t j = 0; j < sg.n_nodes(); ++j) EXPECT_NEAR(u[j], sg.y(0, j) + c, 1e-10) << j;
    }
}

TEST(Semigroup, ChapmanKolmogorov) {
    const Semigroup sg = Semigroup::conditioned(sinusoid_barrier(), 1.0, small());
    const std::size_t M = sg.n_time();
    const auto f = sg.sample(M, bump);
    const auto direct = sg.apply(0, M, f);
    for (std::size_t k : {1u, 13u, 31u}) {
        const auto split = sg.apply(0, k, sg.apply(k, M, f));
        for (std::size_t j = 0; j < sg.n_nodes(); ++j) EXPECT_NEAR(split[j], direct[j], 1e-12);
    }
}

TEST(Semigroup, StartSurvival) {
    const Semigroup sg = Semigroup::conditioned(Barrier::constant(1.0), 1.0);
    EXPECT_NEAR(sg.interpolate(0, sg.alpha(0), 0.0), 0.6826895, 2e-3);
    EXPECT_EQ(code_of([] { (void)Semigroup::conditioned(Barrier::constant(-0.1), 1.0); }), Errc::InvalidArgument);
}

TEST(Semigroup, MatchesConditionedMonteCarlo) {
    const Barrier g = Barrier::constant(1.0);
    const Semigroup sg = Semigroup::conditioned(g, 1.0);
    const double pde = sg.interpolate(0, sg.apply(0, sg.n_time(), sg.sample(sg.n_time(), bump)), 0.0);
    const ConditionedSampler sampler(make_drift_field(g, 1.0), TimeGrid(1.0, 256), ConditionedMethod::Rejection);
    std::vector<double> v(20000);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = bump(sampler(derive_seed(21, i)).back());
    EXPECT_LT(std::abs(summarize(v).z(pde)), 4.0) << pde;
}

TEST(Kernels, SquareUnderBrownianMotion) {
    const Semigroup sg = Semigroup::free(0.0, 1.0, small());
    const KvKernels k(sg, sg.sample(sg.n_time(), [](double y) { return y * y; }), 3);
    EXPECT_NEAR(k.k0(), 1.0, 1e-10);
    for (std::size_t a = 0; a < k.cells(); a += 5) {
        EXPECT_NEAR(k.k1(a), 0.0, 1e-10);
        for (std::size_t b = a; b < k.cells(); b += 7) {
            EXPECT_NEAR(k.k2(a, b), 2.0, 1e-8);
            EXPECT_NEAR(k.k3(a, b, b), 0.0, 1e-8);
        }
    }
    const TimeGrid grid(1.0, 8 * k.cells());
    const Path p = sample_brownian(grid, 3);
    const auto dw = p.increments();
    double qv = 0.0;
    for (double x : dw) qv += x * x;
    EXPECT_NEAR(k.term(2, dw), p.back() * p.back() - qv, 1e-7);
    EXPECT_NEAR(k.term(1, dw), 0.0, 1e-9);
}

TEST(Kernels, OrderOneTermIsCompensatedIntegral) {
    const Barrier g = Barrier::constant(1.0);
    const DriftField field = make_drift_field(g, 1.0);
    const Semigroup sg = Semigroup::conditioned(field, small());
    const auto f = [](double y) { return std::tanh(3.0 * y + 1.0); };
    const KvKernels k(sg, sg.sample(sg.n_time(), f), 1);
    std::vector<double> k1(k.cells());
    for (std::size_t c = 0; c < k1.size(); ++c) k1[c] = k.k1(c);
    const auto kernel = SymmetricKernel::grid_sampled(1, sg.time_grid(), k1);
    const ConditionedSampler sampler(field, TimeGrid(1.0, 8 * k.cells()), ConditionedMethod::HTransform);
    for (Seed s = 0; s < 20; ++s) {
        const ConditionedDraw d = sampler.draw(s);
        EXPECT_NEAR(k.term(1, d.noise), I_kappa(1, kernel, d.path, field), 1e-10);
        EXPECT_NEAR(k.term(1, d.noise), kv_term(1, f, d.noise, sg), 1e-14);
    }
}

TEST(Truncation, ConstantAndLinear) {
    const Semigroup sg = Semigroup::free(0.0, 1.0, small());
    KvStudyOptions o;
    o.paths = 500;
    o.max_order = 1;
    const KvReport c = kv_truncation_study([](double) { return 2.0; }, sg, o);
    EXPECT_LT(c.residual[0].mean, 1e-20);
    const KvReport l = kv_truncation_study([](double y) { return y; }, sg, o);
    EXPECT_LE(l.residual[1].mean, 3.0 * l.residual[1].std_error + 1e-12);
    EXPECT_NEAR(l.residual[0].mean, 1.0, 0.2);
}

TEST(Truncation, ConditionedSigmoidDecreases) {
    KvParams p;
    p.semigroup.n_time = 32;
    p.study.paths = 3000;
    p.study.seed = 4;
    const Report r = run_kv(p);
    for (const Check& c : r.checks) EXPECT_TRUE(c.pass) << c.name << " z=" << c.z;
    const auto& rows = r.tables.front().rows;
    for (std::size_t n = 1; n < rows.size(); ++n) EXPECT_LT(rows[n][1], rows[n - 1][1]);
}

TEST(Truncation, Errors) {
    const Semigroup sg = Semigroup::free(0.0, 1.0, small());
    const auto f = sg.sample(sg.n_time(), [](double y) { return y; });
    EXPECT_EQ(code_of([&] { KvKernels(sg, f, 4); }), Errc::OrderTooHigh);
    EXPECT_EQ(code_of([&] { (void)kv_term(4, [](double y) { return y; }, std::vector<double>(64), sg); }),
              Errc::OrderTooHigh);
    const KvKernels k(sg, f, 1);
    EXPECT_EQ(code_of([&] { (void)k.term(2, std::vector<double>(64)); }), Errc::OrderTooHigh);
    EXPECT_EQ(code_of([&] { (void)k.term(1, std::vector<double>(33)); }), Errc::InvalidArgument);
    const Semigroup cond = Semigroup::conditioned(Barrier::constant(1.0), 1.0, small());
    KvStudyOptions o;
    EXPECT_EQ(code_of([&] { (void)kv_truncation_study([](double y) { return y; }, cond, o); }),
              Errc::InvalidArgument);
}
