// SPDX-License-Identifier: MIT
#include <chaosflow/chaos.hpp>
#include <chaosflow/mc.hpp>

#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <cmath>
#include <random>

using namespace chaosflow;

namespace {

SymmetricKernel ones(std::size_t n, double t = 1.0) {
    return SymmetricKernel::product(n, t, {basis::one()}, {ProductTerm{1.0, std::vector<std::size_t>(n, 0)}});
}

template <class F>
Errc code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return Errc::ConfigError;
}

}  // namespace

TEST(Hermite, Values) {
    EXPECT_EQ(hermite(2, 0.0), -1.0);
    EXPECT_EQ(hermite(3, 2.0), 2.0);
    EXPECT_EQ(hermite(0, 7.0), 1.0);
    EXPECT_EQ(hermite(1, 7.0), 7.0);
}

TEST(Hermite, MatchesExtendedPrecision) {
    using big = boost::multiprecision::cpp_bin_float_quad;
    for (unsigned k = 0; k <= 20; ++k)
        for (double x = -5.0; x <= 5.0; x += 0.37) {
            big prev = 1, cur = x;
            if (k == 0) cur = 1;
            for (unsigned j = 1; j < k; ++j) {
                big next = big(x) * cur - big(j) * prev;
                prev = cur;
                cur = next;
            }
            const double ref = static_cast<double>(cur);
            const double h = hermite(k, x);
            ASSERT_TRUE(std::isfinite(h));
            EXPECT_LE(std::abs(h - ref), 1e-10 * std::max(1.0, std::abs(ref))) << k << ' ' << x;
        }
}

TEST(Hermite, GaussianOrthogonality) {
    const std::size_t n = 1000000;
    std::vector<double> h23(n), h33(n);
    Rng r(4);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = r.normal();
        h23[i] = hermite(2, x) * hermite(3, x);
        h33[i] = hermite(3, x) * hermite(3, x);
    }
    EXPECT_LT(std::abs(summarize(h23).z(0.0)), 3.0);
    EXPECT_LT(std::abs(summarize(h33).z(6.0)), 3.0);
}

TEST(Hermite, ShiftIdentity) {
    EXPECT_EQ(hermite_shift_check(2, 1.0, 1.0), 0.0);
    EXPECT_EQ(hermite_shift_check(0, 0.3, -2.0), 0.0);
    std::mt19937_64 gen(1);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int i = 0; i < 200; ++i) EXPECT_LT(hermite_shift_check(static_cast<unsigned>(i % 9), u(gen), u(gen)), 1e-9);
}

TEST(Symmetrize, AveragesPermutations) {
    TimeGrid g(1.0, 8);
    const SymmetricKernel k = SymmetricKernel::sample(2, g, [](std::span<const double> s) { return s[0]; });
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 8; ++j) {
            const double s[2] = {g.midpoint(i), g.midpoint(j)};
            EXPECT_NEAR(k(s), 0.5 * (s[0] + s[1]), 1e-15);
        }
    const SymmetricKernel twice = symmetrize(k);
    EXPECT_EQ(twice.as_grid()->values, k.as_grid()->values);
    const SymmetricKernel sym = SymmetricKernel::sample(2, g, [](std::span<const double> s) { return s[0] * s[1]; });
    const SymmetricKernel again = symmetrize(sym);
    for (std::size_t i = 0; i < sym.as_grid()->values.size(); ++i)
        EXPECT_NEAR(again.as_grid()->values[i], sym.as_grid()->values[i], 1e-15);
    EXPECT_EQ(code_of([&] { (void)SymmetricKernel::grid_sampled(5, TimeGrid(1.0, 2), std::vector<double>(32)); }),
              Errc::OrderTooHigh);
}

TEST(MultipleWienerIntegral, OrderOneIsEndValue) {
    const Path p = sample_brownian(TimeGrid(1.0, 256), 5);
    EXPECT_NEAR(multiple_wiener_integral(ones(1), p), p.back(), 1e-12);
    const SymmetricKernel c = SymmetricKernel::callable(1, 1.0, [](std::span<const double>) { return 1.0; });
    EXPECT_NEAR(multiple_wiener_integral(c, p), p.back(), 1e-12);
}

TEST(MultipleWienerIntegral, OrderTwoOnesIsHermite) {
    TimeGrid grid(1.0, 4096);
    const Path p = sample_brownian(grid, 2);
    const double w = p.back();
    double qv = 0.0;
    for (double d : p.increments()) qv += d * d;
    // discrete identity: 2 * sum_{i<j} dw_i dw_j = w^2 - sum dw_i^2
    EXPECT_NEAR(multiple_wiener_integral(ones(2), p), w * w - qv, 1e-10);
    const std::size_t n = 20000;
    const SampleTable t = sample_table(n, 2, default_threads(), [&](std::size_t i, std::span<double> row) {
        const double v = multiple_wiener_integral(ones(2), sample_brownian(TimeGrid(1.0, 1024), derive_seed(6, i)));
        row[0] = v;
        row[1] = v * v;
    });
    const auto c0 = t.column(0);
    const auto c1 = t.column(1);
    EXPECT_LT(std::abs(summarize(c0).z(0.0)), 3.0);
    EXPECT_LT(std::abs(summarize(c1).z(2.0)), 3.0);
}

TEST(MultipleWienerIntegral, RepresentationsAgree) {
    TimeGrid grid(1.0, 64);
    const Path p = sample_brownian(grid, 8);
    auto f = [](std::span<const double> s) { return s[0] + s[1] + s[2] + s[0] * s[1] * s[2]; };
    const SymmetricKernel c = SymmetricKernel::callable(3, 1.0, f);
    const SymmetricKernel g = SymmetricKernel::sample(3, grid, f);
    const SymmetricKernel pb = SymmetricKernel::product(3, 1.0, {basis::one(), basis::power(1)},
                                                        {ProductTerm{3.0, {1, 0, 0}}, ProductTerm{1.0, {1, 1, 1}}});
    const double a = multiple_wiener_integral(c, p);
    EXPECT_NEAR(multiple_wiener_integral(g, p), a, 1e-10);
    EXPECT_NEAR(multiple_wiener_integral(pb, p), a, 1e-10);
    // a coarser kernel grid on a finer path
    const SymmetricKernel coarse = SymmetricKernel::sample(2, TimeGrid(1.0, 8), [](std::span<const double> s) { return s[0] * s[1]; });
    const double direct = multiple_wiener_integral(
        SymmetricKernel::callable(2, 1.0, [&](std::span<const double> s) { return coarse(s); }), p);
    EXPECT_NEAR(multiple_wiener_integral(coarse, p), direct, 1e-10);
}

TEST(MultipleWienerIntegral, PermutationInvarianceOfGridAxes) {
    TimeGrid grid(1.0, 6);
    std::vector<double> v(216), w(216);
    std::mt19937_64 gen(3);
    std::normal_distribution<double> nd;
    for (double& x : v) x = nd(gen);
    // relabel axes (a, b, c) -> (c, a, b)
    for (std::size_t a = 0; a < 6; ++a)
        for (std::size_t b = 0; b < 6; ++b)
            for (std::size_t c = 0; c < 6; ++c) w[(c * 6 + a) * 6 + b] = v[(a * 6 + b) * 6 + c];
    const Path p = sample_brownian(TimeGrid(1.0, 24), 9);
    const double x = multiple_wiener_integral(SymmetricKernel::grid_sampled(3, grid, v), p);
    const double y = multiple_wiener_integral(SymmetricKernel::grid_sampled(3, grid, w), p);
    EXPECT_NEAR(x, y, 1e-12 * std::max(1.0, std::abs(x)));
}

TEST(MultipleWienerIntegral, HermiteModeAgreesPathwise) {
    TimeGrid grid(1.0, 4096);
    const SymmetricKernel ee = SymmetricKernel::product(2, 1.0, {basis::cosine_mode(1, 1.0)}, {ProductTerm{1.0, {0, 0}}});
    const SymmetricKernel mix = SymmetricKernel::product(
        3, 1.0, {basis::legendre(0, 1.0), basis::legendre(1, 1.0)}, {ProductTerm{1.0, {0, 1, 1}}});
    for (Seed s = 0; s < 5; ++s) {
        const Path p = sample_brownian(grid, s);
        EXPECT_NEAR(multiple_wiener_integral(ee, p, WienerMode::Hermite), multiple_wiener_integral(ee, p), 0.1);
        EXPECT_NEAR(multiple_wiener_integral(mix, p, WienerMode::Hermite), multiple_wiener_integral(mix, p), 0.15);
    }
    const SymmetricKernel notnormal = SymmetricKernel::product(1, 1.0, {basis::power(1)}, {ProductTerm{1.0, {0}}});
    EXPECT_EQ(code_of([&] { (void)multiple_wiener_integral(notnormal, sample_brownian(grid, 1), WienerMode::Hermite); }),
              Errc::InvalidArgument);
}

TEST(MultipleWienerIntegral, Errors) {
    const Path p = sample_brownian(TimeGrid(0.5, 16), 1);
    EXPECT_EQ(code_of([&] { (void)multiple_wiener_integral(ones(1), p); }), Errc::HorizonMismatch);
}

TEST(MultipleWienerIntegral, IsometryAndOrthogonality) {
    TimeGrid grid(1.0, 512);
    const std::vector<SymmetricKernel> ks = {
        ones(1), SymmetricKernel::product(2, 1.0, {basis::one(), basis::power(1)}, {ProductTerm{2.0, {1, 0}}}),
        SymmetricKernel::product(3, 1.0, {basis::cosine_mode(1, 1.0), basis::one()}, {ProductTerm{1.0, {0, 1, 1}}})};
    const std::size_t n = 100000;
    const SampleTable t = sample_table(n, 3, default_threads(), [&](std::size_t i, std::span<double> row) {
        const Path p = sample_brownian(grid, derive_seed(44, i));
        for (std::size_t k = 0; k < 3; ++k) row[k] = multiple_wiener_integral(ks[k], p);
    });
    for (std::size_t k = 0; k < 3; ++k) {
        std::vector<double> sq(n);
        for (std::size_t i = 0; i < n; ++i) sq[i] = t.at(i, k) * t.at(i, k);
        const double target = math::factorial(static_cast<int>(k + 1)) * kernel_norm2(ks[k]);
        const MCEstimate e = summarize(sq);
        EXPECT_LT(std::abs(e.z(target)), 5.0) << k << ' ' << e.mean << ' ' << target;
    }
    for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = a + 1; b < 3; ++b) {
            const auto ca = t.column(a);
            const auto cb = t.column(b);
            EXPECT_TRUE(orthogonality_test(ca, cb).pass) << a << b;
        }
}

TEST(KernelInner, Values) {
    EXPECT_NEAR(kernel_inner(ones(2), ones(2)), 1.0, 1e-14);
    const SymmetricKernel a = SymmetricKernel::product(1, 1.0, {basis::legendre(1, 1.0)}, {ProductTerm{1.0, {0}}});
    const SymmetricKernel b = SymmetricKernel::product(1, 1.0, {basis::legendre(2, 1.0)}, {ProductTerm{1.0, {0}}});
    EXPECT_NEAR(kernel_inner(a, b), 0.0, 1e-14);
    EXPECT_EQ(code_of([&] { (void)kernel_inner(ones(1), ones(2)); }), Errc::OrderMismatch);
    // (s + t) on the unit square: integral of (s+t)^2 = 7/6
    const SymmetricKernel st = SymmetricKernel::product(2, 1.0, {basis::one(), basis::power(1)}, {ProductTerm{2.0, {1, 0}}});
    EXPECT_NEAR(kernel_norm2(st), 7.0 / 6.0, 1e-12);
    const SymmetricKernel ind = SymmetricKernel::product(1, 1.0, {basis::indicator(0.25, 0.5)}, {ProductTerm{1.0, {0}}});
    EXPECT_NEAR(kernel_norm2(ind), 0.25, 1e-14);
}

TEST(KernelInner, GridAndCallableAgree) {
    auto f = [](std::span<const double> s) { return std::exp(-s[0] - 2.0 * s[1]) + std::exp(-2.0 * s[0] - s[1]); };
    TimeGrid grid(1.0, 32);
    const SymmetricKernel g = SymmetricKernel::sample(2, grid, f);
    const SymmetricKernel c = SymmetricKernel::callable(2, 1.0, f);
    EXPECT_NEAR(kernel_inner(g, c), kernel_inner(g, g), 1e-6);
    // independent Gauss rule versus closed form
    const double e1 = (1.0 - std::exp(-2.0)) / 2.0, e2 = (1.0 - std::exp(-4.0)) / 4.0, e3 = (1.0 - std::exp(-3.0)) / 3.0;
    EXPECT_NEAR(kernel_norm2(c), 2.0 * e1 * e2 + 2.0 * e3 * e3, 1e-10);
}
