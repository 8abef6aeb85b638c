// SPDX-License-Identifier: MIT
#include <chaosflow/mc.hpp>
#include <chaosflow/math.hpp>
#include <chaosflow/paths.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace chaosflow;

namespace {

Path linear_path(double end, std::size_t n) {
    TimeGrid grid(1.0, n);
    std::vector<double> v(n + 1);
    for (std::size_t i = 0; i <= n; ++i) v[i] = end * grid.time(i);
    return Path(grid, v);
}

}  // namespace

TEST(TimeGrid, RejectsBadArguments) {
    EXPECT_THROW(TimeGrid(1.0, 0), Error);
    EXPECT_THROW(TimeGrid(0.0, 4), Error);
    TimeGrid g(0.5, 4);
    EXPECT_DOUBLE_EQ(g.dt(), 0.125);
    EXPECT_EQ(g.time(4), 0.5);
}

TEST(Path, ValidatesInvariants) {
    TimeGrid g(1.0, 2);
    EXPECT_THROW(Path(g, {0.0, 1.0}), Error);
    EXPECT_THROW(Path(g, {0.1, 1.0, 2.0}), Error);
    EXPECT_THROW(Path(g, {0.0, NAN, 2.0}), Error);
}

TEST(SampleBrownian, StartsAtZeroAndIsDeterministic) {
    TimeGrid g(1.0, 4);
    const Path a = sample_brownian(g, 17);
    EXPECT_EQ(a[0], 0.0);
    EXPECT_EQ(a.size(), 5u);
    EXPECT_EQ(a, sample_brownian(g, 17));
    EXPECT_NE(a.values()[4], sample_brownian(g, 18).values()[4]);
}

TEST(SampleBrownian, TerminalMoments) {
    TimeGrid g(1.0, 256);
    const std::size_t n = 100000;
    const auto ends = sample_values(n, default_threads(), [&](std::size_t i) {
        return sample_brownian(g, derive_seed(11, i)).back();
    });
    const MCEstimate m = summarize(ends);
    EXPECT_LT(std::abs(m.mean), 3.0 / std::sqrt(double(n)));
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) sq[i] = ends[i] * ends[i];
    const MCEstimate v = summarize(sq);
    EXPECT_LT(std::abs(v.z(1.0)), 3.0);
}

TEST(SampleBrownian, CovarianceIsMinimum) {
    TimeGrid g(1.0, 64);
    const std::size_t n = 100000;
    const std::size_t probes[3][2] = {{16, 48}, {8, 64}, {32, 40}};
    const SampleTable t = sample_table(n, 3, default_threads(), [&](std::size_t i, std::span<double> row) {
        const Path p = sample_brownian(g, derive_seed(12, i));
        for (int k = 0; k < 3; ++k) row[k] = p[probes[k][0]] * p[probes[k][1]];
    });
    for (int k = 0; k < 3; ++k) {
        const auto col = t.column(k);
        const MCEstimate e = summarize(col);
        EXPECT_LT(std::abs(e.z(g.time(probes[k][0]))), 5.0) << k;
    }
}

TEST(HittingTime, LinearCrossing) {
    const Path p = linear_path(2.0, 4);
    const Barrier g = Barrier::constant(1.0);
    const HittingResult r = hitting_time(p, g, HitMode::interpolated());
    EXPECT_TRUE(r.hit);
    EXPECT_DOUBLE_EQ(r.tau, 0.5);
    EXPECT_EQ(r.crossing_index, 1u);
}

TEST(HittingTime, NeverReaches) {
    const Path p = linear_path(0.0, 4);
    const HittingResult r = hitting_time(p, Barrier::constant(1.0), HitMode::interpolated());
    EXPECT_FALSE(r.hit);
    EXPECT_EQ(r.tau, 1.0);
}

TEST(HittingTime, BarrierAlreadyHit) {
    const Path p = linear_path(1.0, 4);
    const auto g = std::vector<double>(5, 0.0);
    try {
        (void)hitting_time(p, Barrier::constant(1.0), g, HitMode::interpolated());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::BarrierAlreadyHit);
    }
}

TEST(HittingTime, BridgeSurvivalMatchesReflection) {
    TimeGrid grid(1.0, 1024);
    const Barrier g = Barrier::constant(1.0);
    const auto gs = sample_on(g, grid);
    const std::size_t n = 100000;
    const auto alive = sample_values(n, default_threads(), [&](std::size_t i) {
        const Seed s = derive_seed(21, i);
        return hitting_time(sample_brownian(grid, s), g, gs, HitMode::bridge(s)).hit ? 0.0 : 1.0;
    });
    const MCEstimate e = summarize(alive);
    EXPECT_LT(std::abs(e.z(2.0 * math::norm_cdf(1.0) - 1.0)), 3.0) << e.mean;
}

TEST(HittingTime, InterpolatedBiasPositiveBridgeUnbiased) {
    const Barrier g = Barrier::constant(1.0);
    const double exact = 2.0 * math::norm_cdf(1.0) - 1.0;
    const std::size_t n = 20000;
    for (std::size_t steps : {64u, 256u, 1024u}) {
        TimeGrid grid(1.0, steps);
        const auto gs = sample_on(g, grid);
        const SampleTable t = sample_table(n, 2, default_threads(), [&](std::size_t i, std::span<double> row) {
            const Seed s = derive_seed(33, i);
            const Path p = sample_brownian(grid, s);
            row[0] = hitting_time(p, g, gs, HitMode::interpolated()).hit ? 0.0 : 1.0;
            row[1] = hitting_time(p, g, gs, HitMode::bridge(s)).hit ? 0.0 : 1.0;
        });
        const auto c0 = t.column(0);
        const auto c1 = t.column(1);
        const MCEstimate interp = summarize(c0);
        const MCEstimate bridge = summarize(c1);
        EXPECT_GT(interp.mean, exact) << steps;
        EXPECT_LT(std::abs(bridge.z(exact)), 4.0) << steps;
    }
}

TEST(StopPath, FreezesAtBarrierAndIsIdempotent) {
    const Path p = linear_path(2.0, 4);
    const Barrier g = Barrier::constant(1.0);
    const HittingResult r = hitting_time(p, g, HitMode::interpolated());
    const Path s = stop_path(p, r);
    EXPECT_EQ(s[0], 0.0);
    EXPECT_EQ(s[1], 0.5);
    EXPECT_EQ(s[2], 1.0);
    EXPECT_EQ(s[3], 1.0);
    EXPECT_EQ(s[4], 1.0);
    EXPECT_EQ(stop_path(s, r), s);
    const Path q = linear_path(0.0, 4);
    EXPECT_EQ(stop_path(q, hitting_time(q, g, HitMode::interpolated())), q);
}

TEST(StopPath, NeverExceedsBarrierAfterTau) {
    TimeGrid grid(1.0, 512);
    const Barrier g = Barrier::linear(0.8, 0.5);
    const auto gs = sample_on(g, grid);
    for (std::size_t i = 0; i < 200; ++i) {
        const Path p = sample_brownian(grid, derive_seed(5, i));
        const HittingResult r = hitting_time(p, g, gs, HitMode::interpolated());
        const Path s = stop_path(p, r);
        for (std::size_t k = 0; k < s.size(); ++k)
            if (grid.time(k) >= r.tau) {
                ASSERT_LE(s[k], g(r.tau) + 1e-12);
            }
    }
}

TEST(ItoIntegral, Telescoping) {
    const Path p = sample_brownian(TimeGrid(1.0, 64), 3);
    EXPECT_NEAR(ito_integral(std::vector<double>(65, 1.0), p), p.back(), 1e-12);
    EXPECT_EQ(ito_integral(std::vector<double>(65, 0.0), p), 0.0);
    try {
        (void)ito_integral(std::vector<double>(64, 1.0), p);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::LengthMismatch);
    }
}

TEST(ItoIntegral, ItoFormula) {
    TimeGrid grid(1.0, 4096);
    const std::size_t n = 20000;
    const SampleTable t = sample_table(n, 2, default_threads(), [&](std::size_t i, std::span<double> row) {
        const Path p = sample_brownian(grid, derive_seed(8, i));
        const double r = ito_integral(p.values(), p);
        row[0] = r;
        row[1] = 2.0 * r + 1.0 - p.back() * p.back();
    });
    const auto c0 = t.column(0);
    EXPECT_LT(std::abs(summarize(c0).z(0.0)), 3.0);
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = 2.0 * t.at(i, 0) + 1.0;
    EXPECT_LT(std::abs(summarize(w).z(1.0)), 3.0);
    // pathwise the discrete identity leaves only the quadratic-variation error
    const auto c1 = t.column(1);
    EXPECT_LT(std::abs(summarize(c1).mean), 5e-3);
}
