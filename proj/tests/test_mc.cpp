// SPDX-License-Identifier: MIT
#include <chaosflow/mc.hpp>
#include <chaosflow/paths.hpp>

#include <gtest/gtest.h>

using namespace chaosflow;

TEST(Mc, EstimateIsIdenticalAcrossWorkerCounts) {
    TimeGrid grid(1.0, 64);
    auto sampler = [&](Seed s) { return sample_brownian(grid, s); };
    auto fn = [](const Path& p) { return p.back() * p.back(); };
    const MCEstimate a = estimate(fn, sampler, 5000, 42, 1);
    const MCEstimate b = estimate(fn, sampler, 5000, 42, 4);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.std_error, b.std_error);
    EXPECT_LT(std::abs(a.z(1.0)), 4.0);
}

TEST(Mc, SamplerErrorsAreWrapped) {
    auto sampler = [](Seed) -> double { fail(Errc::RejectionBudgetExceeded, "boom"); };
    try {
        (void)estimate([](double x) { return x; }, sampler, 10, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::SamplerFailure);
    }
}

TEST(Mc, OrthogonalityTest) {
    std::vector<double> x(1000), y(1000), zero(1000, 0.0);
    Rng r(3);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = r.normal();
        y[i] = r.normal();
    }
    EXPECT_TRUE(orthogonality_test(x, y).pass);
    EXPECT_FALSE(orthogonality_test(x, x).pass);
    EXPECT_EQ(orthogonality_test(x, zero).z, 0.0);
    EXPECT_THROW((void)orthogonality_test(std::span(x).first(50), std::span(y).first(50)), Error);
    std::vector<double> ones(1000, 1.0);
    try {
        (void)orthogonality_test(ones, ones);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::DegenerateVariance);
    }
}

TEST(Mc, RatioEstimate) {
    std::vector<double> num(4000), den(4000);
    Rng r(9);
    for (std::size_t i = 0; i < num.size(); ++i) {
        den[i] = 2.0 + r.normal();
        num[i] = 3.0 * den[i] + 0.1 * r.normal();
    }
    const MCEstimate e = ratio_estimate(num, den);
    EXPECT_LT(std::abs(e.z(3.0)), 4.0);
    EXPECT_GT(e.std_error, 0.0);
}
