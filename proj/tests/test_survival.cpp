// SPDX-License-Identifier: MIT
#include <chaosflow/survival.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace chaosflow;

namespace {

Barrier sinusoid(std::size_t n = 1024) {
    return Barrier::sample([](double s) { return 1.0 + 0.5 * std::sin(2.0 * std::numbers::pi * s); }, 1.0, n);
}

// g = 1 on [0, 1/2], then rising with slope 1
Barrier kinked() { return Barrier::piecewise_linear({0.0, 0.5, 1.0}, {1.0, 1.0, 1.5}); }

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

TEST(ClosedForm, ReferenceValues) {
    EXPECT_NEAR(alpha_closed_form(Barrier::constant(1.0), 0.0, 0.0, 1.0), 0.6826895, 1e-7);
    const double lin = math::norm_cdf(2.0) - std::exp(-2.0) * 0.5;
    EXPECT_NEAR(alpha_closed_form(Barrier::linear(1.0, 1.0), 0.0, 0.0, 1.0), lin, 1e-12);
    EXPECT_NEAR(lin, 0.90958, 1e-5);
    EXPECT_EQ(alpha_closed_form(Barrier::linear(1.0, 1.0), 1.0, 1.5, 1.0), 1.0);
    EXPECT_EQ(code_of([] { (void)alpha_closed_form(sinusoid(), 0.0, 0.0, 1.0); }), Errc::UnsupportedBarrier);
}

TEST(ClosedForm, DerivativeMatchesFiniteDifferences) {
    for (const Barrier& g : {Barrier::constant(1.0), Barrier::linear(1.0, 1.0), Barrier::linear(0.7, -0.4)}) {
        for (double s : {0.0, 0.3, 0.8})
            for (double y : {-1.0, 0.0, 0.5}) {
                const double h = 1e-5;
                const double fd = (alpha_closed_form(g, s, y + h, 1.0) - alpha_closed_form(g, s, y - h, 1.0)) / (2 * h);
                EXPECT_NEAR(survival_closed_form(g, s, y, 1.0).dalpha_dy, fd, 1e-7);
            }
    }
    ClosedFormSurvival m(Barrier::constant(1.0), 1.0);
    const double expected = -2.0 * math::norm_pdf(1.0) / (2.0 * math::norm_cdf(1.0) - 1.0);
    EXPECT_NEAR(m.dlog_alpha_dy(0.0, 0.0), expected, 1e-12);
    EXPECT_NEAR(expected, -0.70887, 1e-5);
}

TEST(Pde, MatchesClosedFormOnNodes) {
    for (const Barrier& g : {Barrier::constant(1.0), Barrier::linear(1.0, 1.0)}) {
        const SurvivalField f = alpha_pde(g, 1.0);
        double worst = 0.0;
        for (std::size_t k = 0; k <= f.n_s(); ++k)
            for (std::size_t j = 0; j <= f.n_y(); ++j) {
                const auto n = f.node(k, j);
                const double exact = alpha_closed_form(g, n.s, n.y, 1.0);
                if (exact > 0.05) worst = std::max(worst, std::abs(n.alpha - exact));
            }
        EXPECT_LT(worst, 1e-3);
    }
    const SurvivalField f = alpha_pde(Barrier::constant(1.0), 1.0);
    EXPECT_NEAR(f.alpha(0.0, 0.0), 0.6826895, 1e-3);
    EXPECT_NEAR(f.dlog_alpha_dy(0.0, 0.0), -0.70887, 1e-4);
}

TEST(Pde, TerminalSliceAndBounds) {
    const SurvivalField f = alpha_pde(sinusoid(), 1.0);
    const std::size_t last = f.n_s();
    for (std::size_t j = 0; j < f.n_y(); ++j) EXPECT_EQ(f.node(last, j).alpha, 1.0);
    for (std::size_t k = 0; k <= f.n_s(); ++k)
        for (std::size_t j = 0; j <= f.n_y(); ++j) {
            const auto n = f.node(k, j);
            ASSERT_TRUE(std::isfinite(n.alpha) && std::isfinite(n.dalpha_dy) && std::isfinite(n.dlog_alpha_dy));
            ASSERT_GE(n.alpha, 0.0);
            ASSERT_LE(n.alpha, 1.0);
            ASSERT_LE(n.dalpha_dy, 1e-6) << n.s << ' ' << n.y;
        }
    EXPECT_EQ(f.node(10, f.n_y()).alpha, 0.0);
    EXPECT_NEAR(f.dalpha_dy(0.0, f.y_min() + 1e-9), 0.0, 1e-6);
}

TEST(Pde, DerivativeTableMatchesDifferencesOfAlpha) {
    const SurvivalField f = alpha_pde(kinked(), 1.0);
    const double dy = f.dy();
    double worst = 0.0;
    for (std::size_t k = 0; k + 1 < f.n_s(); k += 7)
        for (std::size_t j = 2; j + 2 < f.n_y(); ++j) {
            const double fd = (f.node(k, j + 1).alpha - f.node(k, j - 1).alpha) / (2 * dy);
            const double alpha = f.node(k, j).alpha;
            if (alpha > 0.05) worst = std::max(worst, std::abs(fd - f.node(k, j).dalpha_dy));
        }
    EXPECT_LT(worst, 50.0 * dy * dy);
}

TEST(Pde, SecondOrderInSpace) {
    const Barrier g = sinusoid();
    auto at = [&](std::size_t n) {
        PdeConfig c;
        c.n_s = c.n_y = n;
        return alpha_pde(g, 1.0, c).alpha(0.2, 0.5);
    };
    const double a = at(200), b = at(400), c = at(800);
    const double order = std::log2(std::abs(a - b) / std::abs(b - c));
    EXPECT_GT(order, 1.0);
}

TEST(Pde, Errors) {
    PdeConfig coarse;
    coarse.n_s = 8;
    coarse.n_y = 400;
    EXPECT_EQ(code_of([&] { (void)alpha_pde(Barrier::constant(1.0), 1.0, coarse); }), Errc::GridTooCoarse);
    PdeConfig shallow;
    shallow.y_min = -1.0;
    EXPECT_EQ(code_of([&] { (void)alpha_pde(Barrier::constant(1.0), 1.0, shallow); }), Errc::DomainError);
    const SurvivalField f = alpha_pde(Barrier::constant(1.0), 1.0);
    EXPECT_EQ(code_of([&] { (void)f.dlog_alpha_dy(0.5, 1.0); }), Errc::NearBarrier);
}

TEST(Pde, CsvExport) {
    PdeConfig c;
    c.n_s = 8;
    c.n_y = 8;
    c.max_step_ratio = 1e6;
    const SurvivalField f = alpha_pde(Barrier::constant(1.0), 1.0, c);
    std::ostringstream os;
    f.write_csv(os);
    const std::string s = os.str();
    EXPECT_EQ(s.substr(0, s.find('\n')), "s,y,alpha,dalpha_dy,dlogalpha_dy");
    EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 1 + 9 * 9);
}

TEST(FptIntegral, MatchesClosedForms) {
    const ClosedFormSurvival c(Barrier::constant(1.0), 1.0);
    const FptIntegral r = alpha_fpt_integral(c, 0.0, 0.0, 0.5, 0.25);
    EXPECT_NEAR(r.value, 0.6826895, 1e-4);
    EXPECT_LT(r.tail_bound, 1e-10);
    const ClosedFormSurvival l(Barrier::linear(1.0, 1.0), 1.0);
    EXPECT_NEAR(alpha_fpt_integral(l, 0.2, 0.1, 0.6, 0.3).value, l.alpha(0.2, 0.1), 1e-6);
}

TEST(FptIntegral, LineTouchingStartApproachesAlphaAtLine) {
    const ClosedFormSurvival c(Barrier::constant(1.0), 1.0);
    double prev = 1.0;
    for (double gap : {1e-1, 1e-2, 1e-3}) {
        const double v = alpha_fpt_integral(c, 0.0, 0.3 - gap, 0.3, 0.25).value;
        const double d = std::abs(v - c.alpha(0.0, 0.3));
        EXPECT_LT(d, prev);
        prev = d;
    }
    EXPECT_LT(prev, 2e-3);
}

TEST(FptIntegral, AgreesWithPdeOnCurvedBarriers) {
    struct Probe {
        double s, y, z;
    };
    const std::vector<std::pair<Barrier, std::vector<Probe>>> cases = {
        {sinusoid(), {{0.0, 0.0, 0.4}, {0.2, 0.3, 0.45}, {0.5, -0.5, 0.2}}},
        {kinked(), {{0.0, 0.0, 0.9}, {0.3, 0.5, 0.8}, {0.6, -0.5, 0.0}}},
    };
    for (const auto& [g, probes] : cases) {
        const SurvivalField f = alpha_pde(g, 1.0);
        for (const Probe& p : probes) {
            const FptIntegral r = alpha_fpt_integral(f, p.s, p.y, p.z, 0.25);
            EXPECT_NEAR(r.value, f.alpha(p.s, p.y), 1e-3);
        }
    }
}

TEST(FptIntegral, Errors) {
    const ClosedFormSurvival c(Barrier::constant(1.0), 1.0);
    EXPECT_EQ(code_of([&] { (void)alpha_fpt_integral(c, 0.0, 0.0, 1.2, 0.1); }), Errc::LineNotBelowBarrier);
    EXPECT_EQ(code_of([&] { (void)alpha_fpt_integral(c, 0.0, 0.5, 0.4, 0.1); }), Errc::InvalidArgument);
    QuadratureConfig strict;
    strict.tail_tolerance = 1e-300;
    EXPECT_EQ(code_of([&] { (void)alpha_fpt_integral(c, 0.0, 0.0, 0.5, 1e-6, strict); }),
              Errc::QuadratureNotConverged);
}

TEST(MonotoneLimit, ShiftedConstantBarriers) {
    std::vector<Barrier> seq;
    for (int k = 2; k <= 64; k *= 2) seq.push_back(Barrier::constant(1.0 - 1.0 / k));
    const auto rep = monotone_limit_check(seq, Barrier::constant(1.0), {{0.0, 0.0}}, 1.0);
    ASSERT_EQ(rep.probes.size(), 1u);
    const auto& p = rep.probes[0];
    EXPECT_TRUE(rep.monotone);
    for (std::size_t i = 0; i < seq.size(); ++i)
        EXPECT_NEAR(p.alpha[i], 2.0 * math::norm_cdf(1.0 - 1.0 / (2 << i)) - 1.0, 1e-12);
    EXPECT_NEAR(p.alpha_limit, 0.6826895, 1e-7);
}

TEST(MonotoneLimit, ConstantSequenceHasZeroDistance) {
    const Barrier g = Barrier::linear(1.0, 0.5);
    const auto rep = monotone_limit_check({g, g, g}, g, {{0.0, 0.0}, {0.5, 0.7}}, 1.0);
    for (const auto& p : rep.probes)
        for (double d : p.alpha_distance) EXPECT_EQ(d, 0.0);
}

TEST(MonotoneLimit, PiecewiseLinearToSinusoid) {
    const Barrier g = sinusoid();
    const double curvature = 0.5 * 4.0 * std::numbers::pi * std::numbers::pi;
    auto f = [](double s) { return 1.0 + 0.5 * std::sin(2.0 * std::numbers::pi * s); };
    const auto seq = dyadic_lower_approximations(f, 1.0, curvature, 2, 5);
    const auto rep = monotone_limit_check(seq, g, {{0.0, 0.0}, {0.3, 0.5}, {0.6, -0.2}}, 1.0);
    EXPECT_TRUE(rep.monotone);
    for (const auto& p : rep.probes) {
        EXPECT_LT(p.alpha_distance.back(), 1e-2);
        EXPECT_LT(p.dalpha_distance.back(), 3e-2);
        EXPECT_LT(p.alpha_distance.back(), p.alpha_distance.front());
    }
}

TEST(MonotoneLimit, RejectsUnorderedSequence) {
    EXPECT_EQ(code_of([] {
                  (void)monotone_limit_check({Barrier::constant(1.1)}, Barrier::constant(1.0), {{0.0, 0.0}}, 1.0);
              }),
              Errc::NotMonotone);
}
