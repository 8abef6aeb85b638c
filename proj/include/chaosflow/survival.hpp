// SPDX-License-Identifier: MIT
//
// Survival probability alpha^t(s, y, g) = P(y + w_{r-s} < g(r) for all r in [s, t])
// and its y-derivatives, from three interchangeable backends:
//
//   * closed forms for constant and linear barriers,
//   * a Crank-Nicolson solve of the backward equation in the coordinate
//     z = y - (g(s) - g(0)), where the barrier becomes the fixed level g(0):
//         d_s gamma + 1/2 d_zz gamma - g'(s) d_z gamma = 0,
//         gamma(t, z) = 1 (z < g(0)),  gamma(s, g(0)) = 0,
//     with alpha(s, y) = gamma(s, y - (g(s) - g(0))),
//   * the first-passage representation through an auxiliary line
//     z - c (r - s) below the barrier (alpha_fpt_integral).
#pragma once

#include <chaosflow/barrier.hpp>
#include <chaosflow/error.hpp>
#include <chaosflow/grid.hpp>
#include <chaosflow/math.hpp>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

namespace chaosflow {

/// Below this survival probability the log-derivative is not reported.
inline constexpr double kAlphaFloor = 1e-8;

struct SurvivalValue {
    double alpha = 0.0;
    double dalpha_dy = 0.0;
};

// ---------------------------------------------------------------------------
// Closed forms
// ---------------------------------------------------------------------------

namespace detail {

inline SurvivalValue constant_survival(double level, double s, double y, double t) {
    const double x = level - y;
    if (x <= 0.0) return {0.0, 0.0};
    const double T = t - s;
    if (T <= 0.0) return {1.0, 0.0};
    const double sd = std::sqrt(T);
    return {std::erf(x / (std::numbers::sqrt2 * sd)), -2.0 * math::norm_pdf(x / sd) / sd};
}

// Bachelier-Levy: P(W_u < a + b u on [0, T]) = Phi((a + bT)/sqrt T) - e^{-2ab} Phi((bT - a)/sqrt T)
inline SurvivalValue linear_survival(double a0, double b, double s, double y, double t) {
    const double a = a0 + b * s - y;
    if (a <= 0.0) return {0.0, 0.0};
    const double T = t - s;
    if (T <= 0.0) return {1.0, 0.0};
    const double sd = std::sqrt(T);
    const double u1 = (a + b * T) / sd;
    const double u2 = (b * T - a) / sd;
    const double reflected = std::exp(-2.0 * a * b + math::log_norm_cdf(u2));
    const double alpha = math::norm_cdf(u1) - reflected;
    const double da = 2.0 * math::norm_pdf(u1) / sd + 2.0 * b * reflected;
    return {std::max(alpha, 0.0), -da};
}

/// Limit of d alpha/dy as y rises to a linear barrier of slope b, horizon T ahead.
inline double linear_barrier_slope(double b, double T) {
    const double sd = std::sqrt(T);
    return -(2.0 * math::norm_pdf(b * sd) / sd + 2.0 * b * math::norm_cdf(b * sd));
}

}  // namespace detail

/// Closed-form alpha^t(s, y) for Constant and Linear barriers.
inline SurvivalValue survival_closed_form(const Barrier& g, double s, double y, double t) {
    require(s <= t, Errc::InvalidArgument, "closed form needs s <= t");
    if (const auto* c = std::get_if<ConstantBarrier>(&g.representation()))
        return detail::constant_survival(c->level, s, y, t);
    if (const auto* l = std::get_if<LinearBarrier>(&g.representation()))
        return detail::linear_survival(l->intercept, l->slope, s, y, t);
    fail(Errc::UnsupportedBarrier, "closed form exists only for constant and linear barriers");
}

inline double alpha_closed_form(const Barrier& g, double s, double y, double t) {
    return survival_closed_form(g, s, y, t).alpha;
}

// ---------------------------------------------------------------------------
// Backend interface
// ---------------------------------------------------------------------------

class SurvivalModel {
public:
    virtual ~SurvivalModel() = default;

    [[nodiscard]] virtual double horizon() const = 0;
    [[nodiscard]] virtual const Barrier& barrier() const = 0;
    [[nodiscard]] virtual SurvivalValue evaluate(double s, double y) const = 0;

    [[nodiscard]] double alpha(double s, double y) const { return evaluate(s, y).alpha; }
    [[nodiscard]] double dalpha_dy(double s, double y) const { return evaluate(s, y).dalpha_dy; }

    /// d ln alpha / dy; throws NearBarrier when alpha <= kAlphaFloor.
    [[nodiscard]] double dlog_alpha_dy(double s, double y) const {
        const SurvivalValue v = evaluate(s, y);
        if (!(v.alpha > kAlphaFloor))
            fail(Errc::NearBarrier, "alpha=" + std::to_string(v.alpha) + " at s=" + std::to_string(s) +
                                        " y=" + std::to_string(y));
        return v.dalpha_dy / v.alpha;
    }
};

class ClosedFormSurvival final : public SurvivalModel {
public:
    ClosedFormSurvival(Barrier g, double horizon) : g_(std::move(g)), t_(horizon) {
        require(g_.has_closed_form(), Errc::UnsupportedBarrier,
                "closed form exists only for constant and linear barriers");
        require(horizon > 0.0, Errc::InvalidArgument, "horizon must be positive");
    }

    [[nodiscard]] double horizon() const override { return t_; }
    [[nodiscard]] const Barrier& barrier() const override { return g_; }
    [[nodiscard]] SurvivalValue evaluate(double s, double y) const override {
        return survival_closed_form(g_, std::min(s, t_), y, t_);
    }

private:
    Barrier g_;
    double t_;
};

// ---------------------------------------------------------------------------
// PDE backend
// ---------------------------------------------------------------------------

struct PdeConfig {
    std::size_t n_s = 400;
    std::size_t n_y = 400;
    /// Lower truncation in physical y; NaN selects min g - 6 sqrt(t).
    double y_min = std::numeric_limits<double>::quiet_NaN();
    /// Terminal intervals replaced by two implicit Euler half steps.
    std::size_t rannacher_steps = 2;
    /// Time nodes s_k = t (1 - (1 - k/n_s)^grading); 1 is uniform.
    double grading = 1.0;
    /// GridTooCoarse when the largest step exceeds this multiple of dy^2.
    double max_step_ratio = 100.0;
};

/// Tabulated solution of the straightened backward problem.
///
/// gamma is split as phi + v, where phi is the closed-form survival below a
/// line through g(0) with the terminal slope of g. phi carries the corner
/// singularity at (t, g(0)); the remainder v solves the same equation with
/// source (g'(s) - c0) d_z phi and zero data, and is what the grid stores.
class SurvivalField final : public SurvivalModel {
public:
    [[nodiscard]] double horizon() const override { return t_; }
    [[nodiscard]] const Barrier& barrier() const override { return g_; }

    [[nodiscard]] SurvivalValue evaluate(double s, double y) const override {
        s = std::clamp(s, 0.0, t_);
        double z = y - (g_(s) - g0_);
        if (z >= g0_) return {0.0, 0.0};
        z = std::max(z, z_min_);
        const SurvivalValue p = singular_part(s, z);
        const Cell c = locate(s, z);
        return {std::clamp(p.alpha + c.blend(v_), 0.0, 1.0), p.dalpha_dy + c.blend(vz_)};
    }

    struct Node {
        double s, y, alpha, dalpha_dy, dlog_alpha_dy;
    };

    [[nodiscard]] std::size_t n_s() const noexcept { return s_nodes_.size() - 1; }
    [[nodiscard]] std::size_t n_y() const noexcept { return n_z_; }
    [[nodiscard]] double s_node(std::size_t k) const { return s_nodes_[k]; }
    [[nodiscard]] double dy() const noexcept { return dz_; }
    [[nodiscard]] double y_min() const noexcept { return y_min_; }

    /// Node (k, j); j = n_y is the barrier itself.
    [[nodiscard]] Node node(std::size_t k, std::size_t j) const {
        const std::size_t idx = k * (n_z_ + 1) + j;
        const double s = s_nodes_[k];
        const double z = z_min_ + static_cast<double>(j) * dz_;
        Node n{s, z + g_(s) - g0_, 0.0, 0.0, 0.0};
        if (j == n_z_) {
            n.dalpha_dy = s >= t_ ? 0.0 : detail::linear_barrier_slope(c0_, t_ - s) + vz_[idx];
            n.dlog_alpha_dy = n.dalpha_dy / kAlphaFloor;
            return n;
        }
        const SurvivalValue p = singular_part(s, z);
        n.alpha = std::clamp(p.alpha + v_[idx], 0.0, 1.0);
        n.dalpha_dy = p.dalpha_dy + vz_[idx];
        n.dlog_alpha_dy = n.dalpha_dy / std::max(n.alpha, kAlphaFloor);
        return n;
    }

    void write_csv(std::ostream& os) const {
        os << "s,y,alpha,dalpha_dy,dlogalpha_dy\n";
        os.precision(10);
        for (std::size_t k = 0; k < s_nodes_.size(); ++k)
            for (std::size_t j = 0; j <= n_z_; ++j) {
                const Node n = node(k, j);
                os << n.s << ',' << n.y << ',' << n.alpha << ',' << n.dalpha_dy << ','
                   << n.dlog_alpha_dy << '\n';
            }
    }

private:
    friend SurvivalField alpha_pde(const Barrier&, double, const PdeConfig&);

    SurvivalField(Barrier g, double t) : g_(std::move(g)), t_(t), g0_(g_(0.0)) {}

    [[nodiscard]] SurvivalValue singular_part(double s, double z) const {
        if (s >= t_) return {z < g0_ ? 1.0 : 0.0, 0.0};
        return detail::linear_survival(g0_, c0_, 0.0, z, t_ - s);
    }

    struct Cell {
        std::size_t base;
        std::size_t row;
        double ws, wz;
        double blend(const std::vector<double>& table) const {
            const double a = table[base], b = table[base + 1];
            const double c = table[base + row], d = table[base + row + 1];
            return (1.0 - ws) * ((1.0 - wz) * a + wz * b) + ws * ((1.0 - wz) * c + wz * d);
        }
    };

    Cell locate(double s, double z) const {
        const std::size_t ns = s_nodes_.size() - 1;
        // invert s_k = t (1 - (1 - k/ns)^p)
        const double u = 1.0 - std::pow(std::max(0.0, 1.0 - s / t_), 1.0 / grading_);
        std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(u * static_cast<double>(ns)), ns - 1);
        while (k > 0 && s_nodes_[k] > s) --k;
        while (k + 1 < ns && s_nodes_[k + 1] <= s) ++k;
        const double ws = (s - s_nodes_[k]) / (s_nodes_[k + 1] - s_nodes_[k]);
        const double x = (z - z_min_) / dz_;
        const std::size_t j = std::min<std::size_t>(static_cast<std::size_t>(x), n_z_ - 1);
        const std::size_t row = n_z_ + 1;
        return {k * row + j, row, std::clamp(ws, 0.0, 1.0), std::clamp(x - static_cast<double>(j), 0.0, 1.0)};
    }

    Barrier g_;
    double t_;
    double g0_;
    double c0_ = 0.0;
    double grading_ = 1.0;
    double z_min_ = 0.0;
    double y_min_ = 0.0;
    double dz_ = 0.0;
    std::size_t n_z_ = 0;
    std::vector<double> s_nodes_;
    std::vector<double> v_, vz_;
};

/// Solves the straightened backward problem for horizon t by Crank-Nicolson
/// (Rannacher start) with a reflecting lower boundary.
inline SurvivalField alpha_pde(const Barrier& g, double t, const PdeConfig& cfg = {}) {
    require(t > 0.0 && t <= g.horizon() + 1e-12, Errc::InvalidArgument,
            "horizon must lie in (0, barrier horizon]");
    require(cfg.n_s >= 4 && cfg.n_y >= 8, Errc::InvalidArgument, "PDE grid too small");
    require(cfg.grading >= 1.0, Errc::InvalidArgument, "grading exponent must be >= 1");
    SurvivalField f(g, t);
    const double g0 = g(0.0);
    const double g_lo = g.min_value(t);
    const double g_hi = g.max_value(t);
    const double y_min = std::isnan(cfg.y_min) ? g_lo - 6.0 * std::sqrt(t) : cfg.y_min;
    require(y_min < g_lo - 3.0 * std::sqrt(t), Errc::DomainError,
            "y_min must lie at least 3 sqrt(t) below min g");
    f.grading_ = cfg.grading;
    f.y_min_ = y_min;
    f.z_min_ = y_min - (g_hi - g0);
    f.n_z_ = cfg.n_y;
    f.dz_ = (g0 - f.z_min_) / static_cast<double>(cfg.n_y);

    const std::size_t ns = cfg.n_s;
    f.s_nodes_.resize(ns + 1);
    for (std::size_t k = 0; k <= ns; ++k) {
        const double u = 1.0 - static_cast<double>(k) / static_cast<double>(ns);
        f.s_nodes_[k] = t * (1.0 - std::pow(u, cfg.grading));
    }
    f.s_nodes_[ns] = t;
    double h_max = 0.0;
    for (std::size_t k = 0; k < ns; ++k) h_max = std::max(h_max, f.s_nodes_[k + 1] - f.s_nodes_[k]);
    require(h_max <= cfg.max_step_ratio * f.dz_ * f.dz_, Errc::GridTooCoarse,
            "time step " + std::to_string(h_max) + " exceeds " + std::to_string(cfg.max_step_ratio) +
                " dy^2; refine n_y/n_s or raise max_step_ratio");
    f.c0_ = g.mean_slope(f.s_nodes_[ns - 1], t);

    const std::size_t nz = cfg.n_y;
    const std::size_t row = nz + 1;
    f.v_.assign((ns + 1) * row, 0.0);
    std::vector<double> cur(row, 0.0);

    // Unknowns are nodes 0..nz-1; node nz is the Dirichlet barrier.
    const double inv_dz2 = 1.0 / (f.dz_ * f.dz_);
    const double inv_2dz = 1.0 / (2.0 * f.dz_);
    std::vector<double> lo(nz), di(nz), up(nz), rhs(nz), scratch, src_new(nz), src_old(nz);
    auto source = [&](double s, double excess, std::vector<double>& out) {
        for (std::size_t j = 0; j < nz; ++j)
            out[j] = excess == 0.0 ? 0.0
                                   : excess * f.singular_part(s, f.z_min_ + static_cast<double>(j) * f.dz_).dalpha_dy;
    };
    // v_s + L v = src  =>  (I - theta h L) v^k = (I + (1-theta) h L) v^{k+1} - h (theta src^k + (1-theta) src^{k+1})
    auto theta_step = [&](double s_new, double h, double drift, double theta) {
        const double excess = drift - f.c0_;
        source(s_new, excess, src_new);
        if (theta < 1.0) source(s_new + h, excess, src_old);
        const double cl = 0.5 * inv_dz2 + drift * inv_2dz;
        const double cd = -inv_dz2;
        const double cu = 0.5 * inv_dz2 - drift * inv_2dz;
        for (std::size_t j = 0; j < nz; ++j) {
            double lv;
            if (j == 0) {
                // reflecting ghost node v_{-1} = v_1
                lv = inv_dz2 * (cur[1] - cur[0]);
                lo[0] = 0.0;
                di[0] = 1.0 + theta * h * inv_dz2;
                up[0] = -theta * h * inv_dz2;
            } else {
                lv = cl * cur[j - 1] + cd * cur[j] + cu * cur[j + 1];
                lo[j] = -theta * h * cl;
                di[j] = 1.0 - theta * h * cd;
                up[j] = (j + 1 < nz) ? -theta * h * cu : 0.0;
            }
            const double src = theta * src_new[j] + (theta < 1.0 ? (1.0 - theta) * src_old[j] : 0.0);
            rhs[j] = cur[j] + (1.0 - theta) * h * lv - h * src;
        }
        math::solve_tridiagonal(lo, di, up, rhs, scratch);
        std::copy(rhs.begin(), rhs.end(), cur.begin());
        cur[nz] = 0.0;
    };
    for (std::size_t k = ns; k-- > 0;) {
        const double h = f.s_nodes_[k + 1] - f.s_nodes_[k];
        const double drift = g.mean_slope(f.s_nodes_[k], f.s_nodes_[k + 1]);
        if (ns - k <= cfg.rannacher_steps) {
            theta_step(f.s_nodes_[k] + 0.5 * h, 0.5 * h, drift, 1.0);
            theta_step(f.s_nodes_[k], 0.5 * h, drift, 1.0);
        } else {
            theta_step(f.s_nodes_[k], h, drift, 0.5);
        }
        std::copy(cur.begin(), cur.end(), f.v_.begin() + static_cast<std::ptrdiff_t>(k * row));
    }

    f.vz_.assign(f.v_.size(), 0.0);
    for (std::size_t k = 0; k < ns; ++k) {
        const double* a = f.v_.data() + k * row;
        double* d = f.vz_.data() + k * row;
        for (std::size_t j = 1; j < nz; ++j) d[j] = (a[j + 1] - a[j - 1]) * inv_2dz;
        d[nz] = (3.0 * a[nz] - 4.0 * a[nz - 1] + a[nz - 2]) * inv_2dz;
    }
    return f;
}

/// Closed form when available, otherwise the PDE field.
inline std::shared_ptr<const SurvivalModel> make_survival(const Barrier& g, double t,
                                                          const PdeConfig& cfg = {}) {
    if (g.has_closed_form()) return std::make_shared<ClosedFormSurvival>(g, t);
    return std::make_shared<SurvivalField>(alpha_pde(g, t, cfg));
}

/// d ln alpha/dy from a tabulated field; NearBarrier when alpha <= kAlphaFloor.
inline double dlog_alpha_dy(const SurvivalModel& field, double s, double y) {
    return field.dlog_alpha_dy(s, y);
}

// ---------------------------------------------------------------------------
// First-passage representation
// ---------------------------------------------------------------------------

struct QuadratureConfig {
    /// Relative termination tolerance of the adaptive rule.
    double tolerance = 1e-9;
    double tail_tolerance = 1e-10;
    unsigned max_depth = 12;
    /// QuadratureNotConverged above this absolute error estimate.
    double max_error = 1e-5;
};

struct FptIntegral {
    double value = 0.0;
    double error_estimate = 0.0;
    double tail_bound = 0.0;
    double u_max = 0.0;
};

namespace detail {

/// P(sigma > u) for the first passage of drift-c Brownian motion to level a > 0.
inline double inverse_gaussian_tail(double a, double c, double u) {
    const double sd = std::sqrt(u);
    const double first = math::norm_cdf((a - c * u) / sd);
    const double second = std::exp(2.0 * a * c + math::log_norm_cdf(-(a + c * u) / sd));
    return std::max(0.0, first - second);
}

}  // namespace detail

/// alpha(s, y) = int_0^inf beta(u) (z-y)/sqrt(2 pi u^3) exp(-(z-y-cu)^2/(2u)) du, where
/// beta(u) = alpha(s+u, z-cu) for s+u <= t and 1 beyond. `beta_source`
/// supplies alpha at the intermediate points.
inline FptIntegral alpha_fpt_integral(const SurvivalModel& beta_source, double s, double y, double z,
                                      double c, const QuadratureConfig& cfg = {}) {
    const Barrier& g = beta_source.barrier();
    const double t = beta_source.horizon();
    require(y < z, Errc::InvalidArgument, "need y < z");
    require(c > 0.0, Errc::InvalidArgument, "line slope c must be positive");
    require(s < t, Errc::InvalidArgument, "need s < t");
    // g minus the line is piecewise linear, so its minimum sits at s, t or a knot.
    auto gap = [&](double r) { return g(r) - (z - c * (r - s)); };
    double min_gap = std::min(gap(s), gap(t));
    if (const auto* pl = std::get_if<PiecewiseLinearBarrier>(&g.representation())) {
        for (double k : pl->knots)
            if (k > s && k < t) min_gap = std::min(min_gap, gap(k));
    } else if (const auto* sb = std::get_if<SampledBarrier>(&g.representation())) {
        for (std::size_t i = 0; i < sb->grid.n_points(); ++i) {
            const double r = sb->grid.time(i);
            if (r > s && r < t) min_gap = std::min(min_gap, gap(r));
        }
    }
    if (!(min_gap > 0.0))
        fail(Errc::LineNotBelowBarrier, "line z - c(r-s) meets the barrier on [s, t]");

    const double a = z - y;
    const double T = t - s;
    auto density = [a, c](double u) {
        if (u <= 0.0) return 0.0;
        const double e = a - c * u;
        return a / std::sqrt(2.0 * std::numbers::pi * u * u * u) * std::exp(-e * e / (2.0 * u));
    };
    auto inside = [&](double u) {
        const double d = density(u);
        if (d == 0.0) return 0.0;
        return beta_source.alpha(s + u, z - c * u) * d;
    };

    FptIntegral out;
    double u_max = std::max(2.0 * T, 2.0 * a / c);
    while (detail::inverse_gaussian_tail(a, c, u_max) > 0.1 * cfg.tail_tolerance && u_max < 1e8) u_max *= 2.0;
    out.u_max = u_max;
    out.tail_bound = detail::inverse_gaussian_tail(a, c, u_max);

    using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
    // the density peaks near u ~ (z-y)^2; geometric breakpoints from there to T
    std::vector<double> cuts{0.0};
    for (double b = std::max(a * a / 3.0, 1e-300); b < T; b *= 4.0) cuts.push_back(b);
    cuts.push_back(T);
    double value = 0.0, err = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        double e = 0.0;
        value += GK::integrate(inside, cuts[i], cuts[i + 1], cfg.max_depth, cfg.tolerance, &e);
        // boost reports the estimate on the reference interval [-1, 1]
        err += e * 0.5 * (cuts[i + 1] - cuts[i]);
    }
    double e = 0.0;
    value += GK::integrate(density, T, u_max, cfg.max_depth, cfg.tolerance, &e);
    out.value = value;
    out.error_estimate = err + e * 0.5 * (u_max - T);
    if (out.tail_bound > cfg.tail_tolerance)
        fail(Errc::QuadratureNotConverged, "inverse-Gaussian tail " + std::to_string(out.tail_bound) +
                                               " above tolerance");
    if (out.error_estimate > cfg.max_error)
        fail(Errc::QuadratureNotConverged, "quadrature error estimate " + std::to_string(out.error_estimate));
    return out;
}

// ---------------------------------------------------------------------------
// Monotone approximation g_k increasing to g
// ---------------------------------------------------------------------------

struct ProbePoint {
    double s;
    double y;
};

struct MonotoneLimitReport {
    struct Probe {
        ProbePoint point;
        std::vector<double> alpha;
        std::vector<double> dalpha_dy;
        std::vector<double> alpha_distance;
        std::vector<double> dalpha_distance;
        double alpha_limit = 0.0;
        double dalpha_limit = 0.0;
        bool monotone = true;
    };
    std::vector<Probe> probes;
    bool monotone = true;
};

namespace detail {

inline std::vector<double> ordering_samples(const Barrier& g, double t) {
    std::vector<double> s;
    constexpr std::size_t kDense = 2048;
    for (std::size_t i = 0; i <= kDense; ++i) s.push_back(t * static_cast<double>(i) / kDense);
    if (const auto* pl = std::get_if<PiecewiseLinearBarrier>(&g.representation()))
        for (double k : pl->knots)
            if (k <= t) s.push_back(k);
    if (const auto* sb = std::get_if<SampledBarrier>(&g.representation()))
        for (std::size_t i = 0; i < sb->grid.n_points(); ++i)
            if (sb->grid.time(i) <= t) s.push_back(sb->grid.time(i));
    return s;
}

}  // namespace detail

/// Evaluates alpha and d alpha/dy for each g_k and the limit g at the probes
/// (closed form where available, PDE otherwise) and reports the distances.
inline MonotoneLimitReport monotone_limit_check(const std::vector<Barrier>& sequence, const Barrier& limit,
                                                const std::vector<ProbePoint>& probes, double t,
                                                const PdeConfig& cfg = {}) {
    constexpr double kTol = 1e-12;
    std::vector<double> samples = detail::ordering_samples(limit, t);
    for (const Barrier& b : sequence) {
        const auto more = detail::ordering_samples(b, t);
        samples.insert(samples.end(), more.begin(), more.end());
    }
    for (std::size_t k = 0; k < sequence.size(); ++k)
        for (double s : samples) {
            const double next = (k + 1 < sequence.size()) ? sequence[k + 1](s) : limit(s);
            if (sequence[k](s) > next + kTol)
                fail(Errc::NotMonotone, "barrier " + std::to_string(k) + " exceeds its successor at s=" +
                                            std::to_string(s));
        }

    auto limit_model = make_survival(limit, t, cfg);
    std::vector<std::shared_ptr<const SurvivalModel>> models;
    for (const Barrier& b : sequence) models.push_back(make_survival(b, t, cfg));

    MonotoneLimitReport report;
    for (const ProbePoint& p : probes) {
        MonotoneLimitReport::Probe pr;
        pr.point = p;
        const SurvivalValue lim = limit_model->evaluate(p.s, p.y);
        pr.alpha_limit = lim.alpha;
        pr.dalpha_limit = lim.dalpha_dy;
        for (const auto& m : models) {
            const SurvivalValue v = m->evaluate(p.s, p.y);
            pr.alpha.push_back(v.alpha);
            pr.dalpha_dy.push_back(v.dalpha_dy);
            pr.alpha_distance.push_back(std::abs(v.alpha - lim.alpha));
            pr.dalpha_distance.push_back(std::abs(v.dalpha_dy - lim.dalpha_dy));
        }
        for (std::size_t k = 1; k < pr.alpha.size(); ++k)
            if (pr.alpha[k] < pr.alpha[k - 1] - 1e-9) pr.monotone = false;
        if (!pr.alpha.empty() && pr.alpha.back() > lim.alpha + 1e-9) pr.monotone = false;
        report.monotone = report.monotone && pr.monotone;
        report.probes.push_back(std::move(pr));
    }
    return report;
}

/// Piecewise-linear lower approximations on 2^level uniform intervals.
/// Knot values are shifted down by curvature_bound * h^2 / 6, which keeps
/// each approximation below g and below its dyadic refinement whenever
/// |g''| <= curvature_bound.
template <class F>
std::vector<Barrier> dyadic_lower_approximations(F&& g, double horizon, double curvature_bound,
                                                 std::size_t min_level, std::size_t max_level) {
    std::vector<Barrier> out;
    for (std::size_t level = min_level; level <= max_level; ++level) {
        const std::size_t n = std::size_t{1} << level;
        const double h = horizon / static_cast<double>(n);
        const double shift = curvature_bound * h * h / 6.0;
        std::vector<double> knots(n + 1), values(n + 1);
        for (std::size_t i = 0; i <= n; ++i) {
            knots[i] = horizon * static_cast<double>(i) / static_cast<double>(n);
            values[i] = g(knots[i]) - shift;
        }
        knots[n] = horizon;
        out.push_back(Barrier::piecewise_linear(std::move(knots), std::move(values)));
    }
    return out;
}

}  // namespace chaosflow
