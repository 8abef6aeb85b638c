// SPDX-License-Identifier: MIT
//
// Drift d ln alpha/dy of the barrier-conditioned law, the drift-removal map
// T(x)(t) = x(t) - int_0^t drift(s, x(s)) ds, conditioned path sampling and
// the Clark integrand of the survival indicator.
#pragma once

#include <chaosflow/error.hpp>
#include <chaosflow/grid.hpp>
#include <chaosflow/paths.hpp>
#include <chaosflow/rng.hpp>
#include <chaosflow/survival.hpp>

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

namespace chaosflow {

struct NearBarrierPolicy {
    enum class Kind { Clamp, Reject };
    Kind kind = Kind::Clamp;
    double max_abs = 1e3;

    static NearBarrierPolicy clamp(double max_abs = 1e3) { return {Kind::Clamp, max_abs}; }
    static NearBarrierPolicy reject() { return {Kind::Reject, 0.0}; }
};

class DriftField {
public:
    DriftField(std::shared_ptr<const SurvivalModel> model, NearBarrierPolicy policy = {})
        : model_(std::move(model)), policy_(policy) {
        require(model_ != nullptr, Errc::InvalidArgument, "drift field needs a survival model");
    }

    [[nodiscard]] double horizon() const { return model_->horizon(); }
    [[nodiscard]] const Barrier& barrier() const { return model_->barrier(); }
    [[nodiscard]] const SurvivalModel& model() const { return *model_; }
    [[nodiscard]] std::shared_ptr<const SurvivalModel> model_ptr() const { return model_; }
    [[nodiscard]] const NearBarrierPolicy& policy() const noexcept { return policy_; }

    /// d ln alpha/dy at (s, y) with the near-barrier policy applied.
    [[nodiscard]] double operator()(double s, double y) const {
        const SurvivalValue v = model_->evaluate(s, y);
        if (v.alpha > kAlphaFloor) {
            const double d = v.dalpha_dy / v.alpha;
            if (policy_.kind == NearBarrierPolicy::Kind::Clamp) return std::clamp(d, -policy_.max_abs, policy_.max_abs);
            return d;
        }
        if (policy_.kind == NearBarrierPolicy::Kind::Reject)
            fail(Errc::NearBarrier, "alpha below floor at s=" + std::to_string(s) + " y=" + std::to_string(y));
        return -policy_.max_abs;
    }

private:
    std::shared_ptr<const SurvivalModel> model_;
    NearBarrierPolicy policy_;
};

inline DriftField make_drift_field(const Barrier& g, double t, NearBarrierPolicy policy = {},
                                   const PdeConfig& cfg = {}) {
    return DriftField(make_survival(g, t, cfg), policy);
}

namespace detail {

inline void require_below(const Path& path, const Barrier& g) {
    const TimeGrid& grid = path.grid();
    for (std::size_t i = 0; i < path.size(); ++i)
        if (!(path[i] < g(grid.time(i))))
            fail(Errc::PathTouchesBarrier, "path reaches the barrier at t=" + std::to_string(grid.time(i)));
}

}  // namespace detail

/// Drift evaluated at every grid point of the path.
inline std::vector<double> drift_along(const Path& path, const DriftField& field) {
    std::vector<double> d(path.size());
    const TimeGrid& grid = path.grid();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = field(grid.time(i), path[i]);
    return d;
}

/// Trapezoid cumulative drift: c_i = sum_{k<i} (D_k + D_{k+1}) dt / 2.
inline std::vector<double> cumulative_drift(const Path& path, const DriftField& field) {
    const auto d = drift_along(path, field);
    std::vector<double> c(path.size(), 0.0);
    const double dt = path.grid().dt();
    for (std::size_t i = 0; i + 1 < c.size(); ++i) c[i + 1] = c[i] + 0.5 * (d[i] + d[i + 1]) * dt;
    return c;
}

/// T(x) = x - cumulative drift, for a path strictly below the barrier.
inline Path transform_Tg(const Path& path, const DriftField& field) {
    require(std::abs(path.grid().horizon() - field.horizon()) < 1e-12, Errc::HorizonMismatch,
            "path and field horizons differ");
    detail::require_below(path, field.barrier());
    const auto c = cumulative_drift(path, field);
    std::vector<double> v(path.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = path[i] - c[i];
    return Path(path.grid(), std::move(v));
}

// ---------------------------------------------------------------------------
// Conditioned sampling
// ---------------------------------------------------------------------------

enum class ConditionedMethod { HTransform, Rejection };

struct SamplerOptions {
    std::size_t max_attempts = 1000;
    /// Euler increments redrawn this many times before reflecting an overshoot.
    std::size_t max_redraws = 32;
};

struct ConditionedDraw {
    Path path;
    /// Driving Brownian increments (h-transform) or the accepted path's increments.
    std::vector<double> noise;
    std::size_t attempts = 1;
};

/// Draws paths below the barrier on [0, t] under the conditioned law.
class ConditionedSampler {
public:
    ConditionedSampler(DriftField field, TimeGrid grid, ConditionedMethod method, SamplerOptions opts = {})
        : field_(std::move(field)), grid_(grid), method_(method), opts_(opts),
          g_(sample_on(field_.barrier(), grid)) {
        require(std::abs(grid.horizon() - field_.horizon()) < 1e-12, Errc::HorizonMismatch,
                "grid and field horizons differ");
        require(opts.max_attempts >= 1, Errc::InvalidArgument, "max_attempts must be positive");
    }

    [[nodiscard]] const TimeGrid& grid() const noexcept { return grid_; }
    [[nodiscard]] const DriftField& field() const noexcept { return field_; }
    [[nodiscard]] ConditionedMethod method() const noexcept { return method_; }

    [[nodiscard]] ConditionedDraw draw(Seed seed) const {
        return method_ == ConditionedMethod::Rejection ? rejection(seed) : h_transform(seed);
    }
    [[nodiscard]] Path operator()(Seed seed) const { return draw(seed).path; }

private:
    ConditionedDraw rejection(Seed seed) const {
        const Seed base = derive_seed(seed, Stream::Rejection);
        for (std::size_t a = 0; a < opts_.max_attempts; ++a) {
            const Seed s = derive_seed(base, a);
            Path p = sample_brownian(grid_, s);
            if (!hitting_time(p, field_.barrier(), g_, HitMode::bridge(s)).hit) {
                auto noise = p.increments();
                return {std::move(p), std::move(noise), a + 1};
            }
        }
        fail(Errc::RejectionBudgetExceeded,
             "no surviving path in " + std::to_string(opts_.max_attempts) + " attempts");
    }

    ConditionedDraw h_transform(Seed seed) const {
        Rng rng(derive_seed(seed, Stream::HTransform));
        const double dt = grid_.dt();
        const double sd = std::sqrt(dt);
        std::vector<double> v(grid_.n_points()), noise(grid_.n_steps());
        for (std::size_t i = 0; i < grid_.n_steps(); ++i) {
            const double drift = field_(grid_.time(i), v[i]) * dt;
            double dw = sd * rng.normal();
            double next = v[i] + drift + dw;
            for (std::size_t r = 0; r < opts_.max_redraws && next >= g_[i + 1]; ++r) {
                dw = sd * rng.normal();
                next = v[i] + drift + dw;
            }
            if (next >= g_[i + 1]) {
                next = 2.0 * g_[i + 1] - next;
                if (next >= g_[i + 1]) next = std::nextafter(g_[i + 1], -INFINITY);
                dw = next - v[i] - drift;
            }
            v[i + 1] = next;
            noise[i] = dw;
        }
        return {Path(grid_, std::move(v)), std::move(noise), 1};
    }

    DriftField field_;
    TimeGrid grid_;
    ConditionedMethod method_;
    SamplerOptions opts_;
    std::vector<double> g_;
};

inline Path sample_conditioned(const DriftField& field, const TimeGrid& grid, Seed seed, ConditionedMethod method,
                               SamplerOptions opts = {}) {
    return ConditionedSampler(field, grid, method, opts)(seed);
}

// ---------------------------------------------------------------------------
// Clark integrand
// ---------------------------------------------------------------------------

/// h_i = d alpha/dy (t_i, x_i) for grid points up to the hit (left limit at the
/// crossing step), 0 afterwards.
inline std::vector<double> clark_integrand(const Path& path, const HittingResult& hr, const SurvivalModel& model) {
    require(std::abs(path.grid().horizon() - model.horizon()) < 1e-12, Errc::HorizonMismatch,
            "path and field horizons differ");
    const TimeGrid& grid = path.grid();
    std::vector<double> h(path.size(), 0.0);
    const std::size_t last = hr.hit ? hr.crossing_index : grid.n_steps();
    for (std::size_t i = 0; i <= last && i < h.size(); ++i) h[i] = model.evaluate(grid.time(i), path[i]).dalpha_dy;
    return h;
}

inline std::vector<double> clark_integrand(const Path& path, const HittingResult& hr, const DriftField& field) {
    return clark_integrand(path, hr, field.model());
}

}  // namespace chaosflow
