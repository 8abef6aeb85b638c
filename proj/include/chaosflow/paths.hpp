// SPDX-License-Identifier: MIT
//
// Brownian paths on uniform grids, first passage below a barrier, stopping
// and left-point Ito sums.
#pragma once

#include <chaosflow/barrier.hpp>
#include <chaosflow/error.hpp>
#include <chaosflow/grid.hpp>
#include <chaosflow/rng.hpp>

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace chaosflow {

class Path {
public:
    Path(TimeGrid grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
        require(values_.size() == grid_.n_points(), Errc::LengthMismatch,
                "path needs n_steps + 1 values");
        require(values_[0] == 0.0, Errc::InvalidArgument, "path must start at 0");
        for (double v : values_)
            require(std::isfinite(v), Errc::InvalidArgument, "path values must be finite");
    }

    [[nodiscard]] const TimeGrid& grid() const noexcept { return grid_; }
    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
    [[nodiscard]] double operator[](std::size_t i) const noexcept { return values_[i]; }
    [[nodiscard]] double back() const noexcept { return values_.back(); }
    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }

    [[nodiscard]] double increment(std::size_t i) const noexcept { return values_[i + 1] - values_[i]; }
    [[nodiscard]] std::vector<double> increments() const {
        std::vector<double> d(grid_.n_steps());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = increment(i);
        return d;
    }

    /// The same trajectory restricted to [0, t_k].
    [[nodiscard]] Path prefix(std::size_t k) const {
        return Path(grid_.prefix(k), std::vector<double>(values_.begin(), values_.begin() + k + 1));
    }

    /// Every `factor`-th grid point; n_steps must be divisible by factor.
    [[nodiscard]] Path coarsen(std::size_t factor) const {
        require(factor >= 1 && grid_.n_steps() % factor == 0, Errc::InvalidArgument,
                "coarsen factor must divide n_steps");
        std::vector<double> v(grid_.n_steps() / factor + 1);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = values_[i * factor];
        return Path(TimeGrid(grid_.horizon(), grid_.n_steps() / factor), std::move(v));
    }

    friend bool operator==(const Path& a, const Path& b) {
        return a.grid_ == b.grid_ && a.values_ == b.values_;
    }

private:
    TimeGrid grid_;
    std::vector<double> values_;
};

/// Path from cumulative increments.
inline Path path_from_increments(const TimeGrid& grid, std::span<const double> increments) {
    require(increments.size() == grid.n_steps(), Errc::LengthMismatch,
            "need one increment per step");
    std::vector<double> v(grid.n_points());
    for (std::size_t i = 0; i < increments.size(); ++i) v[i + 1] = v[i] + increments[i];
    return Path(grid, std::move(v));
}

/// Standard Brownian motion on `grid`; one independent stream per seed.
inline Path sample_brownian(const TimeGrid& grid, Seed seed) {
    Rng rng(derive_seed(seed, Stream::Brownian));
    const double sd = std::sqrt(grid.dt());
    std::vector<double> v(grid.n_points());
    for (std::size_t i = 0; i < grid.n_steps(); ++i) v[i + 1] = v[i] + sd * rng.normal();
    return Path(grid, std::move(v));
}

inline std::vector<double> sample_on(const Barrier& g, const TimeGrid& grid) {
    std::vector<double> v(grid.n_points());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = g(grid.time(i));
    return v;
}

struct HittingResult {
    double tau = 0.0;
    bool hit = false;
    /// Step i (between t_i and t_{i+1}) in which the hit occurred.
    std::size_t crossing_index = 0;
    /// Barrier value at tau; the stopped path is frozen there.
    double hit_value = 0.0;
};

struct HitMode {
    enum class Kind { Interpolated, Bridge };
    Kind kind = Kind::Interpolated;
    Seed seed = 0;

    static HitMode interpolated() { return {}; }
    static HitMode bridge(Seed s) { return {Kind::Bridge, s}; }
};

/// First passage with precomputed barrier samples on the path grid.
///
/// A grid crossing is located by linear interpolation of path - barrier.
/// In bridge mode a step whose end points are both below the barrier is
/// also declared a hit with the Brownian-bridge probability
/// exp(-2 d_i d_{i+1} / dt) against the barrier linearized over the step;
/// such a hit is placed at the step midpoint.
inline HittingResult hitting_time(const Path& path, const Barrier& barrier,
                                  std::span<const double> g, HitMode mode) {
    const TimeGrid& grid = path.grid();
    require(g.size() == grid.n_points(), Errc::LengthMismatch, "barrier samples do not match grid");
    require(g[0] > path[0], Errc::BarrierAlreadyHit, "path starts on or above the barrier");
    const double dt = grid.dt();
    const bool bridge = mode.kind == HitMode::Kind::Bridge;
    Rng rng(derive_seed(mode.seed, Stream::Bridge));
    HittingResult r{grid.horizon(), false, 0, 0.0};
    double d0 = g[0] - path[0];
    for (std::size_t i = 0; i < grid.n_steps(); ++i) {
        const double d1 = g[i + 1] - path[i + 1];
        if (d1 <= 0.0) {
            r.hit = true;
            r.crossing_index = i;
            r.tau = grid.time(i) + dt * d0 / (d0 - d1);
            if (i + 1 == grid.n_steps()) r.tau = std::min(r.tau, grid.horizon());
            r.hit_value = barrier(r.tau);
            return r;
        }
        if (bridge) {
            const double exponent = 2.0 * d0 * d1 / dt;
            if (exponent < 700.0 && rng.uniform() < std::exp(-exponent)) {
                r.hit = true;
                r.crossing_index = i;
                r.tau = grid.midpoint(i);
                r.hit_value = barrier(r.tau);
                return r;
            }
        }
        d0 = d1;
    }
    return r;
}

inline HittingResult hitting_time(const Path& path, const Barrier& barrier, HitMode mode) {
    const auto g = sample_on(barrier, path.grid());
    return hitting_time(path, barrier, g, mode);
}

/// The map x -> x(min(tau, .)) on the grid: values at t_i >= tau are frozen
/// at the barrier value at tau.
inline Path stop_path(const Path& path, const HittingResult& hr) {
    if (!hr.hit) return path;
    require(hr.crossing_index < path.grid().n_steps(), Errc::InvalidArgument,
            "hitting result does not belong to this path");
    std::vector<double> v(path.values().begin(), path.values().end());
    for (std::size_t i = hr.crossing_index + 1; i < v.size(); ++i) v[i] = hr.hit_value;
    return Path(path.grid(), std::move(v));
}

/// Left-point sum of integrand[i] * (x_{i+1} - x_i).
inline double ito_integral(std::span<const double> integrand, const Path& path) {
    require(integrand.size() == path.size(), Errc::LengthMismatch,
            "integrand needs one value per grid point, got " + std::to_string(integrand.size()) +
                " for " + std::to_string(path.size()));
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) sum += integrand[i] * path.increment(i);
    return sum;
}

}  // namespace chaosflow
