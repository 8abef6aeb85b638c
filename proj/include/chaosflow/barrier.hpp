// SPDX-License-Identifier: MIT
//
// Barrier curves g: [0, horizon] -> R with g(0) > 0.
#pragma once

#include <chaosflow/error.hpp>
#include <chaosflow/grid.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <variant>
#include <vector>

namespace chaosflow {

struct ConstantBarrier {
    double level;
};

/// g(s) = intercept + slope * s
struct LinearBarrier {
    double intercept;
    double slope;
};

struct PiecewiseLinearBarrier {
    std::vector<double> knots;
    std::vector<double> values;
};

/// Values on a uniform grid, linear in between.
struct SampledBarrier {
    TimeGrid grid;
    std::vector<double> values;
};

enum class BarrierKind { Constant, Linear, PiecewiseLinear, Sampled };

class Barrier {
public:
    using Variant = std::variant<ConstantBarrier, LinearBarrier, PiecewiseLinearBarrier, SampledBarrier>;

    static Barrier constant(double level, double horizon = 1.0) {
        return Barrier(ConstantBarrier{level}, horizon);
    }
    static Barrier linear(double intercept, double slope, double horizon = 1.0) {
        return Barrier(LinearBarrier{intercept, slope}, horizon);
    }
    static Barrier piecewise_linear(std::vector<double> knots, std::vector<double> values) {
        require(knots.size() >= 2 && knots.size() == values.size(), Errc::InvalidArgument,
                "piecewise-linear barrier needs >= 2 knots with matching values");
        require(knots.front() == 0.0, Errc::InvalidArgument, "first knot must be 0");
        for (std::size_t i = 1; i < knots.size(); ++i)
            require(knots[i] > knots[i - 1], Errc::InvalidArgument, "knots must be increasing");
        const double horizon = knots.back();
        return Barrier(PiecewiseLinearBarrier{std::move(knots), std::move(values)}, horizon);
    }
    static Barrier sampled(TimeGrid grid, std::vector<double> values) {
        require(values.size() == grid.n_points(), Errc::LengthMismatch,
                "sampled barrier needs one value per grid point");
        const double horizon = grid.horizon();
        return Barrier(SampledBarrier{grid, std::move(values)}, horizon);
    }

    /// Samples f on `n_steps` uniform steps of [0, horizon].
    template <class F>
    static Barrier sample(F&& f, double horizon, std::size_t n_steps) {
        TimeGrid grid(horizon, n_steps);
        std::vector<double> v(grid.n_points());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(grid.time(i));
        return sampled(grid, std::move(v));
    }

    [[nodiscard]] BarrierKind kind() const noexcept { return static_cast<BarrierKind>(rep_.index()); }
    [[nodiscard]] const Variant& representation() const noexcept { return rep_; }
    [[nodiscard]] double horizon() const noexcept { return horizon_; }
    [[nodiscard]] bool has_closed_form() const noexcept {
        return kind() == BarrierKind::Constant || kind() == BarrierKind::Linear;
    }

    /// g(s); s is clamped to [0, horizon].
    [[nodiscard]] double operator()(double s) const {
        s = std::clamp(s, 0.0, horizon_);
        return std::visit([s](const auto& b) { return eval(b, s); }, rep_);
    }

    /// Almost-everywhere slope g'(s) (right derivative at kinks).
    [[nodiscard]] double slope(double s) const {
        s = std::clamp(s, 0.0, horizon_);
        return std::visit([s](const auto& b) { return slope_at(b, s); }, rep_);
    }

    /// (g(s1) - g(s0)) / (s1 - s0); the exact average of g' over the interval.
    [[nodiscard]] double mean_slope(double s0, double s1) const {
        if (s1 == s0) return slope(s0);
        return ((*this)(s1) - (*this)(s0)) / (s1 - s0);
    }

    /// Extremes over [0, t], exact for every representation (attained at knots or endpoints).
    [[nodiscard]] double min_value(double t) const { return extreme(t, true); }
    [[nodiscard]] double max_value(double t) const { return extreme(t, false); }

private:
    Barrier(Variant rep, double horizon) : rep_(std::move(rep)), horizon_(horizon) {
        require(std::isfinite(horizon_) && horizon_ > 0.0, Errc::InvalidArgument,
                "barrier horizon must be positive");
        require((*this)(0.0) > 0.0, Errc::InvalidArgument, "barrier needs g(0) > 0");
    }

    static double eval(const ConstantBarrier& b, double) { return b.level; }
    static double eval(const LinearBarrier& b, double s) { return b.intercept + b.slope * s; }
    static double eval(const PiecewiseLinearBarrier& b, double s) {
        const auto it = std::upper_bound(b.knots.begin(), b.knots.end(), s);
        if (it == b.knots.end()) return b.values.back();
        const std::size_t j = static_cast<std::size_t>(it - b.knots.begin());
        const double w = (s - b.knots[j - 1]) / (b.knots[j] - b.knots[j - 1]);
        return b.values[j - 1] + w * (b.values[j] - b.values[j - 1]);
    }
    static double eval(const SampledBarrier& b, double s) {
        const double x = s / b.grid.dt();
        const std::size_t j = std::min<std::size_t>(static_cast<std::size_t>(x), b.grid.n_steps() - 1);
        const double w = x - static_cast<double>(j);
        return b.values[j] + w * (b.values[j + 1] - b.values[j]);
    }

    static double slope_at(const ConstantBarrier&, double) { return 0.0; }
    static double slope_at(const LinearBarrier& b, double) { return b.slope; }
    static double slope_at(const PiecewiseLinearBarrier& b, double s) {
        auto it = std::upper_bound(b.knots.begin(), b.knots.end(), s);
        if (it == b.knots.end()) --it;
        const std::size_t j = static_cast<std::size_t>(it - b.knots.begin());
        return (b.values[j] - b.values[j - 1]) / (b.knots[j] - b.knots[j - 1]);
    }
    static double slope_at(const SampledBarrier& b, double s) {
        const std::size_t j = std::min<std::size_t>(static_cast<std::size_t>(s / b.grid.dt()),
                                                    b.grid.n_steps() - 1);
        return (b.values[j + 1] - b.values[j]) / b.grid.dt();
    }

    double extreme(double t, bool lo) const {
        t = std::clamp(t, 0.0, horizon_);
        double best = (*this)(0.0);
        auto take = [&](double v) { best = lo ? std::min(best, v) : std::max(best, v); };
        take((*this)(t));
        if (const auto* pl = std::get_if<PiecewiseLinearBarrier>(&rep_)) {
            for (std::size_t i = 0; i < pl->knots.size() && pl->knots[i] <= t; ++i) take(pl->values[i]);
        } else if (const auto* sb = std::get_if<SampledBarrier>(&rep_)) {
            for (std::size_t i = 0; i < sb->values.size() && sb->grid.time(i) <= t; ++i) take(sb->values[i]);
        }
        return best;
    }

    Variant rep_;
    double horizon_;
};

}  // namespace chaosflow
