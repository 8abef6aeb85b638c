// SPDX-License-Identifier: MIT
#pragma once

#include <chaosflow/error.hpp>

#include <cmath>
#include <cstddef>
#include <string>

namespace chaosflow {

/// Uniform grid t_i = i * dt on [0, horizon], i = 0..n_steps.
class TimeGrid {
public:
    TimeGrid(double horizon, std::size_t n_steps) : horizon_(horizon), n_steps_(n_steps) {
        require(n_steps >= 1, Errc::InvalidArgument, "TimeGrid needs n_steps >= 1");
        require(std::isfinite(horizon) && horizon > 0.0, Errc::InvalidArgument,
                "TimeGrid horizon must be positive, got " + std::to_string(horizon));
        dt_ = horizon / static_cast<double>(n_steps);
    }

    [[nodiscard]] double horizon() const noexcept { return horizon_; }
    [[nodiscard]] std::size_t n_steps() const noexcept { return n_steps_; }
    [[nodiscard]] std::size_t n_points() const noexcept { return n_steps_ + 1; }
    [[nodiscard]] double dt() const noexcept { return dt_; }

    [[nodiscard]] double time(std::size_t i) const noexcept {
        return i == n_steps_ ? horizon_ : static_cast<double>(i) * dt_;
    }
    [[nodiscard]] double midpoint(std::size_t i) const noexcept {
        return (static_cast<double>(i) + 0.5) * dt_;
    }

    /// Grid of the first k steps, i.e. [0, t_k] at the same resolution.
    [[nodiscard]] TimeGrid prefix(std::size_t k) const { return TimeGrid(time(k), k); }

    friend bool operator==(const TimeGrid& a, const TimeGrid& b) noexcept {
        return a.n_steps_ == b.n_steps_ && a.horizon_ == b.horizon_;
    }

private:
    double horizon_;
    std::size_t n_steps_;
    double dt_;
};

}  // namespace chaosflow
