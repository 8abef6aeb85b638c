// SPDX-License-Identifier: MIT
//
// Scalar helpers shared by every module: Gaussian CDF/PDF in forms that
// stay accurate in the tails, combinatorics, and a tridiagonal solver.
#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

namespace chaosflow::math {

inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

inline double norm_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

/// log Phi(x); switches to the asymptotic series once erfc underflows.
inline double log_norm_cdf(double x) {
    if (x > -30.0) return std::log(norm_cdf(x));
    const double z = x * x;
    // Phi(x) ~ phi(x)/|x| * (1 - 1/x^2 + 3/x^4 - 15/x^6)
    const double series = 1.0 - 1.0 / z + 3.0 / (z * z) - 15.0 / (z * z * z);
    return -0.5 * z - std::log(-x) - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(series);
}

inline double binomial(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

inline double factorial(int n) {
    double r = 1.0;
    for (int i = 2; i <= n; ++i) r *= i;
    return r;
}

/// Solves a tridiagonal system in place (Thomas algorithm). `lower[0]` and
/// `upper[n-1]` are ignored. `rhs` is overwritten with the solution.
inline void solve_tridiagonal(std::span<const double> lower, std::span<const double> diag,
                              std::span<const double> upper, std::span<double> rhs,
                              std::vector<double>& scratch) {
    const std::size_t n = diag.size();
    scratch.resize(n);
    double denom = diag[0];
    scratch[0] = upper[0] / denom;
    rhs[0] /= denom;
    for (std::size_t i = 1; i < n; ++i) {
        denom = diag[i] - lower[i] * scratch[i - 1];
        scratch[i] = (i + 1 < n) ? upper[i] / denom : 0.0;
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / denom;
    }
    for (std::size_t i = n - 1; i-- > 0;) rhs[i] -= scratch[i] * rhs[i + 1];
}

}  // namespace chaosflow::math
