// SPDX-License-Identifier: MIT
//
// Krylov-Veretennikov expansion of f(xi_t) for unit-diffusion drifts: a
// Crank-Nicolson transition semigroup on a (time, y) grid, the nested
// kernels (T d T d ... T f)(0) and their simplex integrals along the
// driving noise.
#pragma once

#include <chaosflow/barrier.hpp>
#include <chaosflow/error.hpp>
#include <chaosflow/girsanov.hpp>
#include <chaosflow/grid.hpp>
#include <chaosflow/mc.hpp>
#include <chaosflow/paths.hpp>
#include <chaosflow/rng.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace chaosflow {

inline constexpr std::size_t kMaxKvOrder = 3;

struct SemigroupConfig {
    /// Kernel time cells on [0, t].
    std::size_t n_time = 128;
    /// Crank-Nicolson steps per kernel cell.
    std::size_t substeps = 4;
    std::size_t n_y = 200;
    /// Lower end of the y-grid; NaN means 8 sqrt(t) below the start or barrier.
    double y_lo = NAN;
    /// Upper end for a free semigroup; NaN means 8 sqrt(t) above the start.
    double y_hi = NAN;
    /// Fine steps next to the terminal time done as two implicit half steps.
    std::size_t rannacher_steps = 2;
};

namespace detail {

/// Tridiagonal matrix rows (lower, diag, upper) on m unknowns.
struct Tridiag {
    std::vector<double> lo, di, up;
};

inline void solve_tridiag(const Tridiag& A, std::span<double> x) {
    const std::size_t m = x.size();
    std::vector<double> c(m), d(m);
    double w = A.di[0];
    c[0] = A.up[0] / w;
    d[0] = x[0] / w;
    for (std::size_t i = 1; i < m; ++i) {
        w = A.di[i] - A.lo[i] * c[i - 1];
        c[i] = A.up[i] / w;
        d[i] = (x[i] - A.lo[i] * d[i - 1]) / w;
    }
    x[m - 1] = d[m - 1];
    for (std::size_t i = m - 1; i-- > 0;) x[i] = d[i] - c[i] * x[i + 1];
}

inline Tridiag transpose(const Tridiag& A) {
    const std::size_t m = A.di.size();
    Tridiag T{std::vector<double>(m, 0.0), A.di, std::vector<double>(m, 0.0)};
    for (std::size_t i = 0; i + 1 < m; ++i) {
        T.up[i] = A.lo[i + 1];
        T.lo[i + 1] = A.up[i];
    }
    return T;
}

inline void multiply(const Tridiag& B, std::span<const double> x, std::span<double> y) {
    const std::size_t m = x.size();
    for (std::size_t i = 0; i < m; ++i) {
        double v = B.di[i] * x[i];
        if (i > 0) v += B.lo[i] * x[i - 1];
        if (i + 1 < m) v += B.up[i] * x[i + 1];
        y[i] = v;
    }
}

/// One theta sub-step (I - theta h L) v^k = (I + (1 - theta) h L) v^{k+1}.
struct ThetaStep {
    Tridiag A, B, At, Bt;
};

}  // namespace detail

/// Transition operators T_{s,u} phi(y) = E[phi(xi_u) | xi_s = y] on a
/// uniform (time, y) grid. Free: constant drift, no barrier. Conditioned:
/// Brownian motion conditioned to stay below a barrier up to the horizon,
/// in the Doob form T phi = K(alpha phi) / alpha with K the killed
/// semigroup and alpha = K 1, in straightened coordinates
/// z = y - (g(s) - g(0)).
class Semigroup {
public:
    static Semigroup free(double drift, double horizon, SemigroupConfig cfg = {}) {
        require(std::isfinite(drift), Errc::InvalidArgument, "drift must be finite");
        Semigroup sg(horizon, cfg);
        sg.conditioned_ = false;
        sg.drift_ = drift;
        const double w = 8.0 * std::sqrt(horizon) + std::abs(drift) * horizon;
        const double lo = std::isnan(cfg.y_lo) ? -w : cfg.y_lo;
        const double hi = std::isnan(cfg.y_hi) ? w : cfg.y_hi;
        require(lo < 0.0 && hi > 0.0, Errc::DomainError, "the y-grid must contain the start point 0");
        sg.z_lo_ = lo;
        sg.dz_ = (hi - lo) / static_cast<double>(cfg.n_y);
        sg.unknowns_ = cfg.n_y + 1;
        sg.build();
        return sg;
    }

    static Semigroup conditioned(const Barrier& g, double horizon, SemigroupConfig cfg = {}) {
        require(g(0.0) > 0.0, Errc::BarrierAlreadyHit, "barrier must start above 0");
        Semigroup sg(horizon, cfg);
        sg.conditioned_ = true;
        sg.barrier_ = g;
        const double g0 = g(0.0);
        double gmax = g0, gmin = g0;
        for (std::size_t k = 0; k <= 512; ++k) {
            const double v = g(horizon * static_cast<double>(k) / 512.0);
            gmax = std::max(gmax, v);
            gmin = std::min(gmin, v);
        }
        const double ylo = std::isnan(cfg.y_lo) ? std::min(0.0, gmin) - 8.0 * std::sqrt(horizon) : cfg.y_lo;
        require(ylo < std::min(0.0, gmin), Errc::DomainError, "y_lo must lie below the start and the barrier");
        sg.z_lo_ = ylo - (gmax - g0);
        sg.dz_ = (g0 - sg.z_lo_) / static_cast<double>(cfg.n_y);
        sg.unknowns_ = cfg.n_y;  // barrier node fixed at 0
        sg.build();
        return sg;
    }

    static Semigroup conditioned(const DriftField& field, SemigroupConfig cfg = {}) {
        return conditioned(field.barrier(), field.horizon(), cfg);
    }

    [[nodiscard]] double horizon() const noexcept { return t_; }
    [[nodiscard]] bool is_conditioned() const noexcept { return conditioned_; }
    /// Constant drift of a free semigroup.
    [[nodiscard]] double drift() const noexcept { return drift_; }
    [[nodiscard]] const SemigroupConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] std::size_t n_time() const noexcept { return cfg_.n_time; }
    [[nodiscard]] std::size_t n_nodes() const noexcept { return cfg_.n_y + 1; }
    [[nodiscard]] double time(std::size_t k) const { return t_ * static_cast<double>(k) / static_cast<double>(cfg_.n_time); }
    [[nodiscard]] double dy() const noexcept { return dz_; }
    [[nodiscard]] TimeGrid time_grid() const { return TimeGrid(t_, cfg_.n_time); }

    /// Physical y of node j at kernel time index k.
    [[nodiscard]] double y(std::size_t k, std::size_t j) const {
        const double z = z_lo_ + dz_ * static_cast<double>(j);
        return conditioned_ ? z + barrier_(time(k)) - barrier_(0.0) : z;
    }

    /// f sampled on the nodes at kernel time index k.
    [[nodiscard]] std::vector<double> sample(std::size_t k, const std::function<double(double)>& f) const {
        std::vector<double> v(n_nodes());
        for (std::size_t j = 0; j < v.size(); ++j) v[j] = f(y(k, j));
        return v;
    }

    /// alpha at kernel time index k (ones for a free semigroup).
    [[nodiscard]] std::span<const double> alpha(std::size_t k) const { return alpha_[k]; }

    /// T_{s,u} f for kernel time indices i <= k.
    [[nodiscard]] std::vector<double> apply(std::size_t i, std::size_t k, std::span<const double> f) const {
        require(i <= k && k <= cfg_.n_time, Errc::InvalidArgument, "need s <= u on the kernel time grid");
        require(f.size() == n_nodes(), Errc::LengthMismatch, "grid function size differs from the y-grid");
        if (i == k) return std::vector<double>(f.begin(), f.end());
        std::vector<double> psi(n_nodes(), 0.0);
        for (std::size_t j = 0; j < unknowns_; ++j) psi[j] = alpha_[k][j] * f[j];
        for (std::size_t c = k; c-- > i;) backward_cell(c, psi);
        return ratio(i, psi);
    }

    /// Linear interpolation of a grid function at physical y, time index k.
    [[nodiscard]] double interpolate(std::size_t k, std::span<const double> v, double yv) const {
        const double z = conditioned_ ? yv - (barrier_(time(k)) - barrier_(0.0)) : yv;
        const double u = (z - z_lo_) / dz_;
        const double fl = std::clamp(std::floor(u), 0.0, static_cast<double>(cfg_.n_y - 1));
        const auto j = static_cast<std::size_t>(fl);
        const double w = std::clamp(u - fl, 0.0, 1.0);
        return (1.0 - w) * v[j] + w * v[j + 1];
    }

    // -- building blocks shared with the kernel pipeline ----------------------

    /// v <- K_c v: one kernel cell backward (values at t_{c+1} to t_c).
    void backward_cell(std::size_t c, std::vector<double>& v) const {
        std::vector<double> tmp(unknowns_);
        for (std::size_t f = (c + 1) * cfg_.substeps; f-- > c * cfg_.substeps;)
            for (const auto& st : steps_[f]) {
                detail::multiply(st.B, std::span<const double>(v.data(), unknowns_), tmp);
                detail::solve_tridiag(st.A, tmp);
                std::copy(tmp.begin(), tmp.end(), v.begin());
            }
        if (conditioned_) v[cfg_.n_y] = 0.0;
    }

    /// r <- r K_c for a row vector r (exact transpose of backward_cell).
    void forward_cell(std::size_t c, std::vector<double>& r) const {
        std::vector<double> tmp(unknowns_);
        for (std::size_t f = c * cfg_.substeps; f < (c + 1) * cfg_.substeps; ++f)
            for (auto it = steps_[f].rbegin(); it != steps_[f].rend(); ++it) {
                std::span<double> rv(r.data(), unknowns_);
                detail::solve_tridiag(it->At, rv);
                detail::multiply(it->Bt, rv, tmp);
                std::copy(tmp.begin(), tmp.end(), r.begin());
            }
        if (conditioned_) r[cfg_.n_y] = 0.0;
    }

    /// u = psi / alpha_k with the barrier node taken as the one-sided limit.
    [[nodiscard]] std::vector<double> ratio(std::size_t k, std::span<const double> psi) const {
        std::vector<double> u(psi.begin(), psi.end());
        if (!conditioned_) return u;
        const auto& a = alpha_[k];
        const std::size_t N = cfg_.n_y;
        for (std::size_t j = 0; j < N; ++j) u[j] = psi[j] / a[j];
        u[N] = (-4.0 * psi[N - 1] + psi[N - 2]) / (-4.0 * a[N - 1] + a[N - 2]);
        return u;
    }

    /// r <- r R_k, the transpose of ratio().
    [[nodiscard]] std::vector<double> ratio_transpose(std::size_t k, std::span<const double> r) const {
        std::vector<double> out(r.begin(), r.end());
        if (!conditioned_) return out;
        const auto& a = alpha_[k];
        const std::size_t N = cfg_.n_y;
        const double den = -4.0 * a[N - 1] + a[N - 2];
        for (std::size_t j = 0; j < N; ++j) out[j] = r[j] / a[j];
        out[N - 1] += r[N] * (-4.0 / den);
        out[N - 2] += r[N] * (1.0 / den);
        out[N] = 0.0;
        return out;
    }

    /// Row of interpolation weights at y = 0, time 0.
    [[nodiscard]] std::vector<double> start_row() const {
        std::vector<double> e(n_nodes(), 0.0);
        const double u = (0.0 - z_lo_) / dz_;
        const auto j = static_cast<std::size_t>(std::floor(u));
        const double w = u - static_cast<double>(j);
        e[j] = 1.0 - w;
        if (w > 0.0) e[j + 1] = w;
        return e;
    }

private:
    Semigroup(double horizon, SemigroupConfig cfg) : cfg_(cfg), t_(horizon), barrier_(Barrier::constant(1.0)) {
        require(std::isfinite(horizon) && horizon > 0.0, Errc::InvalidArgument, "horizon must be positive");
        require(cfg.n_time >= 1 && cfg.substeps >= 1, Errc::InvalidArgument, "need at least one time step");
        require(cfg.n_y >= 8, Errc::InvalidArgument, "need at least 8 y cells");
    }

    /// L v = v''/2 + b v' with zero curvature at the open ends.
    detail::ThetaStep theta_step(double b, double h, double theta) const {
        const std::size_t m = unknowns_;
        detail::Tridiag L{std::vector<double>(m, 0.0), std::vector<double>(m, 0.0), std::vector<double>(m, 0.0)};
        const double d2 = 0.5 / (dz_ * dz_), d1 = b / (2.0 * dz_);
        for (std::size_t j = 0; j < m; ++j) {
            L.lo[j] = d2 - d1;
            L.di[j] = -2.0 * d2;
            L.up[j] = d2 + d1;
        }
        L.lo[0] = 0.0;
        L.di[0] = -b / dz_;
        L.up[0] = b / dz_;
        if (!conditioned_) {
            L.lo[m - 1] = -b / dz_;
            L.di[m - 1] = b / dz_;
        }
        L.up[m - 1] = 0.0;  // Dirichlet barrier or closed end
        detail::ThetaStep st;
        st.A = {L.lo, L.di, L.up};
        st.B = {L.lo, L.di, L.up};
        for (std::size_t j = 0; j < m; ++j) {
            st.A.lo[j] *= -theta * h;
            st.A.up[j] *= -theta * h;
            st.A.di[j] = 1.0 - theta * h * L.di[j];
            st.B.lo[j] *= (1.0 - theta) * h;
            st.B.up[j] *= (1.0 - theta) * h;
            st.B.di[j] = 1.0 + (1.0 - theta) * h * L.di[j];
        }
        st.At = detail::transpose(st.A);
        st.Bt = detail::transpose(st.B);
        return st;
    }

    void build() {
        const std::size_t fine = cfg_.n_time * cfg_.substeps;
        const double h = t_ / static_cast<double>(fine);
        steps_.resize(fine);
        for (std::size_t f = 0; f < fine; ++f) {
            double b = drift_;
            if (conditioned_) {
                const double s0 = h * static_cast<double>(f);
                b = -(barrier_(s0 + h) - barrier_(s0)) / h;
            }
            if (f + cfg_.rannacher_steps >= fine) {
                steps_[f].push_back(theta_step(b, 0.5 * h, 1.0));
                steps_[f].push_back(theta_step(b, 0.5 * h, 1.0));
            } else {
                steps_[f].push_back(theta_step(b, h, 0.5));
            }
        }
        alpha_.assign(cfg_.n_time + 1, std::vector<double>(n_nodes(), 1.0));
        if (conditioned_) {
            alpha_[cfg_.n_time][cfg_.n_y] = 0.0;
            for (std::size_t c = cfg_.n_time; c-- > 0;) {
                alpha_[c] = alpha_[c + 1];
                backward_cell(c, alpha_[c]);
            }
            for (std::size_t k = 0; k < cfg_.n_time; ++k)
                for (std::size_t j = 0; j < cfg_.n_y; ++j)
                    if (!(alpha_[k][j] > 0.0)) fail(Errc::GridTooCoarse, "discrete survival not positive below the barrier");
        }
    }

    SemigroupConfig cfg_;
    double t_;
    bool conditioned_ = false;
    double drift_ = 0.0;
    Barrier barrier_;
    double z_lo_ = 0.0, dz_ = 1.0;
    std::size_t unknowns_ = 0;
    std::vector<std::vector<detail::ThetaStep>> steps_;
    std::vector<std::vector<double>> alpha_;
};

/// T_{s,u} f with s, u on the kernel time grid.
inline std::vector<double> semigroup_apply(const Semigroup& sg, double s, double u, std::span<const double> f) {
    require(s <= u + 1e-12 && s >= -1e-12 && u <= sg.horizon() + 1e-12, Errc::InvalidArgument,
            "need 0 <= s <= u <= horizon");
    const double m = static_cast<double>(sg.n_time()) / sg.horizon();
    const double is = std::round(s * m), iu = std::round(u * m);
    require(std::abs(is - s * m) < 1e-9 && std::abs(iu - u * m) < 1e-9, Errc::InvalidArgument,
            "s and u must lie on the kernel time grid");
    return sg.apply(static_cast<std::size_t>(is), static_cast<std::size_t>(iu), f);
}

namespace detail {

/// Centered y-derivative with second-order one-sided ends.
inline std::vector<double> derivative(std::span<const double> u, double h) {
    const std::size_t m = u.size();
    std::vector<double> d(m);
    for (std::size_t j = 1; j + 1 < m; ++j) d[j] = (u[j + 1] - u[j - 1]) / (2.0 * h);
    d[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h);
    d[m - 1] = (3.0 * u[m - 1] - 4.0 * u[m - 2] + u[m - 3]) / (2.0 * h);
    return d;
}

/// r <- r D, the transpose of derivative().
inline std::vector<double> derivative_transpose(std::span<const double> r, double h) {
    const std::size_t m = r.size();
    std::vector<double> out(m, 0.0);
    const double c = 1.0 / (2.0 * h);
    for (std::size_t j = 1; j + 1 < m; ++j) {
        out[j + 1] += r[j] * c;
        out[j - 1] -= r[j] * c;
    }
    out[0] += -3.0 * c * r[0];
    out[1] += 4.0 * c * r[0];
    out[2] += -c * r[0];
    out[m - 1] += 3.0 * c * r[m - 1];
    out[m - 2] += -4.0 * c * r[m - 1];
    out[m - 3] += c * r[m - 1];
    return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    long double s = 0.0L;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long double>(a[i]) * b[i];
    return static_cast<double>(s);
}

}  // namespace detail

/// Kernels k_n(t_1 <= ... <= t_n) = (T_{0,t_1} d T_{t_1,t_2} ... d T_{t_n,t} f)(0)
/// on the ordered cells of the kernel time grid, diagonals included.
class KvKernels {
public:
    KvKernels(const Semigroup& sg, std::span<const double> f_terminal, std::size_t max_order)
        : M_(sg.n_time()), dt_(sg.horizon() / static_cast<double>(sg.n_time())), max_order_(max_order) {
        require(max_order <= kMaxKvOrder, Errc::OrderTooHigh, "KV kernels support n <= 3");
        require(f_terminal.size() == sg.n_nodes(), Errc::LengthMismatch, "f must be sampled on the y-grid");
        const std::size_t nodes = sg.n_nodes();
        const double h = sg.dy();
        // backward: B_c = T_{c,M} f and dB_c
        std::vector<std::vector<double>> dB(M_);
        std::vector<double> psi(nodes, 0.0);
        for (std::size_t j = 0; j < nodes; ++j) psi[j] = sg.alpha(M_)[j] * f_terminal[j];
        std::vector<double> B0;
        for (std::size_t c = M_; c-- > 0;) {
            sg.backward_cell(c, psi);
            const auto B = sg.ratio(c, psi);
            dB[c] = detail::derivative(B, h);
            if (c == 0) B0 = B;
        }
        const auto e = sg.start_row();
        k0_ = detail::dot(e, B0);
        if (max_order == 0) return;
        // forward measures m_c
        std::vector<std::vector<double>> m(M_);
        std::vector<double> rho = sg.ratio_transpose(0, e);
        for (std::size_t c = 0; c < M_; ++c) {
            if (c == 0) {
                m[0] = e;
            } else {
                sg.forward_cell(c - 1, rho);
                m[c].resize(nodes);
                for (std::size_t j = 0; j < nodes; ++j) m[c][j] = rho[j] * sg.alpha(c)[j];
            }
        }
        k1_.resize(M_);
        for (std::size_t c = 0; c < M_; ++c) k1_[c] = detail::dot(m[c], dB[c]);
        if (max_order == 1) return;
        k2_.assign(M_ * M_, 0.0);
        if (max_order >= 3) k3_.assign(M_ * M_ * M_, 0.0);
        std::vector<double> w(nodes);
        for (std::size_t c1 = 0; c1 < M_; ++c1) {
            auto r = sg.ratio_transpose(c1, detail::derivative_transpose(m[c1], h));
            for (std::size_t c2 = c1; c2 < M_; ++c2) {
                if (c2 > c1) sg.forward_cell(c2 - 1, r);
                for (std::size_t j = 0; j < nodes; ++j) w[j] = r[j] * sg.alpha(c2)[j];
                k2_[c1 * M_ + c2] = detail::dot(w, dB[c2]);
                if (max_order < 3) continue;
                auto q = sg.ratio_transpose(c2, detail::derivative_transpose(w, h));
                std::vector<double> v(nodes);
                for (std::size_t c3 = c2; c3 < M_; ++c3) {
                    if (c3 > c2) sg.forward_cell(c3 - 1, q);
                    for (std::size_t j = 0; j < nodes; ++j) v[j] = q[j] * sg.alpha(c3)[j];
                    k3_[(c1 * M_ + c2) * M_ + c3] = detail::dot(v, dB[c3]);
                }
            }
        }
    }

    [[nodiscard]] std::size_t cells() const noexcept { return M_; }
    [[nodiscard]] std::size_t max_order() const noexcept { return max_order_; }
    [[nodiscard]] double cell_width() const noexcept { return dt_; }
    [[nodiscard]] double k0() const noexcept { return k0_; }
    [[nodiscard]] double k1(std::size_t c) const { return k1_.at(c); }
    [[nodiscard]] double k2(std::size_t c1, std::size_t c2) const { return k2_.at(c1 * M_ + c2); }
    [[nodiscard]] double k3(std::size_t c1, std::size_t c2, std::size_t c3) const {
        return k3_.at((c1 * M_ + c2) * M_ + c3);
    }

    /// int over the ordered simplex of k_n^2, by the cell rule.
    [[nodiscard]] double energy(std::size_t n) const {
        require(n <= max_order_, Errc::OrderTooHigh, "order not tabulated");
        long double s = 0.0L;
        if (n == 0) return k0_ * k0_;
        if (n == 1)
            for (double v : k1_) s += static_cast<long double>(v) * v;
        // strict cells plus half weights on diagonals approximate the simplex volume
        if (n == 2)
            for (std::size_t a = 0; a < M_; ++a)
                for (std::size_t b = a; b < M_; ++b) {
                    const double v = k2(a, b);
                    s += (a == b ? 0.5L : 1.0L) * v * v;
                }
        if (n == 3)
            for (std::size_t a = 0; a < M_; ++a)
                for (std::size_t b = a; b < M_; ++b)
                    for (std::size_t c = b; c < M_; ++c) {
                        const double v = k3(a, b, c);
                        long double wgt = 1.0L;
                        if (a == b && b == c) wgt = 1.0L / 6.0L;
                        else if (a == b || b == c) wgt = 0.5L;
                        s += wgt * v * v;
                    }
        return static_cast<double>(s) * std::pow(dt_, static_cast<double>(n));
    }

    /// Simplex integral of k_n along increments dw on a grid refining the kernel cells.
    [[nodiscard]] double term(std::size_t n, std::span<const double> dw) const {
        require(n <= max_order_, Errc::OrderTooHigh, "order not tabulated");
        if (n == 0) return k0_;
        require(dw.size() % M_ == 0, Errc::InvalidArgument, "path grid must refine the kernel grid");
        const std::size_t spc = dw.size() / M_;
        // per-cell elementary symmetric sums e1, e2, e3 of the increments
        std::vector<double> e1(M_, 0.0), e2(M_, 0.0), e3(M_, 0.0);
        for (std::size_t c = 0; c < M_; ++c) {
            double a1 = 0.0, a2 = 0.0, a3 = 0.0;
            for (std::size_t i = c * spc; i < (c + 1) * spc; ++i) {
                const double x = dw[i];
                a3 += a2 * x;
                a2 += a1 * x;
                a1 += x;
            }
            e1[c] = a1;
            e2[c] = a2;
            e3[c] = a3;
        }
        long double s = 0.0L;
        if (n == 1) {
            for (std::size_t c = 0; c < M_; ++c) s += k1_[c] * e1[c];
            return static_cast<double>(s);
        }
        if (n == 2) {
            for (std::size_t a = 0; a < M_; ++a) {
                double inner = 0.0;
                for (std::size_t b = a + 1; b < M_; ++b) inner += k2(a, b) * e1[b];
                s += e1[a] * inner + k2(a, a) * e2[a];
            }
            return static_cast<double>(s);
        }
        // cell patterns a < b < c, a < b = c, a = b < c, a = b = c
        for (std::size_t a = 0; a < M_; ++a) {
            long double strict = 0.0L, left = 0.0L;
            for (std::size_t b = a + 1; b < M_; ++b) {
                const double* row = &k3_[(a * M_ + b) * M_];
                double inner = 0.0;
                for (std::size_t c = b + 1; c < M_; ++c) inner += row[c] * e1[c];
                strict += e1[b] * inner + row[b] * e2[b];
                left += k3(a, a, b) * e1[b];
            }
            s += e1[a] * strict + e2[a] * left + k3(a, a, a) * e3[a];
        }
        return static_cast<double>(s);
    }

private:
    std::size_t M_;
    double dt_;
    std::size_t max_order_;
    double k0_ = 0.0;
    std::vector<double> k1_, k2_, k3_;
};

/// Order-n KV term of f(xi_t) along the driving increments of a path.
inline double kv_term(std::size_t n, const std::function<double(double)>& f, std::span<const double> dw,
                      const Semigroup& sg) {
    require(n <= kMaxKvOrder, Errc::OrderTooHigh, "KV terms support n <= 3");
    const KvKernels k(sg, sg.sample(sg.n_time(), f), n);
    return k.term(n, dw);
}

// ---------------------------------------------------------------------------
// Truncation study
// ---------------------------------------------------------------------------

struct KvReport {
    std::size_t paths = 0;
    std::size_t max_order = 0;
    /// E[(f - sum_{n <= N} term_n)^2] for N = 0..max_order.
    std::vector<MCEstimate> residual;
    /// Decrease R_{N-1} - R_N for N = 1..max_order (index N - 1).
    std::vector<MCEstimate> decrease;
    /// E[term_n^2] and the cell-rule simplex energy of k_n.
    std::vector<MCEstimate> energy_mc;
    std::vector<double> energy_kernel;
    std::vector<Check> checks;
    [[nodiscard]] bool pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

struct KvStudyOptions {
    std::size_t max_order = 3;
    std::size_t paths = 10000;
    /// Path steps per kernel cell.
    std::size_t steps_per_cell = 8;
    Seed seed = 1;
    unsigned threads = 0;
    /// Required z of each decrease whose order energy is nonzero.
    double separation_z = 5.0;
    double z_threshold = 3.0;
};

/// Paths: h-transform draws for a conditioned semigroup, Brownian motion
/// with the constant drift for a free one.
inline KvReport kv_truncation_study(const std::function<double(double)>& f, const Semigroup& sg,
                                    const KvStudyOptions& opt, const DriftField* field = nullptr) {
    require(opt.max_order <= kMaxKvOrder, Errc::OrderTooHigh, "KV terms support n <= 3");
    require(opt.paths >= 100, Errc::InvalidArgument, "need at least 100 paths");
    require(!sg.is_conditioned() || field != nullptr, Errc::InvalidArgument,
            "a conditioned semigroup needs the drift field for path sampling");
    const KvKernels kernels(sg, sg.sample(sg.n_time(), f), opt.max_order);
    const TimeGrid grid(sg.horizon(), sg.n_time() * opt.steps_per_cell);
    std::optional<ConditionedSampler> sampler;
    if (field) sampler.emplace(*field, grid, ConditionedMethod::HTransform);
    const std::size_t K = opt.max_order + 1;
    // columns: f, term_0..term_K-1
    const auto table = sample_table(opt.paths, 1 + K, opt.threads, [&](std::size_t i, std::span<double> row) {
        const Seed s = derive_seed(opt.seed, i);
        std::vector<double> dw;
        double end = 0.0;
        if (sampler) {
            auto d = sampler->draw(s);
            dw = std::move(d.noise);
            end = d.path.back();
        } else {
            Path p = sample_brownian(grid, s);
            dw = p.increments();
            end = p.back() + sg.drift() * sg.horizon();
        }
        row[0] = f(end);
        for (std::size_t n = 0; n < K; ++n) row[1 + n] = kernels.term(n, dw);
    });
    KvReport r;
    r.paths = opt.paths;
    r.max_order = opt.max_order;
    std::vector<double> res(opt.paths), prev(opt.paths), d(opt.paths), e(opt.paths);
    std::vector<double> partial(opt.paths, 0.0);
    for (std::size_t n = 0; n < K; ++n) {
        for (std::size_t i = 0; i < opt.paths; ++i) {
            const double before = table.at(i, 0) - partial[i];
            partial[i] += table.at(i, 1 + n);
            const double after = table.at(i, 0) - partial[i];
            res[i] = after * after;
            d[i] = before * before - after * after;
            e[i] = table.at(i, 1 + n) * table.at(i, 1 + n);
        }
        r.residual.push_back(summarize(res));
        r.energy_mc.push_back(summarize(e));
        r.energy_kernel.push_back(kernels.energy(n));
        if (n >= 1) {
            const MCEstimate dec = summarize(d);
            r.decrease.push_back(dec);
            const MCEstimate& en = r.energy_mc.back();
            const bool nonzero = en.std_error > 0.0 && en.mean > opt.separation_z * en.std_error;
            const std::string name = "decrease order " + std::to_string(n);
            if (nonzero) {
                Check c = z_check(name, dec, 0.0, INFINITY);
                c.threshold = opt.separation_z;
                c.kind = "z_min";
                c.pass = c.z >= opt.separation_z;
                r.checks.push_back(c);
            } else {
                Check c = z_check(name + " (zero energy)", dec, 0.0, opt.z_threshold);
                c.kind = "z_min";
                c.threshold = -opt.z_threshold;
                c.pass = c.z >= -opt.z_threshold;
                r.checks.push_back(c);
            }
        }
    }
    // orthogonality of KV terms of different orders
    for (std::size_t a = 1; a < K; ++a)
        for (std::size_t b = a + 1; b < K; ++b) {
            std::vector<double> p(opt.paths);
            for (std::size_t i = 0; i < opt.paths; ++i) p[i] = table.at(i, 1 + a) * table.at(i, 1 + b);
            r.checks.push_back(z_check("E[term" + std::to_string(a) + "*term" + std::to_string(b) + "]", summarize(p),
                                       0.0, opt.z_threshold));
        }
    return r;
}

}  // namespace chaosflow
