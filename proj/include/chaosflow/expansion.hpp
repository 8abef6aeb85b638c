// SPDX-License-Identifier: MIT
//
// Compensated multiple integrals under the barrier-conditioned law, the
// stopped-flow integrals I^nu_n, the conditional-expectation check and the
// first-coefficient example.
#pragma once

#include <chaosflow/chaos.hpp>
#include <chaosflow/error.hpp>
#include <chaosflow/girsanov.hpp>
#include <chaosflow/grid.hpp>
#include <chaosflow/math.hpp>
#include <chaosflow/mc.hpp>
#include <chaosflow/paths.hpp>
#include <chaosflow/rng.hpp>
#include <chaosflow/survival.hpp>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <bit>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace chaosflow {

namespace detail {

/// sum_{S subset of U} (-1)^{|S|} prod_{k in S} d_k * J[U \ S]
inline double compensate(std::span<const double> J, std::span<const double> d, std::size_t U) {
    double total = 0.0;
    for (std::size_t S = U;; S = (S - 1) & U) {
        double prod = (std::popcount(S) % 2 == 0) ? 1.0 : -1.0;
        for (std::size_t rest = S; rest; rest &= rest - 1) prod *= d[std::countr_zero(rest)];
        total += prod * J[U & ~S];
        if (S == 0) break;
    }
    return total;
}

inline void check_kappa_inputs(std::size_t n, const SymmetricKernel& a, const TimeGrid& grid,
                               std::span<const double> drift) {
    require(a.order() == n, Errc::OrderMismatch, "kernel order differs from n");
    require(std::abs(a.horizon() - grid.horizon()) < 1e-12, Errc::HorizonMismatch, "kernel and path horizons differ");
    require(drift.size() >= grid.n_steps(), Errc::LengthMismatch, "need the drift at every left grid point");
    if (a.as_grid()) require(n <= 3, Errc::OrderTooHigh, "grid kernels support n <= 3 here");
    require(a.as_product() || a.as_grid() || n == 0, Errc::InvalidArgument,
            "compensated integrals need a product-basis or grid kernel");
}

/// Contracts the last m arguments of a cell kernel with w.
inline GridSampledKernel contract_tail(const GridSampledKernel& k, std::size_t n, std::size_t m,
                                       std::span<const double> w) {
    const std::size_t cells = k.grid.n_steps();
    std::vector<double> cur = k.values;
    for (std::size_t j = 0; j < m; ++j) {
        const std::size_t outer = ipow(cells, n - j - 1);
        std::vector<double> next(outer, 0.0);
        for (std::size_t p = 0; p < outer; ++p) {
            double acc = 0.0;
            for (std::size_t c = 0; c < cells; ++c) acc += cur[p * cells + c] * w[c];
            next[p] = acc;
        }
        cur = std::move(next);
    }
    return {k.grid, std::move(cur)};
}

}  // namespace detail

/// Compensated integral sum_m (-1)^m C(n,m) int a(r, s) dw_r prod drift(s_i) ds_i,
/// from increments dx and left-point drift values on grid.
inline double I_kappa(std::size_t n, const SymmetricKernel& a, const TimeGrid& grid, std::span<const double> dx,
                      std::span<const double> drift) {
    detail::check_kappa_inputs(n, a, grid, drift);
    require(dx.size() == grid.n_steps(), Errc::LengthMismatch, "one increment per step");
    if (n == 0) return a(std::span<const double>{});
    const double dt = grid.dt();
    if (a.as_product()) {
        const ProductPlan plan(a, grid);
        std::vector<double> J, d(n);
        double total = 0.0;
        for (const ProductTerm& t : plan.terms()) {
            const auto rows = plan.factor_rows(t);
            detail::subset_iterated_sums(rows, dx, J);
            for (std::size_t k = 0; k < n; ++k) {
                double acc = 0.0;
                for (std::size_t i = 0; i < grid.n_steps(); ++i) acc += rows[k][i] * drift[i];
                d[k] = acc * dt;
            }
            total += t.coef * detail::compensate(J, d, (std::size_t{1} << n) - 1);
        }
        return total;
    }
    const auto& g = *a.as_grid();
    const std::size_t spc = detail::steps_per_cell(g, grid);
    std::vector<double> w(g.grid.n_steps(), 0.0);
    for (std::size_t i = 0; i < grid.n_steps(); ++i) w[i / spc] += drift[i] * dt;
    double total = 0.0;
    for (std::size_t m = 0; m <= n; ++m) {
        const auto part = detail::contract_tail(g, n, m, w);
        const double inner = m == n ? part.values[0]
                                    : math::factorial(static_cast<int>(n - m)) *
                                          detail::cell_simplex_sum(part, n - m, spc, dx);
        total += ((m % 2 == 0) ? 1.0 : -1.0) * math::binomial(static_cast<int>(n), static_cast<int>(m)) * inner;
    }
    return total;
}

inline double I_kappa(std::size_t n, const SymmetricKernel& a, const Path& path, const DriftField& field) {
    require(std::abs(path.grid().horizon() - field.horizon()) < 1e-12, Errc::HorizonMismatch,
            "path and field horizons differ");
    detail::require_below(path, field.barrier());
    const auto dx = path.increments();
    const auto drift = drift_along(path, field);
    return I_kappa(n, a, path.grid(), dx, drift);
}

/// n! * strict-simplex sum over compensated increments dx_i - drift_i dt.
inline double I_kappa_compensated_form(std::size_t n, const SymmetricKernel& a, const TimeGrid& grid,
                                       std::span<const double> dx, std::span<const double> drift) {
    detail::check_kappa_inputs(n, a, grid, drift);
    require(dx.size() == grid.n_steps(), Errc::LengthMismatch, "one increment per step");
    std::vector<double> c(grid.n_steps());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = dx[i] - drift[i] * grid.dt();
    return multiple_wiener_integral(a, grid, c);
}

inline double I_kappa_compensated_form(std::size_t n, const SymmetricKernel& a, const Path& path,
                                       const DriftField& field) {
    require(std::abs(path.grid().horizon() - field.horizon()) < 1e-12, Errc::HorizonMismatch,
            "path and field horizons differ");
    detail::require_below(path, field.barrier());
    const auto dx = path.increments();
    const auto drift = drift_along(path, field);
    return I_kappa_compensated_form(n, a, path.grid(), dx, drift);
}

// ---------------------------------------------------------------------------
// Families over horizons
// ---------------------------------------------------------------------------

/// Drift fields for the horizons t_k = k T / K, k = 1..K.
class FieldFamily {
public:
    FieldFamily(const Barrier& g, std::size_t horizons, double T = 1.0, NearBarrierPolicy policy = {},
                PdeConfig cfg = default_pde())
        : T_(T) {
        require(horizons >= 1, Errc::InvalidArgument, "need at least one horizon");
        require(T > 0.0, Errc::InvalidArgument, "horizon must be positive");
        fields_.reserve(horizons);
        for (std::size_t k = 1; k <= horizons; ++k)
            fields_.emplace_back(make_survival(g, T * static_cast<double>(k) / static_cast<double>(horizons), cfg),
                                 policy);
    }

    static PdeConfig default_pde() {
        PdeConfig c;
        c.n_s = 200;
        c.n_y = 200;
        return c;
    }

    [[nodiscard]] std::size_t size() const noexcept { return fields_.size(); }
    [[nodiscard]] double total_horizon() const noexcept { return T_; }
    [[nodiscard]] double horizon(std::size_t k) const {
        return T_ * static_cast<double>(k) / static_cast<double>(fields_.size());
    }
    /// Field for horizon t_k, k in 1..size().
    [[nodiscard]] const DriftField& field(std::size_t k) const {
        require(k >= 1 && k <= fields_.size(), Errc::InvalidArgument, "horizon index out of range");
        return fields_[k - 1];
    }
    /// P(tau >= t_k) from the field at the start point.
    [[nodiscard]] double survival(std::size_t k) const { return field(k).model().alpha(0.0, 0.0); }

private:
    double T_;
    std::vector<DriftField> fields_;
};

/// An order-n product kernel a_n on [0,T]^n viewed through its slices
/// s -> a_n(s, t) on [0,t]^{n-1}.
class KernelFamily {
public:
    explicit KernelFamily(SymmetricKernel a) : a_(std::move(a)) {
        require(a_.order() >= 1, Errc::InvalidArgument, "kernel family needs order >= 1");
        require(a_.as_product() != nullptr, Errc::InvalidArgument, "kernel family needs a product-basis kernel");
    }

    [[nodiscard]] std::size_t order() const noexcept { return a_.order(); }
    [[nodiscard]] const SymmetricKernel& kernel() const noexcept { return a_; }

    /// The slice a_n(., t) as an order n-1 product kernel on [0,t].
    [[nodiscard]] SymmetricKernel slice(double t) const {
        require(t > 0.0 && t <= a_.horizon() + 1e-12, Errc::InvalidArgument, "slice time outside the horizon");
        const auto& p = *a_.as_product();
        const std::size_t n = order();
        std::vector<ProductTerm> terms;
        for (const ProductTerm& term : p.terms)
            for (std::size_t q = 0; q < n; ++q) {
                ProductTerm s{term.coef * p.basis[term.factors[q]](t) / static_cast<double>(n), {}};
                for (std::size_t k = 0; k < n; ++k)
                    if (k != q) s.factors.push_back(term.factors[k]);
                terms.push_back(std::move(s));
            }
        return SymmetricKernel::product(n - 1, t, p.basis, std::move(terms));
    }

    /// int_{[0,t]^{n-1}} a_n(s, t)^2 ds
    [[nodiscard]] double slice_norm2(double t) const {
        if (order() == 1) {
            const double v = slice(t)(std::span<const double>{});
            return v * v;
        }
        return kernel_norm2(slice(t));
    }

private:
    SymmetricKernel a_;
};

/// n n! int_0^T P(tau >= t) ||a_n(., t)||^2 dt by adaptive quadrature.
inline double nu_norm_oracle(const KernelFamily& fam, const std::function<double(double)>& survival) {
    const std::size_t n = fam.order();
    const double T = fam.kernel().horizon();
    using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
    const double v = GK::integrate([&](double t) { return t <= 0.0 ? 0.0 : survival(t) * fam.slice_norm2(t); }, 0.0,
                                   T, 8, 1e-10);
    return static_cast<double>(n) * math::factorial(static_cast<int>(n)) * v;
}

/// Bounds P(tau = T) n! ||a||^2 <= E (I^nu_n a)^2 <= n! ||a||^2.
struct SandwichBounds {
    double lower = 0.0;
    double upper = 0.0;
};

inline SandwichBounds nu_sandwich(const KernelFamily& fam, double survival_T) {
    const double full = math::factorial(static_cast<int>(fam.order())) * kernel_norm2(fam.kernel());
    return {survival_T * full, full};
}

/// Evaluates I^nu_n for a batch of product kernels on a fixed path grid.
/// The slice integrals are computed at the family horizons and held
/// constant until the next one; the drift is evaluated once per horizon
/// for the whole batch.
class NuIntegrator {
public:
    NuIntegrator(std::vector<KernelFamily> fams, const TimeGrid& grid, std::shared_ptr<const FieldFamily> fields)
        : fams_(std::move(fams)), grid_(grid), fields_(std::move(fields)) {
        require(fields_ != nullptr, Errc::InvalidArgument, "need a field family");
        require(std::abs(fields_->total_horizon() - grid.horizon()) < 1e-12, Errc::HorizonMismatch,
                "field family and path horizons differ");
        require(grid.n_steps() % fields_->size() == 0, Errc::TGridTooCoarse,
                "the path grid must refine the horizon grid");
        stride_ = grid.n_steps() / fields_->size();
        for (const auto& f : fams_) plans_.emplace_back(f.kernel(), grid);
    }

    NuIntegrator(const KernelFamily& fam, const TimeGrid& grid, std::shared_ptr<const FieldFamily> fields)
        : NuIntegrator(std::vector<KernelFamily>{fam}, grid, std::move(fields)) {}

    [[nodiscard]] std::size_t size() const noexcept { return fams_.size(); }
    [[nodiscard]] const KernelFamily& family(std::size_t i) const { return fams_.at(i); }
    [[nodiscard]] std::size_t stride() const noexcept { return stride_; }

    /// One value per family for an unstopped path and its first passage.
    [[nodiscard]] std::vector<double> evaluate(const Path& path, const HittingResult& hr) const {
        require(path.grid() == grid_, Errc::InvalidArgument, "path grid differs from the integrator grid");
        const std::size_t last = hr.hit ? hr.crossing_index + 1 : grid_.n_steps();
        const double dt = grid_.dt();
        struct TermState {
            std::vector<double> J;          // subset sums over the steps so far
            std::vector<double> residual;   // slice integral without position q
        };
        std::vector<std::vector<TermState>> state(fams_.size());
        for (std::size_t f = 0; f < fams_.size(); ++f) {
            const std::size_t n = fams_[f].order();
            for (std::size_t t = 0; t < plans_[f].terms().size(); ++t) {
                TermState st{std::vector<double>(std::size_t{1} << n, 0.0), std::vector<double>(n, n == 1 ? 1.0 : 0.0)};
                st.J[0] = 1.0;
                state[f].push_back(std::move(st));
            }
        }
        std::vector<long double> total(fams_.size(), 0.0L);
        std::vector<double> drift, d;
        for (std::size_t j = 0; j < last; ++j) {
            if (j % stride_ == 0 && j > 0) {
                const DriftField& field = fields_->field(j / stride_);
                drift.resize(j);
                for (std::size_t i = 0; i < j; ++i) drift[i] = field(grid_.time(i), path[i]);
                for (std::size_t f = 0; f < fams_.size(); ++f) {
                    const std::size_t n = fams_[f].order();
                    if (n < 2) continue;
                    const std::size_t full = (std::size_t{1} << n) - 1;
                    d.assign(n, 0.0);
                    for (std::size_t t = 0; t < plans_[f].terms().size(); ++t) {
                        const ProductTerm& term = plans_[f].terms()[t];
                        for (std::size_t q = 0; q < n; ++q) {
                            const auto row = plans_[f].basis_values(term.factors[q]);
                            long double acc = 0.0L;
                            for (std::size_t i = 0; i < j; ++i) acc += row[i] * drift[i];
                            d[q] = static_cast<double>(acc) * dt;
                        }
                        auto& st = state[f][t];
                        for (std::size_t q = 0; q < n; ++q)
                            st.residual[q] = detail::compensate(st.J, d, full & ~(std::size_t{1} << q));
                    }
                }
            }
            const double x = path.increment(j);
            for (std::size_t f = 0; f < fams_.size(); ++f) {
                const std::size_t n = fams_[f].order();
                const std::size_t full = (std::size_t{1} << n);
                double y = 0.0;
                for (std::size_t t = 0; t < plans_[f].terms().size(); ++t) {
                    const ProductTerm& term = plans_[f].terms()[t];
                    auto& st = state[f][t];
                    double acc = 0.0;
                    for (std::size_t q = 0; q < n; ++q)
                        acc += plans_[f].basis_values(term.factors[q])[j] * st.residual[q];
                    y += term.coef * acc / static_cast<double>(n);
                    if (n >= 2) {
                        for (std::size_t mask = full - 1; mask > 0; --mask) {
                            double add = 0.0;
                            for (std::size_t rest = mask; rest; rest &= rest - 1) {
                                const unsigned k = static_cast<unsigned>(std::countr_zero(rest));
                                add += st.J[mask & ~(std::size_t{1} << k)] * plans_[f].basis_values(term.factors[k])[j];
                            }
                            st.J[mask] += add * x;
                        }
                    }
                }
                total[f] += static_cast<long double>(static_cast<double>(n) * y * x);
            }
        }
        std::vector<double> out(total.size());
        for (std::size_t f = 0; f < out.size(); ++f) out[f] = static_cast<double>(total[f]);
        return out;
    }

    [[nodiscard]] double operator()(const Path& path, const HittingResult& hr) const {
        return evaluate(path, hr).front();
    }

private:
    std::vector<KernelFamily> fams_;
    TimeGrid grid_;
    std::shared_ptr<const FieldFamily> fields_;
    std::vector<ProductPlan> plans_;
    std::size_t stride_ = 1;
};

inline double I_nu(std::size_t n, const KernelFamily& fam, const Path& path, const HittingResult& hr,
                   std::shared_ptr<const FieldFamily> fields) {
    require(n == fam.order(), Errc::OrderMismatch, "family order differs from n");
    return NuIntegrator(fam, path.grid(), std::move(fields))(path, hr);
}

// ---------------------------------------------------------------------------
// Conditional expectation given the stopped path
// ---------------------------------------------------------------------------

/// A functional of the stopped path.
struct StoppedFunctional {
    std::string label;
    std::function<double(const Path& stopped)> fn;
};

namespace detail {

inline double stopped_value_at(const Path& stopped, double s) {
    const TimeGrid& grid = stopped.grid();
    const auto i = static_cast<std::size_t>(std::llround(s / grid.dt()));
    return stopped[std::min(i, grid.n_steps())];
}

}  // namespace detail

/// 1, eta(1/4), eta(1/2), eta(1), eta(1/2)^2, eta(1/4) eta(1) for horizon 1.
inline std::vector<StoppedFunctional> default_dictionary(double T = 1.0) {
    using detail::stopped_value_at;
    return {
        {"one", [](const Path&) { return 1.0; }},
        {"eta(T/4)", [T](const Path& p) { return stopped_value_at(p, 0.25 * T); }},
        {"eta(T/2)", [T](const Path& p) { return stopped_value_at(p, 0.5 * T); }},
        {"eta(T)", [T](const Path& p) { return stopped_value_at(p, T); }},
        {"eta(T/2)^2", [T](const Path& p) { return std::pow(stopped_value_at(p, 0.5 * T), 2); }},
        {"eta(T/4)*eta(T)", [T](const Path& p) { return stopped_value_at(p, 0.25 * T) * stopped_value_at(p, T); }},
    };
}

struct ConditioningReport {
    std::size_t order = 0;
    std::size_t paths = 0;
    MCEstimate x_mean, y_mean;
    std::vector<Check> checks;
    [[nodiscard]] bool pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

/// X = I^mu_n a along the whole path, Y = the same simplex sum with its last
/// step before tau; checks E[(X - Y) Z] = 0 for stopped-path functionals Z.
inline ConditioningReport conditioning_check(std::size_t n, const SymmetricKernel& a, const Barrier& g,
                                             const TimeGrid& grid, std::size_t N, Seed seed, unsigned threads = 0,
                                             const std::vector<StoppedFunctional>& dictionary = default_dictionary(),
                                             double z_threshold = 3.0) {
    require(n >= 1 && n <= 3, Errc::InvalidArgument, "conditioning check supports n in {1,2,3}");
    require(a.order() == n, Errc::OrderMismatch, "kernel order differs from n");
    const ProductPlan plan(a, grid);
    const auto gs = sample_on(g, grid);
    const std::size_t cols = 2 + dictionary.size();
    const auto table = sample_table(N, cols, threads, [&](std::size_t i, std::span<double> row) {
        const Seed s = derive_seed(seed, i);
        const Path p = sample_brownian(grid, s);
        const HittingResult hr = hitting_time(p, g, gs, HitMode::bridge(s));
        const auto dx = p.increments();
        const double X = plan.integrate(dx);
        double Y = X;
        if (hr.hit) Y = plan.integrate(std::span<const double>(dx).first(hr.crossing_index + 1));
        const Path stopped = stop_path(p, hr);
        row[0] = X;
        row[1] = Y;
        for (std::size_t k = 0; k < dictionary.size(); ++k) row[2 + k] = (X - Y) * dictionary[k].fn(stopped);
    });
    ConditioningReport r;
    r.order = n;
    r.paths = N;
    r.x_mean = summarize(table.column(0));
    r.y_mean = summarize(table.column(1));
    for (std::size_t k = 0; k < dictionary.size(); ++k)
        r.checks.push_back(z_check("E[(X-Y)*" + dictionary[k].label + "]", summarize(table.column(2 + k)), 0.0,
                                   z_threshold));
    return r;
}

// ---------------------------------------------------------------------------
// First coefficient of f = w(min(tau, T)) for a constant barrier
// ---------------------------------------------------------------------------

struct CoefficientBin {
    double lo = 0.0, hi = 0.0;
    /// Bin average of the Ito-Wiener coefficient and its closed form.
    MCEstimate a1;
    double a1_target = 0.0;
    /// Order-1 stopped-flow kernel fitted on the bin; the target is 1.
    MCEstimate nu_kernel;
};

struct CoefficientReport {
    double level = 1.0;
    std::size_t paths = 0;
    std::vector<CoefficientBin> bins;
    std::vector<Check> checks;
    [[nodiscard]] bool pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

inline CoefficientReport coefficient_recovery_example(double level, const TimeGrid& grid, std::size_t N, Seed seed,
                                                      std::size_t bins = 8, unsigned threads = 0,
                                                      double z_threshold = 3.0) {
    require(level > 0.0, Errc::InvalidArgument, "barrier level must be positive");
    require(bins >= 1 && grid.n_steps() % bins == 0, Errc::InvalidArgument, "bins must divide the grid steps");
    const Barrier g = Barrier::constant(level);
    const auto gs = sample_on(g, grid);
    const std::size_t per = grid.n_steps() / bins;
    // columns: f*dW_B, f*V_B, V_B^2 per bin
    const auto table = sample_table(N, 3 * bins, threads, [&](std::size_t i, std::span<double> row) {
        const Seed s = derive_seed(seed, i);
        const Path p = sample_brownian(grid, s);
        const HittingResult hr = hitting_time(p, g, gs, HitMode::bridge(s));
        const double f = hr.hit ? hr.hit_value : p.back();
        const std::size_t last = hr.hit ? hr.crossing_index + 1 : grid.n_steps();
        for (std::size_t b = 0; b < bins; ++b) {
            double dw = 0.0, v = 0.0;
            for (std::size_t j = b * per; j < (b + 1) * per; ++j) {
                dw += p.increment(j);
                if (j < last) v += p.increment(j);
            }
            row[3 * b] = f * dw;
            row[3 * b + 1] = f * v;
            row[3 * b + 2] = v * v;
        }
    });
    CoefficientReport r;
    r.level = level;
    r.paths = N;
    using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
    for (std::size_t b = 0; b < bins; ++b) {
        CoefficientBin cb;
        cb.lo = grid.time(b * per);
        cb.hi = grid.time((b + 1) * per);
        const double width = cb.hi - cb.lo;
        const MCEstimate raw = summarize(table.column(3 * b));
        cb.a1 = {raw.mean / width, raw.std_error / width, raw.n, "mc"};
        cb.a1_target = GK::integrate([&](double t) { return t <= 0.0 ? 1.0 : alpha_closed_form(g, 0.0, 0.0, t); },
                                     cb.lo, cb.hi, 8, 1e-12) /
                       width;
        cb.nu_kernel = ratio_estimate(table.column(3 * b + 1), table.column(3 * b + 2));
        const std::string tag = "[" + std::to_string(cb.lo) + "," + std::to_string(cb.hi) + ")";
        r.checks.push_back(z_check("a1" + tag, cb.a1, cb.a1_target, z_threshold));
        r.checks.push_back(z_check("nu_kernel" + tag, cb.nu_kernel, 1.0, z_threshold));
        r.bins.push_back(cb);
    }
    return r;
}

}  // namespace chaosflow
