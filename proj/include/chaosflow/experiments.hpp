// SPDX-License-Identifier: MIT
//
// Experiment suites shared by the command-line runner and the acceptance
// binary. Each suite returns named checks plus plot-ready tables.
#pragma once

#include <chaosflow/chaos.hpp>
#include <chaosflow/expansion.hpp>
#include <chaosflow/girsanov.hpp>
#include <chaosflow/kv.hpp>
#include <chaosflow/mc.hpp>
#include <chaosflow/paths.hpp>
#include <chaosflow/survival.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace chaosflow {

struct Table {
    std::string name;
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

struct Report {
    std::string experiment;
    std::vector<Check> checks;
    std::vector<Table> tables;
    std::vector<std::pair<std::string, double>> scalars;
    std::vector<std::string> notes;

    [[nodiscard]] bool pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
    [[nodiscard]] const Check* first_failure() const {
        for (const auto& c : checks)
            if (!c.pass) return &c;
        return nullptr;
    }
    void add(std::vector<Check> cs) {
        for (auto& c : cs) checks.push_back(std::move(c));
    }
};

namespace detail {

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
    long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    const auto n = static_cast<long double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += static_cast<long double>(x[i]) * x[i];
        syy += static_cast<long double>(y[i]) * y[i];
        sxy += static_cast<long double>(x[i]) * y[i];
    }
    const long double cov = sxy / n - (sx / n) * (sy / n);
    const long double vx = sxx / n - (sx / n) * (sx / n);
    const long double vy = syy / n - (sy / n) * (sy / n);
    return static_cast<double>(cov / std::sqrt(vx * vy));
}

inline bool has_closed_form(const Barrier& g) {
    return g.kind() == BarrierKind::Constant || g.kind() == BarrierKind::Linear;
}

}  // namespace detail

/// 1 + 0.5 sin(2 pi t) sampled on 1024 steps.
inline Barrier sinusoid_barrier(double horizon = 1.0) {
    return Barrier::sample([](double s) { return 1.0 + 0.5 * std::sin(2.0 * std::numbers::pi * s); }, horizon, 1024);
}

/// Default kernels of order n on [0, t]: constant one, the sum of the
/// arguments, and a product of cosine modes.
inline std::vector<std::pair<std::string, SymmetricKernel>> default_kernels(std::size_t n, double t = 1.0) {
    std::vector<BasisFunction> b{basis::one(), basis::power(1), basis::cosine_mode(1, t), basis::cosine_mode(2, t)};
    std::vector<std::pair<std::string, SymmetricKernel>> out;
    out.emplace_back("one", SymmetricKernel::product(n, t, b, {ProductTerm{1.0, std::vector<std::size_t>(n, 0)}}));
    std::vector<std::size_t> sum(n, 0);
    sum[0] = 1;
    out.emplace_back("sum", SymmetricKernel::product(n, t, b, {ProductTerm{static_cast<double>(n), sum}}));
    std::vector<std::size_t> cosine(n, 2);
    if (n >= 2) cosine[1] = 3;
    out.emplace_back("cosine", SymmetricKernel::product(n, t, b, {ProductTerm{1.0, cosine}}));
    return out;
}

/// A kernel declaration rebuilt for each horizon.
struct KernelDecl {
    std::string label;
    std::size_t order = 0;
    std::function<SymmetricKernel(double horizon)> make;
};

inline std::vector<KernelDecl> default_kernel_decls(std::size_t max_order) {
    std::vector<KernelDecl> out;
    for (std::size_t n = 1; n <= max_order; ++n) {
        const auto names = default_kernels(n);
        for (std::size_t k = 0; k < names.size(); ++k)
            out.push_back({names[k].first, n, [n, k](double t) { return default_kernels(n, t)[k].second; }});
    }
    return out;
}

namespace detail {

inline std::vector<KernelDecl> kernels_or_default(const std::vector<KernelDecl>& given, std::size_t max_order) {
    std::vector<KernelDecl> out = given.empty() ? default_kernel_decls(max_order) : given;
    std::stable_sort(out.begin(), out.end(), [](const KernelDecl& a, const KernelDecl& b) { return a.order < b.order; });
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Survival probabilities
// ---------------------------------------------------------------------------

/// Closed form, PDE and first-passage integral on constant and linear
/// barriers; PDE against the integral on a sinusoidal barrier.
inline std::vector<Check> alpha_backend_checks(const PdeConfig& cfg, double tol, Table& comp) {
    std::vector<Check> out;
    struct Probe {
        double s, y;
    };
    const std::vector<Probe> probes{{0.0, 0.0}, {0.3, 0.2}, {0.6, -0.4}};
    const std::vector<std::pair<std::string, Barrier>> lines{
        {"constant", Barrier::constant(1.0)}, {"rising", Barrier::linear(1.0, 0.5)},
        {"falling", Barrier::linear(1.2, -0.4)}};
    double case_id = 0.0;
    for (const auto& [label, g] : lines) {
        const ClosedFormSurvival cf(g, 1.0);
        const SurvivalField field = alpha_pde(g, 1.0, cfg);
        for (const Probe& q : probes) {
            double gmin = INFINITY;
            for (std::size_t k = 0; k <= 100; ++k) gmin = std::min(gmin, g(q.s + (1.0 - q.s) * k / 100.0));
            const double c = cf.alpha(q.s, q.y), d = field.alpha(q.s, q.y);
            const double e = alpha_fpt_integral(cf, q.s, q.y, gmin - 0.15, 0.25).value;
            const std::string at = label + " (" + detail::num(q.s) + "," + detail::num(q.y) + ")";
            out.push_back(abs_check("pde vs closed form " + at, d, c, tol));
            out.push_back(abs_check("integral vs closed form " + at, e, c, tol));
            out.push_back(abs_check("pde vs integral " + at, d, e, tol));
            comp.rows.push_back({case_id, q.s, q.y, c, d, e});
        }
        case_id += 1.0;
    }
    const Barrier sine = sinusoid_barrier();
    const SurvivalField field = alpha_pde(sine, 1.0, cfg);
    struct LineProbe {
        double s, y, z;
    };
    for (const LineProbe& q : std::vector<LineProbe>{{0.0, 0.0, 0.4}, {0.2, 0.3, 0.45}, {0.5, -0.5, 0.2}}) {
        const double d = field.alpha(q.s, q.y);
        const double e = alpha_fpt_integral(field, q.s, q.y, q.z, 0.25).value;
        out.push_back(
            abs_check("sinusoid pde vs integral (" + detail::num(q.s) + "," + detail::num(q.y) + ")", d, e, tol));
        comp.rows.push_back({case_id, q.s, q.y, NAN, d, e});
    }
    return out;
}

struct AlphaParams {
    Barrier barrier = Barrier::constant(1.0);
    double horizon = 1.0;
    PdeConfig pde{};
    std::size_t mc_paths = 100000;
    std::size_t mc_steps = 1024;
    Seed seed = 1;
    unsigned threads = 0;
    double tolerance = 1e-3;
    double z_threshold = 3.0;
    /// Run the backend comparison on constant, linear and sinusoidal barriers.
    bool backends = true;
};

inline Report run_alpha(const AlphaParams& p) {
    Report r;
    r.experiment = "alpha";
    const SurvivalField field = alpha_pde(p.barrier, p.horizon, p.pde);
    const double a00 = field.alpha(0.0, 0.0);
    r.scalars.emplace_back("alpha_0_0", a00);
    const bool closed = detail::has_closed_form(p.barrier);
    const double exact = closed ? alpha_closed_form(p.barrier, 0.0, 0.0, p.horizon) : NAN;
    if (closed) r.checks.push_back(abs_check("pde alpha(0,0) vs closed form", a00, exact, p.tolerance));

    const TimeGrid grid(p.horizon, p.mc_steps);
    const auto gs = sample_on(p.barrier, grid);
    const auto survive = sample_values(p.mc_paths, p.threads, [&](std::size_t i) {
        const Seed s = derive_seed(p.seed, i);
        const Path path = sample_brownian(grid, s);
        return hitting_time(path, p.barrier, gs, HitMode::bridge(s)).hit ? 0.0 : 1.0;
    });
    const MCEstimate mc = summarize(survive);
    r.scalars.emplace_back("alpha_0_0_mc", mc.mean);
    r.checks.push_back(z_check(closed ? "bridge mc alpha(0,0) vs closed form" : "bridge mc alpha(0,0) vs pde", mc,
                               closed ? exact : a00, p.z_threshold));

    Table field_table{"alpha_field", {"s", "y", "alpha", "dalpha_dy"}, {}};
    const double ylo = field.y_min();
    for (std::size_t i = 0; i <= 20; ++i) {
        const double s = p.horizon * 0.95 * static_cast<double>(i) / 20.0;
        for (std::size_t j = 0; j <= 40; ++j) {
            const double y = ylo + (p.barrier(s) - ylo) * static_cast<double>(j) / 40.0;
            const SurvivalValue v = field.evaluate(s, y);
            field_table.rows.push_back({s, y, v.alpha, v.dalpha_dy});
        }
    }
    r.tables.push_back(std::move(field_table));

    if (p.backends) {
        Table comp{"backends", {"case", "s", "y", "closed_form", "pde", "integral"}, {}};
        r.add(alpha_backend_checks(p.pde, p.tolerance, comp));
        r.tables.push_back(std::move(comp));
    }
    return r;
}

// ---------------------------------------------------------------------------
// Clark representation of the survival indicator
// ---------------------------------------------------------------------------

struct ClarkParams {
    Barrier barrier = Barrier::constant(1.0);
    double horizon = 1.0;
    std::size_t fine_steps = 4096;
    /// Coarsening factors from the fine grid, coarsest first.
    std::vector<std::size_t> factors{16, 4, 1};
    std::size_t paths = 100000;
    Seed seed = 1;
    unsigned threads = 0;
    /// Grid (in steps) where the correlation is checked.
    std::size_t correlation_steps = 1024;
    double min_correlation = 0.98;
    double z_threshold = 3.0;
    PdeConfig pde{};
};

inline Report run_clark(const ClarkParams& p) {
    Report r;
    r.experiment = "clark-verify";
    const auto model = make_survival(p.barrier, p.horizon, p.pde);
    const double a00 = model->alpha(0.0, 0.0);
    const std::size_t L = p.factors.size();
    const TimeGrid fine(p.horizon, p.fine_steps);
    std::vector<std::vector<double>> gs;
    for (std::size_t f : p.factors) gs.push_back(sample_on(p.barrier, TimeGrid(p.horizon, p.fine_steps / f)));
    const auto table = sample_table(p.paths, 2 * L, p.threads, [&](std::size_t i, std::span<double> row) {
        const Seed s = derive_seed(p.seed, i);
        const Path fp = sample_brownian(fine, s);
        for (std::size_t l = 0; l < L; ++l) {
            const Path path = p.factors[l] == 1 ? fp : fp.coarsen(p.factors[l]);
            const HittingResult hr = hitting_time(path, p.barrier, gs[l], HitMode::bridge(derive_seed(s, p.factors[l])));
            const auto h = clark_integrand(path, hr, *model);
            row[2 * l] = a00 + ito_integral(h, path);
            row[2 * l + 1] = hr.hit ? 0.0 : 1.0;
        }
    });
    Table t{"clark_residuals", {"steps", "residual", "std_error", "correlation"}, {}};
    std::vector<std::vector<double>> res(L, std::vector<double>(p.paths));
    for (std::size_t l = 0; l < L; ++l) {
        const auto x = table.column(2 * l);
        const auto y = table.column(2 * l + 1);
        for (std::size_t i = 0; i < p.paths; ++i) res[l][i] = (x[i] - y[i]) * (x[i] - y[i]);
        const MCEstimate e = summarize(res[l]);
        const double corr = detail::pearson(x, y);
        const std::size_t steps = p.fine_steps / p.factors[l];
        t.rows.push_back({static_cast<double>(steps), e.mean, e.std_error, corr});
        r.scalars.emplace_back("residual_" + std::to_string(steps), e.mean);
        if (steps == p.correlation_steps)
            r.checks.push_back(bool_check("correlation at " + std::to_string(steps) + " steps > " +
                                              detail::num(p.min_correlation),
                                          corr > p.min_correlation, corr, p.min_correlation));
    }
    for (std::size_t l = 0; l + 1 < L; ++l) {
        std::vector<double> d(p.paths);
        for (std::size_t i = 0; i < p.paths; ++i) d[i] = res[l][i] - res[l + 1][i];
        Check c = z_check("residual decrease " + std::to_string(p.fine_steps / p.factors[l]) + " -> " +
                              std::to_string(p.fine_steps / p.factors[l + 1]),
                          summarize(d), 0.0, p.z_threshold);
        c.kind = "z_min";
        c.pass = c.z >= p.z_threshold;
        r.checks.push_back(c);
    }
    r.tables.push_back(std::move(t));
    return r;
}

// ---------------------------------------------------------------------------
// Push-forward of the conditioned law
// ---------------------------------------------------------------------------

struct GirsanovParams {
    Barrier barrier = Barrier::constant(1.0);
    double horizon = 1.0;
    std::size_t steps = 1024;
    std::size_t paths = 100000;
    std::vector<double> probes{0.2, 0.4, 0.6, 0.8, 1.0};
    ConditionedMethod method = ConditionedMethod::Rejection;
    Seed seed = 1;
    unsigned threads = 0;
    double z_threshold = 5.0;
    PdeConfig pde{};
};

inline Report run_girsanov(const GirsanovParams& p) {
    Report r;
    r.experiment = "girsanov-check";
    const DriftField field = make_drift_field(p.barrier, p.horizon, {}, p.pde);
    const TimeGrid grid(p.horizon, p.steps);
    const ConditionedSampler sampler(field, grid, p.method);
    std::vector<std::size_t> idx;
    for (double t : p.probes) idx.push_back(static_cast<std::size_t>(std::llround(t / grid.dt())));
    const std::size_t P = idx.size();
    const auto table = sample_table(p.paths, 3 * P + 1, p.threads, [&](std::size_t i, std::span<double> row) {
        const ConditionedDraw d = sampler.draw(derive_seed(p.seed, i));
        const Path q = transform_Tg(d.path, field);
        double qv = 0.0;
        std::size_t k = 0;
        for (std::size_t j = 0; j <= grid.n_steps() && k < P; ++j) {
            while (k < P && idx[k] == j) {
                row[3 * k] = q[j];
                row[3 * k + 1] = q[j] * q[j];
                row[3 * k + 2] = qv;
                ++k;
            }
            if (j < grid.n_steps()) qv += q.increment(j) * q.increment(j);
        }
        row[3 * P] = static_cast<double>(d.attempts);
    });
    Table t{"pushforward", {"t", "mean", "mean_se", "second_moment", "second_moment_se", "qv", "qv_se"}, {}};
    for (std::size_t k = 0; k < P; ++k) {
        const double tk = grid.time(idx[k]);
        const MCEstimate m = summarize(table.column(3 * k));
        const MCEstimate v = summarize(table.column(3 * k + 1));
        const MCEstimate q = summarize(table.column(3 * k + 2));
        const std::string at = " at t=" + detail::num(tk);
        r.checks.push_back(z_check("mean" + at, m, 0.0, p.z_threshold));
        r.checks.push_back(z_check("second moment" + at, v, tk, p.z_threshold));
        r.checks.push_back(z_check("quadratic variation" + at, q, tk, p.z_threshold));
        t.rows.push_back({tk, m.mean, m.std_error, v.mean, v.std_error, q.mean, q.std_error});
    }
    if (p.method == ConditionedMethod::Rejection)
        r.scalars.emplace_back("mean_attempts", summarize(table.column(3 * P)).mean);
    r.tables.push_back(std::move(t));
    return r;
}

// ---------------------------------------------------------------------------
// Compensated integrals under the conditioned law
// ---------------------------------------------------------------------------

struct ChaosOrthParams {
    Barrier barrier = Barrier::constant(1.0);
    std::vector<double> horizons{1.0};
    std::size_t max_order = 3;
    /// Empty: the default kernels up to max_order.
    std::vector<KernelDecl> kernels;
    std::size_t steps = 1024;
    std::size_t paths = 10000;
    double isometry_z = 5.0;
    double orthogonality_z = 3.0;
    /// Pathwise checks against the drift-removed path and the compensated form.
    bool pathwise = true;
    std::size_t pathwise_paths = 1000;
    std::size_t pathwise_steps = 1024;
    double pathwise_fraction = 0.99;
    std::size_t compensated_steps = 4096;
    double compensated_tolerance = 1e-2;
    Seed seed = 1;
    unsigned threads = 0;
    PdeConfig pde{};
};

/// Isometry and cross-order orthogonality of I^kappa_n for the default kernels.
inline std::vector<Check> kappa_isometry_checks(const ChaosOrthParams& p, double t, Table& table) {
    const DriftField field = make_drift_field(p.barrier, t, {}, p.pde);
    const TimeGrid grid(t, p.steps);
    const ConditionedSampler sampler(field, grid, ConditionedMethod::Rejection);
    struct Entry {
        std::string label;
        std::size_t order;
        SymmetricKernel kernel;
        double norm2;
    };
    std::vector<Entry> ks;
    for (const KernelDecl& d : detail::kernels_or_default(p.kernels, p.max_order)) {
        SymmetricKernel k = d.make(t);
        const double nn = math::factorial(static_cast<int>(d.order)) * kernel_norm2(k);
        ks.push_back({d.label, d.order, std::move(k), nn});
    }
    const auto tab = sample_table(p.paths, ks.size(), p.threads, [&](std::size_t i, std::span<double> row) {
        const ConditionedDraw d = sampler.draw(derive_seed(derive_seed(p.seed, Stream::Rejection), i));
        const auto dx = d.path.increments();
        const auto drift = drift_along(d.path, field);
        for (std::size_t k = 0; k < ks.size(); ++k) row[k] = I_kappa(ks[k].order, ks[k].kernel, grid, dx, drift);
    });
    std::vector<Check> out;
    const std::string at = " t=" + detail::num(t);
    for (std::size_t k = 0; k < ks.size(); ++k) {
        std::vector<double> ratio(p.paths);
        for (std::size_t i = 0; i < p.paths; ++i) ratio[i] = tab.at(i, k) * tab.at(i, k) / ks[k].norm2;
        const MCEstimate e = summarize(ratio);
        out.push_back(z_check("isometry n=" + std::to_string(ks[k].order) + " " + ks[k].label + at, e, 1.0,
                              p.isometry_z));
        table.rows.push_back({t, static_cast<double>(ks[k].order), static_cast<double>(k), e.mean, e.std_error});
    }
    for (std::size_t a = 0; a < ks.size(); ++a)
        for (std::size_t b = a + 1; b < ks.size(); ++b) {
            if (ks[a].order == ks[b].order) continue;
            std::vector<double> prod(p.paths);
            for (std::size_t i = 0; i < p.paths; ++i) prod[i] = tab.at(i, a) * tab.at(i, b);
            out.push_back(z_check("orthogonality n=" + std::to_string(ks[a].order) + " " + ks[a].label + " vs n=" +
                                      std::to_string(ks[b].order) + " " + ks[b].label + at,
                                  summarize(prod), 0.0, p.orthogonality_z));
        }
    return out;
}

/// I^kappa_n along x against I_n along the drift-removed path, n <= 2.
inline std::vector<Check> transformed_path_checks(const ChaosOrthParams& p, Table& table) {
    const DriftField field = make_drift_field(p.barrier, 1.0, {}, p.pde);
    const TimeGrid grid(1.0, p.pathwise_steps);
    const ConditionedSampler sampler(field, grid, ConditionedMethod::Rejection);
    const double tol = std::sqrt(grid.dt());
    std::vector<std::pair<std::string, SymmetricKernel>> ks;
    for (const KernelDecl& d : detail::kernels_or_default(p.kernels, p.max_order))
        if (d.order <= 2) ks.emplace_back("n=" + std::to_string(d.order) + " " + d.label, d.make(1.0));
    const auto tab = sample_table(p.pathwise_paths, ks.size(), p.threads, [&](std::size_t i, std::span<double> row) {
        const ConditionedDraw d = sampler.draw(derive_seed(derive_seed(p.seed, 113), i));
        const Path T = transform_Tg(d.path, field);
        for (std::size_t k = 0; k < ks.size(); ++k)
            row[k] = std::abs(I_kappa(ks[k].second.order(), ks[k].second, d.path, field) -
                              multiple_wiener_integral(ks[k].second, T));
    });
    std::vector<Check> out;
    for (std::size_t k = 0; k < ks.size(); ++k) {
        const auto col = tab.column(k);
        std::size_t ok = 0;
        double worst = 0.0;
        for (double v : col) {
            ok += v <= tol;
            worst = std::max(worst, v);
        }
        const double frac = static_cast<double>(ok) / static_cast<double>(col.size());
        out.push_back(bool_check("drift-removed path agreement " + ks[k].first + " (fraction within sqrt(dt))",
                                 frac >= p.pathwise_fraction, frac, p.pathwise_fraction));
        table.rows.push_back({static_cast<double>(k), frac, worst, tol});
    }
    return out;
}

/// Compensated-increment form against the binomial double sum, n = 2.
inline std::vector<Check> compensated_form_checks(const ChaosOrthParams& p, Table& table) {
    const DriftField field = make_drift_field(p.barrier, 1.0, {}, p.pde);
    const TimeGrid grid(1.0, p.compensated_steps);
    const ConditionedSampler sampler(field, grid, ConditionedMethod::Rejection);
    std::vector<std::pair<std::string, SymmetricKernel>> ks;
    for (const KernelDecl& d : detail::kernels_or_default(p.kernels, p.max_order))
        if (d.order == 2) ks.emplace_back(d.label, d.make(1.0));
    if (ks.empty()) return {};
    const auto tab = sample_table(p.pathwise_paths, ks.size(), p.threads, [&](std::size_t i, std::span<double> row) {
        const ConditionedDraw d = sampler.draw(derive_seed(derive_seed(p.seed, 49), i));
        const auto dx = d.path.increments();
        const auto drift = drift_along(d.path, field);
        for (std::size_t k = 0; k < ks.size(); ++k)
            row[k] = std::abs(I_kappa(2, ks[k].second, grid, dx, drift) -
                              I_kappa_compensated_form(2, ks[k].second, grid, dx, drift));
    });
    std::vector<Check> out;
    for (std::size_t k = 0; k < ks.size(); ++k) {
        double worst = 0.0;
        for (double v : tab.column(k)) worst = std::max(worst, v);
        out.push_back(bool_check("compensated form n=2 " + ks[k].first + " max difference < " +
                                     detail::num(p.compensated_tolerance),
                                 worst < p.compensated_tolerance, worst, p.compensated_tolerance));
        table.rows.push_back({static_cast<double>(k), worst, p.compensated_tolerance});
    }
    return out;
}

inline Report run_chaos_orth(const ChaosOrthParams& p) {
    Report r;
    r.experiment = "chaos-orth";
    Table iso{"isometry", {"t", "order", "kernel", "ratio", "std_error"}, {}};
    for (double t : p.horizons) r.add(kappa_isometry_checks(p, t, iso));
    r.tables.push_back(std::move(iso));
    if (p.pathwise) {
        Table tp{"drift_removed", {"kernel", "fraction", "max_difference", "tolerance"}, {}};
        r.add(transformed_path_checks(p, tp));
        r.tables.push_back(std::move(tp));
        Table cf{"compensated_form", {"kernel", "max_difference", "tolerance"}, {}};
        r.add(compensated_form_checks(p, cf));
        r.tables.push_back(std::move(cf));
    }
    return r;
}

// ---------------------------------------------------------------------------
// Stopped-flow expansion
// ---------------------------------------------------------------------------

struct ExpandParams {
    Barrier barrier = Barrier::constant(1.0);
    std::size_t max_order = 3;
    /// Empty: the default kernels up to max_order.
    std::vector<KernelDecl> kernels;
    std::size_t steps = 1024;
    std::size_t horizons = 128;
    std::size_t paths = 10000;
    double norm_z = 5.0;
    double orthogonality_z = 3.0;
    /// Conditional-expectation check.
    std::vector<std::size_t> conditioning_orders{1, 2};
    std::size_t conditioning_paths = 100000;
    double conditioning_z = 3.0;
    /// Parseval check for f = eta(1).
    bool parseval = true;
    Seed seed = 1;
    unsigned threads = 0;
    PdeConfig pde = FieldFamily::default_pde();
};

inline Report run_expand(const ExpandParams& p) {
    Report r;
    r.experiment = "expand";
    const Barrier& g = p.barrier;
    const TimeGrid grid(1.0, p.steps);
    const auto fields = std::make_shared<const FieldFamily>(g, p.horizons, 1.0, NearBarrierPolicy{}, p.pde);
    std::function<double(double)> survival;
    if (detail::has_closed_form(g)) {
        survival = [g](double t) { return alpha_closed_form(g, 0.0, 0.0, t); };
    } else {
        survival = [fields](double t) {
            const double u = t / fields->total_horizon() * static_cast<double>(fields->size());
            const auto k = static_cast<std::size_t>(std::floor(u));
            const double lo = k == 0 ? 1.0 : fields->survival(k);
            if (k >= fields->size()) return fields->survival(fields->size());
            const double hi = fields->survival(k + 1);
            return lo + (u - static_cast<double>(k)) * (hi - lo);
        };
    }
    const double surv_T = survival(1.0);
    std::vector<KernelFamily> fams;
    std::vector<std::string> labels;
    for (const KernelDecl& d : detail::kernels_or_default(p.kernels, p.max_order)) {
        labels.push_back("n=" + std::to_string(d.order) + " " + d.label);
        fams.emplace_back(d.make(1.0));
    }
    const NuIntegrator nu(fams, grid, fields);
    const auto gs = sample_on(g, grid);
    const auto tab = sample_table(p.paths, fams.size() + 1, p.threads, [&](std::size_t i, std::span<double> row) {
        const Seed s = derive_seed(p.seed, i);
        const Path path = sample_brownian(grid, s);
        const HittingResult hr = hitting_time(path, g, gs, HitMode::bridge(s));
        const auto v = nu.evaluate(path, hr);
        for (std::size_t k = 0; k < v.size(); ++k) row[k] = v[k];
        row[fams.size()] = hr.hit ? hr.hit_value : path.back();
    });
    Table norms{"nu_norms", {"order", "kernel", "estimate", "std_error", "oracle", "lower", "upper"}, {}};
    for (std::size_t k = 0; k < fams.size(); ++k) {
        std::vector<double> sq(p.paths);
        for (std::size_t i = 0; i < p.paths; ++i) sq[i] = tab.at(i, k) * tab.at(i, k);
        const MCEstimate e = summarize(sq);
        const double oracle = nu_norm_oracle(fams[k], survival);
        const SandwichBounds sb = nu_sandwich(fams[k], surv_T);
        r.checks.push_back(z_check("norm identity " + labels[k], e, oracle, p.norm_z));
        r.checks.push_back(bool_check("sandwich " + labels[k], sb.lower <= oracle && oracle <= sb.upper &&
                                                                   e.mean >= sb.lower - p.norm_z * e.std_error &&
                                                                   e.mean <= sb.upper + p.norm_z * e.std_error,
                                      e.mean, oracle));
        norms.rows.push_back({static_cast<double>(fams[k].order()), static_cast<double>(k), e.mean, e.std_error, oracle,
                              sb.lower, sb.upper});
    }
    for (std::size_t a = 0; a < fams.size(); ++a)
        for (std::size_t b = a + 1; b < fams.size(); ++b) {
            if (fams[a].order() == fams[b].order()) continue;
            std::vector<double> prod(p.paths);
            for (std::size_t i = 0; i < p.paths; ++i) prod[i] = tab.at(i, a) * tab.at(i, b);
            r.checks.push_back(z_check("orthogonality " + labels[a] + " vs " + labels[b], summarize(prod), 0.0,
                                       p.orthogonality_z));
        }
    r.tables.push_back(std::move(norms));

    if (p.parseval) {
        // f = eta(1) projected on the span of all tested kernels up to each order
        const std::size_t top = std::min<std::size_t>(2, p.max_order);
        std::vector<std::vector<long double>> basis_cols;
        std::vector<long double> f(p.paths);
        for (std::size_t i = 0; i < p.paths; ++i) f[i] = tab.at(i, fams.size());
        const auto dot = [&](const std::vector<long double>& u, const std::vector<long double>& v) {
            long double s = 0;
            for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
            return s / static_cast<long double>(u.size());
        };
        long double resid = dot(f, f);
        std::vector<double> rs{static_cast<double>(resid)};
        Table pv{"parseval", {"order", "residual"}, {{0.0, rs.back()}}};
        for (std::size_t k = 0; k < fams.size() && fams[k].order() <= top; ++k) {
            std::vector<long double> u(p.paths);
            for (std::size_t i = 0; i < p.paths; ++i) u[i] = tab.at(i, k);
            for (const auto& e : basis_cols) {
                const long double c = dot(u, e);
                for (std::size_t i = 0; i < p.paths; ++i) u[i] -= c * e[i];
            }
            const long double nn = dot(u, u);
            if (nn <= 0) continue;
            for (auto& x : u) x /= std::sqrt(nn);
            const long double c = dot(f, u);
            resid -= c * c;
            basis_cols.push_back(std::move(u));
            if (k + 1 == fams.size() || fams[k + 1].order() != fams[k].order()) {
                rs.push_back(static_cast<double>(resid));
                pv.rows.push_back({static_cast<double>(fams[k].order()), rs.back()});
            }
        }
        bool ok = rs.back() >= 0.0;
        for (std::size_t k = 0; k + 1 < rs.size(); ++k) ok = ok && rs[k + 1] <= rs[k];
        r.checks.push_back(bool_check("parseval residuals nonnegative and decreasing", ok, rs.back(), 0.0));
        r.tables.push_back(std::move(pv));
    }

    Table cond{"conditioning", {"order", "functional", "z"}, {}};
    for (std::size_t n : p.conditioning_orders) {
        SymmetricKernel kernel = default_kernels(n).front().second;
        for (const KernelDecl& d : p.kernels)
            if (d.order == n) {
                kernel = d.make(1.0);
                break;
            }
        const ConditioningReport cr = conditioning_check(n, kernel, g, grid, p.conditioning_paths,
                                                         derive_seed(p.seed, 51 + n), p.threads, default_dictionary(),
                                                         p.conditioning_z);
        for (std::size_t k = 0; k < cr.checks.size(); ++k) {
            Check c = cr.checks[k];
            c.name = "conditioning n=" + std::to_string(n) + " " + c.name;
            cond.rows.push_back({static_cast<double>(n), static_cast<double>(k), c.z});
            r.checks.push_back(std::move(c));
        }
    }
    r.tables.push_back(std::move(cond));
    return r;
}

// ---------------------------------------------------------------------------
// First Ito-Wiener coefficient of the stopped endpoint
// ---------------------------------------------------------------------------

struct CoefficientParams {
    double level = 1.0;
    std::size_t steps = 1024;
    std::size_t paths = 100000;
    std::size_t bins = 8;
    Seed seed = 1;
    unsigned threads = 0;
    double z_threshold = 3.0;
};

inline Report run_coefficients(const CoefficientParams& p) {
    Report r;
    r.experiment = "coefficients";
    const CoefficientReport cr =
        coefficient_recovery_example(p.level, TimeGrid(1.0, p.steps), p.paths, p.seed, p.bins, p.threads, p.z_threshold);
    r.checks = cr.checks;
    Table t{"coefficients", {"t_lo", "t_hi", "a1", "a1_se", "a1_target", "nu_kernel", "nu_kernel_se"}, {}};
    for (const auto& b : cr.bins)
        t.rows.push_back({b.lo, b.hi, b.a1.mean, b.a1.std_error, b.a1_target, b.nu_kernel.mean, b.nu_kernel.std_error});
    r.tables.push_back(std::move(t));
    return r;
}

// ---------------------------------------------------------------------------
// Krylov-Veretennikov truncation
// ---------------------------------------------------------------------------

struct KvParams {
    /// Conditioned drift below this barrier; free Brownian motion with drift otherwise.
    std::optional<Barrier> barrier = Barrier::constant(1.0);
    double free_drift = 0.0;
    double horizon = 1.0;
    std::string f_label = "tanh(3y+1)";
    std::function<double(double)> f = [](double y) { return std::tanh(3.0 * y + 1.0); };
    KvStudyOptions study{};
    SemigroupConfig semigroup{};
    /// Also run the zero-drift linear exactness check.
    bool linear_check = true;
};

inline Report run_kv(const KvParams& p) {
    Report r;
    r.experiment = "kv";
    std::optional<DriftField> field;
    std::optional<Semigroup> sg;
    if (p.barrier) {
        field.emplace(make_drift_field(*p.barrier, p.horizon));
        sg.emplace(Semigroup::conditioned(*p.barrier, p.horizon, p.semigroup));
    } else {
        sg.emplace(Semigroup::free(p.free_drift, p.horizon, p.semigroup));
    }
    const KvReport kr = kv_truncation_study(p.f, *sg, p.study, field ? &*field : nullptr);
    for (const auto& c : kr.checks) {
        Check cc = c;
        cc.name = p.f_label + " " + cc.name;
        r.checks.push_back(std::move(cc));
    }
    bool strict = true;
    for (std::size_t n = 1; n < kr.residual.size(); ++n) strict = strict && kr.residual[n].mean < kr.residual[n - 1].mean;
    r.checks.push_back(bool_check(p.f_label + " residual estimates strictly decreasing", strict,
                                  kr.residual.back().mean, kr.residual.front().mean));
    Table t{"kv_truncation", {"order", "residual", "residual_se", "energy_mc", "energy_mc_se", "energy_kernel"}, {}};
    for (std::size_t n = 0; n < kr.residual.size(); ++n)
        t.rows.push_back({static_cast<double>(n), kr.residual[n].mean, kr.residual[n].std_error, kr.energy_mc[n].mean,
                          kr.energy_mc[n].std_error, kr.energy_kernel[n]});
    r.tables.push_back(std::move(t));
    if (p.linear_check) {
        const Semigroup free = Semigroup::free(0.0, p.horizon, p.semigroup);
        KvStudyOptions o = p.study;
        o.max_order = 1;
        o.seed = derive_seed(p.study.seed, 1);
        const KvReport lr = kv_truncation_study([](double y) { return y; }, free, o);
        const MCEstimate& res = lr.residual[1];
        Check c = bool_check("linear f zero drift residual at order 1 is zero",
                             res.mean <= 3.0 * res.std_error + 1e-12, res.mean, 0.0);
        c.std_error = res.std_error;
        r.checks.push_back(c);
    }
    return r;
}

}  // namespace chaosflow
