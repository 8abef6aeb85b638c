// SPDX-License-Identifier: MIT
//
// Hermite polynomials, symmetric kernels on [0,t]^n and multiple Wiener
// integrals I_n(a) = n! * sum over the strict simplex of grid steps.
#pragma once

#include <chaosflow/error.hpp>
#include <chaosflow/grid.hpp>
#include <chaosflow/math.hpp>
#include <chaosflow/paths.hpp>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace chaosflow {

// ---------------------------------------------------------------------------
// Hermite polynomials (probabilists')
// ---------------------------------------------------------------------------

inline double hermite(unsigned k, double x) {
    if (k == 0) return 1.0;
    double prev = 1.0, cur = x;
    for (unsigned j = 1; j < k; ++j) {
        const double next = x * cur - static_cast<double>(j) * prev;
        prev = cur;
        cur = next;
    }
    return cur;
}

/// |H_n(x+y) - sum_m binom(n,m) H_{n-m}(x) y^m|
inline double hermite_shift_check(unsigned n, double x, double y) {
    double sum = 0.0, ym = 1.0;
    for (unsigned m = 0; m <= n; ++m) {
        sum += math::binomial(static_cast<int>(n), static_cast<int>(m)) * hermite(n - m, x) * ym;
        ym *= y;
    }
    return std::abs(hermite(n, x + y) - sum);
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

inline constexpr std::size_t kMaxGridOrder = 4;

/// One-dimensional factor of a product-basis kernel. Breakpoints mark
/// discontinuities for quadrature.
struct BasisFunction {
    std::string label;
    std::function<double(double)> fn;
    std::vector<double> breakpoints{};

    double operator()(double s) const { return fn(s); }
};

/// coef * sym(basis[f_1] x ... x basis[f_n])
struct ProductTerm {
    double coef = 1.0;
    std::vector<std::size_t> factors;
};

struct CallableKernel {
    std::function<double(std::span<const double>)> fn;
};

struct ProductBasisKernel {
    std::vector<BasisFunction> basis;
    std::vector<ProductTerm> terms;
};

/// Values on the cells of grid^n, row-major, first argument slowest.
struct GridSampledKernel {
    TimeGrid grid;
    std::vector<double> values;
};

namespace detail {

inline std::size_t ipow(std::size_t b, std::size_t e) {
    std::size_t r = 1;
    while (e--) r *= b;
    return r;
}

template <class F>
void for_each_permutation(std::size_t n, F&& f) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    do {
        f(std::span<const std::size_t>(p));
    } while (std::next_permutation(p.begin(), p.end()));
}

inline std::vector<double> symmetrize_cells(std::span<const double> v, std::size_t cells, std::size_t n) {
    const std::size_t total = ipow(cells, n);
    std::vector<double> out(total, 0.0);
    std::vector<std::size_t> idx(n);
    const double inv = 1.0 / math::factorial(static_cast<int>(n));
    for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t r = flat;
        for (std::size_t k = n; k-- > 0;) {
            idx[k] = r % cells;
            r /= cells;
        }
        double acc = 0.0;
        for_each_permutation(n, [&](std::span<const std::size_t> p) {
            std::size_t f = 0;
            for (std::size_t k = 0; k < n; ++k) f = f * cells + idx[p[k]];
            acc += v[f];
        });
        out[flat] = acc * inv;
    }
    return out;
}

}  // namespace detail

class SymmetricKernel {
public:
    using Variant = std::variant<CallableKernel, ProductBasisKernel, GridSampledKernel>;

    /// Order-0 kernel: the scalar c.
    static SymmetricKernel constant(double c, double horizon = 1.0) {
        return product(0, horizon, {}, {ProductTerm{c, {}}});
    }

    /// fn must be symmetric; this is not checked.
    static SymmetricKernel callable(std::size_t order, double horizon,
                                    std::function<double(std::span<const double>)> fn) {
        return SymmetricKernel(order, horizon, CallableKernel{std::move(fn)});
    }

    static SymmetricKernel product(std::size_t order, double horizon, std::vector<BasisFunction> basis,
                                   std::vector<ProductTerm> terms) {
        for (const ProductTerm& t : terms) {
            require(t.factors.size() == order, Errc::InvalidArgument, "product term length must equal the order");
            for (std::size_t f : t.factors)
                require(f < basis.size(), Errc::InvalidArgument, "product term refers to a missing basis function");
        }
        return SymmetricKernel(order, horizon, ProductBasisKernel{std::move(basis), std::move(terms)});
    }

    /// Cell values on grid^order; symmetrized here.
    static SymmetricKernel grid_sampled(std::size_t order, TimeGrid grid, std::vector<double> values) {
        require(order <= kMaxGridOrder, Errc::OrderTooHigh, "grid kernels support order <= 4");
        require(values.size() == detail::ipow(grid.n_steps(), order), Errc::LengthMismatch,
                "grid kernel needs n_steps^order values");
        auto sym = detail::symmetrize_cells(values, grid.n_steps(), order);
        return SymmetricKernel(order, grid.horizon(), GridSampledKernel{grid, std::move(sym)});
    }

    /// a sampled at the cell midpoints of grid^order.
    template <class F>
    static SymmetricKernel sample(std::size_t order, const TimeGrid& grid, F&& a) {
        require(order <= kMaxGridOrder, Errc::OrderTooHigh, "grid kernels support order <= 4");
        const std::size_t cells = grid.n_steps();
        std::vector<double> v(detail::ipow(cells, order));
        std::vector<double> pt(order);
        for (std::size_t flat = 0; flat < v.size(); ++flat) {
            std::size_t r = flat;
            for (std::size_t k = order; k-- > 0;) {
                pt[k] = grid.midpoint(r % cells);
                r /= cells;
            }
            v[flat] = a(std::span<const double>(pt));
        }
        return grid_sampled(order, grid, std::move(v));
    }

    [[nodiscard]] std::size_t order() const noexcept { return order_; }
    [[nodiscard]] double horizon() const noexcept { return horizon_; }
    [[nodiscard]] const Variant& representation() const noexcept { return rep_; }
    [[nodiscard]] const ProductBasisKernel* as_product() const { return std::get_if<ProductBasisKernel>(&rep_); }
    [[nodiscard]] const GridSampledKernel* as_grid() const { return std::get_if<GridSampledKernel>(&rep_); }

    [[nodiscard]] double operator()(std::span<const double> s) const {
        require(s.size() == order_, Errc::LengthMismatch, "kernel arity mismatch");
        if (const auto* c = std::get_if<CallableKernel>(&rep_)) return c->fn(s);
        if (const auto* p = as_product()) {
            double total = 0.0;
            for (const ProductTerm& t : p->terms) {
                double acc = 0.0;
                detail::for_each_permutation(order_, [&](std::span<const std::size_t> perm) {
                    double prod = 1.0;
                    for (std::size_t k = 0; k < order_; ++k) prod *= p->basis[t.factors[perm[k]]](s[k]);
                    acc += prod;
                });
                total += t.coef * acc;
            }
            return total / math::factorial(static_cast<int>(order_));
        }
        const auto& g = *as_grid();
        std::size_t flat = 0;
        for (double x : s) {
            const std::size_t c = std::min<std::size_t>(static_cast<std::size_t>(x / g.grid.dt()), g.grid.n_steps() - 1);
            flat = flat * g.grid.n_steps() + c;
        }
        return g.values[flat];
    }

private:
    SymmetricKernel(std::size_t order, double horizon, Variant rep)
        : order_(order), horizon_(horizon), rep_(std::move(rep)) {
        require(std::isfinite(horizon) && horizon > 0.0, Errc::InvalidArgument, "kernel horizon must be positive");
    }

    std::size_t order_;
    double horizon_;
    Variant rep_;
};

/// Average over all argument permutations. Grid kernels are tabulated, so
/// the cost is order! * cells^order and orders above 4 are refused.
inline SymmetricKernel symmetrize(const SymmetricKernel& a) {
    if (const auto* g = a.as_grid()) {
        require(a.order() <= kMaxGridOrder, Errc::OrderTooHigh, "grid kernels support order <= 4");
        return SymmetricKernel::grid_sampled(a.order(), g->grid, g->values);
    }
    if (a.as_product()) return a;
    const auto& fn = std::get<CallableKernel>(a.representation()).fn;
    const std::size_t n = a.order();
    return SymmetricKernel::callable(n, a.horizon(), [fn, n](std::span<const double> s) {
        std::vector<double> q(n);
        double acc = 0.0;
        detail::for_each_permutation(n, [&](std::span<const std::size_t> p) {
            for (std::size_t k = 0; k < n; ++k) q[k] = s[p[k]];
            acc += fn(q);
        });
        return acc / math::factorial(static_cast<int>(n));
    });
}

// ---------------------------------------------------------------------------
// Discrete iterated integrals
// ---------------------------------------------------------------------------

namespace detail {

/// Iterated sums over ordered distinct steps for every subset of the
/// factor positions. For the position set U, out[U] =
///   sum over injective increasing assignments of U to steps of
///   prod_k v_k(i_k) dx(i_k),
/// i.e. |U|! times the strict-simplex sum of sym(tensor of U). values[k][i]
/// is factor k at step i.
inline void subset_iterated_sums(std::span<const std::span<const double>> values, std::span<const double> dx,
                                 std::vector<double>& out) {
    const std::size_t n = values.size();
    const std::size_t full = std::size_t{1} << n;
    out.assign(full, 0.0);
    out[0] = 1.0;
    if (n == 0) return;
    for (std::size_t i = 0; i < dx.size(); ++i) {
        const double x = dx[i];
        if (x == 0.0) continue;
        for (std::size_t mask = full - 1; mask > 0; --mask) {
            double add = 0.0;
            for (std::size_t rest = mask; rest; rest &= rest - 1) {
                const unsigned k = static_cast<unsigned>(std::countr_zero(rest));
                add += out[mask & ~(std::size_t{1} << k)] * values[k][i];
            }
            out[mask] += add * x;
        }
    }
}

/// Strict-simplex sum of a cell kernel: sum_{i_1 < ... < i_n} K(c(i_1), ..., c(i_n)) prod dx(i_k),
/// where step i lies in cell i / steps_per_cell.
inline double cell_simplex_sum(const GridSampledKernel& k, std::size_t n, std::size_t steps_per_cell,
                               std::span<const double> dx) {
    const std::size_t cells = k.grid.n_steps();
    if (n == 0) return k.values[0];
    // level m holds the ordered sums over the first m arguments, indexed by their cells
    std::vector<std::vector<double>> level(n);
    level[0] = {1.0};
    for (std::size_t m = 1; m < n; ++m) level[m].assign(ipow(cells, m), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < dx.size(); ++i) {
        const double x = dx[i];
        if (x == 0.0) continue;
        const std::size_t c = i / steps_per_cell;
        // close an n-tuple at step i
        const auto& last = level[n - 1];
        double acc = 0.0;
        for (std::size_t p = 0; p < last.size(); ++p) acc += last[p] * k.values[p * cells + c];
        total += acc * x;
        for (std::size_t m = n - 1; m >= 1; --m) {
            const auto& prev = level[m - 1];
            auto& cur = level[m];
            for (std::size_t p = 0; p < prev.size(); ++p) cur[p * cells + c] += prev[p] * x;
        }
    }
    return total;
}

inline std::size_t steps_per_cell(const GridSampledKernel& k, const TimeGrid& path_grid) {
    require(k.grid.horizon() == path_grid.horizon(), Errc::HorizonMismatch, "kernel and path horizons differ");
    require(path_grid.n_steps() % k.grid.n_steps() == 0, Errc::InvalidArgument,
            "path grid must refine the kernel grid");
    return path_grid.n_steps() / k.grid.n_steps();
}

}  // namespace detail

/// Basis functions of a product kernel evaluated at the step midpoints of a
/// grid, reused across paths.
class ProductPlan {
public:
    ProductPlan(const SymmetricKernel& a, const TimeGrid& grid) : grid_(grid), order_(a.order()) {
        const auto* p = a.as_product();
        require(p != nullptr, Errc::InvalidArgument, "ProductPlan needs a product-basis kernel");
        require(std::abs(a.horizon() - grid.horizon()) < 1e-12, Errc::HorizonMismatch,
                "kernel and path horizons differ");
        terms_ = p->terms;
        values_.resize(p->basis.size());
        for (std::size_t b = 0; b < p->basis.size(); ++b) {
            values_[b].resize(grid.n_steps());
            for (std::size_t i = 0; i < grid.n_steps(); ++i) values_[b][i] = p->basis[b](grid.midpoint(i));
        }
    }

    [[nodiscard]] const TimeGrid& grid() const noexcept { return grid_; }
    [[nodiscard]] std::size_t order() const noexcept { return order_; }
    [[nodiscard]] const std::vector<ProductTerm>& terms() const noexcept { return terms_; }
    [[nodiscard]] std::span<const double> basis_values(std::size_t b) const { return values_[b]; }

    /// Factor rows of one term, in position order.
    [[nodiscard]] std::vector<std::span<const double>> factor_rows(const ProductTerm& t) const {
        std::vector<std::span<const double>> rows;
        for (std::size_t f : t.factors) rows.emplace_back(values_[f]);
        return rows;
    }

    /// sum_terms coef * I_n(sym(term)) for increments dx.
    [[nodiscard]] double integrate(std::span<const double> dx) const {
        std::vector<double> sums;
        double total = 0.0;
        for (const ProductTerm& t : terms_) {
            const auto rows = factor_rows(t);
            detail::subset_iterated_sums(rows, dx, sums);
            total += t.coef * sums.back();
        }
        return total;
    }

private:
    TimeGrid grid_;
    std::size_t order_;
    std::vector<ProductTerm> terms_;
    std::vector<std::vector<double>> values_;
};

enum class WienerMode { Iterated, Hermite };

namespace detail {

inline double callable_simplex(const CallableKernel& k, std::size_t n, const TimeGrid& grid,
                               std::span<const double> dx) {
    std::vector<double> pt(n);
    // recursive nested sum over i_1 < ... < i_n
    std::function<double(std::size_t, std::size_t)> rec = [&](std::size_t depth, std::size_t start) -> double {
        if (depth == n) return k.fn(pt);
        double acc = 0.0;
        for (std::size_t i = start; i + (n - depth) <= dx.size(); ++i) {
            if (dx[i] == 0.0) continue;
            pt[depth] = grid.midpoint(i);
            acc += dx[i] * rec(depth + 1, i + 1);
        }
        return acc;
    };
    return rec(0, 0);
}

double gram_entry(const BasisFunction& f, const BasisFunction& g, double horizon);

}  // namespace detail

/// n! * strict-simplex sum of a(mid_{i_1}, ..., mid_{i_n}) dx_{i_1} ... dx_{i_n}
/// for increments dx on grid. Deterministic kernels are evaluated at step midpoints.
inline double multiple_wiener_integral(const SymmetricKernel& a, const TimeGrid& grid, std::span<const double> dx,
                                       WienerMode mode = WienerMode::Iterated) {
    require(std::abs(a.horizon() - grid.horizon()) < 1e-12, Errc::HorizonMismatch, "kernel and path horizons differ");
    require(dx.size() == grid.n_steps(), Errc::LengthMismatch, "one increment per step");
    const std::size_t n = a.order();
    if (const auto* p = a.as_product()) {
        if (mode == WienerMode::Hermite) {
            double total = 0.0;
            for (const ProductTerm& t : p->terms) {
                std::map<std::size_t, unsigned> mult;
                for (std::size_t f : t.factors) ++mult[f];
                double prod = t.coef;
                for (auto it = mult.begin(); it != mult.end(); ++it) {
                    for (auto jt = mult.begin(); jt != mult.end(); ++jt) {
                        const double gij = detail::gram_entry(p->basis[it->first], p->basis[jt->first], a.horizon());
                        require(std::abs(gij - (it == jt ? 1.0 : 0.0)) < 1e-6, Errc::InvalidArgument,
                                "Hermite mode needs orthonormal factors");
                    }
                    double e = 0.0;
                    for (std::size_t i = 0; i < dx.size(); ++i) e += p->basis[it->first](grid.midpoint(i)) * dx[i];
                    prod *= hermite(it->second, e);
                }
                total += prod;
            }
            return total;
        }
        return ProductPlan(a, grid).integrate(dx);
    }
    require(mode == WienerMode::Iterated, Errc::InvalidArgument, "Hermite mode needs a product-basis kernel");
    const double nf = math::factorial(static_cast<int>(n));
    if (const auto* g = a.as_grid()) {
        require(n <= kMaxGridOrder, Errc::OrderTooHigh, "grid kernels support order <= 4");
        return nf * detail::cell_simplex_sum(*g, n, detail::steps_per_cell(*g, grid), dx);
    }
    const auto& c = std::get<CallableKernel>(a.representation());
    if (n == 0) return c.fn({});
    return nf * detail::callable_simplex(c, n, grid, dx);
}

inline double multiple_wiener_integral(const SymmetricKernel& a, const Path& path,
                                       WienerMode mode = WienerMode::Iterated) {
    const auto dx = path.increments();
    return multiple_wiener_integral(a, path.grid(), dx, mode);
}

// ---------------------------------------------------------------------------
// Inner products
// ---------------------------------------------------------------------------

namespace detail {

inline double gram_entry(const BasisFunction& f, const BasisFunction& g, double horizon) {
    std::vector<double> cuts{0.0};
    for (const auto* b : {&f.breakpoints, &g.breakpoints})
        for (double x : *b)
            if (x > 0.0 && x < horizon) cuts.push_back(x);
    cuts.push_back(horizon);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
        total += GK::integrate([&](double s) { return f(s) * g(s); }, cuts[i], cuts[i + 1], 10, 1e-13);
    return total;
}

inline double product_inner(const SymmetricKernel& a, const SymmetricKernel& b) {
    const auto& pa = *a.as_product();
    const auto& pb = *b.as_product();
    const std::size_t n = a.order();
    std::vector<std::vector<double>> gram(pa.basis.size(), std::vector<double>(pb.basis.size(), NAN));
    auto G = [&](std::size_t i, std::size_t j) {
        if (std::isnan(gram[i][j])) gram[i][j] = gram_entry(pa.basis[i], pb.basis[j], a.horizon());
        return gram[i][j];
    };
    double total = 0.0;
    for (const ProductTerm& s : pa.terms)
        for (const ProductTerm& t : pb.terms) {
            double acc = 0.0;
            for_each_permutation(n, [&](std::span<const std::size_t> p) {
                double prod = 1.0;
                for (std::size_t k = 0; k < n; ++k) prod *= G(s.factors[k], t.factors[p[k]]);
                acc += prod;
            });
            total += s.coef * t.coef * acc;
        }
    return total / math::factorial(static_cast<int>(n));
}

/// Product midpoint rule over the cells of grid^n.
inline double midpoint_inner(const SymmetricKernel& a, const SymmetricKernel& b, const TimeGrid& grid) {
    const std::size_t n = a.order();
    const std::size_t cells = grid.n_steps();
    const std::size_t total = ipow(cells, n);
    std::vector<double> pt(n);
    long double acc = 0.0L;
    for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t r = flat;
        for (std::size_t k = n; k-- > 0;) {
            pt[k] = grid.midpoint(r % cells);
            r /= cells;
        }
        acc += a(pt) * b(pt);
    }
    return static_cast<double>(acc) * std::pow(grid.dt(), static_cast<double>(n));
}

/// Composite Gauss-Legendre tensor rule.
inline double gauss_inner(const SymmetricKernel& a, const SymmetricKernel& b) {
    const std::size_t n = a.order();
    static constexpr std::size_t kPanels[] = {1, 128, 24, 8, 4};
    const std::size_t panels = kPanels[std::min<std::size_t>(n, 4)];
    using GL = boost::math::quadrature::gauss<double, 8>;
    const auto& abs = GL::abscissa();
    const auto& wts = GL::weights();
    std::vector<double> x1, w1;
    const double h = a.horizon() / static_cast<double>(panels);
    for (std::size_t p = 0; p < panels; ++p) {
        const double mid = (static_cast<double>(p) + 0.5) * h;
        for (std::size_t k = 0; k < abs.size(); ++k) {
            for (double sign : {-1.0, 1.0}) {
                if (abs[k] == 0.0 && sign > 0.0) continue;
                x1.push_back(mid + sign * abs[k] * 0.5 * h);
                w1.push_back(wts[k] * 0.5 * h);
            }
        }
    }
    const std::size_t m = x1.size();
    const std::size_t total = ipow(m, n);
    std::vector<double> pt(n);
    long double acc = 0.0L;
    for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t r = flat;
        double w = 1.0;
        for (std::size_t k = n; k-- > 0;) {
            pt[k] = x1[r % m];
            w *= w1[r % m];
            r /= m;
        }
        acc += w * a(pt) * b(pt);
    }
    return static_cast<double>(acc);
}

}  // namespace detail

/// L^2([0,t]^n) inner product. Product kernels use exact Gram matrices of
/// their factors; a grid kernel imposes its midpoint rule; otherwise a
/// composite Gauss rule is used.
inline double kernel_inner(const SymmetricKernel& a, const SymmetricKernel& b) {
    require(a.order() == b.order(), Errc::OrderMismatch, "kernel orders differ");
    require(std::abs(a.horizon() - b.horizon()) < 1e-12, Errc::HorizonMismatch, "kernel horizons differ");
    if (a.order() == 0) return a(std::span<const double>{}) * b(std::span<const double>{});
    if (a.as_product() && b.as_product()) return detail::product_inner(a, b);
    const auto* ga = a.as_grid();
    const auto* gb = b.as_grid();
    if (ga && gb)
        require(ga->grid == gb->grid, Errc::InvalidArgument, "grid kernels must share a grid");
    if (ga) return detail::midpoint_inner(a, b, ga->grid);
    if (gb) return detail::midpoint_inner(a, b, gb->grid);
    return detail::gauss_inner(a, b);
}

inline double kernel_norm2(const SymmetricKernel& a) { return kernel_inner(a, a); }

// ---------------------------------------------------------------------------
// Named one-dimensional primitives
// ---------------------------------------------------------------------------

namespace basis {

inline BasisFunction one() {
    return {"one", [](double) { return 1.0; }};
}
inline BasisFunction power(unsigned k) {
    return {"power" + std::to_string(k), [k](double s) { return std::pow(s, static_cast<double>(k)); }};
}
inline BasisFunction sine(double freq) {
    return {"sin", [freq](double s) { return std::sin(freq * s); }};
}
inline BasisFunction cosine(double freq) {
    return {"cos", [freq](double s) { return std::cos(freq * s); }};
}
/// sqrt(2/t) cos(k pi s / t) for k >= 1, 1/sqrt(t) for k = 0: orthonormal on [0,t].
inline BasisFunction cosine_mode(unsigned k, double horizon) {
    const double c = k == 0 ? 1.0 / std::sqrt(horizon) : std::sqrt(2.0 / horizon);
    const double w = static_cast<double>(k) * std::numbers::pi / horizon;
    return {"cosine_mode" + std::to_string(k), [c, w](double s) { return c * std::cos(w * s); }};
}
/// Orthonormal shifted Legendre polynomial of degree k on [0,t].
inline BasisFunction legendre(unsigned k, double horizon) {
    const double c = std::sqrt((2.0 * k + 1.0) / horizon);
    return {"legendre" + std::to_string(k), [c, k, horizon](double s) {
                return c * std::legendre(k, 2.0 * s / horizon - 1.0);
            }};
}
/// 1 on [lo, hi).
inline BasisFunction indicator(double lo, double hi) {
    return {"indicator", [lo, hi](double s) { return (s >= lo && s < hi) ? 1.0 : 0.0; }, {lo, hi}};
}

}  // namespace basis

}  // namespace chaosflow
