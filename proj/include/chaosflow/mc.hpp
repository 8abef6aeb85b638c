// SPDX-License-Identifier: MIT
//
// Monte Carlo harness: seeded per-index sampling, estimates with standard
// errors, and z-score tests. Per-index results are stored and reduced in
// index order with long double accumulation, so every estimate is
// bit-identical for any worker count.
#pragma once

#include <chaosflow/error.hpp>
#include <chaosflow/parallel.hpp>
#include <chaosflow/rng.hpp>

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace chaosflow {

struct MCEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t n = 0;
    std::string method = "iid";

    /// (mean - target) / std_error; 0 when both the gap and std_error vanish.
    [[nodiscard]] double z(double target = 0.0) const {
        const double gap = mean - target;
        if (std_error > 0.0) return gap / std_error;
        return gap == 0.0 ? 0.0 : std::copysign(INFINITY, gap);
    }
};

inline MCEstimate summarize(std::span<const double> xs) {
    MCEstimate e;
    e.n = xs.size();
    if (xs.empty()) return e;
    long double sum = 0.0L;
    for (double x : xs) sum += x;
    const long double mean = sum / static_cast<long double>(xs.size());
    e.mean = static_cast<double>(mean);
    if (xs.size() < 2) return e;
    long double ss = 0.0L;
    for (double x : xs) {
        const long double d = x - mean;
        ss += d * d;
    }
    const long double var = ss / static_cast<long double>(xs.size() - 1);
    e.std_error = static_cast<double>(std::sqrt(var / static_cast<long double>(xs.size())));
    return e;
}

/// Evaluates fn(i) for every index and returns the values in index order.
template <class Fn>
std::vector<double> sample_values(std::size_t n, unsigned threads, Fn&& fn) {
    std::vector<double> out(n);
    parallel_for(n, threads, [&](std::size_t i) { out[i] = fn(i); });
    return out;
}

/// Row-major n x k table; fn(i, row) fills the k values for index i.
struct SampleTable {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    [[nodiscard]] std::vector<double> column(std::size_t c) const {
        std::vector<double> out(rows);
        for (std::size_t r = 0; r < rows; ++r) out[r] = data[r * cols + c];
        return out;
    }
    [[nodiscard]] double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

template <class Fn>
SampleTable sample_table(std::size_t n, std::size_t k, unsigned threads, Fn&& fn) {
    SampleTable t{n, k, std::vector<double>(n * k)};
    parallel_for(n, threads, [&](std::size_t i) {
        fn(i, std::span<double>(t.data.data() + i * k, k));
    });
    return t;
}

/// Mean and std_error of functional(sampler(seed_i)) with seed_i = derive_seed(seed, i).
template <class Sampler, class Functional>
MCEstimate estimate(Functional&& functional, Sampler&& sampler, std::size_t n, Seed seed,
                    unsigned threads = 1) {
    require(n >= 2, Errc::InvalidArgument, "estimate needs at least two samples");
    std::vector<double> values;
    try {
        values = sample_values(n, threads, [&](std::size_t i) {
            return static_cast<double>(functional(sampler(derive_seed(seed, i))));
        });
    } catch (const Error& e) {
        if (e.code() == Errc::SamplerFailure) throw;
        throw Error(Errc::SamplerFailure, std::string("while estimating: ") + e.what());
    }
    return summarize(values);
}

struct ZTest {
    double z = 0.0;
    bool pass = true;
    MCEstimate product;
};

/// Tests E[X*Y] = 0 from paired samples: z = |mean(XY)| / std_error(XY).
inline ZTest orthogonality_test(std::span<const double> x, std::span<const double> y,
                                double z_threshold = 3.0) {
    require(x.size() == y.size(), Errc::LengthMismatch, "orthogonality_test sample sizes differ");
    require(x.size() >= 100, Errc::InvalidArgument, "orthogonality_test needs N >= 100");
    std::vector<double> prod(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) prod[i] = x[i] * y[i];
    ZTest t;
    t.product = summarize(prod);
    if (t.product.std_error == 0.0) {
        require(t.product.mean == 0.0, Errc::DegenerateVariance,
                "zero variance with nonzero mean product");
        t.z = 0.0;
    } else {
        t.z = std::abs(t.product.mean) / t.product.std_error;
    }
    t.pass = t.z <= z_threshold;
    return t;
}

/// Sampler-driven form: X and Y both evaluated on sampler(seed_i).
template <class Sampler, class FX, class FY>
ZTest orthogonality_test(FX&& fx, FY&& fy, Sampler&& sampler, std::size_t n, Seed seed,
                         double z_threshold = 3.0, unsigned threads = 1) {
    const SampleTable t = sample_table(n, 2, threads, [&](std::size_t i, std::span<double> row) {
        const auto sample = sampler(derive_seed(seed, i));
        row[0] = fx(sample);
        row[1] = fy(sample);
    });
    const auto xs = t.column(0);
    const auto ys = t.column(1);
    return orthogonality_test(xs, ys, z_threshold);
}

/// Ratio mean(num)/mean(den) with a delta-method standard error.
inline MCEstimate ratio_estimate(std::span<const double> num, std::span<const double> den) {
    require(num.size() == den.size() && num.size() >= 2, Errc::LengthMismatch,
            "ratio_estimate needs paired samples");
    const MCEstimate d = summarize(den);
    const MCEstimate u = summarize(num);
    const double r = u.mean / d.mean;
    std::vector<double> lin(num.size());
    for (std::size_t i = 0; i < num.size(); ++i) lin[i] = (num[i] - r * den[i]) / d.mean;
    MCEstimate e = summarize(lin);
    e.mean = r;
    e.method = "ratio-delta";
    return e;
}

/// One named statistical or numerical check for reports.
struct Check {
    std::string name;
    double estimate = 0.0;
    double std_error = 0.0;
    double target = 0.0;
    double z = 0.0;
    double threshold = 3.0;
    bool pass = false;
    /// "z" compares |z| with threshold; "abs" compares |estimate - target| with threshold.
    std::string kind = "z";
};

inline Check z_check(std::string name, const MCEstimate& e, double target, double threshold = 3.0) {
    Check c{std::move(name), e.mean, e.std_error, target, e.z(target), threshold, false, "z"};
    c.pass = std::abs(c.z) <= threshold;
    return c;
}

inline Check abs_check(std::string name, double estimate, double target, double tolerance) {
    Check c{std::move(name), estimate, 0.0, target, 0.0, tolerance, false, "abs"};
    c.pass = std::abs(estimate - target) <= tolerance;
    return c;
}

/// Passes when condition holds; estimate/target are informational.
inline Check bool_check(std::string name, bool condition, double estimate = 0.0, double target = 0.0) {
    Check c{std::move(name), estimate, 0.0, target, 0.0, 0.0, condition, "bool"};
    return c;
}

}  // namespace chaosflow
