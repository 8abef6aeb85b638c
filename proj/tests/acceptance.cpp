// SPDX-License-Identifier: MIT
//
// Acceptance run: one PASS/FAIL line per criterion, fixed seed.
#include <chaosflow/experiments.hpp>
#include <chaosflow/parallel.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

using namespace chaosflow;

namespace {

constexpr Seed kSeed = 20260101;

struct Criterion {
    int id;
    std::string title;
    double budget_s;  // 0: no runtime bound
    std::function<std::vector<Check>()> run;
};

std::vector<Check> c1() {
    AlphaParams p;
    p.seed = kSeed;
    p.backends = false;
    return run_alpha(p).checks;
}

std::vector<Check> c2() {
    Table t;
    return alpha_backend_checks(PdeConfig{}, 1e-3, t);
}

std::vector<Check> c3() {
    ClarkParams p;
    p.seed = kSeed;
    return run_clark(p).checks;
}

std::vector<Check> c4() {
    GirsanovParams p;
    p.seed = kSeed;
    return run_girsanov(p).checks;
}

ChaosOrthParams orth() {
    ChaosOrthParams p;
    p.seed = kSeed;
    return p;
}

std::vector<Check> c5() {
    Table t;
    return kappa_isometry_checks(orth(), 1.0, t);
}

std::vector<Check> c6() {
    ExpandParams p;
    p.seed = kSeed;
    p.conditioning_orders = {};
    p.parseval = false;
    auto checks = run_expand(p).checks;
    const double oracle = nu_norm_oracle(KernelFamily(default_kernels(1).front().second),
                                         [](double t) { return alpha_closed_form(Barrier::constant(1.0), 0.0, 0.0, t); });
    checks.push_back(abs_check("oracle n=1 one near 0.85", oracle, 0.85, 5e-3));
    return checks;
}

std::vector<Check> c7() {
    std::vector<Check> out;
    for (std::size_t n : {1u, 2u}) {
        const ConditioningReport r =
            conditioning_check(n, default_kernels(n).front().second, Barrier::constant(1.0), TimeGrid(1.0, 1024),
                               100000, derive_seed(kSeed, 51 + n), 0, default_dictionary(), 3.0);
        for (Check c : r.checks) {
            c.name = "n=" + std::to_string(n) + " " + c.name;
            out.push_back(std::move(c));
        }
    }
    return out;
}

std::vector<Check> c8() {
    CoefficientParams p;
    p.seed = kSeed;
    return run_coefficients(p).checks;
}

std::vector<Check> c9() {
    Table t;
    return transformed_path_checks(orth(), t);
}

std::vector<Check> c10() {
    KvParams p;
    p.study.seed = kSeed;
    return run_kv(p).checks;
}

std::vector<Check> c11() {
    Table t;
    return compensated_form_checks(orth(), t);
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "survival oracle (pde and bridge mc)", 30.0, c1},
        {2, "three-backend agreement", 0.0, c2},
        {3, "clark representation", 300.0, c3},
        {4, "girsanov push-forward", 0.0, c4},
        {5, "compensated isometry and orthogonality", 0.0, c5},
        {6, "stopped-flow norm identity", 0.0, c6},
        {7, "conditioning check", 0.0, c7},
        {8, "first coefficient recovery", 0.0, c8},
        {9, "drift-removed path identity", 0.0, c9},
        {10, "kv truncation", 0.0, c10},
        {11, "compensated-increment form", 0.0, c11},
    };
    std::printf("seed %llu, %u threads\n", static_cast<unsigned long long>(kSeed), default_threads());
    int failed = 0;
    double total = 0.0;
    for (const Criterion& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<Check> checks;
        std::string error;
        try {
            checks = c.run();
        } catch (const std::exception& e) {
            error = e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        total += secs;
        const Check* bad = nullptr;
        for (const Check& k : checks)
            if (!k.pass && !bad) bad = &k;
        const bool slow = c.budget_s > 0.0 && secs > c.budget_s;
        const bool pass = error.empty() && !bad && !slow && !checks.empty();
        std::printf("%s criterion %d: %s (%zu checks, %.1f s)\n", pass ? "PASS" : "FAIL", c.id, c.title.c_str(),
                    checks.size(), secs);
        if (!error.empty()) std::printf("    error: %s\n", error.c_str());
        if (slow) std::printf("    runtime %.1f s exceeds %.0f s\n", secs, c.budget_s);
        for (const Check& k : checks)
            if (!k.pass)
                std::printf("    failed: %s estimate=%.6g target=%.6g z=%.3g\n", k.name.c_str(), k.estimate, k.target,
                            k.z);
        failed += !pass;
    }
    std::printf("%d of %zu criteria passed in %.1f s\n", static_cast<int>(criteria.size()) - failed, criteria.size(),
                total);
    return failed == 0 ? 0 : 1;
}
