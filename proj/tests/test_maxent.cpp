#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <random>
#include <sstream>
#include <vector>

#include "cmekit/maxent.hpp"
#include "cmekit/quadrature.hpp"

using namespace cmekit;

namespace {

// Composite Simpson rule, independent of the library's quadrature machinery.
template <typename F>
double simpson(F&& f, double lo, double hi, int n) {
    if (n % 2) ++n;
    const double h = (hi - lo) / n;
    double s = f(lo) + f(hi);
    for (int i = 1; i < n; ++i) s += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

double std_normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::acos(-1.0)); }
double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Truncated normal on [0, inf) with underlying parameters (a, b).
double truncated_normal_pdf(double x, double a, double b) {
    if (x < 0.0) return 0.0;
    return std_normal_pdf((x - a) / b) / (b * std_normal_cdf(a / b));
}

/// Raw moments mu_0..mu_M of w exp(mean t1) + (1-w) exp(mean t2).
std::vector<double> expo_mixture_moments(int M, double w, double t1, double t2) {
    std::vector<double> mu(M + 1);
    double fact = 1.0;
    for (int k = 0; k <= M; ++k) {
        if (k) fact *= k;
        mu[k] = fact * (w * std::pow(t1, k) + (1.0 - w) * std::pow(t2, k));
    }
    return mu;
}

}  // namespace

TEST_CASE("Hermite basis matches hand-expanded polynomials", "[maxent]") {
    const auto he = hermite_basis(5);
    REQUIRE(he.size() == 6);
    const double s2 = std::sqrt(2.0), s6 = std::sqrt(6.0), s24 = std::sqrt(24.0),
                 s120 = std::sqrt(120.0);
    CHECK(he[0] == std::vector<double>{1.0});
    CHECK(he[1] == std::vector<double>{0.0, 1.0});
    REQUIRE(he[2].size() == 3);
    CHECK(he[2][0] == Catch::Approx(-1.0 / s2).margin(1e-15));
    CHECK(he[2][1] == 0.0);
    CHECK(he[2][2] == Catch::Approx(1.0 / s2).margin(1e-15));
    REQUIRE(he[3].size() == 4);
    CHECK(he[3][1] == Catch::Approx(-3.0 / s6).margin(1e-15));
    CHECK(he[3][3] == Catch::Approx(1.0 / s6).margin(1e-15));
    REQUIRE(he[4].size() == 5);
    CHECK(he[4][0] == Catch::Approx(3.0 / s24).margin(1e-15));
    CHECK(he[4][2] == Catch::Approx(-6.0 / s24).margin(1e-15));
    CHECK(he[4][4] == Catch::Approx(1.0 / s24).margin(1e-15));
    REQUIRE(he[5].size() == 6);
    CHECK(he[5][1] == Catch::Approx(15.0 / s120).margin(1e-15));
    CHECK(he[5][3] == Catch::Approx(-10.0 / s120).margin(1e-15));
    CHECK(he[5][5] == Catch::Approx(1.0 / s120).margin(1e-15));
}

TEST_CASE("Hermite basis is orthonormal under the standard normal weight", "[maxent]") {
    const auto he = hermite_basis(5);
    const QuadratureRule rule = build_fullline_rule(0.0, 1.0, 128);
    auto eval = [&he](int k, double t) {
        double v = 0.0;
        for (std::size_t j = he[k].size(); j-- > 0;) v = v * t + he[k][j];
        return v;
    };
    for (int j = 0; j <= 5; ++j)
        for (int k = j; k <= 5; ++k) {
            const double ip = rule.integrate([&](double t) {
                return eval(j, t) * eval(k, t) * std_normal_pdf(t);
            });
            CHECK(ip == Catch::Approx(j == k ? 1.0 : 0.0).margin(1e-9));
        }
}

TEST_CASE("Preconditioning standardizes the constraints", "[maxent]") {
    SECTION("mean 10, variance 4") {
        MomentConstraints c{{1.0, 10.0, 104.0}, Support::half_line, {}};
        const PreconditionedProblem p = precondition(c);
        CHECK(p.shift == Catch::Approx(10.0));
        CHECK(p.scale == Catch::Approx(2.0));
        REQUIRE(p.targets.size() == 2);
        CHECK(p.targets[0] == Catch::Approx(0.0).margin(1e-12));
        CHECK(p.targets[1] == Catch::Approx(0.0).margin(1e-12));
    }
    SECTION("already standardized moments give the identity transform") {
        MomentConstraints c{{1.0, 0.0, 1.0}, Support::full_line, {}};
        const PreconditionedProblem p = precondition(c);
        CHECK(p.shift == 0.0);
        CHECK(p.scale == Catch::Approx(1.0));
    }
    SECTION("order 1 scales by max(mean, 1)") {
        const PreconditionedProblem big = precondition({{1.0, 4.0}, Support::half_line, {}});
        CHECK(big.shift == Catch::Approx(4.0));
        CHECK(big.scale == Catch::Approx(4.0));
        CHECK(big.targets[0] == Catch::Approx(0.0).margin(1e-14));
        const PreconditionedProblem small = precondition({{1.0, 0.5}, Support::half_line, {}});
        CHECK(small.scale == Catch::Approx(1.0));
        CHECK(small.targets[0] == Catch::Approx(0.0).margin(1e-14));
    }
    SECTION("exponential third standardized moment") {
        // Exponential mean 1: mu = (1, 1, 2, 6); E[(x-1)^3] = 2, so the
        // normalized third Hermite target is 2/sqrt(6).
        MomentConstraints c{{1.0, 1.0, 2.0, 6.0}, Support::half_line, {}};
        const PreconditionedProblem p = precondition(c);
        CHECK(p.targets[0] == Catch::Approx(0.0).margin(1e-12));
        CHECK(p.targets[1] == Catch::Approx(0.0).margin(1e-12));
        CHECK(p.targets[2] == Catch::Approx(2.0 / std::sqrt(6.0)).margin(1e-12));
    }
    SECTION("zero or negative variance is infeasible at order >= 2") {
        CHECK_THROWS_AS(precondition({{1.0, 3.0, 9.0}, Support::half_line, {}}),
                        InfeasibleError);
        CHECK_THROWS_AS(precondition({{1.0, 3.0, 8.0}, Support::half_line, {}}),
                        InfeasibleError);
    }
}

TEST_CASE("Constraint validation", "[maxent]") {
    CHECK_THROWS_AS(validate_constraints({{0.9, 1.0}, Support::half_line, {}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(validate_constraints({{1.0}, Support::half_line, {}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(validate_constraints({{1.0, std::nan("")}, Support::half_line, {}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(validate_constraints({{1.0, 1.0}, Support::half_line, {3, 0}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(validate_constraints({{1.0, 1.0}, Support::half_line, {2, 2}}),
                    std::invalid_argument);
    const auto warn = validate_constraints({{1.0, 3.0, 8.0}, Support::half_line, {}});
    REQUIRE(warn.size() == 1);
    CHECK(warn[0].find("unrealizable") != std::string::npos);
}

TEST_CASE("Dual evaluation", "[maxent]") {
    const auto mu = expo_mixture_moments(4, 0.4, 3.0, 10.0);
    const PreconditionedProblem p = precondition({mu, Support::half_line, {}});
    const QuadratureRule rule = build_rule(p, 128);

    SECTION("lambda = 0 is infeasible on the half line") {
        const DualEval e = dual_and_gradient({0.0, 0.0, 0.0, 0.0}, p, rule);
        CHECK_FALSE(e.feasible);
    }
    SECTION("a decaying exponent is feasible with vanishing tail error") {
        const DualEval e = dual_and_gradient({0.1, 0.8, 0.03, 0.15}, p, rule);
        REQUIRE(e.feasible);
        CHECK(std::isfinite(e.value));
        CHECK(e.gradient.size() == 4);
    }
    SECTION("gradient matches central finite differences") {
        const std::vector<double> lam{0.1, 0.8, 0.03, 0.15};
        const DualEval e = dual_and_gradient(lam, p, rule);
        REQUIRE(e.feasible);
        const double h = 1e-6;
        for (int k = 0; k < 4; ++k) {
            std::vector<double> lp = lam, lm = lam;
            lp[k] += h;
            lm[k] -= h;
            const DualEval ep = dual_and_gradient(lp, p, rule);
            const DualEval em = dual_and_gradient(lm, p, rule);
            REQUIRE(ep.feasible);
            REQUIRE(em.feasible);
            const double fd = (ep.value - em.value) / (2.0 * h);
            CHECK(e.gradient[k] == Catch::Approx(fd).margin(1e-5));
        }
    }
    SECTION("the dual is midpoint-convex on feasible pairs") {
        std::mt19937_64 rng(20240817);
        std::uniform_real_distribution<double> u(-0.4, 0.4);
        for (int rep = 0; rep < 20; ++rep) {
            std::vector<double> a{u(rng), 0.7 + u(rng), u(rng), 0.2 + 0.2 * std::abs(u(rng))};
            std::vector<double> b{u(rng), 0.7 + u(rng), u(rng), 0.2 + 0.2 * std::abs(u(rng))};
            std::vector<double> mid(4);
            for (int k = 0; k < 4; ++k) mid[k] = 0.5 * (a[k] + b[k]);
            const DualEval ea = dual_and_gradient(a, p, rule);
            const DualEval eb = dual_and_gradient(b, p, rule);
            const DualEval em = dual_and_gradient(mid, p, rule);
            REQUIRE(ea.feasible);
            REQUIRE(eb.feasible);
            REQUIRE(em.feasible);
            CHECK(em.value <= 0.5 * (ea.value + eb.value) + 1e-10);
        }
    }
    SECTION("order-1 stationary point is the exponential rate") {
        const PreconditionedProblem p1 = precondition({{1.0, 4.0}, Support::half_line, {}});
        const QuadratureRule r1 = build_rule(p1, 128);
        const DualEval e = dual_and_gradient({p1.scale / 4.0}, p1, r1);
        REQUIRE(e.feasible);
        CHECK(std::abs(e.gradient[0]) < 1e-10);
    }
}

TEST_CASE("erfcx agrees with its definition across regimes", "[maxent]") {
    for (double u : {0.0, 0.3, 1.0, 2.0, 3.5, 3.999}) {
        CHECK(detail::erfcx(u) ==
              Catch::Approx(std::exp(u * u) * std::erfc(u)).epsilon(1e-13));
    }
    // Continued-fraction regime, still comparable directly up to u ~ 26.
    for (double u : {4.001, 5.0, 8.0, 15.0, 25.0}) {
        CHECK(detail::erfcx(u) ==
              Catch::Approx(std::exp(u * u) * std::erfc(u)).epsilon(1e-12));
    }
    // Asymptotic series for large arguments.
    const double u = 100.0;
    const double asym = (1.0 - 0.5 / (u * u) + 0.75 / std::pow(u, 4)) /
                        (u * std::sqrt(std::acos(-1.0)));
    CHECK(detail::erfcx(u) == Catch::Approx(asym).epsilon(1e-10));
    // Negative arguments via the reflection identity.
    CHECK(detail::erfcx(-1.0) ==
          Catch::Approx(std::exp(1.0) * std::erfc(-1.0)).epsilon(1e-13));
}

TEST_CASE("Analytic order-1 solution is the exponential density", "[maxent]") {
    const MaxEntSolution sol = analytic_maxent({{1.0, 4.0}, Support::half_line, {}});
    CHECK(sol.analytic);
    REQUIRE(sol.lambdas.size() == 1);
    CHECK(sol.lambdas[0] == Catch::Approx(1.0));  // scale/mu_1 = 4/4
    for (double x : {0.0, 0.5, 1.0, 4.0, 10.0, 25.0})
        CHECK(sol.density(x) == Catch::Approx(0.25 * std::exp(-x / 4.0)).epsilon(1e-12));
    CHECK_THROWS_AS(analytic_maxent({{1.0, 0.0}, Support::half_line, {}}), InfeasibleError);
    CHECK_THROWS_AS(analytic_maxent({{1.0, 4.0}, Support::full_line, {}}), InfeasibleError);
}

TEST_CASE("Analytic order-2 solution on the full line is Gaussian", "[maxent]") {
    const MaxEntSolution sol = analytic_maxent({{1.0, 0.0, 1.0}, Support::full_line, {}});
    REQUIRE(sol.lambdas.size() == 2);
    CHECK(sol.lambdas[0] == Catch::Approx(0.0).margin(1e-14));
    CHECK(sol.lambdas[1] == Catch::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-14));
    for (double x : {-3.0, -1.0, 0.0, 0.7, 2.5})
        CHECK(sol.density(x) == Catch::Approx(std_normal_pdf(x)).epsilon(1e-12));

    const MaxEntSolution gen = analytic_maxent({{1.0, 7.0, 58.0}, Support::full_line, {}});
    for (double x : {0.0, 4.0, 7.0, 13.0})
        CHECK(gen.density(x) == Catch::Approx(std_normal_pdf((x - 7.0) / 3.0) / 3.0)
                                    .epsilon(1e-12));
}

TEST_CASE("Analytic order-2 solution on the half line is a truncated normal", "[maxent]") {
    SECTION("negligible truncation reduces to the plain normal") {
        // mean 50, sd 2: the mass below zero is ~1e-138.
        const MaxEntSolution sol =
            analytic_maxent({{1.0, 50.0, 2504.0}, Support::half_line, {}});
        for (double x : {44.0, 48.0, 50.0, 53.0, 57.0})
            CHECK(sol.density(x) ==
                  Catch::Approx(truncated_normal_pdf(x, 50.0, 2.0)).epsilon(1e-9));
    }
    SECTION("strong truncation: recover known underlying parameters") {
        // Build the moments of TN(a=1, b=2) by independent quadrature, then
        // check the solver recovers that exact density.
        const double a = 1.0, b = 2.0;
        auto q = [&](double x) { return truncated_normal_pdf(x, a, b); };
        const double m1 = simpson([&](double x) { return x * q(x); }, 0.0, 40.0, 200000);
        const double m2 = simpson([&](double x) { return x * x * q(x); }, 0.0, 40.0, 200000);
        const MaxEntSolution sol = analytic_maxent({{1.0, m1, m2}, Support::half_line, {}});
        for (double x : {0.0, 0.3, 1.0, 2.0, 4.0, 7.0})
            CHECK(sol.density(x) == Catch::Approx(q(x)).epsilon(1e-7));
        // Integrates to one over the support.
        const double total = simpson([&](double x) { return sol.density(x); }, 0.0, 60.0,
                                     400000);
        CHECK(total == Catch::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("Numeric solver agrees with the analytic fast path", "[maxent]") {
    MaxEntOptions numeric;
    numeric.force_numeric = true;

    SECTION("order 1") {
        const MaxEntSolution an = analytic_maxent({{1.0, 4.0}, Support::half_line, {}});
        const MaxEntSolution nu = solve_dual({{1.0, 4.0}, Support::half_line, {}}, numeric);
        CHECK_FALSE(nu.analytic);
        CHECK(nu.grad_norm <= numeric.tol);
        for (double x : {0.0, 1.0, 4.0, 12.0})
            CHECK(nu.density(x) == Catch::Approx(an.density(x)).epsilon(1e-6));
    }
    SECTION("order 2, truncated") {
        const std::vector<double> mu{1.0, 2.2, 7.0};
        const MaxEntSolution an = analytic_maxent({mu, Support::half_line, {}});
        const MaxEntSolution nu = solve_dual({mu, Support::half_line, {}}, numeric);
        CHECK(nu.grad_norm <= numeric.tol);
        for (double x : {0.0, 0.5, 1.5, 3.0, 6.0})
            CHECK(nu.density(x) == Catch::Approx(an.density(x)).epsilon(1e-6));
    }
    SECTION("order 2, full line") {
        const std::vector<double> mu{1.0, 7.0, 58.0};
        const MaxEntSolution an = analytic_maxent({mu, Support::full_line, {}});
        const MaxEntSolution nu = solve_dual({mu, Support::full_line, {}}, numeric);
        for (double x : {1.0, 5.0, 7.0, 11.0})
            CHECK(nu.density(x) == Catch::Approx(an.density(x)).epsilon(1e-6));
    }
}

TEST_CASE("Reconstruction recovers a known quartic-exponent density", "[maxent]") {
    // Target: q*(x) proportional to exp(-sum lambda*_k he_k((x-5)/2)) on
    // [0, inf). Its moments are computed by Simpson; the solver must return
    // the same density (the maximum-entropy solution is unique).
    const auto he = hermite_basis(4);
    const std::vector<double> lam_star{0.2, 0.75, -0.05, 0.08};
    auto unnorm = [&](double x) {
        const double t = (x - 5.0) / 2.0;
        double s = 0.0;
        for (int k = 1; k <= 4; ++k) {
            double hv = 0.0;
            for (std::size_t j = he[k].size(); j-- > 0;) hv = hv * t + he[k][j];
            s += lam_star[k - 1] * hv;
        }
        return std::exp(-s);
    };
    const double z = simpson(unnorm, 0.0, 30.0, 400000);
    std::vector<double> mu(5);
    for (int k = 0; k <= 4; ++k)
        mu[k] = simpson([&](double x) { return std::pow(x, k) * unnorm(x); }, 0.0, 30.0,
                        400000) /
                z;
    REQUIRE(mu[0] == Catch::Approx(1.0).epsilon(1e-12));

    const MaxEntSolution sol = solve_dual({mu, Support::half_line, {}});
    CHECK(sol.grad_norm <= 1e-8);
    CHECK_FALSE(sol.analytic);
    // A genuine half-line solution: no truncation, no warnings.
    CHECK(std::isinf(sol.support_hi));
    CHECK(sol.warnings.empty());
    for (double x : {0.0, 1.0, 3.0, 5.0, 7.0, 9.0, 12.0})
        CHECK(sol.density(x) == Catch::Approx(unnorm(x) / z).margin(1e-6));
    // Even leading order keeps the exponent coercive: a_M >= 0.
    CHECK(sol.exponent_x.back() >= 0.0);
}

TEST_CASE("Reconstruction satisfies its moment constraints", "[maxent]") {
    // Mixture of exponentials with means 3 and 10: closed-form moments. Such
    // mixtures have standardized skewness above 2, which no integrable
    // exp(-cubic) density on the half line can reach, so odd orders are
    // expected to fall back to a compact working support (flagged); the
    // moments must be honored either way.
    for (int M : {3, 4, 5}) {
        const auto mu = expo_mixture_moments(M, 0.4, 3.0, 10.0);
        const MaxEntSolution sol = solve_dual({mu, Support::half_line, {}});
        CHECK(sol.grad_norm <= 1e-8);
        if (std::isfinite(sol.support_hi)) CHECK_FALSE(sol.warnings.empty());
        const double hi = std::min(400.0, sol.support_hi);
        const double total =
            simpson([&](double x) { return sol.density(x); }, 0.0, hi, 400000);
        CHECK(total == Catch::Approx(1.0).epsilon(1e-8));
        const double tol = (M <= 4) ? 1e-6 : 1e-4;
        for (int k = 1; k <= M; ++k) {
            const double mk = simpson([&](double x) { return std::pow(x, k) * sol.density(x); },
                                      0.0, hi, 400000);
            CHECK(mk == Catch::Approx(mu[k]).epsilon(tol));
        }
    }
}

TEST_CASE("Unrealizable variance is projected up once and flagged", "[maxent]") {
    const MaxEntSolution sol = solve_dual({{1.0, 3.0, 9.0}, Support::half_line, {}});
    CHECK(sol.projected);
    REQUIRE_FALSE(sol.warnings.empty());
    // The result is a near-delta at the mean: almost all lattice mass at 3.
    const auto dist = discretize(sol, {1, 0});
    REQUIRE(dist.count(3) == 1);
    CHECK(dist.at(3) == Catch::Approx(1.0).margin(1e-9));
    // Truly contradictory constraints (mu_2 < mu_1^2) still fail after the
    // one projection retry is exhausted... the projection fixes those too,
    // by design: only the variance is bumped, so check the flag instead.
    const MaxEntSolution neg = solve_dual({{1.0, 3.0, 8.9}, Support::half_line, {}});
    CHECK(neg.projected);
}

TEST_CASE("Discretization matches closed-form exponential bin masses", "[maxent]") {
    const MaxEntSolution sol = analytic_maxent({{1.0, 4.0}, Support::half_line, {}});
    auto cdf = [](double x) { return 1.0 - std::exp(-x / 4.0); };  // rate 1/4

    SECTION("unit lattice") {
        // Center bin [x-1/2, x+1/2]; the zero bin doubles [0, 1/2].
        CHECK(bin_mass(sol, 0, {1, 0}) == Catch::Approx(2.0 * cdf(0.5)).epsilon(1e-10));
        CHECK(bin_mass(sol, 0, {1, 0}) == Catch::Approx(0.2350062).margin(5e-8));
        CHECK(bin_mass(sol, 3, {1, 0}) ==
              Catch::Approx(std::exp(-5.0 / 8.0) - std::exp(-7.0 / 8.0)).epsilon(1e-10));
        for (std::int64_t x = 1; x <= 30; ++x)
            CHECK(bin_mass(sol, x, {1, 0}) ==
                  Catch::Approx(cdf(x + 0.5) - cdf(x - 0.5)).epsilon(1e-10));
        const auto dist = discretize(sol, {1, 0});
        double total = 0.0, raw_total = 2.0 * cdf(0.5);
        for (const auto& [x, p] : dist) {
            CHECK(p >= 0.0);
            total += p;
        }
        CHECK(total == Catch::Approx(1.0).epsilon(1e-12));
        for (std::int64_t x = 1; x <= dist.rbegin()->first; ++x)
            raw_total += cdf(x + 0.5) - cdf(x - 0.5);
        CHECK(dist.at(0) == Catch::Approx(2.0 * cdf(0.5) / raw_total).epsilon(1e-9));
        CHECK(dist.at(5) ==
              Catch::Approx((cdf(5.5) - cdf(4.5)) / raw_total).epsilon(1e-9));
    }
    SECTION("step-2 even lattice") {
        CHECK(bin_mass(sol, 0, {2, 0}) == Catch::Approx(2.0 * cdf(1.0)).epsilon(1e-10));
        CHECK(bin_mass(sol, 2, {2, 0}) == Catch::Approx(cdf(3.0) - cdf(1.0)).epsilon(1e-10));
        const auto dist = discretize(sol, {2, 0});
        for (const auto& [x, p] : dist) CHECK(x % 2 == 0);
        double total = 0.0;
        for (const auto& [x, p] : dist) total += p;
        CHECK(total == Catch::Approx(1.0).epsilon(1e-12));
    }
    SECTION("step-2 odd lattice") {
        CHECK(bin_mass(sol, 1, {2, 1}) == Catch::Approx(cdf(2.0)).epsilon(1e-10));
        CHECK(bin_mass(sol, 3, {2, 1}) == Catch::Approx(cdf(4.0) - cdf(2.0)).epsilon(1e-10));
        const auto dist = discretize(sol, {2, 1});
        for (const auto& [x, p] : dist) CHECK(x % 2 == 1);
    }
    SECTION("tail cutoff terminates the lattice early") {
        const auto dist = discretize(sol, {1, 0});
        CHECK(dist.rbegin()->first < 200);  // cumulative 1 - 1e-12 hit long before the cap
        CHECK(dist.size() > 50);
    }
}

TEST_CASE("Discretization is invariant to the internal transform", "[maxent]") {
    // Integrating the preconditioned density over transform-composed bins must
    // give the same lattice distribution as integrating q(x) over [x +- 1/2].
    const auto mu = expo_mixture_moments(3, 0.4, 3.0, 10.0);
    const MaxEntSolution sol = solve_dual({mu, Support::half_line, {}});
    const auto he = sol.basis;
    auto g_over_z = [&](double t) {
        double s = 0.0;
        for (std::size_t k = 1; k < he.size(); ++k) {
            double hv = 0.0;
            for (std::size_t j = he[k].size(); j-- > 0;) hv = hv * t + he[k][j];
            s += sol.lambdas[k - 1] * hv;
        }
        return std::exp(-s - sol.log_normalizer);
    };
    auto to_t = [&](double x) { return (x - sol.shift) / sol.scale; };
    for (std::int64_t x = 0; x <= 40; ++x) {
        const double direct = bin_mass(sol, x, {1, 0});
        const double via_t =
            x == 0 ? 2.0 * simpson(g_over_z, to_t(0.0), to_t(0.5), 2000)
                   : simpson(g_over_z, to_t(x - 0.5), to_t(x + 0.5), 2000);
        CHECK(direct == Catch::Approx(via_t).margin(1e-8));
    }
}

TEST_CASE("Reconstruction round-trips through its moments", "[maxent]") {
    // Discretize an exponential fit, re-measure lattice moments, re-fit:
    // the lattice distribution barely moves. (A tiny mean would not satisfy
    // this: the doubled zero bin then shifts the lattice mean noticeably.)
    const MaxEntSolution first = solve_dual({{1.0, 20.0}, Support::half_line, {}});
    const auto d1 = discretize(first, {1, 0});
    double m1 = 0.0;
    for (const auto& [x, p] : d1) m1 += double(x) * p;
    const MaxEntSolution second = solve_dual({{1.0, m1}, Support::half_line, {}});
    const auto d2 = discretize(second, {1, 0});
    double worst = 0.0;
    for (const auto& [x, p] : d1)
        worst = std::max(worst, std::abs(p - (d2.count(x) ? d2.at(x) : 0.0)));
    CHECK(worst < 5e-3);
}

TEST_CASE("Numeric full-line order-1 constraints are rejected", "[maxent]") {
    MaxEntOptions numeric;
    numeric.force_numeric = true;
    CHECK_THROWS_AS(solve_dual({{1.0, 4.0}, Support::full_line, {}}, numeric),
                    InfeasibleError);
}

TEST_CASE("Reconstruction CSV round-trips", "[maxent]") {
    const auto mu = expo_mixture_moments(3, 0.4, 3.0, 10.0);
    const MaxEntSolution sol = solve_dual({mu, Support::half_line, {}});
    const auto dist = discretize(sol, {1, 0});
    std::ostringstream os;
    dump_reconstruction(sol, dist, os);
    std::istringstream is(os.str());
    const ReconstructionTable tbl = load_reconstruction(is);
    REQUIRE(tbl.probabilities.size() == dist.size());
    for (const auto& [x, p] : dist) CHECK(tbl.probabilities.at(x) == p);
    REQUIRE(tbl.lambdas.size() == sol.lambdas.size());
    for (std::size_t k = 0; k < sol.lambdas.size(); ++k)
        CHECK(tbl.lambdas[k] == sol.lambdas[k]);
    CHECK(tbl.log_normalizer == sol.log_normalizer);
    CHECK(tbl.shift == sol.shift);
    CHECK(tbl.scale == sol.scale);
    CHECK(tbl.grad_norm == sol.grad_norm);
    CHECK(tbl.iterations == sol.iterations);

    SECTION("malformed inputs are rejected") {
        std::istringstream bad1("count;probability\n0,0.5\n");
        CHECK_THROWS_AS(load_reconstruction(bad1), std::runtime_error);
        std::istringstream bad2("count,probability\n0,0.5,1\n");
        CHECK_THROWS_AS(load_reconstruction(bad2), std::runtime_error);
        std::istringstream bad3("count,probability\nzero,0.5\n");
        CHECK_THROWS_AS(load_reconstruction(bad3), std::invalid_argument);
        std::istringstream bad4("");
        CHECK_THROWS_AS(load_reconstruction(bad4), std::runtime_error);
    }
}
