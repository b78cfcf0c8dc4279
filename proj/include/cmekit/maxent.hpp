#pragma once
// Maximum-entropy reconstruction of a one-dimensional distribution on the
// non-negative half-line (or, for testing, the full line) from raw moments
// mu_0..mu_M, followed by discretization to integer molecule counts.
//
// The density has the form q(x) = exp(-sum_k lambda_k f_k(x)) / Z. Working
// directly with monomial features is numerically hopeless for molecule
// counts in the hundreds, so the problem is preconditioned: x is shifted by
// mu_1 and scaled by the standard deviation, and the features are normalized
// probabilists' Hermite polynomials of the standardized variable, which are
// orthonormal under the standard normal weight. The dual
//     Psi(lambda) = ln Z(lambda) + sum_k lambda_k c_k
// (c_k the Hermite-basis moments) is smooth and convex and is minimized by
// BFGS with Armijo backtracking; its gradient is c - E_q[features].

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmekit/errors.hpp"
#include "cmekit/multi_index.hpp"
#include "cmekit/quadrature.hpp"
#include "cmekit/util.hpp"

namespace cmekit {

enum class Support { half_line, full_line };

/// Integer lattice the reconstruction is discretized onto: counts
/// offset, offset+step, ... (step 2 with offset 1 covers an odd-parity chain).
struct LatticeSpec {
    int step = 1;
    int offset = 0;
};

struct MomentConstraints {
    std::vector<double> moments;  // mu_0..mu_M with mu_0 = 1
    Support support = Support::half_line;
    LatticeSpec lattice;

    int order() const { return static_cast<int>(moments.size()) - 1; }
};

struct MaxEntOptions {
    double tol = 1e-8;        // gradient norm target in preconditioned coordinates
    int max_iter = 500;
    bool force_numeric = false;  // skip the analytic M <= 2 fast path
    int node_count = 128;        // Gauss-Hermite skeleton size
    int node_cap = 1024;         // refinement doubling stops here
};

/// Thrown when the dual optimizer runs out of iterations; carries the best
/// iterate so callers can inspect how close it got.
class MaxEntError : public ConvergenceError {
  public:
    MaxEntError(const std::string& msg, double grad_norm, int iters,
                std::vector<double> best)
        : ConvergenceError(msg, grad_norm, iters), best_lambdas(std::move(best)) {}
    std::vector<double> best_lambdas;
};

struct MaxEntSolution {
    int order = 0;
    Support support = Support::half_line;
    std::vector<double> lambdas;  // lambda_1..lambda_M, preconditioned basis
    double log_normalizer = 0.0;  // ln Z of exp(-sum lambda_k he_k(t)) over the t-support
    double shift = 0.0, scale = 1.0;  // t = (x - shift) / scale

    // Column k: monomial coefficients (in t) of the k-th orthonormal basis
    // polynomial; basis_x holds the same polynomials rewritten in x.
    std::vector<std::vector<double>> basis;
    std::vector<std::vector<double>> basis_x;

    // q(x) = exp(-sum_j exponent_x[j] x^j); the normalizer is folded into
    // the constant term, so no separate division is needed.
    std::vector<double> exponent_x;

    double grad_norm = 0.0;
    int iterations = 0;
    int nodes_used = 0;
    bool analytic = false;
    bool projected = false;  // variance was bumped to restore feasibility

    // Upper end of the working support. Infinite for a genuine half-line (or
    // full-line) solution; finite when no integrable half-line density matches
    // the constraints and the problem was re-solved on a compact interval
    // (always flagged in `warnings`). The density is meaningful only below it.
    double support_hi = std::numeric_limits<double>::infinity();
    std::vector<std::string> warnings;

    double density(double x) const {
        double p = 0.0;
        for (std::size_t j = exponent_x.size(); j-- > 0;) p = p * x + exponent_x[j];
        return std::exp(-p);
    }
};

namespace detail {

/// exp(u^2) * erfc(u), accurate over the whole real line (no overflow for
/// u >= 0; large negative u overflows exactly where erfc itself saturates).
inline double erfcx(double u) {
    if (u < 0.0) return 2.0 * std::exp(u * u) - erfcx(-u);
    if (u <= 4.0) return std::exp(u * u) * std::erfc(u);
    // Laplace continued fraction, rapidly convergent for u >= 4.
    double cf = 0.0;
    for (int k = 60; k >= 1; --k) cf = (0.5 * k) / (u + cf);
    return (1.0 / std::sqrt(std::acos(-1.0))) / (u + cf);
}

}  // namespace detail

/// Normalized probabilists' Hermite polynomials he_k / sqrt(k!), k = 0..order,
/// as monomial coefficient vectors (orthonormal under the N(0,1) weight).
inline std::vector<std::vector<double>> hermite_basis(int order) {
    std::vector<std::vector<double>> he(order + 1);
    he[0] = {1.0};
    if (order >= 1) he[1] = {0.0, 1.0};
    for (int k = 2; k <= order; ++k) {
        he[k].assign(k + 1, 0.0);
        for (int j = 0; j <= k - 1; ++j) he[k][j + 1] += he[k - 1][j];        // t * he_{k-1}
        for (int j = 0; j < k - 1; ++j) he[k][j] -= (k - 1.0) * he[k - 2][j];  // -(k-1) he_{k-2}
    }
    double fact = 1.0;
    for (int k = 1; k <= order; ++k) {
        fact *= k;
        const double norm = 1.0 / std::sqrt(fact);
        for (double& c : he[k]) c *= norm;
    }
    return he;
}

/// Throws on malformed constraints; returns realizability warnings.
inline std::vector<std::string> validate_constraints(const MomentConstraints& c) {
    if (c.moments.size() < 2)
        throw std::invalid_argument("maxent: need at least mu_0 and mu_1");
    if (std::abs(c.moments[0] - 1.0) > 1e-9)
        throw std::invalid_argument("maxent: mu_0 must be 1, got " + format_double(c.moments[0]));
    for (double m : c.moments)
        if (!std::isfinite(m)) throw std::invalid_argument("maxent: non-finite moment");
    if (c.lattice.step != 1 && c.lattice.step != 2)
        throw std::invalid_argument("maxent: lattice step must be 1 or 2");
    if (c.lattice.offset < 0 || c.lattice.offset >= c.lattice.step)
        throw std::invalid_argument("maxent: lattice offset must be in [0, step)");
    std::vector<std::string> warnings;
    if (c.order() >= 2 && c.moments[2] < c.moments[1] * c.moments[1])
        warnings.push_back("unrealizable input moments: mu_2 < mu_1^2 (variance " +
                           format_double(c.moments[2] - c.moments[1] * c.moments[1]) + ")");
    return warnings;
}

struct PreconditionedProblem {
    int order = 0;
    Support support = Support::half_line;
    double shift = 0.0, scale = 1.0;
    std::vector<double> targets;             // c_k = E[he_k(t)], k = 1..M
    std::vector<std::vector<double>> basis;  // he_0..he_M coefficients in t
};

/// Standardize the moment sequence: shift by the mean, scale by the standard
/// deviation (by max(mu_1, 1) when only the mean is known), and express the
/// constraints in the orthonormal Hermite basis of the standardized variable.
inline PreconditionedProblem precondition(const MomentConstraints& c) {
    validate_constraints(c);
    const int M = c.order();
    PreconditionedProblem p;
    p.order = M;
    p.support = c.support;
    p.shift = c.moments[1];
    if (M == 1) {
        p.scale = std::max(c.moments[1], 1.0);
    } else {
        const double var = c.moments[2] - c.moments[1] * c.moments[1];
        if (!(var > 0.0))
            throw InfeasibleError("maxent: zero or negative variance (" + format_double(var) +
                                  ") in the input moments");
        p.scale = std::sqrt(var);
    }
    // Raw moments of t = (x - shift)/scale by exact binomial expansion.
    std::vector<double> mt(M + 1, 0.0);
    mt[0] = 1.0;
    for (int j = 1; j <= M; ++j) {
        KahanSum s;
        for (int i = 0; i <= j; ++i)
            s.add(binomial(j, i) * std::pow(-p.shift, j - i) * c.moments[i]);
        mt[j] = s.value() / std::pow(p.scale, j);
    }
    p.basis = hermite_basis(M);
    p.targets.assign(M, 0.0);
    for (int k = 1; k <= M; ++k) {
        KahanSum s;
        for (int j = 0; j <= k; ++j) s.add(p.basis[k][j] * mt[j]);
        p.targets[k - 1] = s.value();
    }
    return p;
}

inline QuadratureRule build_rule(const PreconditionedProblem& p, int node_count) {
    return p.support == Support::half_line
               ? build_halfline_rule(p.shift, p.scale, node_count)
               : build_fullline_rule(p.shift, p.scale, node_count);
}

struct DualEval {
    double value = 0.0;
    double log_z = 0.0;
    std::vector<double> gradient;
    bool feasible = false;
};

/// Dual value Psi = ln Z + lambda . c and gradient c - E_q[features]. A point
/// whose density fails to decay inside the rule's span (or overflows) is
/// reported infeasible so the line search can backtrack.
inline DualEval dual_and_gradient(const std::vector<double>& lambdas,
                                  const PreconditionedProblem& p, const QuadratureRule& rule) {
    const int M = p.order;
    if (static_cast<int>(lambdas.size()) != M)
        throw std::invalid_argument("dual_and_gradient: lambda size mismatch");
    DualEval out;
    out.gradient.assign(M, 0.0);

    const std::size_t n = rule.nodes.size();
    std::vector<double> s(n, 0.0);
    std::vector<double> feat(n * M);
    std::vector<double> tp(M + 1);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = (rule.nodes[i] - p.shift) / p.scale;
        tp[0] = 1.0;
        for (int j = 1; j <= M; ++j) tp[j] = tp[j - 1] * t;
        double e = 0.0;
        for (int k = 1; k <= M; ++k) {
            double hv = 0.0;
            for (int j = 0; j <= k; ++j) hv += p.basis[k][j] * tp[j];
            feat[i * M + (k - 1)] = hv;
            e += lambdas[k - 1] * hv;
        }
        s[i] = e;
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, -s[i]);
    if (!std::isfinite(mx)) return out;  // lambda overflowed: infeasible

    KahanSum z, tail_lo, tail_hi;
    std::vector<KahanSum> ef(M);
    for (std::size_t i = 0; i < n; ++i) {
        const double g = rule.weights[i] * std::exp(-s[i] - mx);
        z.add(g);
        if (i < rule.guard_lo) tail_lo.add(g);
        if (i >= rule.guard_hi) tail_hi.add(g);
        for (int k = 0; k < M; ++k) ef[k].add(g * feat[i * M + k]);
    }
    const double Z = z.value();
    if (!std::isfinite(Z) || Z <= 0.0) return out;
    if (tail_hi.value() > 1e-12 * Z || tail_lo.value() > 1e-12 * Z)
        return out;  // mass escapes the rule's span: not integrable at this resolution

    out.log_z = mx + std::log(Z);
    KahanSum val;
    val.add(out.log_z);
    for (int k = 0; k < M; ++k) {
        out.gradient[k] = p.targets[k] - ef[k].value() / Z;
        val.add(lambdas[k] * p.targets[k]);
    }
    out.value = val.value();
    out.feasible = true;
    return out;
}

namespace detail {

inline double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

/// Rewrite a polynomial in t as one in x, where t = (x - shift)/scale.
inline std::vector<double> poly_t_to_x(const std::vector<double>& pt, double shift, double scale) {
    std::vector<double> px(pt.size(), 0.0);
    for (std::size_t j = 0; j < pt.size(); ++j) {
        const double cj = pt[j] / std::pow(scale, double(j));
        for (std::size_t i = 0; i <= j; ++i)
            px[i] += cj * binomial(int(j), int(i)) * std::pow(-shift, double(j - i));
    }
    return px;
}

/// Fill the derived fields of a solution from lambdas/log_normalizer/basis.
inline void finish_solution(MaxEntSolution& sol) {
    const int M = sol.order;
    sol.basis_x.assign(M + 1, {});
    for (int k = 0; k <= M; ++k)
        sol.basis_x[k] = poly_t_to_x(sol.basis[k], sol.shift, sol.scale);
    std::vector<double> pt(M + 1, 0.0);
    for (int k = 1; k <= M; ++k)
        for (int j = 0; j <= k; ++j) pt[j] += sol.lambdas[k - 1] * sol.basis[k][j];
    sol.exponent_x = poly_t_to_x(pt, sol.shift, sol.scale);
    sol.exponent_x[0] += sol.log_normalizer + std::log(sol.scale);
}

/// Inner BFGS minimization of the dual at a fixed quadrature rule.
inline void bfgs_minimize(std::vector<double>& lam, const PreconditionedProblem& p,
                          const QuadratureRule& rule, const MaxEntOptions& opt,
                          double& grad_norm, double& log_z, int& iters) {
    const int M = p.order;
    DualEval cur = dual_and_gradient(lam, p, rule);
    if (!cur.feasible)
        throw InfeasibleError("maxent: infeasible starting point for the dual optimization");

    std::vector<double> H(M * M, 0.0);  // inverse-Hessian approximation
    for (int i = 0; i < M; ++i) H[i * M + i] = 1.0;
    std::vector<double> d(M), lam_new(M), sv(M), yv(M), Hy(M);

    for (iters = 0; iters < opt.max_iter; ++iters) {
        grad_norm = norm2(cur.gradient);
        log_z = cur.log_z;
        if (grad_norm <= opt.tol) return;

        double gd = 0.0;
        for (int i = 0; i < M; ++i) {
            double acc = 0.0;
            for (int j = 0; j < M; ++j) acc -= H[i * M + j] * cur.gradient[j];
            d[i] = acc;
            gd += acc * cur.gradient[i];
        }
        if (!(gd < 0.0)) {  // not a descent direction: reset to steepest descent
            for (int i = 0; i < M; ++i) H[i * M + i] = 1.0;
            for (int i = 0; i < M; ++i)
                for (int j = 0; j < M; ++j)
                    if (i != j) H[i * M + j] = 0.0;
            gd = 0.0;
            for (int i = 0; i < M; ++i) {
                d[i] = -cur.gradient[i];
                gd += d[i] * cur.gradient[i];
            }
        }

        double alpha = 1.0;
        DualEval next;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            for (int i = 0; i < M; ++i) lam_new[i] = lam[i] + alpha * d[i];
            next = dual_and_gradient(lam_new, p, rule);
            if (next.feasible && next.value <= cur.value + 1e-4 * alpha * gd) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted)
            throw MaxEntError("maxent: line search stalled at gradient norm " +
                                  format_double(grad_norm),
                              grad_norm, iters, lam);

        double ys = 0.0;
        for (int i = 0; i < M; ++i) {
            sv[i] = lam_new[i] - lam[i];
            yv[i] = next.gradient[i] - cur.gradient[i];
            ys += yv[i] * sv[i];
        }
        if (ys > 1e-14) {  // curvature condition: apply the BFGS inverse update
            const double rho = 1.0 / ys;
            double yHy = 0.0;
            for (int i = 0; i < M; ++i) {
                double acc = 0.0;
                for (int j = 0; j < M; ++j) acc += H[i * M + j] * yv[j];
                Hy[i] = acc;
                yHy += yv[i] * acc;
            }
            for (int i = 0; i < M; ++i)
                for (int j = 0; j < M; ++j)
                    H[i * M + j] += (1.0 + rho * yHy) * rho * sv[i] * sv[j] -
                                    rho * (sv[i] * Hy[j] + Hy[i] * sv[j]);
        }
        lam.swap(lam_new);
        cur = next;
    }
    grad_norm = norm2(cur.gradient);
    log_z = cur.log_z;
    throw MaxEntError("maxent: no convergence in " + std::to_string(opt.max_iter) +
                          " iterations (gradient norm " + format_double(grad_norm) + ")",
                      grad_norm, iters, lam);
}

/// ln of int_{t0}^{inf} exp(-(c2 t^2 + c1 t)) dt for c2 > 0 (t0 = -inf for the
/// full line), via the scaled complementary error function.
inline double log_gaussian_integral(double c2, double c1, double t0, bool half_line) {
    const double pi = std::acos(-1.0);
    const double body = 0.25 * c1 * c1 / c2 + 0.5 * std::log(pi / c2) - std::log(2.0);
    if (!half_line) return body + std::log(2.0);
    const double u = std::sqrt(c2) * (t0 + 0.5 * c1 / c2);
    // Far left of the bulk the truncation is negligible and erfcx overflows.
    if (u < -6.0) return body + std::log(2.0 - std::erfc(-u));
    // erfc(u) = erfcx(u) e^{-u^2}; keep everything in logs for stability.
    return body + std::log(erfcx(u)) - u * u;
}

}  // namespace detail

/// Closed-form solutions for M <= 2: exponential (M=1, half-line), normal
/// (M=2, full line), and a moment-matched truncated normal (M=2, half-line).
inline MaxEntSolution analytic_maxent(const MomentConstraints& c) {
    std::vector<std::string> warnings = validate_constraints(c);
    const int M = c.order();
    if (M > 2) throw std::invalid_argument("analytic_maxent: only M <= 2 has a closed form");

    MaxEntSolution sol;
    sol.order = M;
    sol.support = c.support;
    sol.analytic = true;
    sol.warnings = std::move(warnings);
    sol.basis = hermite_basis(M);
    const double mu1 = c.moments[1];

    if (M == 1) {
        if (c.support != Support::half_line)
            throw InfeasibleError("analytic_maxent: M=1 needs a half-line support");
        if (!(mu1 > 0.0))
            throw InfeasibleError("analytic_maxent: the mean must be positive, got " +
                                  format_double(mu1));
        sol.shift = mu1;
        sol.scale = std::max(mu1, 1.0);
        const double l1 = sol.scale / mu1;  // exponent x/mu1 expressed in t
        sol.lambdas = {l1};
        const double t0 = -sol.shift / sol.scale;
        sol.log_normalizer = -l1 * t0 - std::log(l1);  // ln int_{t0}^inf e^{-l1 t} dt
        detail::finish_solution(sol);
        return sol;
    }

    const double mu2 = c.moments[2];
    const double var = mu2 - mu1 * mu1;
    double a = mu1, b = 0.0;  // underlying normal parameters
    if (c.support == Support::full_line) {
        if (!(var > 0.0))
            throw InfeasibleError("analytic_maxent: zero or negative variance");
        b = std::sqrt(var);
    } else {
        // Truncated normal on [0, inf): solve for (a, b) so that the truncated
        // moments match (mu_1, mu_2); the plain normal parameters are only
        // correct when the truncation is negligible.
        if (!(var > 0.0))
            throw InfeasibleError(
                "analytic_maxent: no truncated normal matches mu_2 <= mu_1^2");
        if (!(mu1 > 0.0))
            throw InfeasibleError("analytic_maxent: the mean must be positive");
        a = mu1;
        b = std::sqrt(var);
        const double pi = std::acos(-1.0);
        const double scale_ref = std::max({1.0, mu1, std::sqrt(mu2)});
        double f1 = 0.0, f2 = 0.0;
        auto residuals = [&](double aa, double bb, double& r1, double& r2, double& lam,
                             double& dlam) {
            const double alpha = -aa / bb;
            lam = std::sqrt(2.0 / pi) / detail::erfcx(alpha / std::sqrt(2.0));
            dlam = lam * (lam - alpha);
            r1 = aa + bb * lam - mu1;
            r2 = aa * aa + aa * bb * lam + bb * bb - mu2;
        };
        double lam = 0.0, dlam = 0.0;
        residuals(a, b, f1, f2, lam, dlam);
        bool converged = false;
        for (int it = 0; it < 200; ++it) {
            if (std::max(std::abs(f1) / scale_ref, std::abs(f2) / (scale_ref * scale_ref)) <=
                1e-12) {
                converged = true;
                break;
            }
            const double j11 = 1.0 - dlam;
            const double j12 = lam + (a / b) * dlam;
            const double j21 = 2.0 * a + b * lam - a * dlam;
            const double j22 = a * lam + (a * a / b) * dlam + 2.0 * b;
            const double det = j11 * j22 - j12 * j21;
            if (det == 0.0 || !std::isfinite(det))
                throw ConvergenceError("analytic_maxent: singular Jacobian in the "
                                       "truncated-normal solve",
                                       std::abs(f1) + std::abs(f2), it);
            double da = (-f1 * j22 + f2 * j12) / det;
            double db = (-f2 * j11 + f1 * j21) / det;
            double step = 1.0;
            const double r0 = f1 * f1 / (scale_ref * scale_ref) +
                              f2 * f2 / std::pow(scale_ref, 4.0);
            for (int half = 0; half < 50; ++half) {
                const double an = a + step * da, bn = b + step * db;
                if (bn > 1e-12 * scale_ref) {
                    double g1, g2, l2, dl2;
                    residuals(an, bn, g1, g2, l2, dl2);
                    const double r1 = g1 * g1 / (scale_ref * scale_ref) +
                                      g2 * g2 / std::pow(scale_ref, 4.0);
                    if (r1 < r0 || r0 == 0.0) {
                        a = an;
                        b = bn;
                        f1 = g1;
                        f2 = g2;
                        lam = l2;
                        dlam = dl2;
                        break;
                    }
                }
                step *= 0.5;
                if (half == 49)
                    throw ConvergenceError(
                        "analytic_maxent: truncated-normal Newton stalled",
                        std::abs(f1) + std::abs(f2), it);
            }
        }
        if (!converged)
            throw ConvergenceError("analytic_maxent: truncated-normal solve did not converge",
                                   std::abs(f1) + std::abs(f2), 200);
    }

    // Express the exponent (x-a)^2 / (2 b^2) in the preconditioned basis.
    sol.shift = mu1;
    sol.scale = std::sqrt(var);
    const double p2 = sol.scale * sol.scale / (2.0 * b * b);
    const double p1 = sol.scale * (sol.shift - a) / (b * b);
    sol.lambdas = {p1, std::sqrt(2.0) * p2};
    // g(t) = exp(-(p2 t^2 + p1 t) + p2), so Z = e^{p2} * Gaussian integral.
    const double t0 = -sol.shift / sol.scale;
    sol.log_normalizer =
        p2 + detail::log_gaussian_integral(p2, p1, t0, c.support == Support::half_line);
    detail::finish_solution(sol);
    return sol;
}

/// Full reconstruction: analytic fast path for M <= 2, otherwise BFGS on the
/// preconditioned dual with automatic quadrature refinement. Unrealizable
/// variance is projected up once (flagged) before giving up.
inline MaxEntSolution solve_dual(const MomentConstraints& c, const MaxEntOptions& opt = {}) {
    std::vector<std::string> warnings = validate_constraints(c);
    const int M = c.order();

    auto attempt = [&](const MomentConstraints& cc) -> MaxEntSolution {
        if (M <= 2 && !opt.force_numeric) {
            MaxEntSolution sol = analytic_maxent(cc);
            sol.nodes_used = 0;
            sol.warnings.clear();  // re-attached below for the original input
            return sol;
        }
        PreconditionedProblem p = precondition(cc);
        std::vector<double> lam(M, 0.0);
        if (M >= 2)
            lam[1] = 1.0 / std::sqrt(2.0);  // start at the standard normal
        else
            lam[0] = p.scale / cc.moments[1];  // start at the exponential optimum

        MaxEntSolution sol;
        sol.order = M;
        sol.support = cc.support;
        sol.shift = p.shift;
        sol.scale = p.scale;
        sol.basis = p.basis;

        // Minimize on the given rule family, then keep doubling the skeleton
        // until the normalizer is quadrature-converged. Returns the x-space
        // ln Z (the rule's weights carry the Jacobian of the transform).
        int n = opt.node_count;
        auto refine = [&](auto make_rule, std::vector<double>& lam_io) -> double {
            QuadratureRule rule = make_rule(n);
            double log_z_x = 0.0;
            int used = 0;
            detail::bfgs_minimize(lam_io, p, rule, opt, sol.grad_norm, log_z_x, used);
            sol.iterations += used;
            while (2 * n <= opt.node_cap) {
                QuadratureRule finer = make_rule(2 * n);
                const DualEval check = dual_and_gradient(lam_io, p, finer);
                if (check.feasible && std::abs(check.log_z - log_z_x) < 1e-10) break;
                n *= 2;
                rule = std::move(finer);
                int extra = 0;
                detail::bfgs_minimize(lam_io, p, rule, opt, sol.grad_norm, log_z_x, extra);
                sol.iterations += extra;
            }
            return log_z_x;
        };

        double log_z_x = 0.0;
        try {
            log_z_x = refine([&](int k) { return build_rule(p, k); }, lam);
        } catch (const MaxEntError& err) {
            // The dual's infimum is not attained by any integrable half-line
            // density (the optimizer presses against the integrability
            // boundary). The constraints still identify a density on a
            // compact interval, which is what a lattice distribution's
            // moments describe anyway: re-solve on the skeleton's own span
            // and say so.
            if (cc.support != Support::half_line) throw;
            if (!err.best_lambdas.empty()) lam = err.best_lambdas;
            const double t_cap =
                (build_compact_rule(p.shift, p.scale, n).span_hi - p.shift) / p.scale;
            log_z_x = refine(
                [&p, t_cap](int k) { return build_compact_rule(p.shift, p.scale, k, t_cap); },
                lam);
            sol.support_hi = p.shift + p.scale * t_cap;
            sol.warnings.push_back(
                "no integrable half-line density matches these moments; solved on the "
                "compact support [0, " +
                format_double(sol.support_hi) + "] instead");
        }
        sol.nodes_used = n;
        sol.log_normalizer = log_z_x - std::log(p.scale);
        sol.lambdas = std::move(lam);
        detail::finish_solution(sol);
        return sol;
    };

    MaxEntSolution sol;
    try {
        sol = attempt(c);
    } catch (const InfeasibleError&) {
        if (M < 2) throw;
        MomentConstraints proj = c;
        const double floor2 = c.moments[1] * c.moments[1] * (1.0 + 1e-9);
        if (!(proj.moments[2] < floor2)) throw;  // variance was fine; a real infeasibility
        proj.moments[2] = floor2;
        sol = attempt(proj);
        sol.projected = true;
        sol.warnings.push_back("variance projected up to mu_1^2 (1 + 1e-9) to restore "
                               "feasibility");
    }
    sol.warnings.insert(sol.warnings.end(), warnings.begin(), warnings.end());
    return sol;
}

// ---------------------------------------------------------------------------
// Discretization to integer counts.

namespace detail {

template <typename F>
double gl_panel_integral(F&& f, double lo, double hi) {
    if (!(hi > lo)) return 0.0;
    const std::vector<double>& gx = panel_gl_nodes();
    const std::vector<double>& gw = panel_gl_weights();
    const double c = 0.5 * (lo + hi), h = 0.5 * (hi - lo);
    KahanSum s;
    for (int i = 0; i < kPanelOrder; ++i) s.add(gw[i] * f(c + h * gx[i]));
    return h * s.value();
}

/// Mass of the reconstructed density on [lo, hi]. The density varies on the
/// preconditioned scale, so the interval is paneled in those units (a very
/// narrow density would slip between the nodes of one wide panel) and clipped
/// to the window that can carry standardized mass.
inline double segment_mass(const MaxEntSolution& sol, double lo, double hi) {
    hi = std::min(hi, sol.support_hi);
    if (!(hi > lo)) return 0.0;
    const double tlo = std::max((lo - sol.shift) / sol.scale, -52.0);
    const double thi = std::min((hi - sol.shift) / sol.scale, 52.0);
    if (!(thi > tlo)) return 0.0;
    const int pieces = std::max(1, static_cast<int>(std::ceil((thi - tlo) / 2.0)));
    KahanSum s;
    auto q = [&sol](double x) { return sol.density(x); };
    for (int i = 0; i < pieces; ++i) {
        const double a = sol.shift + sol.scale * (tlo + (thi - tlo) * i / pieces);
        const double b = sol.shift + sol.scale * (tlo + (thi - tlo) * (i + 1) / pieces);
        s.add(gl_panel_integral(q, a, b));
    }
    return s.value();
}

}  // namespace detail

/// Raw mass assigned to lattice point x: the density integrated over the bin
/// [x - step/2, x + step/2] (clipped at 0), doubled over [0, step/2] at x = 0.
inline double bin_mass(const MaxEntSolution& sol, std::int64_t x, const LatticeSpec& lattice) {
    const double half = 0.5 * lattice.step;
    if (x == 0) return 2.0 * detail::segment_mass(sol, 0.0, half);
    return detail::segment_mass(sol, std::max(0.0, double(x) - half), double(x) + half);
}

/// Eq.-(10)-style discretization onto the lattice, renormalized to sum to 1.
/// Bins are emitted until the cumulative raw mass reaches 1 - 1e-12 or the
/// count cap (default 100 mu_1 + 1000) is hit.
inline std::map<std::int64_t, double> discretize(const MaxEntSolution& sol,
                                                 const LatticeSpec& lattice,
                                                 std::int64_t cap = -1) {
    if (lattice.step != 1 && lattice.step != 2)
        throw std::invalid_argument("discretize: lattice step must be 1 or 2");
    if (lattice.offset < 0 || lattice.offset >= lattice.step)
        throw std::invalid_argument("discretize: lattice offset must be in [0, step)");
    if (cap < 0) cap = static_cast<std::int64_t>(100.0 * std::max(sol.shift, 0.0) + 1000.0);

    std::map<std::int64_t, double> out;
    KahanSum total, covered;  // bin masses vs. plain density mass up to the bin edge
    const double half = 0.5 * lattice.step;
    for (std::int64_t x = lattice.offset; x <= cap; x += lattice.step) {
        const double m = bin_mass(sol, x, lattice);
        out[x] = m;
        total.add(m);
        covered.add(detail::segment_mass(sol, std::max(0.0, double(x) - half),
                                         double(x) + half));
        if (covered.value() >= 1.0 - 1e-12) break;  // the upper tail is negligible
        if (double(x) + half >= sol.support_hi) break;  // working support exhausted
    }
    const double z = total.value();
    if (!(z > 0.0)) throw NumericalError("discretize: reconstructed density has no mass on the lattice");
    for (auto& [x, pr] : out) pr /= z;
    return out;
}

// ---------------------------------------------------------------------------
// Text format.

/// CSV dump: diagnostics comment, then "count,probability" rows.
inline void dump_reconstruction(const MaxEntSolution& sol,
                                const std::map<std::int64_t, double>& dist, std::ostream& os) {
    os << "# lambdas=";
    for (std::size_t k = 0; k < sol.lambdas.size(); ++k) {
        if (k) os << ':';
        os << format_double(sol.lambdas[k]);
    }
    os << ", lnZ=" << format_double(sol.log_normalizer) << ", transform=("
       << format_double(sol.shift) << ',' << format_double(sol.scale)
       << "), grad_norm=" << format_double(sol.grad_norm) << ", iters=" << sol.iterations
       << '\n';
    os << "count,probability\n";
    for (const auto& [x, pr] : dist) os << x << ',' << format_double(pr) << '\n';
}

struct ReconstructionTable {
    std::map<std::int64_t, double> probabilities;
    std::vector<double> lambdas;
    double log_normalizer = 0.0;
    double shift = 0.0, scale = 1.0;
    double grad_norm = 0.0;
    int iterations = 0;
};

inline ReconstructionTable load_reconstruction(std::istream& is) {
    ReconstructionTable tbl;
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string t{trim(line)};
        if (t.empty()) continue;
        if (t[0] == '#') {
            const auto grab = [&t](const std::string& key) -> std::string {
                const std::size_t at = t.find(key);
                if (at == std::string::npos) return {};
                std::size_t end = t.find_first_of(",)", at + key.size());
                if (end == std::string::npos) end = t.size();
                return t.substr(at + key.size(), end - at - key.size());
            };
            const std::string lams = grab("lambdas=");
            if (!lams.empty())
                for (std::string_view part : split(lams, ':'))
                    tbl.lambdas.push_back(parse_double_strict(trim(part), "lambda"));
            if (const std::string v = grab("lnZ="); !v.empty())
                tbl.log_normalizer = parse_double_strict(v, "lnZ");
            if (const std::string v = grab("transform=("); !v.empty())
                tbl.shift = parse_double_strict(v, "transform shift");
            if (const std::size_t at = t.find("transform=("); at != std::string::npos) {
                const std::size_t comma = t.find(',', at);
                const std::size_t close = t.find(')', at);
                if (comma != std::string::npos && close != std::string::npos && comma < close)
                    tbl.scale = parse_double_strict(
                        trim(std::string_view(t).substr(comma + 1, close - comma - 1)),
                        "transform scale");
            }
            if (const std::string v = grab("grad_norm="); !v.empty())
                tbl.grad_norm = parse_double_strict(v, "grad_norm");
            if (const std::string v = grab("iters="); !v.empty())
                tbl.iterations = static_cast<int>(parse_int_strict(v, "iters"));
            continue;
        }
        if (!header_seen) {
            if (t != "count,probability")
                throw std::runtime_error("load_reconstruction: line " + std::to_string(lineno) +
                                         ": expected 'count,probability' header, got '" + t +
                                         "'");
            header_seen = true;
            continue;
        }
        const auto cols = split(t, ',');
        if (cols.size() != 2)
            throw std::runtime_error("load_reconstruction: line " + std::to_string(lineno) +
                                     ": expected 2 columns, got " + std::to_string(cols.size()));
        const std::int64_t x = parse_int_strict(trim(cols[0]), "reconstruction count");
        tbl.probabilities[x] = parse_double_strict(trim(cols[1]), "reconstruction probability");
    }
    if (!header_seen)
        throw std::runtime_error("load_reconstruction: missing 'count,probability' header");
    return tbl;
}

}  // namespace cmekit
