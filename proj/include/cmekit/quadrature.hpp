#pragma once
// Quadrature for maximum-entropy densities: composite rules whose panel
// skeleton is the set of Gauss-Hermite nodes under an affine preconditioning
// transform. Nodes mapped below 0 are dropped for the half-line variant, the
// gap down to 0 becomes its own panel, and geometric tail panels extend the
// span so that exp(polynomial) integrands are covered to well below 1e-10.
// Each panel carries a fixed-order Gauss-Legendre rule (panels wider than 2
// in preconditioned units are subdivided), so the assembled rule is exact to
// machine precision for smooth integrands over its span.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "cmekit/util.hpp"

namespace cmekit {

struct QuadratureRule {
    std::vector<double> nodes;    // original coordinates, ascending
    std::vector<double> weights;  // all positive
    int skeleton_nodes = 0;       // Gauss-Hermite node count the rule was built from
    double span_lo = 0.0, span_hi = 0.0;  // covered interval in original coordinates
    std::size_t guard_lo = 0;  // points in the lowest outermost panel (0 at a support edge)
    std::size_t guard_hi = 0;  // index where the highest outermost panel begins

    template <typename F>
    double integrate(F&& f) const {
        KahanSum s;
        for (std::size_t i = 0; i < nodes.size(); ++i) s.add(weights[i] * f(nodes[i]));
        return s.value();
    }
};

namespace detail {

/// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration on P_n.
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
    x.assign(n, 0.0);
    w.assign(n, 0.0);
    const double pi = std::acos(-1.0);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double z = std::cos(pi * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = z;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            pp = n * (z * p1 - p0) / (z * z - 1.0);
            const double dz = p1 / pp;
            z -= dz;
            if (std::abs(dz) < 1e-15) break;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = w[n - 1 - i] = 2.0 / ((1.0 - z * z) * pp * pp);
    }
}

/// Eigenvalues of a symmetric tridiagonal matrix (QL with implicit shifts),
/// returned ascending. `d` is the diagonal, `e` the subdiagonal (e[0] unused
/// conceptually; passed with e.size() == d.size(), e.back() scratch).
inline std::vector<double> tridiagonal_eigenvalues(std::vector<double> d, std::vector<double> e) {
    const int n = static_cast<int>(d.size());
    if (n == 0) return d;
    // Shift the subdiagonal down so e[i] couples d[i] and d[i+1].
    e.push_back(0.0);
    for (int l = 0; l < n; ++l) {
        int iter = 0;
        int m;
        do {
            for (m = l; m < n - 1; ++m) {
                const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
                if (std::abs(e[m]) <= 1e-300 + 2.3e-16 * dd) break;
            }
            if (m != l) {
                if (iter++ == 64)
                    throw std::runtime_error("tridiagonal_eigenvalues: QL failed to converge");
                double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                double r = std::hypot(g, 1.0);
                g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
                double s = 1.0, c = 1.0, p = 0.0;
                int i;
                for (i = m - 1; i >= l; --i) {
                    double f = s * e[i];
                    const double b = c * e[i];
                    r = std::hypot(f, g);
                    e[i + 1] = r;
                    if (r == 0.0) {
                        d[i + 1] -= p;
                        e[m] = 0.0;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[i + 1] - p;
                    r = (d[i] - g) * s + 2.0 * c * b;
                    p = s * r;
                    d[i + 1] = g + p;
                    g = c * r - b;
                }
                if (r == 0.0 && i >= l) continue;
                d[l] -= p;
                e[l] = g;
                e[m] = 0.0;
            }
        } while (m != l);
    }
    std::sort(d.begin(), d.end());
    return d;
}

/// Gauss-Hermite node positions (weight e^{-t^2}), ascending. Only the nodes
/// are needed: they serve as a panel skeleton, not as a weighted rule.
inline std::vector<double> hermite_nodes(int n) {
    std::vector<double> diag(n, 0.0), off(n, 0.0);
    for (int k = 1; k < n; ++k) off[k - 1] = std::sqrt(k / 2.0);
    return tridiagonal_eigenvalues(std::move(diag), std::move(off));
}

constexpr int kPanelOrder = 16;
constexpr double kMaxPanelWidth = 2.0;  // in preconditioned units

inline const std::vector<double>& panel_gl_nodes() {
    static const std::vector<double> x = [] {
        std::vector<double> gx, gw;
        gauss_legendre(kPanelOrder, gx, gw);
        return gx;
    }();
    return x;
}
inline const std::vector<double>& panel_gl_weights() {
    static const std::vector<double> w = [] {
        std::vector<double> gx, gw;
        gauss_legendre(kPanelOrder, gx, gw);
        return gw;
    }();
    return w;
}

/// Append GL panels covering [lo, hi] (t-space), subdividing wide intervals.
inline void append_panels(std::vector<double>& tn, std::vector<double>& tw, double lo, double hi) {
    if (!(hi > lo)) return;
    const int pieces = std::max(1, static_cast<int>(std::ceil((hi - lo) / kMaxPanelWidth)));
    const std::vector<double>& gx = panel_gl_nodes();
    const std::vector<double>& gw = panel_gl_weights();
    for (int p = 0; p < pieces; ++p) {
        const double a = lo + (hi - lo) * p / pieces;
        const double b = lo + (hi - lo) * (p + 1) / pieces;
        const double c = 0.5 * (a + b), h = 0.5 * (b - a);
        for (int i = 0; i < kPanelOrder; ++i) {
            tn.push_back(c + h * gx[i]);
            tw.push_back(h * gw[i]);
        }
    }
}

inline QuadratureRule assemble_rule(const std::vector<double>& boundaries, double shift,
                                    double scale, int skeleton) {
    std::vector<double> tn, tw;
    std::size_t guard_hi_t = 0;
    for (std::size_t b = 0; b + 1 < boundaries.size(); ++b) {
        if (b + 2 == boundaries.size()) guard_hi_t = tn.size();
        append_panels(tn, tw, boundaries[b], boundaries[b + 1]);
    }
    QuadratureRule rule;
    rule.skeleton_nodes = skeleton;
    rule.guard_hi = guard_hi_t;
    rule.nodes.reserve(tn.size());
    rule.weights.reserve(tn.size());
    for (std::size_t i = 0; i < tn.size(); ++i) {
        rule.nodes.push_back(shift + scale * tn[i]);
        rule.weights.push_back(scale * tw[i]);
    }
    rule.span_lo = shift + scale * boundaries.front();
    rule.span_hi = shift + scale * boundaries.back();
    return rule;
}

/// Tail panel boundaries from `from` (exclusive) up to at least `to`, width
/// growing geometrically from `w0` but capped by the panel subdivider.
inline void extend_boundaries(std::vector<double>& bounds, double from, double to, double w0) {
    double t = from, w = std::max(w0, 0.25);
    while (t < to) {
        w = std::min(w * 1.5, 8.0);
        t = std::min(t + w, to);
        bounds.push_back(t);
    }
}

}  // namespace detail

/// Composite rule for integrals over [0, inf) of smooth, eventually-decaying
/// integrands, built on the Gauss-Hermite skeleton for x = shift + scale * t.
inline QuadratureRule build_halfline_rule(double shift, double scale, int node_count = 128) {
    if (node_count < 2) throw std::invalid_argument("build_halfline_rule: need >= 2 nodes");
    if (!(scale > 0.0)) throw std::invalid_argument("build_halfline_rule: scale must be > 0");
    const std::vector<double> t = detail::hermite_nodes(node_count);
    const double t0 = -shift / scale;  // x = 0 in preconditioned coordinates
    const double t_max = t.back();
    const double t_end = std::max({2.0 * std::abs(t_max), t0 + 60.0, 60.0});

    std::vector<double> bounds{t0};
    for (double ti : t)
        if (ti > t0 + 1e-12 * (1.0 + std::abs(t0))) bounds.push_back(ti);
    const double last_gap = bounds.size() >= 2 ? bounds.back() - bounds[bounds.size() - 2] : 1.0;
    detail::extend_boundaries(bounds, bounds.back(), t_end, last_gap);
    QuadratureRule rule = detail::assemble_rule(bounds, shift, scale, node_count);
    rule.guard_lo = 0;  // the lower edge is the support boundary, not a truncation
    return rule;
}

/// Rule over the compact interval [0, shift + scale * t_hi] only: no tail
/// extension and no truncation guards, so every exponent is integrable. Used
/// as the working support when the half-line problem has no integrable
/// solution (a lattice distribution's effective support is finite anyway).
/// t_hi defaults to the skeleton's own extent.
inline QuadratureRule build_compact_rule(double shift, double scale, int node_count = 128,
                                         double t_hi = std::numeric_limits<double>::infinity()) {
    if (node_count < 2) throw std::invalid_argument("build_compact_rule: need >= 2 nodes");
    if (!(scale > 0.0)) throw std::invalid_argument("build_compact_rule: scale must be > 0");
    const std::vector<double> t = detail::hermite_nodes(node_count);
    const double t0 = -shift / scale;
    const double edge = std::min(t.back(), t_hi);
    if (!(edge > t0)) throw std::invalid_argument("build_compact_rule: empty support");

    std::vector<double> bounds{t0};
    for (double ti : t)
        if (ti > t0 + 1e-12 * (1.0 + std::abs(t0)) && ti <= edge) bounds.push_back(ti);
    if (bounds.back() < edge) bounds.push_back(edge);
    QuadratureRule rule = detail::assemble_rule(bounds, shift, scale, node_count);
    rule.guard_lo = 0;
    rule.guard_hi = rule.nodes.size();  // no guards: the span is the support
    return rule;
}

/// Composite rule over the whole real line (used by full-line test supports).
inline QuadratureRule build_fullline_rule(double shift, double scale, int node_count = 128) {
    if (node_count < 2) throw std::invalid_argument("build_fullline_rule: need >= 2 nodes");
    if (!(scale > 0.0)) throw std::invalid_argument("build_fullline_rule: scale must be > 0");
    const std::vector<double> t = detail::hermite_nodes(node_count);
    const double t_end = std::max(2.0 * std::abs(t.back()), 60.0);

    std::vector<double> lower{-t.front()};  // mirrored, built ascending then flipped
    const double first_gap = t.size() >= 2 ? t[1] - t[0] : 1.0;
    detail::extend_boundaries(lower, lower.back(), t_end, first_gap);
    std::vector<double> bounds(lower.rbegin(), lower.rend());
    for (double& b : bounds) b = -b;
    bounds.insert(bounds.end(), t.begin(), t.end());
    const double last_gap = t.size() >= 2 ? t[t.size() - 1] - t[t.size() - 2] : 1.0;
    detail::extend_boundaries(bounds, bounds.back(), t_end, last_gap);

    QuadratureRule rule = detail::assemble_rule(bounds, shift, scale, node_count);
    rule.guard_lo = detail::kPanelOrder;  // the lowest panel is a truncation guard
    return rule;
}

}  // namespace cmekit
