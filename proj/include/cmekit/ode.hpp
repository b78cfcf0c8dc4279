#pragma once
// Adaptive explicit Runge-Kutta integrator: the Dormand-Prince 5(4) embedded
// pair with standard PI-free step control (accept if the scaled RMS error is
// <= 1, step factor 0.9*err^(-1/5) clamped to [0.2, 5]). First-same-as-last
// is exploited, and the initial step follows Hairer's two-probe heuristic.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include "cmekit/errors.hpp"
#include "cmekit/util.hpp"

namespace cmekit {

struct OdeOptions {
    double rtol = 1e-8;
    double atol = 1e-10;
    double initial_step = 0.0;  // 0 = automatic
    std::size_t max_steps = 20'000'000;
};

using OdeRhs = std::function<void(double t, const std::vector<double>& y, std::vector<double>& dy)>;

namespace detail {

inline double scaled_rms(const std::vector<double>& err, const std::vector<double>& y0,
                         const std::vector<double>& y1, const OdeOptions& opt) {
    double acc = 0.0;
    for (std::size_t i = 0; i < err.size(); ++i) {
        double sc = opt.atol + opt.rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
        double q = err[i] / sc;
        acc += q * q;
    }
    return std::sqrt(acc / std::max<std::size_t>(1, err.size()));
}

}  // namespace detail

/// Integrate y' = f(t,y) from t0 to t1 in place. Throws ConvergenceError on
/// step-size underflow (stiffness) or step-count exhaustion.
inline void integrate_ode(const OdeRhs& f, double t0, double t1, std::vector<double>& y,
                          const OdeOptions& opt = {}) {
    if (!(t1 >= t0)) throw std::invalid_argument("integrate_ode: t1 must be >= t0");
    if (t1 == t0) return;
    const std::size_t n = y.size();

    // Dormand-Prince coefficients.
    static const double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static const double a21 = 1.0 / 5;
    static const double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
    static const double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static const double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                        b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static const double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

    std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), ynew(n), err(n);
    double t = t0;
    f(t, y, k1);

    double h = opt.initial_step;
    if (h <= 0.0) {
        // Hairer, Norsett & Wanner II.4: two-probe starting step.
        double d0 = detail::scaled_rms(y, y, y, opt);
        double d1 = detail::scaled_rms(k1, y, y, opt);
        double h0 = (d0 > 1e-10 && d1 > 1e-10) ? 0.01 * d0 / d1 : 1e-6 * (t1 - t0);
        h0 = std::min(h0, t1 - t0);
        for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h0 * k1[i];
        f(t + h0, ytmp, k2);
        for (std::size_t i = 0; i < n; ++i) err[i] = k2[i] - k1[i];
        double d2 = detail::scaled_rms(err, y, y, opt) / h0;
        double dm = std::max(d1, d2);
        double h1 = dm > 1e-15 ? std::pow(0.01 / dm, 0.2) : std::max(1e-6 * (t1 - t0), h0 * 1e3);
        h = std::min({100.0 * h0, h1, t1 - t0});
    }

    for (std::size_t step = 0;; ++step) {
        if (step >= opt.max_steps)
            throw ConvergenceError("integrate_ode: step budget exhausted at t=" + format_double(t),
                                   0.0, static_cast<int>(step));
        if (t >= t1) break;
        h = std::min(h, t1 - t);
        if (h < 1e-14 * std::max(1.0, std::abs(t)))
            throw ConvergenceError(
                "integrate_ode: step size underflow at t=" + format_double(t) +
                    " (system too stiff for an explicit method)",
                0.0, static_cast<int>(step));

        for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h * a21 * k1[i];
        f(t + c2 * h, ytmp, k2);
        for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
        f(t + c3 * h, ytmp, k3);
        for (std::size_t i = 0; i < n; ++i)
            ytmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
        f(t + c4 * h, ytmp, k4);
        for (std::size_t i = 0; i < n; ++i)
            ytmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
        f(t + c5 * h, ytmp, k5);
        for (std::size_t i = 0; i < n; ++i)
            ytmp[i] =
                y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
        f(t + h, ytmp, k6);
        for (std::size_t i = 0; i < n; ++i)
            ynew[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
        f(t + h, ynew, k7);
        for (std::size_t i = 0; i < n; ++i)
            err[i] = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] +
                          e7 * k7[i]);

        const double rms = detail::scaled_rms(err, y, ynew, opt);
        if (rms <= 1.0 || h <= 1e-13 * std::max(1.0, std::abs(t))) {
            t += h;
            y.swap(ynew);
            k1.swap(k7);  // first-same-as-last
        }
        double factor = rms > 1e-30 ? 0.9 * std::pow(rms, -0.2) : 5.0;
        h *= std::clamp(factor, 0.2, 5.0);
        if (!std::isfinite(h) || !std::isfinite(rms))
            throw ConvergenceError("integrate_ode: non-finite step control at t=" +
                                       format_double(t),
                                   rms, static_cast<int>(step));
    }
}

}  // namespace cmekit
