#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace carshare {

struct OdeOptions {
    double rel_tol = 1e-8;
    double abs_tol = 1e-12;
    double initial_step = 0.0; // 0 = auto
    double min_step = 1e-14;
    std::size_t max_steps = 50'000'000;
};

/// Embedded Dormand-Prince 5(4) with step control. State is any Eigen-like
/// vector type supporting +, scalar *, and elementwise abs/max reductions.
/// `rhs(t, y, dy)` fills dy; `observe(t, y)` fires exactly at the requested
/// output times (steps are clamped to land on them).
template <typename Vec, typename Rhs, typename Observer>
void integrate_rk45(Rhs&& rhs, Vec y, double t0, const std::vector<double>& out_times,
                    const OdeOptions& opt, Observer&& observe) {
    static const double c2 = 1. / 5, c3 = 3. / 10, c4 = 4. / 5, c5 = 8. / 9;
    static const double a21 = 1. / 5;
    static const double a31 = 3. / 40, a32 = 9. / 40;
    static const double a41 = 44. / 45, a42 = -56. / 15, a43 = 32. / 9;
    static const double a51 = 19372. / 6561, a52 = -25360. / 2187, a53 = 64448. / 6561,
                        a54 = -212. / 729;
    static const double a61 = 9017. / 3168, a62 = -355. / 33, a63 = 46732. / 5247,
                        a64 = 49. / 176, a65 = -5103. / 18656;
    static const double b1 = 35. / 384, b3 = 500. / 1113, b4 = 125. / 192, b5 = -2187. / 6784,
                        b6 = 11. / 84;
    // 4th-order weights (for the error estimate): bh - b
    static const double e1 = 71. / 57600, e3 = -71. / 16695, e4 = 71. / 1920,
                        e5 = -17253. / 339200, e6 = 22. / 525, e7 = -1. / 40;

    if (out_times.empty()) return;
    double t = t0;
    Vec k1 = y, k2 = y, k3 = y, k4 = y, k5 = y, k6 = y, k7 = y, ytmp = y, ynew = y;

    std::size_t next_out = 0;
    while (next_out < out_times.size() && out_times[next_out] <= t + 1e-14 * std::max(1.0, std::abs(t))) {
        observe(out_times[next_out], y);
        ++next_out;
    }
    if (next_out >= out_times.size()) return;

    rhs(t, y, k1);
    double h = opt.initial_step;
    if (h <= 0.0) {
        const double ynorm = std::sqrt(double(y.matrix().squaredNorm()));
        const double dnorm = std::sqrt(double(k1.matrix().squaredNorm()));
        h = (dnorm > 0.0) ? 0.01 * std::max(ynorm, 1.0) / dnorm : 1e-3;
        h = std::min(h, out_times.back() - t);
    }

    bool k1_fresh = true;
    for (std::size_t step = 0; step < opt.max_steps; ++step) {
        if (next_out >= out_times.size()) return;
        const double t_target = out_times[next_out];
        bool clipped = false;
        if (t + h >= t_target) {
            h = t_target - t;
            clipped = true;
        }
        if (h < opt.min_step)
            throw std::runtime_error("integrate_rk45: step size underflow at t=" + std::to_string(t));

        if (!k1_fresh) rhs(t, y, k1);
        ytmp = y + h * (a21 * k1);
        rhs(t + c2 * h, ytmp, k2);
        ytmp = y + h * (a31 * k1 + a32 * k2);
        rhs(t + c3 * h, ytmp, k3);
        ytmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
        rhs(t + c4 * h, ytmp, k4);
        ytmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
        rhs(t + c5 * h, ytmp, k5);
        ytmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
        rhs(t + h, ytmp, k6);
        ynew = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        rhs(t + h, ynew, k7);

        ytmp = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
        double err = 0.0;
        for (int i = 0; i < int(y.size()); ++i) {
            const double sc = opt.abs_tol + opt.rel_tol * std::max(std::abs(y(i)), std::abs(ynew(i)));
            const double e = std::abs(ytmp(i)) / sc;
            err = std::max(err, e);
        }

        if (err <= 1.0) {
            t = clipped ? t_target : t + h;
            y = ynew;
            k1 = k7; // FSAL
            k1_fresh = true;
            while (next_out < out_times.size() &&
                   out_times[next_out] <= t + 1e-14 * std::max(1.0, std::abs(t))) {
                observe(out_times[next_out], y);
                ++next_out;
            }
        } else {
            k1_fresh = true; // k1 still matches (t, y)
        }
        const double fac = (err > 0.0) ? 0.9 * std::pow(err, -0.2) : 5.0;
        h *= std::clamp(fac, 0.2, 5.0);
    }
    throw std::runtime_error("integrate_rk45: max step count exceeded");
}

} // namespace carshare
