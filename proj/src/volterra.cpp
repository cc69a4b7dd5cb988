#include "carshare/volterra.hpp"

#include "carshare/bessel.hpp"
#include "carshare/equilibrium.hpp"

#include <cmath>
#include <stdexcept>

namespace carshare {

std::vector<double> RateFunction::cumulative() const {
    std::vector<double> A(values.size(), 0.0);
    for (std::size_t i = 1; i < values.size(); ++i)
        A[i] = A[i - 1] + 0.5 * h * (values[i] + values[i - 1]);
    return A;
}

QueueInitDist QueueInitDist::point(int m) {
    QueueInitDist d;
    d.atoms.assign(std::size_t(m) + 1, 0.0);
    d.atoms[std::size_t(m)] = 1.0;
    return d;
}

double QueueInitDist::mean() const {
    double m = 0.0;
    for (std::size_t i = 0; i < atoms.size(); ++i) m += double(i) * atoms[i];
    if (geo_weight > 0.0 && geo_ratio > 0.0) m += geo_weight * geo_ratio / (1.0 - geo_ratio);
    return m;
}

void QueueInitDist::validate() const {
    double s = geo_weight;
    for (double a : atoms) {
        if (a < 0.0) throw std::invalid_argument("QueueInitDist: negative atom");
        s += a;
    }
    if (geo_weight < 0.0 || geo_ratio < 0.0 || geo_ratio >= 1.0)
        throw std::invalid_argument("QueueInitDist: geometric part needs weight >= 0, ratio in [0,1)");
    if (std::abs(s - 1.0) > 1e-12)
        throw std::invalid_argument("QueueInitDist: probabilities sum to " + std::to_string(s));
}

std::vector<double> QueueInitDist::expanded(double tail) const {
    validate();
    std::vector<double> out = atoms;
    if (geo_weight > 0.0 && geo_ratio > 0.0) {
        const int m_max = int(std::ceil(std::log(tail) / std::log(geo_ratio))) + 1;
        if (int(out.size()) < m_max + 1) out.resize(std::size_t(m_max) + 1, 0.0);
        double g = geo_weight * (1.0 - geo_ratio);
        for (int m = 0; m <= m_max; ++m) {
            out[std::size_t(m)] += g;
            g *= geo_ratio;
        }
    } else if (geo_weight > 0.0) {
        if (out.empty()) out.resize(1, 0.0);
        out[0] += geo_weight; // ratio 0: all geometric mass at zero
    }
    return out;
}

double kernel_D_lag(double lambda, double tau, double dA) {
    if (tau < 0.0) throw std::invalid_argument("kernel_D: s > t");
    if (tau == 0.0) return 1.0;
    if (dA < 0.0) dA = 0.0;
    const double sl = std::sqrt(lambda * tau);
    const double sa = std::sqrt(dA);
    const double diff = sl - sa;
    const double pref = std::exp(-diff * diff);
    const auto b = detail::bessel_i01e(2.0 * sl * sa);
    return pref * (b.i0e - (sa / sl) * b.i1e);
}

double kernel_D(double s, double t, double lambda,
                const std::function<double(double)>& cumulative_rate) {
    if (s > t) throw std::invalid_argument("kernel_D: s > t");
    return kernel_D_lag(lambda, t - s, cumulative_rate(t) - cumulative_rate(s));
}

namespace {

// Q_m(x, A) = e^{-x-A} sum_a A^a x^{a+m} / (a! (a+m)!), summed outward from
// the peak term in units of the peak so it survives x + A >> 700. One
// log-gamma pair at the peak; everything else is multiplicative recurrence.
double q_series(int m, double x, double A) {
    if (x == 0.0) return m == 0 ? 1.0 : 0.0;
    const double lx = std::log(x);
    if (A == 0.0) return std::exp(-x + m * lx - std::lgamma(m + 1.0));
    // Peak where the term ratio A x / ((a+1)(a+m+1)) crosses 1.
    const int a_star =
        std::max(0, int(std::floor((-(m + 2) + std::sqrt(double(m) * m + 4.0 * A * x)) / 2.0)) );
    const double lpeak = -x - A + a_star * std::log(A) + (a_star + m) * lx -
                         std::lgamma(a_star + 1.0) - std::lgamma(a_star + m + 1.0);
    if (lpeak < -745.0) return 0.0;
    const double Ax = A * x;
    double acc = 1.0, term = 1.0;
    for (int a = a_star; term > 1e-18; ++a) {
        term *= Ax / (double(a + 1) * double(a + m + 1));
        acc += term;
    }
    term = 1.0;
    for (int a = a_star; a > 0 && term > 1e-18; --a) {
        term *= double(a) * double(a + m) / Ax;
        acc += term;
    }
    return std::exp(lpeak) * acc;
}

} // namespace

std::vector<double> psi_forcing(const QueueInitDist& init, double lambda,
                                const std::vector<double>& A, const std::vector<double>& t) {
    if (A.size() != t.size()) throw std::invalid_argument("psi_forcing: grid mismatch");
    const std::vector<double> atoms = init.expanded();
    std::vector<double> psi(t.size(), 0.0);
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double x = lambda * t[i];
        double acc = 0.0;
        for (std::size_t m = 0; m < atoms.size(); ++m)
            if (atoms[m] > 0.0) acc += atoms[m] * q_series(int(m), x, A[i]);
        psi[i] = acc;
    }
    return psi;
}

namespace {

struct MarchResult {
    std::vector<double> H;
    double max_excess = 0.0;
};

// Trapezoid march on an arbitrary (small) grid; used for the refined start.
std::vector<double> trapezoid_march(double lambda, const std::vector<double>& t,
                                    const std::vector<double>& A, const std::vector<double>& psi) {
    const int n = int(t.size());
    std::vector<double> H(static_cast<std::size_t>(n));
    H[0] = psi[0];
    std::vector<double> row(static_cast<std::size_t>(n));
    for (int i = 1; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < i; ++j)
            row[std::size_t(j)] = kernel_D_lag(lambda, t[std::size_t(i)] - t[std::size_t(j)],
                                               A[std::size_t(i)] - A[std::size_t(j)]) *
                                  H[std::size_t(j)];
        for (int j = 0; j < i; ++j) {
            const double w = 0.5 * ((j + 1 < i ? t[std::size_t(j + 1)] : t[std::size_t(i)]) -
                                    (j > 0 ? t[std::size_t(j - 1)] : t[0]));
            acc += w * row[std::size_t(j)];
        }
        const double wN = 0.5 * (t[std::size_t(i)] - t[std::size_t(i - 1)]);
        H[std::size_t(i)] = (psi[std::size_t(i)] + lambda * acc) / (1.0 - lambda * wN);
    }
    return H;
}

// Product-integration march with Gregory Delta^2 endpoint corrections. The
// kernel has unit mass, so plain trapezoid error would grow linearly in t;
// the corrections push the secular term to O(h^4). Start-up rows (fewer than
// 4 points) run on an 8x-refined subgrid instead, since any one-time start
// error persists through the unit-mass renewal structure. Rows are truncated
// where D <= exp(-tau (sqrt(lambda)-sqrt(dmax))^2) < 1e-18.
MarchResult march(double lambda, double h, const std::vector<double>& delta,
                  const std::vector<double>& A, const std::vector<double>& psi,
                  const QueueInitDist& init, double delta_max, double clamp_error,
                  int resume_from = 0, const std::vector<double>* seed = nullptr) {
    const int n = int(A.size());
    MarchResult out;
    out.H.assign(std::size_t(n), 0.0);
    std::vector<double> slt(static_cast<std::size_t>(n));
    for (int l = 0; l < n; ++l) slt[std::size_t(l)] = std::sqrt(lambda * l * h);

    int mem = n; // lags beyond this contribute < 1e-18 each
    if (delta_max < lambda) {
        const double gap = std::sqrt(lambda) - std::sqrt(delta_max);
        if (gap > 0.0) mem = int(std::min(double(n), 42.0 / (gap * gap) / h + 2.0));
    }

    std::vector<double>& H = out.H;
    H[0] = psi[0];

    // Scheme iterations leave a growing prefix of delta bit-identical, so the
    // corresponding H values can be carried over verbatim.
    const int start_rows = std::min(3, n - 1);
    const bool resuming = seed && resume_from > start_rows + 1 && int(seed->size()) == n;
    if (resuming)
        for (int i = 0; i < resume_from; ++i) H[std::size_t(i)] = (*seed)[std::size_t(i)];

    if (!resuming) {
        const int sub = 16;
        std::vector<double> tf, Af;
        for (int i = 0; i <= start_rows; ++i) {
            for (int s = 0; s < (i == start_rows ? 1 : sub); ++s) {
                const double theta = double(s) / double(sub);
                tf.push_back((i + theta) * h);
                // integral of the piecewise-linear interpolant of delta
                const double base = A[std::size_t(i)];
                const double d0 = delta[std::size_t(i)];
                const double d1 = delta[std::size_t(std::min(i + 1, n - 1))];
                Af.push_back(base + theta * h * d0 + 0.5 * theta * theta * h * (d1 - d0));
            }
        }
        const std::vector<double> psif = psi_forcing(init, lambda, Af, tf);
        const std::vector<double> Hf = trapezoid_march(lambda, tf, Af, psif);
        for (int i = 1; i <= start_rows; ++i) H[std::size_t(i)] = Hf[std::size_t(i * sub)];
    }

    std::vector<double> row(static_cast<std::size_t>(n)), earg(static_cast<std::size_t>(n)),
        xarg(static_cast<std::size_t>(n)), ratio(static_cast<std::size_t>(n));
    const double cN = 251.0 / 720.0; // 1/2 - 1/12 - 1/24 - 19/720
    const int first_row = resuming ? resume_from : start_rows + 1;
    for (int i = first_row; i < n; ++i) {
        const double Ai = A[std::size_t(i)];
        const int jlo = std::max(0, i - mem);
        for (int j = jlo; j < i; ++j) {
            double dA = Ai - A[std::size_t(j)];
            if (dA < 0.0) dA = 0.0;
            const double sa = std::sqrt(dA);
            const double sl = slt[std::size_t(i - j)];
            earg[std::size_t(j)] = -(sl - sa) * (sl - sa);
            xarg[std::size_t(j)] = 2.0 * sl * sa;
            ratio[std::size_t(j)] = sa / sl;
        }
        {
            Eigen::Map<Eigen::ArrayXd> e(earg.data() + jlo, i - jlo);
            e = e.exp(); // vectorized; the scalar libm call dominated otherwise
        }
        for (int j = jlo; j < i; ++j) {
            const auto b = detail::bessel_i01e(xarg[std::size_t(j)]);
            row[std::size_t(j)] =
                earg[std::size_t(j)] * (b.i0e - ratio[std::size_t(j)] * b.i1e) * H[std::size_t(j)];
        }
        double S = 0.5 * row[std::size_t(jlo)];
        for (int j = jlo + 1; j < i; ++j) S += row[std::size_t(j)];
        // Gregory corrections through the third difference at both ends; the
        // unknown f_i enters with coefficient cN = 251/720. The coupled
        // scheme's fixed point amplifies any residual quadrature bias along
        // the neutral stationary family, so the extra order is not optional.
        const double f1 = row[std::size_t(i - 1)], f2 = row[std::size_t(i - 2)],
                     f3 = row[std::size_t(i - 3)];
        double corr = (1.0 / 12.0) * f1 + (1.0 / 24.0) * (2.0 * f1 - f2) +
                      (19.0 / 720.0) * (3.0 * f1 - 3.0 * f2 + f3);
        if (jlo == 0)
            corr += (1.0 / 12.0) * (row[1] - row[0]) - (1.0 / 24.0) * (row[2] - 2.0 * row[1] + row[0]) +
                    (19.0 / 720.0) * (row[3] - 3.0 * row[2] + 3.0 * row[1] - row[0]);
        H[std::size_t(i)] = (psi[std::size_t(i)] + lambda * h * (S + corr)) / (1.0 - lambda * h * cN);
        // H is a probability; Gregory overshoot in flat regions is clamped
        // and reported, anything sizable is a genuine failure.
        double& Hi = H[std::size_t(i)];
        if (Hi < 0.0 || Hi > 1.0) {
            const double excess = Hi < 0.0 ? -Hi : Hi - 1.0;
            out.max_excess = std::max(out.max_excess, excess);
            if (excess > clamp_error)
                throw std::runtime_error("solve_H: H left [0,1] by " + std::to_string(excess));
            Hi = Hi < 0.0 ? 0.0 : 1.0;
        }
    }
    return out;
}

} // namespace

VolterraSolution solve_H(const RateFunction& delta, double lambda, const QueueInitDist& init,
                         const VolterraOptions& opt) {
    if (delta.size() < 2) throw std::invalid_argument("solve_H: need at least two grid points");
    if (!(lambda > 0.0)) throw std::invalid_argument("solve_H: lambda must be > 0");
    if (lambda * delta.h >= 1.0) throw std::invalid_argument("solve_H: grid too coarse (lambda*h >= 1)");
    const int n = delta.size();
    std::vector<double> t(n);
    for (int i = 0; i < n; ++i) t[i] = delta.h * i;
    const std::vector<double> A = delta.cumulative();
    double dmax = 0.0;
    for (double v : delta.values) dmax = std::max(dmax, v);

    VolterraSolution sol;
    sol.h = delta.h;
    sol.psi = psi_forcing(init, lambda, A, t);
    auto res = march(lambda, delta.h, delta.values, A, sol.psi, init, dmax, opt.clamp_error);
    sol.H = std::move(res.H);
    sol.max_excess = res.max_excess;

    if (opt.estimate_defect && n >= 9) {
        // Coarse companion on step 2h: the (h', h'/2) comparison pair.
        RateFunction coarse;
        coarse.h = 2.0 * delta.h;
        for (int i = 0; i < n; i += 2) coarse.values.push_back(delta.values[std::size_t(i)]);
        const int nc = coarse.size();
        std::vector<double> tc(static_cast<std::size_t>(nc));
        for (int i = 0; i < nc; ++i) tc[std::size_t(i)] = coarse.h * i;
        const std::vector<double> Ac = coarse.cumulative();
        const std::vector<double> psic = psi_forcing(init, lambda, Ac, tc);
        auto resc = march(lambda, coarse.h, coarse.values, Ac, psic, init, dmax, opt.clamp_error);
        for (int i = 0; i < nc; ++i)
            sol.defect = std::max(sol.defect, std::abs(sol.H[std::size_t(2 * i)] - resc.H[std::size_t(i)]));
    }
    return sol;
}

std::vector<double> exp_weighted_average(double mu, double h, const std::vector<double>& g) {
    if (!(mu > 0.0) || !(h > 0.0)) throw std::invalid_argument("exp_weighted_average: mu,h > 0");
    const int n = int(g.size());
    std::vector<double> out(std::size_t(n), 0.0);
    if (n == 0) return out;
    const double E = std::exp(-mu * h);
    const double M0 = -std::expm1(-mu * h) / mu;      // int_0^h e^{mu(u-h)} u^k du, k = 0..3
    const double M1 = (h - M0) / mu;
    const double M2 = (h * h - 2.0 * M1) / mu;
    const double M3 = (h * h * h - 3.0 * M2) / mu;
    out[0] = 0.0;
    if (n > 1) // first panel: linear interpolant
        out[1] = mu * (g[0] * (M0 - M1 / h) + g[1] * (M1 / h));
    if (n > 2) { // second panel: quadratic through g_0, g_1, g_2
        const double c1 = (g[2] - g[0]) / (2.0 * h);
        const double c2 = (g[2] - 2.0 * g[1] + g[0]) / (2.0 * h * h);
        out[2] = E * out[1] + mu * (g[1] * M0 + c1 * M1 + c2 * M2);
    }
    for (int i = 3; i < n; ++i) {
        // Cubic through g_{i-3..i}, expanded about the panel start t_{i-1}.
        // Order 4 matters: a lower-order bias here shifts the whole scheme's
        // fixed point along the neutral stationary family.
        const double a = g[std::size_t(i - 3)], b = g[std::size_t(i - 2)];
        const double c = g[std::size_t(i - 1)], d = g[std::size_t(i)];
        const double c1 = (2.0 * d + 3.0 * c - 6.0 * b + a) / (6.0 * h);
        const double c2 = (d - 2.0 * c + b) / (2.0 * h * h);
        const double c3 = (d - 3.0 * c + 3.0 * b - a) / (6.0 * h * h * h);
        const double I = c * M0 + c1 * M1 + c2 * M2 + c3 * M3;
        out[std::size_t(i)] = E * out[std::size_t(i - 1)] + mu * I;
    }
    return out;
}

namespace {

SchemeResult run_scheme(const ModelParams& p, const QueueInitDist& init, double horizon, double h,
                        const SchemeOptions& opt, const RateFunction& start, bool increasing) {
    p.validate();
    init.validate();
    if (p.lambda * h >= 1.0) throw std::invalid_argument("scheme: grid too coarse (lambda*h >= 1)");
    const int n = int(std::lround(horizon / h)) + 1;
    if (n < 5) throw std::invalid_argument("scheme: horizon too short for the grid step");

    SchemeResult out;
    RateFunction cur = start;
    if (opt.store_iterates) out.iterates.push_back(cur);

    std::vector<double> t(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) t[std::size_t(i)] = h * i;
    std::vector<double> prev_delta, prev_H;

    for (int it = 0; it < opt.max_iterations; ++it) {
        // Incremental Volterra solve: rows in the bit-identical prefix of
        // delta reuse the previous H (A and psi agree there exactly).
        int prefix = 0;
        if (!prev_delta.empty())
            while (prefix < n && cur.values[std::size_t(prefix)] == prev_delta[std::size_t(prefix)])
                ++prefix;
        const std::vector<double> A = cur.cumulative();
        const std::vector<double> psi = psi_forcing(init, p.lambda, A, t);
        double dmax = 0.0;
        for (double v : cur.values) dmax = std::max(dmax, v);
        MarchResult mres =
            march(p.lambda, h, cur.values, A, psi, init, dmax, 1e-6, prefix, &prev_H);
        prev_delta = cur.values;
        prev_H = mres.H;

        std::vector<double> g(mres.H.size());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = 1.0 - mres.H[i];
        std::vector<double> next_vals = exp_weighted_average(p.mu, h, g);
        for (double& v : next_vals) v *= p.lambda;

        RateFunction next;
        next.h = h;
        next.values = std::move(next_vals);
        // A-priori bound delta(t) <= lambda (1 - e^{-mu t}).
        for (int i = 0; i < n; ++i) {
            const double cap = p.lambda * -std::expm1(-p.mu * h * i);
            out.worst_bound_excess = std::max(out.worst_bound_excess, next.values[std::size_t(i)] - cap);
            if (next.values[std::size_t(i)] < 0.0) next.values[std::size_t(i)] = 0.0;
        }
        if (out.worst_bound_excess > 1e-6 * p.lambda)
            throw std::runtime_error("scheme: a-priori bound violated by " +
                                     std::to_string(out.worst_bound_excess));

        double inc_max = -1e300, inc_min = 1e300;
        for (int i = 0; i < n; ++i) {
            const double d = next.values[std::size_t(i)] - cur.values[std::size_t(i)];
            inc_max = std::max(inc_max, d);
            inc_min = std::min(inc_min, d);
        }
        const double violation = increasing ? -inc_min : inc_max;
        if (violation > 0.0) {
            out.worst_monotone_violation = std::max(out.worst_monotone_violation, violation);
            if (violation > opt.monotone_slack * std::max(1.0, p.lambda))
                throw std::runtime_error("scheme: monotonicity violated by " +
                                         std::to_string(violation));
        }

        out.last_increment = std::max(std::abs(inc_max), std::abs(inc_min));
        cur = std::move(next);
        out.iterations = it + 1;
        if (opt.store_iterates) out.iterates.push_back(cur);
        if (out.last_increment < opt.fp_tol) {
            VolterraOptions vopt;
            vopt.estimate_defect = opt.estimate_defect;
            out.H = solve_H(cur, p.lambda, init, vopt);
            out.delta = std::move(cur);
            return out;
        }
    }
    throw std::runtime_error("scheme: no convergence within max_iterations (last increment " +
                             std::to_string(out.last_increment) + ")");
}

} // namespace

SchemeResult solve_delta_system(const ModelParams& p, const QueueInitDist& init, double horizon,
                                double h, const SchemeOptions& opt) {
    RateFunction zero;
    zero.h = h;
    zero.values.assign(std::size_t(std::lround(horizon / h)) + 1, 0.0);
    return run_scheme(p, init, horizon, h, opt, zero, /*increasing=*/true);
}

SchemeResult upper_scheme(const ModelParams& p, double gamma0, const QueueInitDist& init,
                          double horizon, double h, const SchemeOptions& opt) {
    if (!(gamma0 > 0.0 && gamma0 < p.lambda))
        throw std::invalid_argument("upper_scheme: gamma0 must lie in (0, lambda)");
    RateFunction start;
    start.h = h;
    start.values.assign(std::size_t(std::lround(horizon / h)) + 1, gamma0);
    return run_scheme(p, init, horizon, h, opt, start, /*increasing=*/false);
}

double relaxation_rate(const ModelParams& p) {
    const double beta = beta_model1(p);
    const double form1 = p.lambda * (1.0 - std::sqrt(beta)) * (1.0 - std::sqrt(beta));
    const double d = p.lambda * beta;
    const double form2 = (std::sqrt(p.lambda) - std::sqrt(d)) * (std::sqrt(p.lambda) - std::sqrt(d));
    if (std::abs(form1 - form2) > 1e-9 * std::max(1.0, form1))
        throw std::logic_error("relaxation_rate: the two printed forms disagree");
    return std::min(p.mu, form1);
}

RateEstimate estimate_rate(const std::vector<double>& times, const std::vector<double>& series,
                           double limit, double floor_tol) {
    if (times.size() != series.size() || times.size() < 4)
        throw std::invalid_argument("estimate_rate: need matching series with >= 4 points");
    double gap0 = 0.0;
    for (double v : series) gap0 = std::max(gap0, std::abs(v - limit));
    const double hi = 0.1 * gap0;
    const double lo = 1e3 * floor_tol;
    if (!(lo < hi)) throw std::invalid_argument("estimate_rate: window empty (series at tolerance floor)");

    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    int npts = 0;
    double t_lo = 0, t_hi = 0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        const double gap = std::abs(series[i] - limit);
        if (gap < lo || gap > hi) continue;
        const double x = times[i], y = std::log(gap);
        if (npts == 0) t_lo = x;
        t_hi = x;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
        ++npts;
    }
    if (npts < 4) throw std::invalid_argument("estimate_rate: window empty (fewer than 4 usable points)");
    const double nd = double(npts);
    const double slope = (nd * sxy - sx * sy) / (nd * sxx - sx * sx);
    const double ss_tot = syy - sy * sy / nd;
    const double ss_res = ss_tot - slope * (sxy - sx * sy / nd);
    RateEstimate est;
    est.v_hat = -slope;
    est.t_lo = t_lo;
    est.t_hi = t_hi;
    est.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    est.points = npts;
    return est;
}

RateEstimate fit_relaxation(const std::vector<double>& times, const std::vector<double>& series,
                            double limit, double floor_tol, bool algebraic_prefactor) {
    if (times.size() != series.size() || times.empty())
        throw std::invalid_argument("fit_relaxation: mismatched series");
    std::vector<double> comp(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        const double f = algebraic_prefactor ? std::pow(std::max(times[i], 1e-12), 1.5) : 1.0;
        comp[i] = limit + (series[i] - limit) * f;
    }
    // Transients (sign changes, overshoot, two-timescale rebounds) all sit
    // before the final monotone decay of the gap; fit only that stretch.
    // Points below the usable floor are ignored when locating it.
    const double lo = 1e3 * floor_tol;
    std::size_t end = comp.size();
    while (end > 1 && std::abs(comp[end - 1] - limit) < lo) --end;
    std::size_t begin = end > 0 ? end - 1 : 0;
    while (begin > 0 && std::abs(comp[begin - 1] - limit) >= std::abs(comp[begin] - limit)) --begin;
    if (end - begin < 4) throw std::invalid_argument("fit_relaxation: no usable monotone tail");
    const std::vector<double> tt(times.begin() + long(begin), times.begin() + long(end));
    const std::vector<double> cc(comp.begin() + long(begin), comp.begin() + long(end));
    return estimate_rate(tt, cc, limit, floor_tol);
}

} // namespace carshare
