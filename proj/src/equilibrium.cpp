#include "carshare/equilibrium.hpp"

#include <cmath>
#include <stdexcept>

namespace carshare {

namespace {

// Bracketing bisection: f(lo) <= 0 <= f(hi). Unconditionally convergent.
template <typename F>
double bisect(F&& f, double lo, double hi, double tol, int max_iter) {
    double flo = f(lo);
    double fhi = f(hi);
    if (flo > 0.0 || fhi < 0.0) throw std::runtime_error("bisect: root not bracketed");
    for (int i = 0; i < max_iter && hi - lo > tol; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if (fm <= 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace

double beta_model1(const ModelParams& p) {
    const double rho = p.rho();
    const double U = p.fleet_density;
    if (U == 0.0) return 0.0;
    const double s = U + rho + 1.0;
    const double disc = std::max(s * s - 4.0 * rho * U, 0.0);
    // Rationalized small root of rho b^2 - s b + U = 0: no cancellation.
    double beta = 2.0 * U / (s + std::sqrt(disc));
    // One Newton polish on the mass relation U = rho b + b/(1-b).
    const double g = rho * beta + beta / (1.0 - beta) - U;
    const double dg = rho + 1.0 / ((1.0 - beta) * (1.0 - beta));
    beta -= g / dg;
    if (!(beta >= 0.0 && beta < 1.0)) throw std::runtime_error("beta_model1: root out of [0,1)");
    return beta;
}

double delta_bar(const ModelParams& p) {
    const double d = p.lambda * beta_model1(p);
    if (!(d < p.lambda)) throw std::runtime_error("delta_bar: ergodicity bound violated");
    return d;
}

JointDist pi_model1(const ModelParams& p, const TruncationGrid& grid, double* tail_defect) {
    const double beta = beta_model1(p);
    const double m = p.rho() * beta;
    JointDist pi(grid);
    if (p.fleet_density == 0.0) {
        pi(0, 0) = 1.0;
        if (tail_defect) *tail_defect = 0.0;
        return pi;
    }
    const double log_m = std::log(m);
    for (int j = 0; j <= grid.j_max; ++j) {
        const double pois = std::exp(-m + j * log_m - std::lgamma(j + 1.0));
        double geo = 1.0 - beta;
        for (int k = 0; k <= grid.k_max; ++k) {
            pi(j, k) = pois * geo;
            geo *= beta;
        }
    }
    const double defect = 1.0 - pi.sum();
    if (tail_defect) *tail_defect = defect;
    if (defect > 1e-12) throw std::invalid_argument("pi_model1: grid too small for tail target");
    pi.normalize();
    return pi;
}

double truncated_geometric_mean(double beta, int K) {
    if (beta < 0.0) throw std::invalid_argument("truncated_geometric_mean: beta < 0");
    if (beta == 0.0) return 0.0;
    if (beta > 1.0) return double(K) - truncated_geometric_mean(1.0 / beta, K); // reversal
    double num = 0.0, den = 0.0, pow = 1.0;
    for (int j = 0; j <= K; ++j) {
        num += j * pow;
        den += pow;
        pow *= beta;
    }
    return num / den;
}

double beta_model2(const ModelParams& p) {
    if (p.model != Model::NoReservationFinite || !p.capacity)
        throw std::invalid_argument("beta_model2: needs model 2 with finite capacity");
    const int K = *p.capacity;
    const double U = p.fleet_density;
    if (!(U > 0.0)) return 0.0;
    // U = K is fine here: the in-transit pool keeps the mean below K, so the
    // fixed point still has a unique positive root.
    if (U > double(K)) throw std::invalid_argument("beta_model2: requires 0 < U <= K");
    const double ratio = p.mu / p.lambda;
    auto g = [&](double b) { return b - ratio * (U - truncated_geometric_mean(b, K)); };
    // g is increasing; g(0) < 0. Expand the bracket until g > 0 (the root can
    // exceed 1 when U > K/2 + lambda/mu).
    double hi = 1.0;
    while (g(hi) < 0.0) {
        hi *= 2.0;
        if (hi > ratio * U + 2.0) break; // g(ratio*U) = ratio*m_K >= 0 guarantees this
    }
    return bisect(g, 0.0, hi, 1e-15 * std::max(1.0, hi), 200);
}

MarginalDist pi_model2(double beta, int K) {
    if (beta < 0.0) throw std::invalid_argument("pi_model2: beta < 0");
    MarginalDist pi(K + 1);
    if (beta == 0.0) {
        pi.mass(0) = 1.0;
        return pi;
    }
    // Work with the geometric ratio scaled by its largest term to avoid
    // overflow when beta > 1.
    const double r = beta <= 1.0 ? beta : 1.0 / beta;
    double pow = 1.0;
    for (int j = 0; j <= K; ++j) {
        const int idx = beta <= 1.0 ? j : K - j;
        pi.mass(idx) = pow;
        pow *= r;
    }
    pi.normalize();
    return pi;
}

namespace {

struct ProductFormStats {
    double Z;       // normalizing constant (scaled arbitrarily)
    double d;       // 1 - P(no cars)
    double mass;    // mean j+k
};

// Z, d, mass for pi_{jk} ~ p^j q^k / j! on {j+k<=K}, computed with the
// largest log-term factored out.
ProductFormStats product_form_stats(double pv, double qv, int K) {
    const double lp = pv > 0.0 ? std::log(pv) : 0.0;
    const double lq = qv > 0.0 ? std::log(qv) : 0.0;
    double max_log = -1e300;
    for (int j = 0; j <= K; ++j) {
        for (int k = 0; k + j <= K; ++k) {
            if ((j > 0 && pv == 0.0) || (k > 0 && qv == 0.0)) continue;
            const double lt = j * lp - std::lgamma(j + 1.0) + k * lq;
            max_log = std::max(max_log, lt);
        }
    }
    double Z = 0.0, S0 = 0.0, M = 0.0;
    for (int j = 0; j <= K; ++j) {
        if (j > 0 && pv == 0.0) break;
        for (int k = 0; k + j <= K; ++k) {
            if (k > 0 && qv == 0.0) break;
            const double t = std::exp(j * lp - std::lgamma(j + 1.0) + k * lq - max_log);
            Z += t;
            M += (j + k) * t;
            if (k == 0) S0 += t;
        }
    }
    return {Z, 1.0 - S0 / Z, M / Z};
}

} // namespace

EquilibriumSolution solve_model3(const ModelParams& p, double tol, int max_iter) {
    if (p.model != Model::ReservationFinite || !p.capacity)
        throw std::invalid_argument("solve_model3: needs model 3 with finite capacity");
    const int K = *p.capacity;
    const double U = p.fleet_density;
    const double rho = p.rho();

    EquilibriumSolution out;
    out.model = Model::ReservationFinite;
    const TruncationGrid grid = exact_grid(K);

    if (U == 0.0) {
        out.pi_joint = JointDist(grid);
        out.pi_joint(0, 0) = 1.0;
        out.rho_R = 0.0;
        out.rho_V = 0.0;
        out.Z = 1.0;
        return out;
    }
    if (!(U < double(K))) throw std::invalid_argument("solve_model3: requires 0 < U < K");

    // Inner: for fixed q, p = rho * d(p,q) with d in [0,1), so the root lives
    // in [0, rho].
    auto solve_p = [&](double q) {
        auto f = [&](double pv) { return pv - rho * product_form_stats(pv, q, K).d; };
        return bisect(f, 0.0, rho, tol, max_iter);
    };
    // Outer: match the mass constraint; mass is increasing in q.
    auto mass_gap = [&](double q) {
        return product_form_stats(solve_p(q), q, K).mass - U;
    };
    double q_hi = 1.0;
    int guard = 0;
    while (mass_gap(q_hi) < 0.0) {
        q_hi *= 2.0;
        if (++guard > 200) throw std::runtime_error("solve_model3: no upper bracket for q");
    }
    const double q = bisect(mass_gap, 0.0, q_hi, tol * std::max(1.0, q_hi), max_iter);
    const double pv = solve_p(q);

    out.rho_R = pv;
    out.rho_V = q;
    JointDist pi(grid);
    const double lp = pv > 0.0 ? std::log(pv) : 0.0;
    const double lq = q > 0.0 ? std::log(q) : 0.0;
    for (int j = 0; j <= K; ++j) {
        if (j > 0 && pv == 0.0) break;
        for (int k = 0; k + j <= K; ++k) {
            if (k > 0 && q == 0.0) break;
            pi(j, k) = std::exp(j * lp - std::lgamma(j + 1.0) + k * lq);
        }
    }
    out.Z = pi.sum();
    pi.normalize();
    out.pi_joint = pi;
    return out;
}

EquilibriumSolution solve_equilibrium(const ModelParams& p) {
    p.validate();
    switch (p.model) {
        case Model::ReservationInfinite: {
            EquilibriumSolution out;
            out.model = p.model;
            out.beta = beta_model1(p);
            out.delta_bar = p.lambda * out.beta;
            out.pi_joint = pi_model1(p, default_grid_model1(p));
            return out;
        }
        case Model::NoReservationFinite: {
            EquilibriumSolution out;
            out.model = p.model;
            out.beta = beta_model2(p);
            out.pi_marginal = pi_model2(out.beta, *p.capacity);
            return out;
        }
        case Model::ReservationFinite:
            return solve_model3(p);
    }
    throw std::logic_error("solve_equilibrium: unknown model");
}

double eval_pgf(const JointDist& dist, double x, double y) {
    double acc = 0.0;
    double xj = 1.0;
    for (int j = 0; j <= dist.grid.j_max; ++j) {
        double yk = 1.0, row = 0.0;
        for (int k = 0; k <= dist.grid.k_max; ++k) {
            row += dist(j, k) * yk;
            yk *= y;
        }
        acc += xj * row;
        xj *= x;
    }
    return acc;
}

double eval_pgf_dx(const JointDist& dist, double x, double y) {
    double acc = 0.0;
    double xj = 1.0; // x^{j-1}
    for (int j = 1; j <= dist.grid.j_max; ++j) {
        double yk = 1.0, row = 0.0;
        for (int k = 0; k <= dist.grid.k_max; ++k) {
            row += dist(j, k) * yk;
            yk *= y;
        }
        acc += j * xj * row;
        xj *= x;
    }
    return acc;
}

double product_form_check(const JointDist& candidate, const ModelParams& p, double delta,
                          const std::vector<std::pair<double, double>>& probes) {
    double worst = 0.0;
    for (const auto& [x, y] : probes) {
        if (y == 0.0) throw std::invalid_argument("product_form_check: probe y must be nonzero");
        const double F = eval_pgf(candidate, x, y);
        const double Fx = eval_pgf_dx(candidate, x, y);
        const double F0 = eval_pgf(candidate, x, 0.0);
        const double res = (delta * (1.0 - x) + p.lambda * (1.0 - 1.0 / y)) * F -
                           p.mu * (y - x) * Fx - p.lambda * (1.0 - 1.0 / y) * F0;
        worst = std::max(worst, std::abs(res));
    }
    // Rate identities delta = mu p = lambda q = lambda (1 - F(1,0)).
    const double pmean = mean_reservations(candidate);
    const double kmean = mean_cars(candidate);
    const double q = kmean / (1.0 + kmean);
    const double avail = car_availability(candidate);
    worst = std::max(worst, std::abs(delta - p.mu * pmean));
    worst = std::max(worst, std::abs(delta - p.lambda * q));
    worst = std::max(worst, std::abs(delta - p.lambda * avail));
    return worst;
}

} // namespace carshare
