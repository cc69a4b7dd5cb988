#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "carshare/bessel.hpp"
#include "carshare/birth_death.hpp"
#include "carshare/equilibrium.hpp"
#include "carshare/meanfield.hpp"
#include "carshare/volterra.hpp"

#include <cmath>

using namespace carshare;

namespace {

ModelParams m1(double lambda, double mu, double U) {
    ModelParams p;
    p.lambda = lambda;
    p.mu = mu;
    p.fleet_density = U;
    return p;
}

// Plain 30-term power series for e^{-x} I_n(x), adequate to ~1e-13 relative
// for x <= 15 in long double; independent of the library implementation.
long double series_ie(int n, long double x) {
    const long double u = x * x / 4.0L;
    long double term = 1.0L;
    for (int k = 1; k <= n; ++k) term *= x / (2.0L * k);
    long double sum = term;
    for (int k = 1; k < 60; ++k) {
        term *= u / (long double)(k * (k + n));
        sum += term;
    }
    return expl(-x) * sum;
}

RateFunction constant_rate(double value, double h, double horizon) {
    RateFunction r;
    r.h = h;
    r.values.assign(std::size_t(std::lround(horizon / h)) + 1, value);
    return r;
}

} // namespace

TEST_CASE("scaled Bessel: exact small-argument values") {
    CHECK(bessel_ie(0, 0.0) == 1.0);
    CHECK(bessel_ie(1, 0.0) == 0.0);
    CHECK_THROWS_AS((void)bessel_ie(2, 1.0), std::invalid_argument);
    CHECK_THROWS_AS((void)bessel_ie(0, -1.0), std::invalid_argument);
}

TEST_CASE("scaled Bessel vs independent oracles") {
    // Series oracle on the series branch.
    for (double x : {1e-9, 0.1, 0.5, 1.0, 2.0, 5.0, 7.5, 10.0, 14.999}) {
        CHECK(bessel_ie(0, x) == doctest::Approx(double(series_ie(0, x))).epsilon(1e-12));
        CHECK(bessel_ie(1, x) == doctest::Approx(double(series_ie(1, x))).epsilon(1e-12));
    }
    // Frozen high-precision values across the seam and on the asymptotic branch.
    struct Ref {
        double x, i0e, i1e;
    };
    for (const Ref& r : {Ref{1.0, 0.4657596075936404365, 0.2079104153497084489},
                         Ref{15.001, 0.1038960062719594663, 0.1003710089389378819},
                         Ref{20.0, 0.08978031188482602160, 0.08750622218328866536},
                         Ref{50.0, 0.05656162664745419253, 0.05599312389289539964},
                         Ref{100.0, 0.03994437929909668265, 0.03974415302513025267},
                         Ref{1000.0, 0.01261724045589125659, 0.01261093025692862947}}) {
        CHECK(bessel_ie(0, r.x) == doctest::Approx(r.i0e).epsilon(1e-12));
        CHECK(bessel_ie(1, r.x) == doctest::Approx(r.i1e).epsilon(1e-12));
    }
}

TEST_CASE("kernel_D closed cases and frozen values") {
    CHECK(kernel_D_lag(1.0, 0.0, 0.0) == 1.0);
    CHECK(kernel_D_lag(1.0, 0.0, 0.5) == 1.0);
    for (double tau : {0.5, 2.0, 10.0})
        CHECK(kernel_D_lag(1.3, tau, 0.0) == doctest::Approx(std::exp(-1.3 * tau)).epsilon(1e-14));
    // e^{-2} (I0(2) - I1(2))
    CHECK(kernel_D_lag(1.0, 1.0, 1.0) == doctest::Approx(0.09323903330473338).epsilon(1e-12));
    CHECK(kernel_D_lag(0.7, 2.5, 0.9) == doctest::Approx(0.1055406799135525).epsilon(1e-12));

    // Callable-A wrapper agrees and rejects s > t.
    auto A = [](double t) { return 0.4 * t; };
    CHECK(kernel_D(1.0, 3.5, 1.0, A) ==
          doctest::Approx(kernel_D_lag(1.0, 2.5, 0.4 * 2.5)).epsilon(1e-14));
    CHECK_THROWS_AS((void)kernel_D(2.0, 1.0, 1.0, A), std::invalid_argument);
}

TEST_CASE("psi_forcing closed cases") {
    const int n = 101;
    std::vector<double> t(n), A0(n, 0.0);
    for (int i = 0; i < n; ++i) t[std::size_t(i)] = 0.05 * i;

    // Empty initial queue, no arrivals: psi(t) = e^{-lambda t}.
    const auto psi = psi_forcing(QueueInitDist::empty_queue(), 1.0, A0, t);
    for (int i = 0; i < n; ++i)
        CHECK(psi[std::size_t(i)] == doctest::Approx(std::exp(-t[std::size_t(i)])).epsilon(1e-13));
    CHECK(psi[20] == doctest::Approx(0.36787944117144233).epsilon(1e-13));

    // t = 0 returns the initial emptiness for any family.
    const auto psi_geo = psi_forcing(QueueInitDist::geometric(0.4), 2.0, {0.0}, {0.0});
    CHECK(psi_geo[0] == doctest::Approx(0.6).epsilon(1e-12));

    // One initial car, A_t = 0.1 t^2: frozen contour-integral value at t = 2.
    std::vector<double> t2{0.0, 2.0}, A2{0.0, 0.4};
    const auto psi_pt = psi_forcing(QueueInitDist::point(1), 1.0, A2, t2);
    CHECK(psi_pt[0] == 0.0);
    CHECK(psi_pt[1] == doctest::Approx(0.2643584619667173).epsilon(1e-12));

    QueueInitDist bad;
    bad.atoms = {0.5, 0.2}; // sums to 0.7
    CHECK_THROWS_AS((void)psi_forcing(bad, 1.0, A0, t), std::invalid_argument);
}

TEST_CASE("psi series survives large exponents") {
    // lambda t + A_t ~ 900: the naive linear-domain series would underflow.
    std::vector<double> t{600.0}, A{300.0};
    const auto psi = psi_forcing(QueueInitDist::empty_queue(), 1.0, A, t);
    CHECK(psi[0] > 0.0);
    CHECK(psi[0] < 1e-20);
    CHECK(std::isfinite(psi[0]));
}

TEST_CASE("solve_H: zero arrivals from an empty queue gives H == 1") {
    const RateFunction zero = constant_rate(0.0, 0.01, 40.0);
    const VolterraSolution sol = solve_H(zero, 1.0, QueueInitDist::empty_queue());
    double worst = 0.0;
    for (double v : sol.H) worst = std::max(worst, std::abs(v - 1.0));
    CHECK(worst < 1e-6);
}

TEST_CASE("solve_H: constant arrivals vs frozen birth-death oracle") {
    // lambda=1, delta=0.5, empty start. The limit 1 - delta/lambda = 0.5 is
    // approached from above (Takacs); the t^{-3/2} term is still 2.57e-4 at 40.
    const double h = 0.01;
    const RateFunction gam = constant_rate(0.5, h, 40.0);
    VolterraOptions opt;
    opt.estimate_defect = true;
    const VolterraSolution sol = solve_H(gam, 1.0, QueueInitDist::empty_queue(), opt);
    CHECK(sol.H.back() == doctest::Approx(0.50025701330).epsilon(2e-6));
    CHECK(sol.defect > 0.0);
    CHECK(sol.defect < 1e-4);
    for (double v : sol.H) CHECK(v >= 0.5 - 1e-9); // Takacs lower bound

    // Cross-method: truncated forward equations on the same grid.
    std::vector<double> grid(sol.H.size());
    for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = h * double(i);
    const int n_max = default_bd_truncation(0.5, 1.0);
    const auto bd = evolve_auto(BDState::point_mass(0, n_max), [](double) { return 0.5; }, 1.0, grid);
    double gap = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i)
        gap = std::max(gap, std::abs(sol.H[i] - bd.states[i].emptiness()));
    CHECK(gap < 1e-4);
}

TEST_CASE("exp_weighted_average: averaging lemma and exactness") {
    const double mu = 1.7, h = 0.01;
    const int n = 3001;
    std::vector<double> c(std::size_t(n), 0.8);
    const auto avg = exp_weighted_average(mu, h, c);
    // For constant f the integral is f (1 - e^{-mu t}) -> f.
    CHECK(avg.back() == doctest::Approx(0.8 * (1.0 - std::exp(-mu * 30.0))).epsilon(1e-12));

    // Quadratic integrand is integrated exactly (up to roundoff).
    std::vector<double> q(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double t = h * i;
        q[std::size_t(i)] = 2.0 + 0.3 * t + 0.05 * t * t;
    }
    const auto out = exp_weighted_average(mu, h, q);
    // Closed form of int_0^T mu e^{mu(s-T)} (a + b s + c s^2) ds.
    const double T = h * (n - 1), a = 2.0, b = 0.3, cc = 0.05, E = std::exp(-mu * T);
    const double exact = a * (1 - E) + b * (T - (1 - E) / mu) +
                         cc * (T * T - 2 * T / mu + 2 * (1 - E) / (mu * mu));
    CHECK(out.back() == doctest::Approx(exact).epsilon(1e-11));
}

TEST_CASE("solve_delta_system: empty network stays at zero") {
    const SchemeResult res = solve_delta_system(m1(1, 1, 0), QueueInitDist::empty_queue(), 20.0, 0.02);
    CHECK(res.iterations <= 2);
    for (double v : res.delta.values) CHECK(v == 0.0);
}

TEST_CASE("solve_delta_system: canonical point") {
    const ModelParams p = m1(1, 1, 1);
    SchemeOptions opt;
    opt.fp_tol = 1e-9;
    opt.store_iterates = true;
    const SchemeResult res = solve_delta_system(p, QueueInitDist::point(1), 60.0, 0.02, opt);

    // delta(0) = 0 and the a-priori bound delta <= lambda(1 - e^{-mu t}).
    CHECK(res.delta.values.front() == 0.0);
    CHECK(res.worst_bound_excess <= 1e-9);
    // Lower scheme is pointwise nondecreasing (up to quadrature wiggle).
    CHECK(res.worst_monotone_violation < 1e-7);
    for (std::size_t n = 1; n < res.iterates.size(); ++n)
        for (std::size_t i = 0; i < res.delta.values.size(); ++i)
            CHECK(res.iterates[n].values[i] >= res.iterates[n - 1].values[i] - 1e-7);

    // Limit: |delta(60) - lambda beta| is the true residual tail, ~1.5e-5.
    CHECK(std::abs(res.delta.values.back() - delta_bar(p)) < 1e-4);
    // H and b agree: H = 1 - b with b -> beta.
    CHECK(std::abs(res.H.H.back() - (1.0 - beta_model1(p))) < 1e-4);
}

TEST_CASE("upper_scheme sandwiches the solution") {
    const ModelParams p = m1(1, 1, 1);
    const double T = 30.0, h = 0.02;
    SchemeOptions opt;
    opt.fp_tol = 1e-9;
    opt.store_iterates = true;
    // The decreasing scheme needs the Takacs bound, i.e. an initial car law
    // dominated by geometric(gamma0/lambda); the geometric itself makes
    // H_{gamma0} stationary and the paper's first-iterate bound an equality.
    const QueueInitDist init = QueueInitDist::geometric(beta_model1(p));
    const SchemeResult lower = solve_delta_system(p, init, T, h, opt);
    const SchemeResult upper = upper_scheme(p, delta_bar(p), init, T, h, opt);

    CHECK_THROWS_AS((void)upper_scheme(p, 2.0, init, T, h, opt), std::invalid_argument);

    // gamma_0 is the constant; gamma_1 <= gamma_0 (1 - e^{-mu t}) pointwise.
    const auto& g0 = upper.iterates[0].values;
    const auto& g1 = upper.iterates[1].values;
    for (std::size_t i = 0; i < g0.size(); ++i) {
        CHECK(g0[i] == delta_bar(p));
        CHECK(g1[i] <= delta_bar(p) * (1.0 - std::exp(-p.mu * h * double(i))) + 1e-9);
    }
    // Decreasing scheme, and every lower iterate stays below every upper one.
    CHECK(upper.worst_monotone_violation < 1e-7);
    for (std::size_t n = 0; n < upper.iterates.size(); n += 3)
        for (std::size_t m = 0; m < lower.iterates.size(); m += 3)
            for (std::size_t i = 0; i < g0.size(); i += 7)
                CHECK(lower.iterates[m].values[i] <= upper.iterates[n].values[i] + 1e-8);

    double gap = 0.0;
    for (std::size_t i = 0; i < g0.size(); ++i)
        gap = std::max(gap, std::abs(upper.delta.values[i] - lower.delta.values[i]));
    CHECK(gap < 1e-8);

    // The common limit is the rate of the tandem whose initial car law is
    // this geometric, i.e. lambda*beta evaluated at U' = mean of the law.
    const double q = beta_model1(p);
    ModelParams p2 = p;
    p2.fleet_density = q / (1.0 - q);
    CHECK(std::abs(lower.delta.values.back() - delta_bar(p2)) < 2e-4);
}

TEST_CASE("delta pipeline matches the mean-field trajectory") {
    const ModelParams p = m1(1, 1, 1);
    const double T = 40.0, h = 0.01;
    SchemeOptions opt;
    opt.fp_tol = 1e-9;
    const SchemeResult res = solve_delta_system(p, QueueInitDist::point(1), T, h, opt);

    std::vector<double> times(res.delta.values.size());
    for (std::size_t i = 0; i < times.size(); ++i) times[i] = h * double(i);
    const Trajectory tr = integrate_model1_auto(
        p, [&](const TruncationGrid& g) { return init_two_point_cars(p, g); }, times);
    double worst = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i)
        worst = std::max(worst,
                         std::abs(p.mu * tr.functionals[i].r - res.delta.values[i]));
    CHECK(worst < 1e-4); // delta(t) = mu r(t), two independent routes
}

TEST_CASE("relaxation_rate branches") {
    CHECK(relaxation_rate(m1(1, 1, 1)) == doctest::Approx(0.14589803375031546).epsilon(1e-12));
    CHECK(relaxation_rate(m1(1, 0.05, 1)) == 0.05); // mu-branch
    CHECK(relaxation_rate(m1(2, 1, 3)) == doctest::Approx(0.08304832435861994).epsilon(1e-12));
}

TEST_CASE("estimate_rate") {
    std::vector<double> t, s;
    for (int i = 0; i <= 400; ++i) {
        t.push_back(0.1 * i);
        s.push_back(0.382 + std::exp(-0.3 * 0.1 * i));
    }
    const RateEstimate est = estimate_rate(t, s, 0.382, 1e-8);
    CHECK(est.v_hat == doctest::Approx(0.3).epsilon(1e-3));
    CHECK(est.r2 > 0.999);
    CHECK(est.points > 10);

    std::vector<double> flat(t.size(), 0.382);
    CHECK_THROWS_AS((void)estimate_rate(t, flat, 0.382, 1e-8), std::invalid_argument);
}
