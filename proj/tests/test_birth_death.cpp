#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "carshare/birth_death.hpp"
#include "carshare/rng.hpp"
#include "carshare/volterra.hpp"

#include <cmath>

using namespace carshare;

namespace {

std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> t(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) t[std::size_t(i)] = a + (b - a) * double(i) / double(n - 1);
    return t;
}

} // namespace

TEST_CASE("evolve: absorbing empty state under zero arrivals") {
    const BDState init = BDState::point_mass(0, 10);
    const auto r = evolve(init, [](double) { return 0.0; }, 1.0, linspace(0, 5, 11));
    for (const auto& s : r.states) {
        CHECK(s.p(0) == doctest::Approx(1.0).epsilon(1e-12));
        s.check(1e-10);
    }
}

TEST_CASE("evolve: pure death from one customer") {
    const double serv = 1.7;
    const BDState init = BDState::point_mass(1, 10);
    const auto r = evolve(init, [](double) { return 0.0; }, serv, linspace(0, 4, 41));
    for (std::size_t i = 0; i < r.times.size(); ++i)
        CHECK(r.states[i].emptiness() ==
              doctest::Approx(1.0 - std::exp(-serv * r.times[i])).epsilon(1e-8));
}

TEST_CASE("evolve: constant-rate queue reaches the M/M/1 stationary emptiness") {
    const double gamma = 0.4, serv = 1.0;
    const int n_max = default_bd_truncation(gamma, serv);
    const auto r = evolve(BDState::point_mass(0, n_max), [=](double) { return gamma; }, serv,
                          {0.0, 80.0});
    CHECK(r.states.back().emptiness() == doctest::Approx(1.0 - gamma / serv).epsilon(1e-6));
}

TEST_CASE("evolve: frozen oracle for H(40) at gamma = lambda/2") {
    const auto r = evolve(BDState::point_mass(0, 120), [](double) { return 0.5; }, 1.0, {0.0, 40.0});
    CHECK(r.states.back().emptiness() == doctest::Approx(0.50025701330).epsilon(4e-8));
}

TEST_CASE("evolve: tail breach detection and auto-doubling") {
    // gamma/serv = 0.9 with a 6-level truncation overflows quickly.
    const BDState small = BDState::point_mass(0, 6);
    CHECK_THROWS_AS((void)evolve(small, [](double) { return 0.9; }, 1.0, linspace(0, 40, 11)),
                    std::runtime_error);
    const auto r = evolve_auto(small, [](double) { return 0.9; }, 1.0, linspace(0, 40, 11));
    CHECK(r.states.back().n_max() >= 48);
    CHECK(r.max_tail_mass <= 1e-10);
}

TEST_CASE("positivity and conservation on randomized profiles") {
    Rng rng(314);
    for (int rep = 0; rep < 10; ++rep) {
        const double a = 0.5 * rng.uniform();
        const double b = 0.4 * rng.uniform();
        const double w = 0.3 + 3.0 * rng.uniform();
        const auto prof = [=](double t) { return a + b * std::sin(w * t) * std::sin(w * t); };
        const auto r = evolve_auto(BDState::point_mass(0, 40), prof, 1.0, linspace(0, 15, 31));
        for (const auto& s : r.states) {
            CHECK(s.p.minCoeff() > -1e-12);
            CHECK(std::abs(s.p.sum() - 1.0) < 1e-10);
        }
    }
}

TEST_CASE("dominance: equal profiles and ordered profiles") {
    const auto grid = linspace(0, 20, 201);
    const BDState init = BDState::point_mass(0, 50);

    const auto eq = dominance_check([](double) { return 0.45; }, [](double) { return 0.45; }, init,
                                    init, 1.0, grid);
    CHECK(eq.holds);
    CHECK(eq.worst_violation > -1e-9);

    const auto lt = dominance_check([](double) { return 0.3; }, [](double) { return 0.6; }, init,
                                    init, 1.0, grid);
    CHECK(lt.holds);
    CHECK(lt.min_emptiness_gap >= -1e-9); // H_beta >= H_gamma

    const auto tv = dominance_check([](double t) { return 0.5 * (1.0 - std::exp(-t)); },
                                    [](double) { return 0.5; }, init, init, 1.0, grid);
    CHECK(tv.holds);

    // Precondition violation: beta above gamma somewhere.
    CHECK_THROWS_AS((void)dominance_check([](double) { return 0.7; }, [](double) { return 0.6; },
                                          init, init, 1.0, grid),
                    std::invalid_argument);
}

TEST_CASE("lipschitz_probe") {
    const auto grid = linspace(0, 20, 101);
    const BDState init = BDState::point_mass(0, 60);
    CHECK_THROWS_AS((void)lipschitz_probe([](double) { return 0.4; }, [](double) { return 0.4; },
                                          init, 1.0, grid),
                    std::invalid_argument);

    const auto rep = lipschitz_probe([](double) { return 0.4; }, [](double) { return 0.5; }, init,
                                     1.0, grid);
    CHECK(rep.profile_gap == doctest::Approx(0.1));
    CHECK(rep.ratio > 0.0);
    CHECK(rep.ratio < 100.0);

    // Stable under grid refinement.
    const auto fine = lipschitz_probe([](double) { return 0.4; }, [](double) { return 0.5; }, init,
                                      1.0, linspace(0, 20, 401));
    CHECK(rep.ratio == doctest::Approx(fine.ratio).epsilon(0.05));

    // Randomized family: the empirical ratio stays bounded.
    Rng rng(11);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        const double base = 0.2 + 0.3 * rng.uniform();
        const double bump = 0.05 + 0.2 * rng.uniform();
        const auto beta = [=](double) { return base; };
        const auto gamma = [=](double t) { return base + bump * (1.0 - std::exp(-t)); };
        const auto r = lipschitz_probe(beta, gamma, init, 1.0, grid);
        worst = std::max(worst, r.ratio);
    }
    CHECK(worst < 100.0);
    MESSAGE("max empirical Lipschitz ratio over 20 pairs: ", worst);
}

TEST_CASE("stationary_equivalence") {
    // Constant profile: geometric law with ratio delta/serv.
    const double d = 0.35, serv = 1.0;
    const double horizon = 50.0 / std::pow(std::sqrt(serv) - std::sqrt(d), 2.0);
    const int n_max = default_bd_truncation(d, serv);
    const auto rep = stationary_equivalence([=](double) { return d; }, d, serv, horizon,
                                            BDState::point_mass(0, n_max));
    CHECK(rep.l1_distance < 1e-4);

    // Time-varying profile with the same limit lands on the same law.
    const auto rep2 = stationary_equivalence([=](double t) { return d * (1.0 - std::exp(-t)); }, d,
                                             serv, horizon, BDState::point_mass(0, n_max));
    CHECK(rep2.l1_distance < 1e-4);

    // Zero rate: point mass at zero.
    const auto rep0 = stationary_equivalence([](double) { return 0.0; }, 0.0, serv, 30.0,
                                             BDState::point_mass(0, 20));
    CHECK(rep0.l1_distance < 1e-8);

    CHECK_THROWS_AS((void)stationary_equivalence([](double) { return 2.0; }, 2.0, 1.0, 10.0,
                                                 BDState::point_mass(0, 20)),
                    std::invalid_argument);
}

TEST_CASE("relaxation of the emptiness probability toward its limit") {
    // p0(t) - (1 - gamma/serv) decays like t^{-3/2} e^{-ct} with
    // c = (sqrt(serv) - sqrt(gamma))^2. A raw exponential fit over a
    // multiplicative window absorbs the algebraic prefactor as an O(1)
    // upward bias whatever c is, so the rate check compensates it by
    // fitting t^{3/2} (p0 - limit) instead; the raw fit is only sanity.
    const double gamma = 0.5, serv = 1.0;
    const double c = std::pow(std::sqrt(serv) - std::sqrt(gamma), 2.0);
    const auto grid = linspace(0.0, 60.0, 1201);
    const auto r = evolve(BDState::point_mass(0, 80), [=](double) { return gamma; }, serv, grid);
    const double limit = 1.0 - gamma / serv;
    std::vector<double> raw(r.states.size()), comp(r.states.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        raw[i] = r.states[i].emptiness();
        comp[i] = limit + (r.states[i].emptiness() - limit) * std::pow(std::max(r.times[i], 1e-12), 1.5);
    }
    const RateEstimate raw_fit = estimate_rate(r.times, raw, limit, 1e-9);
    CHECK(raw_fit.v_hat > c);          // prefactor always biases the raw fit up
    CHECK(raw_fit.v_hat < 2.5 * c);
    // The compensated gap peaks at t = 1.5/c before decaying; fit the tail.
    std::size_t peak = 0;
    for (std::size_t i = 0; i < comp.size(); ++i)
        if (std::abs(comp[i] - limit) > std::abs(comp[peak] - limit)) peak = i;
    const std::vector<double> tt(r.times.begin() + long(peak), r.times.end());
    const std::vector<double> cc(comp.begin() + long(peak), comp.end());
    const RateEstimate comp_fit = estimate_rate(tt, cc, limit, 1e-9);
    CHECK(std::abs(comp_fit.v_hat - c) / c < 0.1);
    CHECK(comp_fit.r2 > 0.99);
}
