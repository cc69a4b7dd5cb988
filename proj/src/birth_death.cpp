#include "carshare/birth_death.hpp"

#include "carshare/rk45.hpp"

#include <cmath>
#include <stdexcept>

namespace carshare {

BDState BDState::point_mass(int n, int n_max) {
    if (n < 0 || n > n_max) throw std::invalid_argument("BDState::point_mass: n out of range");
    BDState s(n_max);
    s.p(n) = 1.0;
    return s;
}

ArrayXd BDState::cumulative() const {
    ArrayXd s(p.size());
    double acc = 0.0;
    for (Eigen::Index n = 0; n < p.size(); ++n) {
        acc += p(n);
        s(n) = acc;
    }
    return s;
}

void BDState::check(double tol) const {
    if ((p < -tol).any()) throw std::runtime_error("BDState: negative probability");
    if (std::abs(p.sum() - 1.0) > tol) throw std::runtime_error("BDState: mass not 1");
}

int default_bd_truncation(double gamma_max, double service) {
    if (!(gamma_max < service)) throw std::invalid_argument("default_bd_truncation: needs gamma < service");
    return int(std::ceil(20.0 + 10.0 * gamma_max / (service - gamma_max)));
}

BDEvolveResult evolve(const BDState& init, const ArrivalProfile& arrivals, double service,
                      const std::vector<double>& t_grid, double tail_tol, const Tolerances& tol) {
    if (!(service > 0.0)) throw std::invalid_argument("evolve: service rate must be > 0");
    init.check(1e-9);
    const int n = init.n_max();

    BDEvolveResult out;
    auto rhs = [&](double t, const ArrayXd& p, ArrayXd& dp) {
        const double b = arrivals(t);
        if (b < 0.0) throw std::domain_error("evolve: negative arrival rate at t=" + std::to_string(t));
        dp.resize(p.size());
        dp(0) = -b * p(0) + service * p(1);
        for (int i = 1; i < n; ++i)
            dp(i) = b * p(i - 1) - (b + service) * p(i) + service * p(i + 1);
        dp(n) = b * p(n - 1) - service * p(n); // reflecting top
    };
    OdeOptions opt;
    opt.rel_tol = tol.ode_rel_tol;
    opt.abs_tol = tol.ode_abs_tol;
    auto observe = [&](double t, const ArrayXd& p) {
        BDState s;
        s.p = p;
        out.max_tail_mass = std::max(out.max_tail_mass, p(n));
        if (out.max_tail_mass > tail_tol)
            throw std::runtime_error("evolve: tail mass " + std::to_string(p(n)) +
                                     " breached truncation at t=" + std::to_string(t));
        out.times.push_back(t);
        out.states.push_back(std::move(s));
    };
    integrate_rk45(rhs, ArrayXd(init.p), t_grid.front(), t_grid, opt, observe);
    return out;
}

BDEvolveResult evolve_auto(const BDState& init, const ArrivalProfile& arrivals, double service,
                           const std::vector<double>& t_grid, double tail_tol,
                           const Tolerances& tol, int max_doublings) {
    BDState cur = init;
    for (int round = 0;; ++round) {
        try {
            return evolve(cur, arrivals, service, t_grid, tail_tol, tol);
        } catch (const std::runtime_error&) {
            if (round + 1 >= max_doublings) throw;
            BDState bigger(cur.n_max() * 2);
            bigger.p.head(cur.p.size()) = cur.p;
            cur = std::move(bigger);
        }
    }
}

DominanceReport dominance_check(const ArrivalProfile& beta, const ArrivalProfile& gamma,
                                const BDState& init_b, const BDState& init_g, double service,
                                const std::vector<double>& t_grid, double slack,
                                const Tolerances& tol) {
    if (init_b.n_max() != init_g.n_max())
        throw std::invalid_argument("dominance_check: truncations must match");
    for (double t : t_grid)
        if (beta(t) > gamma(t) + 1e-12)
            throw std::invalid_argument("dominance_check: beta(t) <= gamma(t) violated on the grid");
    {
        const ArrayXd gap0 = init_b.cumulative() - init_g.cumulative();
        if ((gap0 < -1e-12).any())
            throw std::invalid_argument("dominance_check: S_beta(0) >= S_gamma(0) violated");
    }
    const auto rb = evolve(init_b, beta, service, t_grid, 1e-9, tol);
    const auto rg = evolve(init_g, gamma, service, t_grid, 1e-9, tol);

    DominanceReport rep;
    rep.min_emptiness_gap = 1.0;
    for (std::size_t i = 0; i < rb.states.size(); ++i) {
        const ArrayXd gap = rb.states[i].cumulative() - rg.states[i].cumulative();
        const double worst = gap.minCoeff();
        rep.worst_violation = std::min(rep.worst_violation, worst);
        rep.min_emptiness_gap =
            std::min(rep.min_emptiness_gap, rb.states[i].emptiness() - rg.states[i].emptiness());
        if (worst < -slack) rep.holds = false;
    }
    return rep;
}

LipschitzReport lipschitz_probe(const ArrivalProfile& beta, const ArrivalProfile& gamma,
                                const BDState& init, double service,
                                const std::vector<double>& t_grid, const Tolerances& tol) {
    LipschitzReport rep;
    for (double t : t_grid) rep.profile_gap = std::max(rep.profile_gap, std::abs(beta(t) - gamma(t)));
    if (rep.profile_gap == 0.0)
        throw std::invalid_argument("lipschitz_probe: profiles coincide on the grid");
    const auto rb = evolve(init, beta, service, t_grid, 1e-9, tol);
    const auto rg = evolve(init, gamma, service, t_grid, 1e-9, tol);
    for (std::size_t i = 0; i < rb.states.size(); ++i)
        rep.solution_gap =
            std::max(rep.solution_gap, (rb.states[i].p - rg.states[i].p).abs().sum());
    rep.ratio = rep.solution_gap / rep.profile_gap;
    return rep;
}

StationaryReport stationary_equivalence(const ArrivalProfile& profile, double delta_limit,
                                        double service, double horizon, const BDState& init,
                                        const Tolerances& tol) {
    if (!(delta_limit >= 0.0 && delta_limit < service))
        throw std::invalid_argument("stationary_equivalence: needs 0 <= delta < service");
    std::vector<double> grid{0.0, horizon};
    const auto r = evolve_auto(init, profile, service, grid, 1e-9, tol);
    const ArrayXd& p_end = r.states.back().p;

    StationaryReport rep;
    rep.geometric = ArrayXd::Zero(p_end.size());
    const double ratio = delta_limit / service;
    double g = 1.0 - ratio;
    for (Eigen::Index i = 0; i < rep.geometric.size(); ++i) {
        rep.geometric(i) = (ratio == 0.0) ? (i == 0 ? 1.0 : 0.0) : g;
        g *= ratio;
    }
    // Residual geometric tail beyond the truncation is counted as distance.
    rep.l1_distance = (p_end - rep.geometric).abs().sum() + std::pow(ratio, double(p_end.size()));
    return rep;
}

} // namespace carshare
