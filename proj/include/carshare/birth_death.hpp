#pragma once

#include "carshare/types.hpp"

#include <functional>
#include <vector>

namespace carshare {

/// Time-varying arrival rate of the M(t)/M/1 queue. Must be continuous and
/// nonnegative on the horizon of interest.
using ArrivalProfile = std::function<double(double)>;

/// Truncated law of the queue length with its cumulative vector.
struct BDState {
    ArrayXd p; // p_n(t) on {0..n_max}

    BDState() = default;
    explicit BDState(int n_max) : p(ArrayXd::Zero(n_max + 1)) {}
    static BDState point_mass(int n, int n_max);

    int n_max() const { return int(p.size()) - 1; }
    ArrayXd cumulative() const;
    double emptiness() const { return p(0); }
    void check(double tol = 1e-10) const;
};

struct BDEvolveResult {
    std::vector<double> times;
    std::vector<BDState> states;
    double max_tail_mass = 0.0; // mass at the reflecting top level
};

/// Forward equations of the M(t)/M/1 queue with service rate `service`,
/// integrated by adaptive RK45. The top level reflects (no birth out of
/// n_max) so total probability is conserved; tail mass is reported and
/// breaching `tail_tol` is an error.
BDEvolveResult evolve(const BDState& init, const ArrivalProfile& arrivals, double service,
                      const std::vector<double>& t_grid, double tail_tol = 1e-10,
                      const Tolerances& tol = {});

/// Evolve with automatic doubling of n_max on tail breach.
BDEvolveResult evolve_auto(const BDState& init, const ArrivalProfile& arrivals, double service,
                           const std::vector<double>& t_grid, double tail_tol = 1e-10,
                           const Tolerances& tol = {}, int max_doublings = 6);

/// Default truncation for an ergodic probe with arrival bound gamma_max.
int default_bd_truncation(double gamma_max, double service);

struct DominanceReport {
    bool holds = true;
    double worst_violation = 0.0; // most negative S_beta - S_gamma component
    double min_emptiness_gap = 0.0;
};

/// Stochastic dominance: with beta <= gamma pointwise and S_beta(0) >= S_gamma(0),
/// the cumulative vectors stay ordered; checked componentwise on the grid at
/// tolerance `slack` (absorbs integrator error).
DominanceReport dominance_check(const ArrivalProfile& beta, const ArrivalProfile& gamma,
                                const BDState& init_b, const BDState& init_g, double service,
                                const std::vector<double>& t_grid, double slack = 1e-9,
                                const Tolerances& tol = {});

struct LipschitzReport {
    double profile_gap = 0.0;  // sup |beta - gamma| on the grid
    double solution_gap = 0.0; // sup_t l1 distance of the two laws
    double ratio = 0.0;
};

/// Empirical ratio sup_t |P_beta - P_gamma|_1 / sup |beta - gamma|.
LipschitzReport lipschitz_probe(const ArrivalProfile& beta, const ArrivalProfile& gamma,
                                const BDState& init, double service,
                                const std::vector<double>& t_grid, const Tolerances& tol = {});

struct StationaryReport {
    double l1_distance = 0.0;
    ArrayXd geometric; // exact M/M/1 law with ratio delta/service
};

/// Lemma-A1(iv) style check: evolving under a profile with limit `delta_limit`
/// lands on the geometric stationary law of the constant-rate queue.
StationaryReport stationary_equivalence(const ArrivalProfile& profile, double delta_limit,
                                        double service, double horizon, const BDState& init,
                                        const Tolerances& tol = {});

} // namespace carshare
