#pragma once

#include "carshare/types.hpp"

#include <functional>
#include <limits>
#include <vector>

namespace carshare {

/// Scalar functionals of the state recorded along a trajectory.
/// NaN marks fields that do not apply to the model at hand.
struct Functionals {
    double b = std::numeric_limits<double>::quiet_NaN(); // car availability (model 1)
    double a = std::numeric_limits<double>::quiet_NaN(); // mean cars per station
    double c = std::numeric_limits<double>::quiet_NaN(); // acceptance probability (model 3)
    double d = std::numeric_limits<double>::quiet_NaN(); // car availability (model 3)
    double r = std::numeric_limits<double>::quiet_NaN(); // mean reservations per station
    double delta = std::numeric_limits<double>::quiet_NaN(); // mu * r (model 1)
};

struct Trajectory {
    ModelParams params;
    std::vector<double> times;
    std::vector<JointDist> joint_states;       // models 1 and 3
    std::vector<MarginalDist> marginal_states; // model 2
    std::vector<Functionals> functionals;

    // Integration diagnostics.
    double max_mass_drift = 0.0;      // max |sum (j+k) alpha - U| (models 1/3)
    double max_boundary_flux = 0.0;   // truncation-induced leak rate bound (model 1)
    double max_clip = 0.0;            // largest negative entry clipped in stored states
    std::size_t clip_count = 0;
    double max_renorm = 0.0;          // largest |sum - 1| renormalized away
    std::size_t renorm_count = 0;
};

/// dalpha/dt for the unbounded tandem on a truncated grid. Up-flows leaving
/// the grid are redirected to self (reflecting boundary), which keeps total
/// probability exact and makes the truncation error observable as a mass
/// leak tracked by `boundary_flux_model1`.
void rhs_model1(const ModelParams& p, const TruncationGrid& grid, const ArrayXXd& state,
                ArrayXXd& deriv);

/// Instantaneous mass-leak rate caused by the reflecting boundary.
double boundary_flux_model1(const ModelParams& p, const TruncationGrid& grid,
                            const ArrayXXd& state);

/// dalpha/dt for the single-queue model on {0..K}.
void rhs_model2(const ModelParams& p, const ArrayXd& state, ArrayXd& deriv);

/// dalpha/dt for the capacity-K tandem on {j+k <= K}; exact state space.
void rhs_model3(const ModelParams& p, const TruncationGrid& grid, const ArrayXXd& state,
                ArrayXXd& deriv);

/// Adaptive RK45 integration recording states and functionals at `times`
/// (strictly increasing, starting at the initial instant).
Trajectory integrate(const ModelParams& p, const JointDist& init, const std::vector<double>& times,
                     const Tolerances& tol = {});
Trajectory integrate(const ModelParams& p, const MarginalDist& init,
                     const std::vector<double>& times, const Tolerances& tol = {});

/// Model-1 integration with automatic grid enlargement: if the truncation
/// leak threatens `tol.mass_tol`, the grid grows and the run repeats.
Trajectory integrate_model1_auto(const ModelParams& p,
                                 const std::function<JointDist(const TruncationGrid&)>& init_factory,
                                 const std::vector<double>& times, const Tolerances& tol = {},
                                 int max_rounds = 4);

/// Integrate in chunks until ||dalpha/dt||_1 < eps or the state stops moving
/// (L1 change below eps across a whole chunk); throws after max_time.
JointDist integrate_to_steady(const ModelParams& p, const JointDist& init, double eps = 1e-8,
                              double max_time = 1e5, const Tolerances& tol = {});
MarginalDist integrate_to_steady(const ModelParams& p, const MarginalDist& init, double eps = 1e-8,
                                 double max_time = 1e5, const Tolerances& tol = {});

/// Max residual of the model's generating-function identity over probe
/// points, with d/dt by central differences on the stored (uniform) grid.
double functional_residual(const Trajectory& traj,
                           const std::vector<std::pair<double, double>>& probes);

// Initial conditions in the constraint set (mass U), used by tests, the
// acceptance suite and the CLI.
JointDist init_poisson_reservations(const ModelParams& p, const TruncationGrid& grid);
JointDist init_geometric_cars(const ModelParams& p, const TruncationGrid& grid);
JointDist init_mixed_product(const ModelParams& p, const TruncationGrid& grid);
/// Two-point car law {floor U, ceil U}; exact finite support, empty first queue.
JointDist init_two_point_cars(const ModelParams& p, const TruncationGrid& grid);

} // namespace carshare
