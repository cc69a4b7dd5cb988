#pragma once

#include "carshare/types.hpp"

#include <vector>

namespace carshare {

/// Stationary solution of the mean-field system. Which fields are meaningful
/// depends on the model: beta/delta_bar/pi_joint for model 1, beta/pi_marginal
/// for model 2, (rho_R, rho_V, Z)/pi_joint for model 3.
struct EquilibriumSolution {
    Model model = Model::ReservationInfinite;
    double beta = 0.0;
    double rho_R = 0.0;
    double rho_V = 0.0;
    double Z = 1.0;
    double delta_bar = 0.0;
    JointDist pi_joint;
    MarginalDist pi_marginal;
};

/// Limiting car availability beta = lim b(t) for the unbounded model:
/// the admissible root of rho*beta^2 - (U+rho+1)*beta + U = 0, always < 1.
double beta_model1(const ModelParams& p);

/// Stationary arrival intensity of the car queue, delta_bar = lambda * beta.
double delta_bar(const ModelParams& p);

/// Product-form stationary law Poisson(rho*beta) x Geometric(beta) restricted
/// to `grid` and renormalized. Throws if the omitted tail exceeds 1e-12.
JointDist pi_model1(const ModelParams& p, const TruncationGrid& grid,
                    double* tail_defect = nullptr);

/// Mean of the geometric law truncated at K with ratio beta (K/2 at beta=1).
double truncated_geometric_mean(double beta, int K);

/// Fixed point beta = (mu/lambda) (U - m_K(beta)) for the no-reservation
/// model, solved by bracketing bisection. The root can exceed 1 when
/// U > K/2 + lambda/mu; the bracket expands as needed.
double beta_model2(const ModelParams& p);

/// pi_j proportional to beta^j on {0..K}; uniform at beta = 1.
MarginalDist pi_model2(double beta, int K);

/// Two-unknown stationary system for the capacity-K tandem: outer bisection
/// on rho_V, inner bisection for rho_R = (lambda/mu) d(rho_R, rho_V), mass
/// matched to U. Returns the full product-form solution with explicit Z.
EquilibriumSolution solve_model3(const ModelParams& p,
                                 double tol = 1e-13, int max_iter = 200);

EquilibriumSolution solve_equilibrium(const ModelParams& p);

/// Residual of the stationary generating-function identity evaluated at the
/// given probes, plus the three rate identities delta = mu p = lambda q
/// = lambda (1 - F(1,0)). Small only for the true stationary law.
double product_form_check(const JointDist& candidate, const ModelParams& p, double delta,
                          const std::vector<std::pair<double, double>>& probes = {
                              {0.25, 0.25}, {0.25, 0.75}, {0.5, 0.5}, {0.75, 0.25}, {0.75, 0.75}});

/// F(x,y) = sum alpha_{j,k} x^j y^k and its x-derivative.
double eval_pgf(const JointDist& dist, double x, double y);
double eval_pgf_dx(const JointDist& dist, double x, double y);

} // namespace carshare
