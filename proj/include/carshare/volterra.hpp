#pragma once

#include "carshare/types.hpp"

#include <functional>
#include <vector>

namespace carshare {

/// Nonnegative rate sampled on the uniform grid t_i = i*h.
struct RateFunction {
    double h = 0.0;
    std::vector<double> values;

    int size() const { return int(values.size()); }
    double horizon() const { return h * double(values.size() - 1); }
    /// Cumulative integral A_t by the trapezoid rule, same grid.
    std::vector<double> cumulative() const;
};

/// Initial law of the car queue: finite support plus an optional geometric
/// tail (the two families the pipeline produces).
struct QueueInitDist {
    std::vector<double> atoms;  // P(N(0)=m) for m = 0,1,...
    double geo_weight = 0.0;    // extra mass spread as geo_weight*(1-q)q^m
    double geo_ratio = 0.0;

    static QueueInitDist empty_queue() { return {{1.0}, 0.0, 0.0}; }
    static QueueInitDist point(int m);
    static QueueInitDist geometric(double q) { return {{}, 1.0, q}; }
    /// Expand to plain atoms, geometric tail cut at relative mass `tail`.
    std::vector<double> expanded(double tail = 1e-18) const;
    /// Mean car count; the limit of the delta system is lambda*beta at this mass.
    double mean() const;
    void validate() const;
};

struct VolterraSolution {
    double h = 0.0;
    std::vector<double> H;    // emptiness probability of the car queue
    std::vector<double> psi;  // forcing term
    double defect = 0.0;      // sup difference against a doubled-step march
    double max_excess = 0.0;  // largest amount H left [0,1] before clamping
};

/// Volterra kernel D(s,t) for service rate `lambda` and cumulative arrival
/// A: scaled-Bessel form, exact limit D(t,t) = 1.
double kernel_D(double s, double t, double lambda,
                const std::function<double(double)>& cumulative_rate);
/// Same kernel from the lag t-s and the increment A_t - A_s.
double kernel_D_lag(double lambda, double tau, double dA);

/// Forcing psi(t) = contour coefficient of the initial condition; evaluated
/// as a Bessel-type double series, robust for any magnitude of lambda*t + A_t.
std::vector<double> psi_forcing(const QueueInitDist& init, double lambda,
                                const std::vector<double>& A, const std::vector<double>& t);

struct VolterraOptions {
    bool estimate_defect = false; // rerun at 2h and compare (an (h',h'/2) pair)
    double clamp_error = 1e-6;    // hard error if H leaves [0,1] by more
};

/// Product-integration march for H = psi + lambda int_0^t D(s,t) H(s) ds on
/// the grid of `delta`. Trapezoidal rule with Gregory endpoint corrections:
/// the kernel has unit mass (lambda int_0^inf D = 1), so the plain trapezoid
/// error grows secularly ~ lambda^2 t h^2 / 12; the corrections remove it.
VolterraSolution solve_H(const RateFunction& delta, double lambda, const QueueInitDist& init,
                         const VolterraOptions& opt = {});

/// int_0^t mu e^{mu(s-t)} g(s) ds on a uniform grid; exact exponential
/// weight, piecewise-quadratic g. Converges to lim g by the averaging lemma.
std::vector<double> exp_weighted_average(double mu, double h, const std::vector<double>& g);

struct SchemeResult {
    RateFunction delta;            // converged rate (last iterate)
    VolterraSolution H;            // emptiness for the last iterate
    std::vector<RateFunction> iterates; // populated when store_iterates
    int iterations = 0;
    double last_increment = 0.0;   // sup |delta_{n+1} - delta_n| at stop
    double worst_monotone_violation = 0.0;
    double worst_bound_excess = 0.0; // max of delta - lambda(1-e^{-mu t})
};

struct SchemeOptions {
    double fp_tol = 1e-10;
    int max_iterations = 2000;
    bool store_iterates = false;
    double monotone_slack = 1e-6; // quadrature wiggles beyond this are a bug
    bool estimate_defect = false;
};

/// Monotone lower scheme: delta_0 = 0, then alternate the Volterra solve and
/// the integrating-factor update delta_{n+1} = lambda*mu int e^{mu(s-t)}(1-H_n).
/// Iterates increase pointwise toward the solution of the coupled system.
SchemeResult solve_delta_system(const ModelParams& p, const QueueInitDist& init, double horizon,
                                double h, const SchemeOptions& opt = {});

/// Decreasing companion scheme started from the constant gamma0 in (0, lambda);
/// sandwiches the solution from above. Pointwise decrease needs the Takacs
/// bound H_{gamma0} >= 1 - gamma0/lambda, which holds iff `init` is
/// stochastically dominated by geometric(gamma0/lambda) (empty queue and that
/// geometric itself are the canonical choices); other initial laws can make
/// gamma_1 overshoot and are rejected by the monotonicity guard.
SchemeResult upper_scheme(const ModelParams& p, double gamma0, const QueueInitDist& init,
                          double horizon, double h, const SchemeOptions& opt = {});

struct RateEstimate {
    double v_hat = 0.0;    // fitted exponential decay rate
    double v_theory = 0.0; // min(mu, lambda (1-sqrt(beta))^2)
    double t_lo = 0.0, t_hi = 0.0;
    double r2 = 0.0;
    int points = 0;
};

/// Theoretical relaxation rate; the two printed forms are asserted equal.
double relaxation_rate(const ModelParams& p);

/// Least-squares fit of log|series - limit| on the window where the gap lies
/// in [1e3*floor_tol, 0.1*initial gap].
RateEstimate estimate_rate(const std::vector<double>& times, const std::vector<double>& series,
                           double limit, double floor_tol = 1e-8);

/// Relaxation-rate fit aware of the branch structure: on the continuous-
/// spectrum branch (lambda (1-sqrt(beta))^2 < mu) the gap decays like
/// t^{-3/2} e^{-vt} and a plain exponential fit is biased up by ~1.5/t, so
/// the algebraic prefactor is divided out first; the fit then runs on the
/// monotone tail past the compensated peak.
RateEstimate fit_relaxation(const std::vector<double>& times, const std::vector<double>& series,
                            double limit, double floor_tol, bool algebraic_prefactor);

} // namespace carshare
