#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>

namespace carshare {

using ArrayXd = Eigen::ArrayXd;
// Row-major so that (j,k) grids flatten to contiguous j-major vectors.
using ArrayXXd = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Central numerical tolerances. One record so tests and solvers agree.
struct Tolerances {
    double mass_tol = 1e-9;         // |sum (j+k) alpha - U| allowed along trajectories
    double fixed_point_tol = 1e-12; // root finders / iteration schemes
    double ode_rel_tol = 1e-8;
    double ode_abs_tol = 1e-12;
};

enum class Model {
    ReservationInfinite = 1, // tandem with reservations, K = infinity
    NoReservationFinite = 2, // single queue per station, capacity K
    ReservationFinite = 3,   // tandem with joint capacity K
};

/// Rates and fleet density shared by every solver.
/// capacity == nullopt means unbounded stations (Model 1 only).
struct ModelParams {
    double lambda = 1.0;        // user arrival intensity
    double mu = 1.0;            // travel-time intensity
    double fleet_density = 1.0; // U = lim M_N / N
    std::optional<int> capacity;
    Model model = Model::ReservationInfinite;

    double rho() const { return lambda / mu; }

    void validate() const {
        if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be > 0");
        if (!(mu > 0.0)) throw std::invalid_argument("mu must be > 0");
        if (!(fleet_density >= 0.0)) throw std::invalid_argument("fleet_density must be >= 0");
        if (model == Model::ReservationInfinite) {
            if (capacity) throw std::invalid_argument("model 1 requires infinite capacity");
        } else {
            if (!capacity) throw std::invalid_argument("capacity: required for finite-capacity models");
            if (*capacity <= 0) throw std::invalid_argument("capacity must be a positive integer");
            if (fleet_density > double(*capacity))
                throw std::invalid_argument("fleet_density exceeds capacity; constraint set is empty");
        }
    }
};

/// Index window [0..j_max] x [0..k_max], optionally restricted to j+k <= joint_cap.
struct TruncationGrid {
    int j_max = 0;
    int k_max = 0;
    std::optional<int> joint_cap;

    bool admits(int j, int k) const {
        return j >= 0 && k >= 0 && j <= j_max && k <= k_max &&
               (!joint_cap || j + k <= *joint_cap);
    }
    bool operator==(const TruncationGrid&) const = default;
};

/// Default grid for the unbounded model: sized from the product-form tails
/// (Poisson(rho*beta) x Geometric(beta)) plus headroom for transient inits
/// whose j-marginal can reach mean max(U, rho).
TruncationGrid default_grid_model1(const ModelParams& p);

/// Exact grid for finite-capacity models: j_max = k_max = joint_cap = K.
TruncationGrid exact_grid(int capacity);

/// Joint law {alpha_{j,k}} on a truncation grid. Value type; normalized on demand.
struct JointDist {
    TruncationGrid grid;
    ArrayXXd mass; // (j_max+1) x (k_max+1), entries outside joint_cap stay zero

    JointDist() = default;
    explicit JointDist(const TruncationGrid& g)
        : grid(g), mass(ArrayXXd::Zero(g.j_max + 1, g.k_max + 1)) {}

    double& operator()(int j, int k) { return mass(j, k); }
    double operator()(int j, int k) const { return mass(j, k); }

    double sum() const { return mass.sum(); }
    void normalize();
    /// Throws unless entries >= -tol and |sum - 1| <= tol.
    void check_normalized(double tol = 1e-9) const;
    /// Copy onto a larger grid (zero padding). Throws if target cannot hold support.
    JointDist embedded(const TruncationGrid& target) const;
};

/// One-dimensional law on {0..K} (per-station car count, Model 2).
struct MarginalDist {
    ArrayXd mass;

    MarginalDist() = default;
    explicit MarginalDist(int size) : mass(ArrayXd::Zero(size)) {}

    int size() const { return int(mass.size()); }
    void normalize();
    void check_normalized(double tol = 1e-12) const;
};

/// sum (j+k) alpha_{j,k}: mean particles per station. Equals U on the constraint set.
template <typename Derived>
double total_mass(const Eigen::ArrayBase<Derived>& mass) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < mass.rows(); ++j)
        for (Eigen::Index k = 0; k < mass.cols(); ++k)
            acc += double(j + k) * mass(j, k);
    return acc;
}
double total_mass(const JointDist& dist);

/// L1 distance (twice total variation). Grids must match.
double dist_distance(const JointDist& a, const JointDist& b);
double dist_distance(const MarginalDist& a, const MarginalDist& b);

/// Mean reservation count sum j*alpha.
double mean_reservations(const JointDist& dist);
/// Mean car count sum k*alpha.
double mean_cars(const JointDist& dist);
/// b(t) / d(t): probability a station holds at least one car, 1 - sum_j alpha_{j,0}.
double car_availability(const JointDist& dist);
/// c(t): probability a station is not saturated, 1 - sum_j alpha_{j,K-j}.
double acceptance_probability(const JointDist& dist);

} // namespace carshare
