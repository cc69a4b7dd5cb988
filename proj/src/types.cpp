#include "carshare/types.hpp"

#include <cmath>

namespace carshare {

namespace {

// Smallest k with beta^k below the tail target (beta in [0,1)).
int geometric_cutoff(double beta, double tail) {
    if (beta <= 0.0) return 8;
    if (beta >= 1.0) throw std::invalid_argument("geometric_cutoff: beta must be < 1");
    int k = int(std::ceil(std::log(tail) / std::log(beta)));
    return std::max(k, 8);
}

} // namespace

TruncationGrid default_grid_model1(const ModelParams& p) {
    const double rho = p.rho();
    const double U = p.fleet_density;
    // beta from the closed form of the mass-conservation quadratic.
    const double s = U + rho + 1.0;
    const double beta = (U == 0.0) ? 0.0 : (s - std::sqrt(s * s - 4.0 * rho * U)) / (2.0 * rho);
    // The j-marginal is an M(t)/M/inf occupation: its mean stays within
    // [min(U, rho*beta), max(U, rho)] for the initial laws we generate, so pad
    // a Poisson-style tail around that worst case.
    const double m = std::max(U, rho);
    TruncationGrid g;
    g.j_max = int(std::ceil(m + 10.0 * std::sqrt(std::max(m, 1.0)) + 5.0));
    g.k_max = geometric_cutoff(beta, 1e-14) + 5;
    return g;
}

TruncationGrid exact_grid(int capacity) {
    if (capacity <= 0) throw std::invalid_argument("exact_grid: capacity must be positive");
    TruncationGrid g;
    g.j_max = capacity;
    g.k_max = capacity;
    g.joint_cap = capacity;
    return g;
}

void JointDist::normalize() {
    const double s = mass.sum();
    if (!(s > 0.0)) throw std::runtime_error("JointDist::normalize: nonpositive total mass");
    mass /= s;
}

void JointDist::check_normalized(double tol) const {
    if ((mass < -tol).any()) throw std::runtime_error("JointDist: negative entry");
    if (std::abs(mass.sum() - 1.0) > tol) throw std::runtime_error("JointDist: mass not 1");
    if (grid.joint_cap) {
        for (int j = 0; j <= grid.j_max; ++j)
            for (int k = 0; k <= grid.k_max; ++k)
                if (j + k > *grid.joint_cap && mass(j, k) != 0.0)
                    throw std::runtime_error("JointDist: mass beyond joint capacity");
    }
}

JointDist JointDist::embedded(const TruncationGrid& target) const {
    if (target.j_max < grid.j_max || target.k_max < grid.k_max)
        throw std::invalid_argument("JointDist::embedded: target grid too small");
    JointDist out(target);
    out.mass.topLeftCorner(grid.j_max + 1, grid.k_max + 1) = mass;
    return out;
}

void MarginalDist::normalize() {
    const double s = mass.sum();
    if (!(s > 0.0)) throw std::runtime_error("MarginalDist::normalize: nonpositive total mass");
    mass /= s;
}

void MarginalDist::check_normalized(double tol) const {
    if ((mass < -tol).any()) throw std::runtime_error("MarginalDist: negative entry");
    if (std::abs(mass.sum() - 1.0) > tol) throw std::runtime_error("MarginalDist: mass not 1");
}

double total_mass(const JointDist& dist) { return total_mass(dist.mass); }

double dist_distance(const JointDist& a, const JointDist& b) {
    if (!(a.grid == b.grid)) throw std::invalid_argument("dist_distance: grid mismatch");
    return (a.mass - b.mass).abs().sum();
}

double dist_distance(const MarginalDist& a, const MarginalDist& b) {
    if (a.size() != b.size()) throw std::invalid_argument("dist_distance: size mismatch");
    return (a.mass - b.mass).abs().sum();
}

double mean_reservations(const JointDist& dist) {
    double acc = 0.0;
    for (int j = 0; j <= dist.grid.j_max; ++j) acc += double(j) * dist.mass.row(j).sum();
    return acc;
}

double mean_cars(const JointDist& dist) {
    double acc = 0.0;
    for (int k = 0; k <= dist.grid.k_max; ++k) acc += double(k) * dist.mass.col(k).sum();
    return acc;
}

double car_availability(const JointDist& dist) {
    return 1.0 - dist.mass.col(0).sum();
}

double acceptance_probability(const JointDist& dist) {
    if (!dist.grid.joint_cap) throw std::invalid_argument("acceptance_probability: needs a joint capacity");
    const int K = *dist.grid.joint_cap;
    double diag = 0.0;
    for (int j = 0; j <= std::min(K, dist.grid.j_max); ++j) {
        const int k = K - j;
        if (k <= dist.grid.k_max) diag += dist.mass(j, k);
    }
    return 1.0 - diag;
}

} // namespace carshare
