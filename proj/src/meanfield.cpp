#include "carshare/meanfield.hpp"

#include "carshare/equilibrium.hpp"
#include "carshare/rk45.hpp"

#include <cmath>
#include <stdexcept>

namespace carshare {

namespace {

double availability_from(const ArrayXXd& state) { return 1.0 - state.col(0).sum(); }

double mean_rows(const ArrayXXd& state) {
    double acc = 0.0;
    for (Eigen::Index j = 1; j < state.rows(); ++j) acc += double(j) * state.row(j).sum();
    return acc;
}

double mean_cols(const ArrayXXd& state) {
    double acc = 0.0;
    for (Eigen::Index k = 1; k < state.cols(); ++k) acc += double(k) * state.col(k).sum();
    return acc;
}

} // namespace

void rhs_model1(const ModelParams& p, const TruncationGrid& grid, const ArrayXXd& state,
                ArrayXXd& deriv) {
    const int J = grid.j_max, K = grid.k_max;
    const double lam = p.lambda, mu = p.mu;
    const double b = availability_from(state);
    deriv.resize(state.rows(), state.cols());
    for (int j = 0; j <= J; ++j) {
        for (int k = 0; k <= K; ++k) {
            const double a = state(j, k);
            double out = 0.0;
            if (j < J) out += lam * b;          // reservation arrival
            if (k < K) out += mu * j;           // reservation completes (needs room at k+1)
            if (k > 0) out += lam;              // car departs
            double in = 0.0;
            if (j > 0) in += lam * b * state(j - 1, k);
            if (k > 0 && j + 1 <= J) in += mu * (j + 1) * state(j + 1, k - 1);
            if (k + 1 <= K) in += lam * state(j, k + 1);
            deriv(j, k) = in - out * a;
        }
    }
}

double boundary_flux_model1(const ModelParams& p, const TruncationGrid& grid,
                            const ArrayXXd& state) {
    const double b = availability_from(state);
    const double row = state.row(grid.j_max).sum();
    double col = 0.0;
    for (int j = 0; j <= grid.j_max; ++j) col += double(j) * state(j, grid.k_max);
    // Suppressed reservation arrivals leak mass; suppressed completions only
    // distort shape, but both bound the truncation error.
    return p.lambda * b * row + p.mu * col;
}

void rhs_model2(const ModelParams& p, const ArrayXd& state, ArrayXd& deriv) {
    const int K = int(state.size()) - 1;
    const double lam = p.lambda, U = p.fleet_density;
    double a = 0.0;
    for (int j = 1; j <= K; ++j) a += double(j) * state(j);
    // The rhs stays total: adaptive Runge-Kutta evaluates trial stages far
    // outside the invariant surface a <= U and discards them through error
    // control. States with a > U are rejected at integrate() entry and on
    // every stored snapshot instead.
    const double birth = p.mu * (U - a);
    deriv.resize(state.size());
    for (int j = 0; j <= K; ++j) {
        double out = 0.0;
        if (j > 0) out += lam;
        if (j < K) out += birth;
        double in = 0.0;
        if (j > 0) in += birth * state(j - 1);
        if (j < K) in += lam * state(j + 1);
        deriv(j) = in - out * state(j);
    }
}

void rhs_model3(const ModelParams& p, const TruncationGrid& grid, const ArrayXXd& state,
                ArrayXXd& deriv) {
    if (!grid.joint_cap) throw std::invalid_argument("rhs_model3: grid needs joint_cap");
    const int K = *grid.joint_cap;
    const double lam = p.lambda, mu = p.mu;
    const double d = availability_from(state);
    double sat = 0.0;
    for (int j = 0; j <= K; ++j) sat += state(j, K - j);
    const double c = 1.0 - sat;
    deriv.setZero(state.rows(), state.cols());
    for (int j = 0; j <= K; ++j) {
        for (int k = 0; j + k <= K; ++k) {
            const double a = state(j, k);
            double out = 0.0;
            if (j + k < K) out += lam * d;
            out += mu * j;
            if (k > 0) out += lam * c;
            double in = 0.0;
            if (j > 0) in += lam * d * state(j - 1, k);
            if (k > 0) in += mu * (j + 1) * state(j + 1, k - 1);
            if (j + k < K) in += lam * c * state(j, k + 1);
            deriv(j, k) = in - out * a;
        }
    }
}

namespace {

struct StoredStateStats {
    double clip = 0.0;
    std::size_t clips = 0;
    double renorm = 0.0;
};

// Clip tiny negatives and renormalize drifted snapshots (policy: clip at
// -1e-12, renormalize when |sum-1| > 1e-12, hard error well beyond that).
template <typename Arr>
StoredStateStats clean_snapshot(Arr& m, double t) {
    StoredStateStats s;
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        double& v = *(m.data() + i);
        if (v < 0.0) {
            if (v < -1e-9)
                throw std::runtime_error("integrate: entry " + std::to_string(v) +
                                         " below positivity floor at t=" + std::to_string(t));
            s.clip = std::max(s.clip, -v);
            ++s.clips;
            v = 0.0;
        }
    }
    const double drift = std::abs(m.sum() - 1.0);
    if (drift > 1e-12) {
        s.renorm = drift;
        m /= m.sum();
    }
    return s;
}

std::vector<double> validated_times(const std::vector<double>& times) {
    if (times.empty()) throw std::invalid_argument("integrate: empty time grid");
    for (std::size_t i = 1; i < times.size(); ++i)
        if (times[i] <= times[i - 1]) throw std::invalid_argument("integrate: times must increase");
    return times;
}

} // namespace

Trajectory integrate(const ModelParams& p, const JointDist& init, const std::vector<double>& times,
                     const Tolerances& tol) {
    p.validate();
    if (p.model == Model::NoReservationFinite)
        throw std::invalid_argument("integrate: model 2 takes a MarginalDist");
    init.check_normalized(1e-9);
    const double U = p.fleet_density;
    const double init_mass = total_mass(init);
    if (std::abs(init_mass - U) > 1e3 * tol.mass_tol)
        throw std::invalid_argument("integrate: initial mass " + std::to_string(init_mass) +
                                    " violates the constraint sum (j+k) alpha = U");
    const auto out_times = validated_times(times);
    const TruncationGrid grid = init.grid;
    const Eigen::Index rows = grid.j_max + 1, cols = grid.k_max + 1;

    Trajectory traj;
    traj.params = p;

    ArrayXd y0 = Eigen::Map<const ArrayXd>(init.mass.data(), init.mass.size());
    ArrayXXd scratch_state(rows, cols), scratch_deriv(rows, cols);

    auto rhs = [&](double, const ArrayXd& y, ArrayXd& dy) {
        Eigen::Map<const ArrayXXd> st(y.data(), rows, cols);
        scratch_state = st;
        if (p.model == Model::ReservationInfinite)
            rhs_model1(p, grid, scratch_state, scratch_deriv);
        else
            rhs_model3(p, grid, scratch_state, scratch_deriv);
        dy = Eigen::Map<const ArrayXd>(scratch_deriv.data(), scratch_deriv.size());
    };

    OdeOptions opt;
    opt.rel_tol = tol.ode_rel_tol;
    opt.abs_tol = tol.ode_abs_tol;

    auto observe = [&](double t, const ArrayXd& y) {
        JointDist snap(grid);
        snap.mass = Eigen::Map<const ArrayXXd>(y.data(), rows, cols);
        const auto st = clean_snapshot(snap.mass, t);
        traj.max_clip = std::max(traj.max_clip, st.clip);
        traj.clip_count += st.clips;
        if (st.renorm > 0.0) {
            traj.max_renorm = std::max(traj.max_renorm, st.renorm);
            ++traj.renorm_count;
        }
        const double drift = std::abs(total_mass(snap) - U);
        traj.max_mass_drift = std::max(traj.max_mass_drift, drift);
        if (drift > 100.0 * tol.mass_tol)
            throw std::runtime_error("integrate: mass conservation breach " + std::to_string(drift) +
                                     " at t=" + std::to_string(t));
        if (p.model == Model::ReservationInfinite)
            traj.max_boundary_flux =
                std::max(traj.max_boundary_flux, boundary_flux_model1(p, grid, snap.mass));

        Functionals f;
        f.a = mean_cols(snap.mass);
        f.r = mean_rows(snap.mass);
        if (p.model == Model::ReservationInfinite) {
            f.b = availability_from(snap.mass);
            f.delta = p.mu * f.r;
        } else {
            f.d = availability_from(snap.mass);
            f.c = acceptance_probability(snap);
        }
        traj.times.push_back(t);
        traj.functionals.push_back(f);
        traj.joint_states.push_back(std::move(snap));
    };

    integrate_rk45(rhs, y0, out_times.front(), out_times, opt, observe);
    return traj;
}

Trajectory integrate(const ModelParams& p, const MarginalDist& init,
                     const std::vector<double>& times, const Tolerances& tol) {
    p.validate();
    if (p.model != Model::NoReservationFinite)
        throw std::invalid_argument("integrate: MarginalDist requires model 2");
    init.check_normalized(1e-9);
    if (init.size() != *p.capacity + 1)
        throw std::invalid_argument("integrate: marginal size must be K+1");
    {
        double a0 = 0.0;
        for (int j = 1; j < init.size(); ++j) a0 += double(j) * init.mass(j);
        if (a0 > p.fleet_density + 1e-9 * std::max(1.0, p.fleet_density))
            throw std::invalid_argument("integrate: initial mean cars exceeds U");
    }
    const auto out_times = validated_times(times);

    Trajectory traj;
    traj.params = p;

    OdeOptions opt;
    opt.rel_tol = tol.ode_rel_tol;
    opt.abs_tol = tol.ode_abs_tol;

    ArrayXd scratch;
    auto rhs = [&](double, const ArrayXd& y, ArrayXd& dy) { rhs_model2(p, y, dy); };
    auto observe = [&](double t, const ArrayXd& y) {
        MarginalDist snap;
        snap.mass = y;
        const auto st = clean_snapshot(snap.mass, t);
        traj.max_clip = std::max(traj.max_clip, st.clip);
        traj.clip_count += st.clips;
        if (st.renorm > 0.0) {
            traj.max_renorm = std::max(traj.max_renorm, st.renorm);
            ++traj.renorm_count;
        }
        Functionals f;
        double a = 0.0;
        for (int j = 1; j < snap.size(); ++j) a += double(j) * snap.mass(j);
        if (a > p.fleet_density + 1e-8 * std::max(1.0, p.fleet_density))
            throw std::runtime_error("integrate: stored state has mean cars above U at t=" +
                                     std::to_string(t));
        f.a = a;
        traj.times.push_back(t);
        traj.functionals.push_back(f);
        traj.marginal_states.push_back(std::move(snap));
    };

    integrate_rk45(rhs, ArrayXd(init.mass), out_times.front(), out_times, opt, observe);
    return traj;
}

Trajectory integrate_model1_auto(const ModelParams& p,
                                 const std::function<JointDist(const TruncationGrid&)>& init_factory,
                                 const std::vector<double>& times, const Tolerances& tol,
                                 int max_rounds) {
    TruncationGrid grid = default_grid_model1(p);
    for (int round = 0;; ++round) {
        Trajectory traj = integrate(p, init_factory(grid), times, tol);
        if (traj.max_mass_drift <= tol.mass_tol) return traj;
        if (round + 1 >= max_rounds)
            throw std::runtime_error("integrate_model1_auto: mass drift " +
                                     std::to_string(traj.max_mass_drift) +
                                     " persists after grid expansion");
        grid.j_max = int(std::ceil(grid.j_max * 1.4)) + 4;
        grid.k_max = int(std::ceil(grid.k_max * 1.4)) + 4;
    }
}

namespace {

template <typename Dist, typename Norm>
Dist steady_loop(const ModelParams& p, Dist state, double eps, double max_time,
                 const Tolerances& tol, Norm&& deriv_norm) {
    const double chunk = 20.0 / std::min(p.lambda, p.mu);
    double t = 0.0;
    while (t < max_time) {
        Trajectory tr = integrate(p, state, {0.0, chunk}, tol);
        Dist prev = std::move(state);
        if constexpr (std::is_same_v<Dist, JointDist>)
            state = tr.joint_states.back();
        else
            state = tr.marginal_states.back();
        t += chunk;
        // Either the generator residual is tiny or the integrator has hit its
        // accuracy plateau and the state no longer moves.
        if (deriv_norm(state) < eps) return state;
        if (t > chunk && dist_distance(state, prev) < eps) return state;
    }
    throw std::runtime_error("integrate_to_steady: no convergence before max_time");
}

} // namespace

JointDist integrate_to_steady(const ModelParams& p, const JointDist& init, double eps,
                              double max_time, const Tolerances& tol) {
    ArrayXXd deriv;
    return steady_loop(p, init, eps, max_time, tol, [&](const JointDist& s) {
        if (p.model == Model::ReservationInfinite)
            rhs_model1(p, s.grid, s.mass, deriv);
        else
            rhs_model3(p, s.grid, s.mass, deriv);
        return deriv.abs().sum();
    });
}

MarginalDist integrate_to_steady(const ModelParams& p, const MarginalDist& init, double eps,
                                 double max_time, const Tolerances& tol) {
    ArrayXd deriv;
    return steady_loop(p, init, eps, max_time, tol, [&](const MarginalDist& s) {
        rhs_model2(p, s.mass, deriv);
        return deriv.abs().sum();
    });
}

namespace {

double pgf_marginal(const MarginalDist& d, double z) {
    double acc = 0.0, zj = 1.0;
    for (int j = 0; j < d.size(); ++j) {
        acc += d.mass(j) * zj;
        zj *= z;
    }
    return acc;
}

} // namespace

double functional_residual(const Trajectory& traj,
                           const std::vector<std::pair<double, double>>& probes) {
    const auto& ts = traj.times;
    if (ts.size() < 3) throw std::invalid_argument("functional_residual: need >= 3 times");
    const double dt = ts[1] - ts[0];
    for (std::size_t i = 1; i + 1 < ts.size(); ++i)
        if (std::abs((ts[i + 1] - ts[i]) - dt) > 1e-9 * std::max(1.0, dt))
            throw std::invalid_argument("functional_residual: time grid must be uniform");

    const ModelParams& p = traj.params;
    double worst = 0.0;

    for (const auto& [x, y] : probes) {
        if (std::abs(x) > 1.0 || std::abs(y) > 1.0)
            throw std::invalid_argument("functional_residual: probe outside the unit square");
        if (p.model == Model::NoReservationFinite ? x == 0.0 : y == 0.0)
            throw std::invalid_argument("functional_residual: probe hits the 1/z pole");
        for (std::size_t i = 1; i + 1 < ts.size(); ++i) {
            double res = 0.0;
            if (p.model == Model::NoReservationFinite) {
                const double z = x; // univariate model: first probe slot is z
                const int K = *p.capacity;
                const auto& st = traj.marginal_states;
                const double Qt = (pgf_marginal(st[i + 1], z) - pgf_marginal(st[i - 1], z)) / (2 * dt);
                const double Q = pgf_marginal(st[i], z);
                const double a = traj.functionals[i].a;
                const double birth = p.mu * (p.fleet_density - a);
                const double zK = std::pow(z, K);
                res = Qt + (birth * (1.0 - z) + p.lambda * (1.0 - 1.0 / z)) * Q -
                      p.lambda * (1.0 - 1.0 / z) * st[i].mass(0) -
                      birth * st[i].mass(K) * zK * (1.0 - z);
            } else if (p.model == Model::ReservationInfinite) {
                const auto& st = traj.joint_states;
                const double Ft = (eval_pgf(st[i + 1], x, y) - eval_pgf(st[i - 1], x, y)) / (2 * dt);
                const double F = eval_pgf(st[i], x, y);
                const double Fx = eval_pgf_dx(st[i], x, y);
                const double F0 = eval_pgf(st[i], x, 0.0);
                const double b = traj.functionals[i].b;
                res = Ft + (p.lambda * b * (1.0 - x) + p.lambda * (1.0 - 1.0 / y)) * F -
                      p.mu * (y - x) * Fx - p.lambda * (1.0 - 1.0 / y) * F0;
            } else {
                const auto& st = traj.joint_states;
                const int K = *st[i].grid.joint_cap;
                const double Ft = (eval_pgf(st[i + 1], x, y) - eval_pgf(st[i - 1], x, y)) / (2 * dt);
                const double F = eval_pgf(st[i], x, y);
                const double Fx = eval_pgf_dx(st[i], x, y);
                const double F0 = eval_pgf(st[i], x, 0.0);
                const double c = traj.functionals[i].c;
                const double d = traj.functionals[i].d;
                double FK = 0.0;
                for (int j = 0; j <= K; ++j)
                    FK += st[i](j, K - j) * std::pow(x, j) * std::pow(y, K - j);
                res = Ft + (p.lambda * d * (1.0 - x) + p.lambda * c * (1.0 - 1.0 / y)) * F -
                      p.mu * (y - x) * Fx - p.lambda * c * (1.0 - 1.0 / y) * F0 -
                      p.lambda * d * (1.0 - x) * FK;
            }
            worst = std::max(worst, std::abs(res));
        }
    }
    return worst;
}

JointDist init_poisson_reservations(const ModelParams& p, const TruncationGrid& grid) {
    const double U = p.fleet_density;
    JointDist d(grid);
    for (int j = 0; j <= grid.j_max; ++j)
        d(j, 0) = U == 0.0 ? (j == 0 ? 1.0 : 0.0)
                           : std::exp(-U + j * std::log(U) - std::lgamma(j + 1.0));
    d.normalize();
    return d;
}

JointDist init_geometric_cars(const ModelParams& p, const TruncationGrid& grid) {
    const double U = p.fleet_density;
    const double q = U / (1.0 + U);
    JointDist d(grid);
    double g = 1.0 - q;
    for (int k = 0; k <= grid.k_max; ++k) {
        d(0, k) = g;
        g *= q;
    }
    d.normalize();
    return d;
}

JointDist init_mixed_product(const ModelParams& p, const TruncationGrid& grid) {
    // Poisson(U/2) reservations (x) geometric cars with mean U/2: total mass U.
    const double m = p.fleet_density / 2.0;
    const double q = m / (1.0 + m);
    JointDist d(grid);
    for (int j = 0; j <= grid.j_max; ++j) {
        const double pois = m == 0.0 ? (j == 0 ? 1.0 : 0.0)
                                     : std::exp(-m + j * std::log(m) - std::lgamma(j + 1.0));
        double g = 1.0 - q;
        for (int k = 0; k <= grid.k_max; ++k) {
            d(j, k) = pois * g;
            g *= q;
        }
    }
    d.normalize();
    return d;
}

JointDist init_two_point_cars(const ModelParams& p, const TruncationGrid& grid) {
    const double U = p.fleet_density;
    const int k1 = int(std::floor(U));
    const int k2 = k1 + 1;
    if (k2 > grid.k_max) throw std::invalid_argument("init_two_point_cars: grid too small");
    JointDist d(grid);
    if (std::abs(U - k1) < 1e-15) {
        d(0, k1) = 1.0;
    } else {
        const double w = U - k1; // weight on k2
        d(0, k1) = 1.0 - w;
        d(0, k2) = w;
    }
    return d;
}

} // namespace carshare
