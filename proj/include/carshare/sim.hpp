#pragma once

#include "carshare/rng.hpp"
#include "carshare/types.hpp"

#include <cstdint>
#include <vector>

namespace carshare {

/// Finite-N station network. Models 1/3 conserve sum r_i + v_i; model 2 keeps
/// reservations at zero and tracks cars in transit separately.
struct NetworkState {
    std::vector<int> r;
    std::vector<int> v;
    long long in_transit = 0;
    double clock = 0.0;

    int n_stations() const { return int(r.size()); }
    long long total_particles() const;
    void validate(const ModelParams& p) const;
};

struct SimConfig {
    int n_stations = 0;
    long long fleet_size = 0;
    double horizon = 0.0;
    std::vector<double> sample_times;
    std::uint64_t seed = 0;
    int replications = 1;

    void validate(const ModelParams& p) const;
};

struct EmpiricalMeasure {
    double time = 0.0;
    JointDist counts; // entries are multiples of 1/N
};

enum class InitKind { AllReserved, AllCars, Uniform };

/// Random (multinomial-uniform, capacity-respecting) or deterministic
/// round-robin placement of the fleet. AllReserved is invalid for model 2;
/// infeasible placements (fleet beyond total capacity) throw.
NetworkState initial_state(InitKind kind, const SimConfig& cfg, const ModelParams& p, Rng& rng);

/// Advance exactly one event (competing exponential clocks; blocked moves
/// still advance the clock). Value-in/value-out wrapper over the engine.
NetworkState step(const NetworkState& state, const ModelParams& p, Rng& rng);

struct Replication {
    std::vector<EmpiricalMeasure> samples;
    std::uint64_t events = 0;
};

/// Simulate `cfg.replications` independent runs; replication i uses the
/// stream derived from (seed, i) and is bitwise reproducible. `threads`
/// only distributes work; results are identical for any thread count.
std::vector<Replication> run(const SimConfig& cfg, const ModelParams& p, InitKind init,
                             int threads = 1);

/// Empirical measure of a state on a grid that covers its support (or a
/// fixed target grid for comparisons).
EmpiricalMeasure measure_state(const NetworkState& state, const ModelParams& p);
EmpiricalMeasure measure_state_on(const NetworkState& state, const TruncationGrid& grid);

/// Mean of measures after embedding on a common covering grid.
JointDist mean_measure(const std::vector<JointDist>& measures);

} // namespace carshare
