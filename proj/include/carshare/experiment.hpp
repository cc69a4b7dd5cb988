#pragma once

#include "carshare/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace carshare {

/// Configuration errors exit with code 2, numerical failures with 3.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ExperimentKind { Simulate, MeanField, Equilibrium, DeltaSystem, RateFit, CrossValidate, DominanceSuite };

std::string to_string(ExperimentKind k);

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::Equilibrium;
    ModelParams params;
    Tolerances tol;
    std::uint64_t seed = 1;
    int threads = 1;
    std::string out_root = "runs";
    std::string init = "";

    // grid overrides (0 = auto)
    int j_max = 0, k_max = 0;
    // meanfield
    double ode_horizon = 80.0;
    double ode_sample_dt = 0.5;
    // simulate
    int sim_stations = 1000;
    long long sim_fleet = -1; // -1: round(U * N)
    double sim_horizon = 50.0;
    double sim_sample_dt = 0.0; // 0: only {0, horizon}
    std::vector<double> sim_sample_times;
    int sim_replications = 8;
    // delta system
    double delta_horizon = 60.0;
    double delta_h = 0.01;
    double delta_tol = 1e-10;
    bool delta_upper = false;
    double delta_gamma0 = 0.0; // 0: use delta_bar
    // ratefit
    double ratefit_floor = 1e-8;
    // dominance suite
    int dom_pairs = 20;
    double dom_horizon = 20.0;
    int dom_points = 101;
    // cross validation
    double xval_t_end = 10.0;
    int xval_stations = 2000;
    int xval_replications = 10;

    /// Fully-defaulted view of this run; hashing it (minus out/threads)
    /// names the run directory.
    nlohmann::ordered_json effective() const;
};

/// Parse and validate a config object. Unknown keys are rejected with the
/// offending path; lambda/mu/U/capacity may hold arrays, which expand to a
/// deterministic cartesian sweep.
std::vector<ExperimentConfig> parse_configs(const nlohmann::json& root);
std::vector<ExperimentConfig> parse_config_file(const std::string& path);

struct RunResult {
    std::filesystem::path dir;
    nlohmann::ordered_json manifest;
};

/// Execute one experiment: writes payload files plus manifest.json into
/// out_root/<config-hash>/ and returns the manifest.
RunResult run_experiment(const ExperimentConfig& cfg);

/// FNV-1a 64-bit, used for run naming and payload fingerprints.
std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t fnv1a64(const std::string& s);

/// Locale-independent "%.17g" float formatting used by every CSV writer.
std::string format_double(double v);

const char* version();

} // namespace carshare
