#include "carshare/experiment.hpp"

#include "carshare/birth_death.hpp"
#include "carshare/equilibrium.hpp"
#include "carshare/meanfield.hpp"
#include "carshare/rng.hpp"
#include "carshare/sim.hpp"
#include "carshare/volterra.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

namespace carshare {

using nlohmann::json;
using nlohmann::ordered_json;

const char* version() { return "0.1.0"; }

std::uint64_t fnv1a64(const void* data, std::size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}
std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::Simulate: return "simulate";
        case ExperimentKind::MeanField: return "meanfield";
        case ExperimentKind::Equilibrium: return "equilibrium";
        case ExperimentKind::DeltaSystem: return "delta";
        case ExperimentKind::RateFit: return "ratefit";
        case ExperimentKind::CrossValidate: return "xval";
        case ExperimentKind::DominanceSuite: return "dominance";
    }
    return "?";
}

namespace {

ExperimentKind kind_from_string(const std::string& s) {
    if (s == "simulate") return ExperimentKind::Simulate;
    if (s == "meanfield") return ExperimentKind::MeanField;
    if (s == "equilibrium") return ExperimentKind::Equilibrium;
    if (s == "delta") return ExperimentKind::DeltaSystem;
    if (s == "ratefit") return ExperimentKind::RateFit;
    if (s == "xval") return ExperimentKind::CrossValidate;
    if (s == "dominance") return ExperimentKind::DominanceSuite;
    throw ConfigError("kind: unknown experiment kind '" + s + "'");
}

void check_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("unknown key '" + (path.empty() ? it.key() : path + "." + it.key()) + "'");
}

double get_num(const json& o, const std::string& key, double dflt) {
    if (!o.contains(key)) return dflt;
    if (!o[key].is_number()) throw ConfigError(key + ": expected a number");
    return o[key].get<double>();
}
std::int64_t get_int(const json& o, const std::string& key, std::int64_t dflt) {
    if (!o.contains(key)) return dflt;
    if (!o[key].is_number_integer()) throw ConfigError(key + ": expected an integer");
    return o[key].get<std::int64_t>();
}

std::vector<json> sweep_values(const json& root, const std::string& key, const json& dflt) {
    if (!root.contains(key)) return {dflt};
    const json& v = root[key];
    if (v.is_array()) {
        if (v.empty()) throw ConfigError(key + ": sweep list must not be empty");
        return std::vector<json>(v.begin(), v.end());
    }
    return {v};
}

} // namespace

std::vector<ExperimentConfig> parse_configs(const json& root) {
    if (!root.is_object()) throw ConfigError("config: expected a JSON object");
    check_keys(root, "", {"kind", "model", "lambda", "mu", "U", "capacity", "seed", "threads",
                          "out", "init", "tolerances", "grid", "ode", "sim", "delta", "ratefit",
                          "dominance", "xval"});
    if (!root.contains("kind")) throw ConfigError("kind: required");
    if (!root["kind"].is_string()) throw ConfigError("kind: expected a string");

    ExperimentConfig base;
    base.kind = kind_from_string(root["kind"].get<std::string>());
    base.seed = std::uint64_t(get_int(root, "seed", 1));
    base.threads = int(get_int(root, "threads", 1));
    if (base.threads < 1) throw ConfigError("threads: must be >= 1");
    if (root.contains("out")) {
        if (!root["out"].is_string()) throw ConfigError("out: expected a string");
        base.out_root = root["out"].get<std::string>();
    }
    if (root.contains("init")) {
        if (!root["init"].is_string()) throw ConfigError("init: expected a string");
        base.init = root["init"].get<std::string>();
    }

    if (root.contains("tolerances")) {
        const json& t = root["tolerances"];
        check_keys(t, "tolerances", {"mass_tol", "fixed_point_tol", "ode_rel_tol", "ode_abs_tol"});
        base.tol.mass_tol = get_num(t, "mass_tol", base.tol.mass_tol);
        base.tol.fixed_point_tol = get_num(t, "fixed_point_tol", base.tol.fixed_point_tol);
        base.tol.ode_rel_tol = get_num(t, "ode_rel_tol", base.tol.ode_rel_tol);
        base.tol.ode_abs_tol = get_num(t, "ode_abs_tol", base.tol.ode_abs_tol);
    }
    if (root.contains("grid")) {
        const json& g = root["grid"];
        check_keys(g, "grid", {"j_max", "k_max"});
        base.j_max = int(get_int(g, "j_max", 0));
        base.k_max = int(get_int(g, "k_max", 0));
    }
    if (root.contains("ode")) {
        const json& o = root["ode"];
        check_keys(o, "ode", {"horizon", "sample_dt"});
        base.ode_horizon = get_num(o, "horizon", base.ode_horizon);
        base.ode_sample_dt = get_num(o, "sample_dt", base.ode_sample_dt);
        if (!(base.ode_horizon > 0.0) || !(base.ode_sample_dt > 0.0))
            throw ConfigError("ode: horizon and sample_dt must be > 0");
    }
    if (root.contains("sim")) {
        const json& s = root["sim"];
        check_keys(s, "sim", {"stations", "fleet", "horizon", "sample_dt", "sample_times", "replications"});
        base.sim_stations = int(get_int(s, "stations", base.sim_stations));
        base.sim_fleet = get_int(s, "fleet", base.sim_fleet);
        base.sim_horizon = get_num(s, "horizon", base.sim_horizon);
        base.sim_sample_dt = get_num(s, "sample_dt", base.sim_sample_dt);
        base.sim_replications = int(get_int(s, "replications", base.sim_replications));
        if (s.contains("sample_times")) {
            if (!s["sample_times"].is_array()) throw ConfigError("sim.sample_times: expected an array");
            base.sim_sample_times = s["sample_times"].get<std::vector<double>>();
        }
    }
    if (root.contains("delta")) {
        const json& d = root["delta"];
        check_keys(d, "delta", {"horizon", "h", "tol", "upper", "gamma0"});
        base.delta_horizon = get_num(d, "horizon", base.delta_horizon);
        base.delta_h = get_num(d, "h", base.delta_h);
        base.delta_tol = get_num(d, "tol", base.delta_tol);
        base.delta_gamma0 = get_num(d, "gamma0", base.delta_gamma0);
        if (d.contains("upper")) {
            if (!d["upper"].is_boolean()) throw ConfigError("delta.upper: expected a boolean");
            base.delta_upper = d["upper"].get<bool>();
        }
    }
    if (root.contains("ratefit")) {
        const json& r = root["ratefit"];
        check_keys(r, "ratefit", {"floor"});
        base.ratefit_floor = get_num(r, "floor", base.ratefit_floor);
    }
    if (root.contains("dominance")) {
        const json& d = root["dominance"];
        check_keys(d, "dominance", {"pairs", "horizon", "points"});
        base.dom_pairs = int(get_int(d, "pairs", base.dom_pairs));
        base.dom_horizon = get_num(d, "horizon", base.dom_horizon);
        base.dom_points = int(get_int(d, "points", base.dom_points));
    }
    if (root.contains("xval")) {
        const json& x = root["xval"];
        check_keys(x, "xval", {"t_end", "stations", "replications"});
        base.xval_t_end = get_num(x, "t_end", base.xval_t_end);
        base.xval_stations = int(get_int(x, "stations", base.xval_stations));
        base.xval_replications = int(get_int(x, "replications", base.xval_replications));
    }

    const int model_num = int(get_int(root, "model", 1));
    if (model_num < 1 || model_num > 3) throw ConfigError("model: must be 1, 2 or 3");

    // Cartesian sweep over lambda x mu x U x capacity, in listed order.
    std::vector<ExperimentConfig> out;
    for (const json& lv : sweep_values(root, "lambda", json(1.0)))
        for (const json& mv : sweep_values(root, "mu", json(1.0)))
            for (const json& uv : sweep_values(root, "U", json(1.0)))
                for (const json& kv : sweep_values(root, "capacity", json())) {
                    ExperimentConfig c = base;
                    c.params.model = Model(model_num);
                    if (!lv.is_number() || !mv.is_number() || !uv.is_number())
                        throw ConfigError("lambda/mu/U: expected numbers");
                    c.params.lambda = lv.get<double>();
                    c.params.mu = mv.get<double>();
                    c.params.fleet_density = uv.get<double>();
                    if (kv.is_null())
                        c.params.capacity.reset();
                    else if (kv.is_number_integer())
                        c.params.capacity = kv.get<int>();
                    else
                        throw ConfigError("capacity: expected an integer or null");
                    try {
                        c.params.validate();
                    } catch (const std::invalid_argument& e) {
                        throw ConfigError(e.what());
                    }
                    out.push_back(std::move(c));
                }
    return out;
}

std::vector<ExperimentConfig> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    json root;
    try {
        in >> root;
    } catch (const json::exception& e) {
        throw ConfigError("config: invalid JSON: " + std::string(e.what()));
    }
    return parse_configs(root);
}

ordered_json ExperimentConfig::effective() const {
    ordered_json j;
    j["kind"] = to_string(kind);
    j["model"] = int(params.model);
    j["lambda"] = params.lambda;
    j["mu"] = params.mu;
    j["U"] = params.fleet_density;
    if (params.capacity)
        j["capacity"] = *params.capacity;
    else
        j["capacity"] = nullptr;
    j["seed"] = seed;
    j["init"] = init;
    j["tolerances"] = {{"mass_tol", tol.mass_tol},
                       {"fixed_point_tol", tol.fixed_point_tol},
                       {"ode_rel_tol", tol.ode_rel_tol},
                       {"ode_abs_tol", tol.ode_abs_tol}};
    j["grid"] = {{"j_max", j_max}, {"k_max", k_max}};
    j["ode"] = {{"horizon", ode_horizon}, {"sample_dt", ode_sample_dt}};
    j["sim"] = {{"stations", sim_stations}, {"fleet", sim_fleet},     {"horizon", sim_horizon},
                {"sample_dt", sim_sample_dt}, {"sample_times", sim_sample_times},
                {"replications", sim_replications}};
    j["delta"] = {{"horizon", delta_horizon}, {"h", delta_h}, {"tol", delta_tol},
                  {"upper", delta_upper}, {"gamma0", delta_gamma0}};
    j["ratefit"] = {{"floor", ratefit_floor}};
    j["dominance"] = {{"pairs", dom_pairs}, {"horizon", dom_horizon}, {"points", dom_points}};
    j["xval"] = {{"t_end", xval_t_end}, {"stations", xval_stations}, {"replications", xval_replications}};
    return j;
}

namespace {

// ---------------------------------------------------------------- helpers

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
    return buf;
}

struct RunWriter {
    std::filesystem::path dir;
    ordered_json outputs = ordered_json::array();

    void write(const std::string& name, const std::string& payload) {
        std::filesystem::create_directories(dir);
        std::ofstream out(dir / name, std::ios::binary);
        out.write(payload.data(), std::streamsize(payload.size()));
        if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
        outputs.push_back(ordered_json{{"file", name},
                                       {"bytes", payload.size()},
                                       {"fnv64", hash_hex(fnv1a64(payload))}});
    }
    void write_json(const std::string& name, const ordered_json& j) { write(name, j.dump(2) + "\n"); }
};

std::string trajectory_csv(const Trajectory& traj) {
    std::string csv = "t,j,k,alpha\n";
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
        const std::string ts = format_double(traj.times[i]);
        if (!traj.joint_states.empty()) {
            const JointDist& d = traj.joint_states[i];
            for (int j = 0; j <= d.grid.j_max; ++j)
                for (int k = 0; k <= d.grid.k_max; ++k)
                    if (d(j, k) != 0.0)
                        csv += ts + "," + std::to_string(j) + "," + std::to_string(k) + "," +
                               format_double(d(j, k)) + "\n";
        } else {
            const MarginalDist& d = traj.marginal_states[i];
            for (int k = 0; k < d.size(); ++k)
                if (d.mass(k) != 0.0)
                    csv += ts + ",0," + std::to_string(k) + "," + format_double(d.mass(k)) + "\n";
        }
    }
    return csv;
}

ordered_json functional_series(const Trajectory& traj) {
    ordered_json s;
    s["t"] = traj.times;
    auto emit = [&](const char* name, auto get) {
        std::vector<double> v;
        v.reserve(traj.functionals.size());
        bool any = false;
        for (const auto& f : traj.functionals) {
            const double x = get(f);
            if (!std::isnan(x)) any = true;
            v.push_back(x);
        }
        if (any) s[name] = v;
    };
    emit("b", [](const Functionals& f) { return f.b; });
    emit("a", [](const Functionals& f) { return f.a; });
    emit("c", [](const Functionals& f) { return f.c; });
    emit("d", [](const Functionals& f) { return f.d; });
    emit("r", [](const Functionals& f) { return f.r; });
    emit("delta", [](const Functionals& f) { return f.delta; });
    return s;
}

std::vector<double> uniform_times(double horizon, double dt) {
    std::vector<double> t;
    const int n = int(std::lround(horizon / dt));
    t.reserve(std::size_t(n) + 1);
    for (int i = 0; i <= n; ++i) t.push_back(dt * i);
    if (t.back() < horizon) t.push_back(horizon);
    return t;
}

JointDist ode_init_for(const ExperimentConfig& cfg, const TruncationGrid& grid) {
    const std::string& name = cfg.init.empty() ? "all_reserved" : cfg.init;
    if (name == "all_reserved") return init_poisson_reservations(cfg.params, grid);
    if (name == "geometric_cars") return init_geometric_cars(cfg.params, grid);
    if (name == "mixed") return init_mixed_product(cfg.params, grid);
    if (name == "two_point_cars") return init_two_point_cars(cfg.params, grid);
    throw ConfigError("init: unknown ODE initial condition '" + name + "'");
}

MarginalDist marginal_two_point(double U, int K) {
    MarginalDist d(K + 1);
    const int k1 = std::min(int(std::floor(U)), K);
    if (k1 >= K || std::abs(U - k1) < 1e-15) {
        d.mass(std::min(k1, K)) = 1.0;
    } else {
        const double w = U - k1;
        d.mass(k1) = 1.0 - w;
        d.mass(k1 + 1) = w;
    }
    return d;
}

InitKind sim_init_for(const ExperimentConfig& cfg) {
    const std::string& name = cfg.init.empty() ? "uniform" : cfg.init;
    if (name == "all_reserved") return InitKind::AllReserved;
    if (name == "all_cars") return InitKind::AllCars;
    if (name == "uniform") return InitKind::Uniform;
    throw ConfigError("init: unknown simulator initial condition '" + name + "'");
}

QueueInitDist queue_init_for(const ExperimentConfig& cfg) {
    const std::string& name = cfg.init.empty() ? "two_point_cars" : cfg.init;
    const double U = cfg.params.fleet_density;
    if (name == "two_point_cars") {
        QueueInitDist d;
        const int k1 = int(std::floor(U));
        d.atoms.assign(std::size_t(k1) + 2, 0.0);
        const double w = U - k1;
        d.atoms[std::size_t(k1)] = 1.0 - w;
        d.atoms[std::size_t(k1) + 1] = w;
        return d;
    }
    if (name == "geometric_cars") return QueueInitDist::geometric(U / (1.0 + U));
    throw ConfigError("init: unknown queue initial condition '" + name + "'");
}

// ---------------------------------------------------------------- kinds

void run_equilibrium(const ExperimentConfig& cfg, RunWriter& w) {
    const EquilibriumSolution sol = solve_equilibrium(cfg.params);
    ordered_json j;
    j["model"] = int(cfg.params.model);
    std::string csv = "j,k,mass\n";
    switch (cfg.params.model) {
        case Model::ReservationInfinite: {
            j["beta"] = sol.beta;
            j["delta_bar"] = sol.delta_bar;
            j["relaxation_rate"] = relaxation_rate(cfg.params);
            j["mass_residual"] = total_mass(sol.pi_joint) - cfg.params.fleet_density;
            for (int jj = 0; jj <= sol.pi_joint.grid.j_max; ++jj)
                for (int k = 0; k <= sol.pi_joint.grid.k_max; ++k)
                    if (sol.pi_joint(jj, k) != 0.0)
                        csv += std::to_string(jj) + "," + std::to_string(k) + "," +
                               format_double(sol.pi_joint(jj, k)) + "\n";
            break;
        }
        case Model::NoReservationFinite: {
            j["beta"] = sol.beta;
            double mean = 0.0;
            for (int k = 0; k < sol.pi_marginal.size(); ++k) mean += k * sol.pi_marginal.mass(k);
            j["mean_cars"] = mean;
            for (int k = 0; k < sol.pi_marginal.size(); ++k)
                csv += "0," + std::to_string(k) + "," + format_double(sol.pi_marginal.mass(k)) + "\n";
            break;
        }
        case Model::ReservationFinite: {
            j["rho_R"] = sol.rho_R;
            j["rho_V"] = sol.rho_V;
            j["Z"] = sol.Z;
            j["mass_residual"] = total_mass(sol.pi_joint) - cfg.params.fleet_density;
            for (int jj = 0; jj <= sol.pi_joint.grid.j_max; ++jj)
                for (int k = 0; k <= sol.pi_joint.grid.k_max; ++k)
                    if (sol.pi_joint(jj, k) != 0.0)
                        csv += std::to_string(jj) + "," + std::to_string(k) + "," +
                               format_double(sol.pi_joint(jj, k)) + "\n";
            break;
        }
    }
    w.write_json("equilibrium.json", j);
    w.write("pi.csv", csv);
}

Trajectory run_meanfield_traj(const ExperimentConfig& cfg) {
    const auto times = uniform_times(cfg.ode_horizon, cfg.ode_sample_dt);
    switch (cfg.params.model) {
        case Model::ReservationInfinite:
            if (cfg.j_max > 0 && cfg.k_max > 0) {
                TruncationGrid g{cfg.j_max, cfg.k_max, {}};
                return integrate(cfg.params, ode_init_for(cfg, g), times, cfg.tol);
            }
            return integrate_model1_auto(
                cfg.params, [&](const TruncationGrid& g) { return ode_init_for(cfg, g); }, times,
                cfg.tol);
        case Model::NoReservationFinite:
            return integrate(cfg.params,
                             marginal_two_point(cfg.params.fleet_density, *cfg.params.capacity),
                             times, cfg.tol);
        case Model::ReservationFinite: {
            const TruncationGrid g = exact_grid(*cfg.params.capacity);
            return integrate(cfg.params, init_two_point_cars(cfg.params, g), times, cfg.tol);
        }
    }
    throw std::logic_error("run_meanfield_traj: unknown model");
}

void run_meanfield(const ExperimentConfig& cfg, RunWriter& w) {
    const Trajectory traj = run_meanfield_traj(cfg);
    w.write("trajectory.csv", trajectory_csv(traj));
    ordered_json f = functional_series(traj);
    f["max_mass_drift"] = traj.max_mass_drift;
    f["max_boundary_flux"] = traj.max_boundary_flux;
    w.write_json("functionals.json", f);
}

void run_simulate(const ExperimentConfig& cfg, RunWriter& w) {
    SimConfig sc;
    sc.n_stations = cfg.sim_stations;
    sc.fleet_size = cfg.sim_fleet >= 0
                        ? cfg.sim_fleet
                        : (long long)std::llround(cfg.params.fleet_density * cfg.sim_stations);
    sc.horizon = cfg.sim_horizon;
    sc.seed = cfg.seed;
    sc.replications = cfg.sim_replications;
    sc.sample_times = cfg.sim_sample_times;
    if (sc.sample_times.empty()) {
        if (cfg.sim_sample_dt > 0.0)
            sc.sample_times = uniform_times(sc.horizon, cfg.sim_sample_dt);
        else
            sc.sample_times = {0.0, sc.horizon};
    }
    try {
        sc.validate(cfg.params);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    const auto reps = run(sc, cfg.params, sim_init_for(cfg), cfg.threads);
    for (std::size_t rnum = 0; rnum < reps.size(); ++rnum) {
        std::string csv = "t,j,k,alpha\n";
        for (const auto& em : reps[rnum].samples) {
            const std::string ts = format_double(em.time);
            for (int j = 0; j <= em.counts.grid.j_max; ++j)
                for (int k = 0; k <= em.counts.grid.k_max; ++k)
                    if (em.counts(j, k) != 0.0)
                        csv += ts + "," + std::to_string(j) + "," + std::to_string(k) + "," +
                               format_double(em.counts(j, k)) + "\n";
        }
        char name[32];
        std::snprintf(name, sizeof name, "sim_rep%03zu.csv", rnum);
        w.write(name, csv);
    }
    ordered_json j;
    j["replications"] = reps.size();
    std::uint64_t events = 0;
    for (const auto& r : reps) events += r.events;
    j["total_events"] = events;
    w.write_json("summary.json", j);
}

void run_delta(const ExperimentConfig& cfg, RunWriter& w) {
    if (cfg.params.model != Model::ReservationInfinite)
        throw ConfigError("delta: only defined for model 1");
    SchemeOptions opt;
    opt.fp_tol = cfg.delta_tol;
    opt.estimate_defect = true;
    // The decreasing companion needs the Takacs bound, which holds for the
    // geometric initial law matched to gamma0; both schemes must share the
    // initial law to share a limit.
    const double g0 = cfg.delta_gamma0 > 0.0 ? cfg.delta_gamma0 : delta_bar(cfg.params);
    const QueueInitDist init = cfg.delta_upper
                                   ? QueueInitDist::geometric(g0 / cfg.params.lambda)
                                   : queue_init_for(cfg);
    const SchemeResult lower = solve_delta_system(cfg.params, init, cfg.delta_horizon, cfg.delta_h, opt);

    ordered_json j;
    std::vector<double> t(lower.delta.values.size());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = cfg.delta_h * double(i);
    j["t"] = t;
    j["delta"] = lower.delta.values;
    j["H"] = lower.H.H;
    j["iterations"] = lower.iterations;
    j["last_increment"] = lower.last_increment;
    j["volterra_defect"] = lower.H.defect;
    j["delta_bar"] = delta_bar(cfg.params);
    {
        // The system's own limit is pinned by the initial car mass.
        ModelParams eff = cfg.params;
        eff.fleet_density = init.mean();
        j["init_mean"] = init.mean();
        j["delta_limit_expected"] = delta_bar(eff);
    }
    if (cfg.delta_upper) {
        const SchemeResult upper = upper_scheme(cfg.params, g0, init, cfg.delta_horizon, cfg.delta_h, opt);
        double gap = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i)
            gap = std::max(gap, std::abs(upper.delta.values[i] - lower.delta.values[i]));
        j["upper_iterations"] = upper.iterations;
        j["two_sided_gap"] = gap;
    }
    w.write_json("delta.json", j);
}

void run_ratefit(const ExperimentConfig& cfg, RunWriter& w) {
    if (cfg.params.model != Model::ReservationInfinite)
        throw ConfigError("ratefit: only defined for model 1");
    ExperimentConfig c = cfg;
    if (c.init.empty()) c.init = "all_reserved";
    const Trajectory traj = run_meanfield_traj(c);
    std::vector<double> b(traj.functionals.size());
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = traj.functionals[i].b;
    const double beta = beta_model1(cfg.params);
    const double v = relaxation_rate(cfg.params);
    // On the lambda-branch the gap carries the t^{-3/2} prefactor; the
    // mu-branch decay is a clean discrete mode.
    const bool algebraic =
        cfg.params.lambda * std::pow(1.0 - std::sqrt(beta), 2.0) < cfg.params.mu;
    const RateEstimate raw = estimate_rate(traj.times, b, beta, cfg.ratefit_floor);
    const RateEstimate est = fit_relaxation(traj.times, b, beta, cfg.ratefit_floor, algebraic);
    ordered_json j;
    j["v_hat"] = est.v_hat;
    j["v_hat_raw"] = raw.v_hat;
    j["v_theory"] = v;
    j["lambda_branch"] = algebraic;
    j["relative_error"] = std::abs(est.v_hat - v) / v;
    j["r2"] = est.r2;
    j["window"] = {est.t_lo, est.t_hi};
    j["points"] = est.points;
    j["beta"] = beta;
    w.write_json("rate.json", j);
}

void run_xval(const ExperimentConfig& cfg, RunWriter& w) {
    if (cfg.params.model != Model::ReservationInfinite)
        throw ConfigError("xval: only defined for model 1");
    // Deterministic round-robin fleet so the ODE initial condition matches
    // the simulator exactly; U is re-derived from the integer fleet.
    SimConfig sc;
    sc.n_stations = cfg.xval_stations;
    sc.fleet_size = (long long)std::llround(cfg.params.fleet_density * cfg.xval_stations);
    sc.horizon = cfg.xval_t_end;
    sc.seed = cfg.seed;
    sc.replications = cfg.xval_replications;
    sc.sample_times = {0.0, cfg.xval_t_end};
    ModelParams p = cfg.params;
    p.fleet_density = double(sc.fleet_size) / double(sc.n_stations);

    const auto reps = run(sc, p, InitKind::Uniform, cfg.threads);
    std::vector<JointDist> finals;
    finals.reserve(reps.size());
    for (const auto& r : reps) finals.push_back(r.samples.back().counts);
    const JointDist mean_emp = mean_measure(finals);

    Trajectory traj = integrate_model1_auto(
        p, [&](const TruncationGrid& g) { return init_two_point_cars(p, g); },
        {0.0, cfg.xval_t_end}, cfg.tol);
    const JointDist& ode_end = traj.joint_states.back();

    TruncationGrid common = ode_end.grid;
    common.j_max = std::max(common.j_max, mean_emp.grid.j_max);
    common.k_max = std::max(common.k_max, mean_emp.grid.k_max);
    const double l1_sim_ode = dist_distance(mean_emp.embedded(common), ode_end.embedded(common));

    const JointDist steady = integrate_to_steady(p, ode_end);
    const JointDist pi = pi_model1(p, steady.grid);
    const double l1_ode_pi = dist_distance(steady, pi);

    SchemeOptions opt;
    opt.fp_tol = cfg.delta_tol;
    const SchemeResult sch = solve_delta_system(p, queue_init_for(cfg), cfg.xval_t_end, cfg.delta_h, opt);
    const double dgap = std::abs(sch.delta.values.back() - delta_bar(p));

    ordered_json j;
    j["l1_sim_vs_ode"] = l1_sim_ode;
    j["l1_ode_vs_pi"] = l1_ode_pi;
    j["delta_gap_at_t_end"] = dgap;
    j["stations"] = sc.n_stations;
    j["replications"] = sc.replications;
    j["t_end"] = cfg.xval_t_end;
    w.write_json("report.json", j);
}

void run_dominance(const ExperimentConfig& cfg, RunWriter& w) {
    Rng rng(cfg.seed);
    const double serv = cfg.params.lambda;
    std::vector<double> grid;
    for (int i = 0; i < cfg.dom_points; ++i)
        grid.push_back(cfg.dom_horizon * double(i) / double(cfg.dom_points - 1));

    ordered_json results = ordered_json::array();
    double worst = 0.0;
    bool all_hold = true;
    for (int pair = 0; pair < cfg.dom_pairs; ++pair) {
        // gamma dominates beta by construction; both continuous, < 0.9 serv.
        const double a = 0.2 * serv * rng.uniform();
        const double b = 0.4 * serv * rng.uniform();
        const double rate = 0.2 + 2.0 * rng.uniform();
        const double gap0 = 0.05 * serv * rng.uniform();
        const double gap1 = 0.2 * serv * rng.uniform();
        auto beta = [=](double t) { return a + b * (1.0 - std::exp(-rate * t)); };
        auto gamma = [=](double t) { return beta(t) + gap0 + gap1 * (1.0 - std::exp(-rate * t)); };
        const int n_max = default_bd_truncation(0.9 * serv, serv);
        const BDState init = BDState::point_mass(0, n_max);
        const DominanceReport rep = dominance_check(beta, gamma, init, init, serv, grid, 1e-9, cfg.tol);
        worst = std::min(worst, rep.worst_violation);
        all_hold = all_hold && rep.holds;
        results.push_back(ordered_json{{"pair", pair},
                                       {"holds", rep.holds},
                                       {"worst_violation", rep.worst_violation}});
    }
    ordered_json j;
    j["pairs"] = cfg.dom_pairs;
    j["all_hold"] = all_hold;
    j["worst_violation"] = worst;
    j["detail"] = results;
    w.write_json("dominance.json", j);
    if (!all_hold) throw NumericalError("dominance violated beyond tolerance");
}

} // namespace

RunResult run_experiment(const ExperimentConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    ordered_json effective = cfg.effective();
    // out/threads do not influence payloads; keep them out of the identity.
    const std::string hash = hash_hex(fnv1a64(effective.dump()));

    RunWriter w;
    w.dir = std::filesystem::path(cfg.out_root) / (to_string(cfg.kind) + "-" + hash);

    try {
        switch (cfg.kind) {
            case ExperimentKind::Equilibrium: run_equilibrium(cfg, w); break;
            case ExperimentKind::MeanField: run_meanfield(cfg, w); break;
            case ExperimentKind::Simulate: run_simulate(cfg, w); break;
            case ExperimentKind::DeltaSystem: run_delta(cfg, w); break;
            case ExperimentKind::RateFit: run_ratefit(cfg, w); break;
            case ExperimentKind::CrossValidate: run_xval(cfg, w); break;
            case ExperimentKind::DominanceSuite: run_dominance(cfg, w); break;
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    } catch (const std::exception& e) {
        throw NumericalError(e.what());
    }

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ordered_json manifest;
    manifest["schema"] = "carshare-manifest/1";
    manifest["version"] = version();
    manifest["config_hash"] = hash;
    manifest["config"] = effective;
    manifest["out"] = cfg.out_root;
    manifest["threads"] = cfg.threads;
    manifest["outputs"] = w.outputs;
    manifest["wall_time_s"] = wall; // informational; not part of any payload hash
    w.write("manifest.json", manifest.dump(2) + "\n");

    RunResult res;
    res.dir = w.dir;
    res.manifest = manifest;
    return res;
}

} // namespace carshare
