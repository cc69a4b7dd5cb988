#include "carshare/experiment.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>

using carshare::ConfigError;
using carshare::NumericalError;
using nlohmann::json;

namespace {

struct CommonFlags {
    std::string config_path;
    std::string out;
    std::string init;
    std::int64_t seed = -1;
    int threads = 0;
    int model = 0;
    double lambda = std::nan("");
    double mu = std::nan("");
    double U = std::nan("");
    int capacity = -1;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "JSON config file (flags override it)");
    cmd->add_option("--seed", f.seed, "RNG seed");
    cmd->add_option("--out", f.out, "output root directory");
    cmd->add_option("--threads", f.threads, "worker threads for replications/sweeps");
    cmd->add_option("--model", f.model, "model selector: 1, 2 or 3");
    cmd->add_option("--lambda", f.lambda, "user arrival rate");
    cmd->add_option("--mu", f.mu, "travel-time rate");
    cmd->add_option("--U", f.U, "fleet density U");
    cmd->add_option("--capacity", f.capacity, "station capacity K (finite models)");
    cmd->add_option("--init", f.init, "initial condition name");
}

json load_base(const CommonFlags& f, const std::string& kind) {
    json root;
    if (!f.config_path.empty()) {
        std::ifstream in(f.config_path);
        if (!in) throw ConfigError("config: cannot open '" + f.config_path + "'");
        try {
            in >> root;
        } catch (const json::exception& e) {
            throw ConfigError("config: invalid JSON: " + std::string(e.what()));
        }
        if (!root.is_object()) throw ConfigError("config: expected a JSON object");
    }
    if (root.contains("kind") && root["kind"] != kind)
        throw ConfigError("config kind '" + root["kind"].get<std::string>() +
                          "' does not match subcommand '" + kind + "'");
    root["kind"] = kind;
    if (f.seed >= 0) root["seed"] = f.seed;
    if (!f.out.empty()) root["out"] = f.out;
    if (!f.init.empty()) root["init"] = f.init;
    if (f.threads > 0) root["threads"] = f.threads;
    if (f.model > 0) root["model"] = f.model;
    if (!std::isnan(f.lambda)) root["lambda"] = f.lambda;
    if (!std::isnan(f.mu)) root["mu"] = f.mu;
    if (!std::isnan(f.U)) root["U"] = f.U;
    if (f.capacity >= 0) root["capacity"] = f.capacity;
    return root;
}

void set_nested(json& root, const std::string& group, const std::string& key, const json& v) {
    if (!root.contains(group)) root[group] = json::object();
    root[group][key] = v;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"carshare: finite-N simulation, mean-field integration and equilibrium "
                 "analysis of station-based vehicle-sharing networks"};
    app.require_subcommand(1);

    struct Sub {
        CLI::App* cmd;
        CommonFlags flags;
        std::string kind;
    };
    std::vector<Sub> subs;
    subs.reserve(8); // CLI11 keeps references into flags; no reallocation allowed
    auto add_sub = [&](const std::string& kind, const std::string& help) -> Sub& {
        subs.push_back({app.add_subcommand(kind, help), {}, kind});
        add_common(subs.back().cmd, subs.back().flags);
        return subs.back();
    };

    auto& s_sim = add_sub("simulate", "event-driven finite-N network simulation");
    double sim_horizon = std::nan(""), sim_dt = std::nan("");
    int sim_n = 0, sim_reps = 0;
    long long sim_fleet = -2;
    s_sim.cmd->add_option("--stations", sim_n, "number of stations N");
    s_sim.cmd->add_option("--fleet", sim_fleet, "fleet size M (default round(U*N))");
    s_sim.cmd->add_option("--horizon", sim_horizon, "simulation end time");
    s_sim.cmd->add_option("--sample-dt", sim_dt, "observation spacing");
    s_sim.cmd->add_option("--replications", sim_reps, "independent replications");

    auto& s_mf = add_sub("meanfield", "integrate the nonlinear Kolmogorov system");
    double mf_horizon = std::nan(""), mf_dt = std::nan("");
    s_mf.cmd->add_option("--horizon", mf_horizon, "integration end time");
    s_mf.cmd->add_option("--sample-dt", mf_dt, "output spacing");

    auto& s_eq = add_sub("equilibrium", "closed-form / fixed-point stationary solutions");

    auto& s_delta = add_sub("delta", "coupled Volterra system for the rate delta(t)");
    double d_horizon = std::nan(""), d_h = std::nan(""), d_tol = std::nan("");
    bool d_upper = false;
    s_delta.cmd->add_option("--horizon", d_horizon, "solve horizon");
    s_delta.cmd->add_option("--step", d_h, "uniform grid step");
    s_delta.cmd->add_option("--tol", d_tol, "scheme stopping tolerance");
    s_delta.cmd->add_flag("--upper", d_upper, "also run the decreasing scheme");

    auto& s_rate = add_sub("ratefit", "fit the exponential relaxation rate of b(t)");
    double r_horizon = std::nan(""), r_dt = std::nan("");
    s_rate.cmd->add_option("--horizon", r_horizon, "integration end time");
    s_rate.cmd->add_option("--sample-dt", r_dt, "output spacing");

    auto& s_xval = add_sub("xval", "simulator / ODE / equilibrium cross-validation");
    double x_tend = std::nan("");
    int x_n = 0, x_reps = 0;
    s_xval.cmd->add_option("--t-end", x_tend, "comparison time");
    s_xval.cmd->add_option("--stations", x_n, "number of stations N");
    s_xval.cmd->add_option("--replications", x_reps, "independent replications");

    auto& s_dom = add_sub("dominance", "randomized stochastic-dominance suite");
    int dom_pairs = 0;
    double dom_horizon = std::nan("");
    s_dom.cmd->add_option("--pairs", dom_pairs, "number of ordered profile pairs");
    s_dom.cmd->add_option("--horizon", dom_horizon, "probe horizon");

    CLI11_PARSE(app, argc, argv);

    try {
        Sub* active = nullptr;
        for (auto& s : subs)
            if (s.cmd->parsed()) active = &s;
        if (!active) throw ConfigError("no subcommand given");

        json root = load_base(active->flags, active->kind);
        if (active->kind == "simulate") {
            if (sim_n > 0) set_nested(root, "sim", "stations", sim_n);
            if (sim_fleet >= -1) set_nested(root, "sim", "fleet", sim_fleet);
            if (!std::isnan(sim_horizon)) set_nested(root, "sim", "horizon", sim_horizon);
            if (!std::isnan(sim_dt)) set_nested(root, "sim", "sample_dt", sim_dt);
            if (sim_reps > 0) set_nested(root, "sim", "replications", sim_reps);
        } else if (active->kind == "meanfield" || active->kind == "ratefit") {
            const double h = active->kind == "meanfield" ? mf_horizon : r_horizon;
            const double dt = active->kind == "meanfield" ? mf_dt : r_dt;
            if (!std::isnan(h)) set_nested(root, "ode", "horizon", h);
            if (!std::isnan(dt)) set_nested(root, "ode", "sample_dt", dt);
        } else if (active->kind == "delta") {
            if (!std::isnan(d_horizon)) set_nested(root, "delta", "horizon", d_horizon);
            if (!std::isnan(d_h)) set_nested(root, "delta", "h", d_h);
            if (!std::isnan(d_tol)) set_nested(root, "delta", "tol", d_tol);
            if (d_upper) set_nested(root, "delta", "upper", true);
        } else if (active->kind == "xval") {
            if (!std::isnan(x_tend)) set_nested(root, "xval", "t_end", x_tend);
            if (x_n > 0) set_nested(root, "xval", "stations", x_n);
            if (x_reps > 0) set_nested(root, "xval", "replications", x_reps);
        } else if (active->kind == "dominance") {
            if (dom_pairs > 0) set_nested(root, "dominance", "pairs", dom_pairs);
            if (!std::isnan(dom_horizon)) set_nested(root, "dominance", "horizon", dom_horizon);
        }

        const auto configs = carshare::parse_configs(root);
        for (const auto& cfg : configs) {
            const auto res = carshare::run_experiment(cfg);
            std::cout << res.dir.string() << "\n";
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
