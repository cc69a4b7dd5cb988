#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "carshare/experiment.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>

using namespace carshare;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("carshare-test-" + std::to_string(std::rand()) + std::to_string(std::rand()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("parse_configs: minimal config fills defaults") {
    const auto cfgs = parse_configs(json::parse(R"({"lambda":1,"mu":1,"U":1,"kind":"equilibrium"})"));
    REQUIRE(cfgs.size() == 1);
    CHECK(cfgs[0].kind == ExperimentKind::Equilibrium);
    CHECK(cfgs[0].params.model == Model::ReservationInfinite);
    CHECK(cfgs[0].seed == 1);
    CHECK(cfgs[0].threads == 1);
    CHECK(cfgs[0].out_root == "runs");
    CHECK(cfgs[0].tol.mass_tol == 1e-9);
}

TEST_CASE("parse_configs: errors name the offending field") {
    CHECK_THROWS_WITH_AS((void)parse_configs(json::parse(R"({})")), doctest::Contains("kind"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(
        (void)parse_configs(json::parse(R"({"kind":"equilibrium","model":2,"lambda":1,"mu":1,"U":1})")),
        doctest::Contains("capacity"), ConfigError);
    CHECK_THROWS_WITH_AS(
        (void)parse_configs(json::parse(R"({"kind":"equilibrium","lambdaa":1})")),
        doctest::Contains("lambdaa"), ConfigError);
    CHECK_THROWS_WITH_AS(
        (void)parse_configs(json::parse(R"({"kind":"equilibrium","ode":{"horizn":3}})")),
        doctest::Contains("ode.horizn"), ConfigError);
    CHECK_THROWS_WITH_AS((void)parse_configs(json::parse(R"({"kind":"warp","lambda":1})")),
                         doctest::Contains("warp"), ConfigError);
    // model-1 with finite capacity is a contradiction
    CHECK_THROWS_AS(
        (void)parse_configs(json::parse(R"({"kind":"equilibrium","model":1,"capacity":3})")),
        ConfigError);
}

TEST_CASE("parse_configs: sweep lists expand in deterministic order") {
    const auto cfgs = parse_configs(
        json::parse(R"({"kind":"equilibrium","lambda":[1.0,2.0],"mu":1,"U":[0.5,1.0,2.0]})"));
    REQUIRE(cfgs.size() == 6);
    CHECK(cfgs[0].params.lambda == 1.0);
    CHECK(cfgs[0].params.fleet_density == 0.5);
    CHECK(cfgs[1].params.fleet_density == 1.0);
    CHECK(cfgs[2].params.fleet_density == 2.0);
    CHECK(cfgs[3].params.lambda == 2.0);
    CHECK(cfgs[3].params.fleet_density == 0.5);
}

TEST_CASE("run_experiment: equilibrium artifacts") {
    TempDir tmp;
    auto cfgs = parse_configs(json::parse(R"({"kind":"equilibrium","lambda":1,"mu":1,"U":1})"));
    cfgs[0].out_root = (tmp.path / "runs").string();
    const RunResult res = run_experiment(cfgs[0]);
    CHECK(fs::exists(res.dir / "equilibrium.json"));
    CHECK(fs::exists(res.dir / "pi.csv"));
    CHECK(fs::exists(res.dir / "manifest.json"));

    const json eq = json::parse(slurp(res.dir / "equilibrium.json"));
    CHECK(eq["beta"].get<double>() == doctest::Approx(0.3819660112501051).epsilon(1e-14));
    CHECK(eq["delta_bar"].get<double>() == doctest::Approx(0.3819660112501051).epsilon(1e-14));

    const json man = json::parse(slurp(res.dir / "manifest.json"));
    CHECK(man["schema"] == "carshare-manifest/1");
    CHECK(man["config"]["kind"] == "equilibrium");
    CHECK(man["outputs"].size() == 2);
}

TEST_CASE("run_experiment: determinism of payload bytes") {
    TempDir tmp;
    // A kind that exercises rng, threads and float formatting end to end.
    auto cfgs = parse_configs(json::parse(
        R"({"kind":"simulate","lambda":1,"mu":1,"U":1,"seed":77,
            "sim":{"stations":60,"horizon":8.0,"sample_dt":2.0,"replications":4}})"));
    REQUIRE(cfgs.size() == 1);
    ExperimentConfig a = cfgs[0], b = cfgs[0];
    a.out_root = (tmp.path / "a").string();
    b.out_root = (tmp.path / "b").string();
    b.threads = 4; // thread count must not affect payloads
    const RunResult ra = run_experiment(a);
    const RunResult rb = run_experiment(b);
    CHECK(ra.dir.filename() == rb.dir.filename()); // out/threads excluded from the hash
    for (const auto& out : ra.manifest["outputs"]) {
        const std::string name = out["file"].get<std::string>();
        if (name == "manifest.json") continue; // carries wall time
        CHECK(slurp(ra.dir / name) == slurp(rb.dir / name));
    }
}

TEST_CASE("run_experiment: ratefit and delta kinds produce sane reports") {
    TempDir tmp;
    auto rf = parse_configs(json::parse(
        R"({"kind":"ratefit","lambda":1,"mu":1,"U":1,"init":"all_reserved",
            "ode":{"horizon":120.0,"sample_dt":0.25}})"));
    rf[0].out_root = (tmp.path / "rf").string();
    const json rate = json::parse(slurp(run_experiment(rf[0]).dir / "rate.json"));
    CHECK(rate["v_theory"].get<double>() == doctest::Approx(0.14589803375).epsilon(1e-9));
    CHECK(rate["relative_error"].get<double>() < 0.15);
    CHECK(rate["r2"].get<double>() > 0.99);

    auto dl = parse_configs(json::parse(
        R"({"kind":"delta","lambda":1,"mu":1,"U":1,
            "delta":{"horizon":30.0,"h":0.02,"tol":1e-8,"upper":true}})"));
    dl[0].out_root = (tmp.path / "dl").string();
    const json dj = json::parse(slurp(run_experiment(dl[0]).dir / "delta.json"));
    CHECK(dj["delta_bar"].get<double>() == doctest::Approx(0.3819660112501051).epsilon(1e-12));
    CHECK(dj["iterations"].get<int>() > 5);
    CHECK(dj["t"].size() == dj["delta"].size());
    CHECK(dj["t"].size() == dj["H"].size());
}

TEST_CASE("run_experiment: config errors carry exit semantics") {
    auto cfgs = parse_configs(json::parse(R"({"kind":"delta","model":3,"capacity":2,
        "lambda":1,"mu":1,"U":1})"));
    CHECK_THROWS_AS((void)run_experiment(cfgs[0]), ConfigError); // delta needs model 1
}

TEST_CASE("cli binary end to end") {
    // ctest runs with cwd = build directory, next to the binary.
    if (!fs::exists("carshare")) {
        MESSAGE("carshare binary not found next to the test; skipping");
        return;
    }
    TempDir tmp;
    const std::string dir = (tmp.path / "cli").string();
    const int rc = std::system(("./carshare equilibrium --lambda 2 --mu 1 --U 3 --out " + dir +
                                " > /dev/null 2>&1")
                                   .c_str());
    CHECK(rc == 0);
    bool found = false;
    for (const auto& e : fs::directory_iterator(dir)) {
        const json eq = json::parse(slurp(e.path() / "equilibrium.json"));
        CHECK(eq["beta"].get<double>() == doctest::Approx(0.6339745962155614).epsilon(1e-12));
        found = true;
    }
    CHECK(found);

    const int rc2 = std::system("./carshare equilibrium --model 2 --lambda 1 --mu 1 --U 1 "
                                "> /dev/null 2>&1");
    CHECK(WEXITSTATUS(rc2) == 2); // capacity missing: validation error

    const int rc3 = std::system(("./carshare meanfield --model 3 --capacity 2 --lambda 1 --mu 1 "
                                 "--U 1 --horizon 5 --sample-dt 1 --out " +
                                 dir + " > /dev/null 2>&1")
                                    .c_str());
    CHECK(rc3 == 0);
}
