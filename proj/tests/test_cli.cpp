#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "icmpc/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace icmpc;
using cfg::Config;
namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path)
{
    std::ifstream in(path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

/// Tiny toy-plant configuration that runs the whole pipeline in seconds.
Config tiny_toy_config(const std::string& out_dir)
{
    Config c;
    c.set("run.out_dir", out_dir);
    c.set("run.seed", "3");
    c.set("plant.kind", "toy");
    c.set("data.n_traj", "400");
    c.set("data.horizon", "1");
    c.set("data.x_lo", "-2,-2");
    c.set("data.x_hi", "2,2");
    c.set("data.u_lo", "-10,-10");
    c.set("data.u_hi", "10,10");
    c.set("train.hidden", "8,8");
    c.set("train.epochs", "60");
    c.set("train.batch", "64");
    c.set("mpc.np", "1");
    c.set("mpc.m_diag", "1,1");
    c.set("mpc.n_diag", "0.1,0.1");
    c.set("mpc.u_lo", "-10,-10");
    c.set("mpc.u_hi", "10,10");
    c.set("mpc.dt", "1.0");
    c.set("mpc.steps", "5");
    c.set("mpc.budget_s", "10");
    c.set("approx.error_bound", "0.2");
    c.set("approx.min_edge", "0.5");
    c.set("sim.x0", "0.5,-0.5");
    c.set("surface.u_lo", "-10,-10");
    c.set("surface.u_hi", "10,10");
    c.set("surface.points", "9");
    return c;
}

struct Cmd {
    int exit_code;
    std::string output;
};

Cmd run_cli(const std::string& args)
{
    const std::string cmd = std::string(ICMPC_CLI_PATH) + " " + args + " 2>&1";
    std::FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string out;
    char buf[4096];
    while (std::fgets(buf, sizeof buf, pipe)) out += buf;
    const int status = pclose(pipe);
    return {WEXITSTATUS(status), out};
}

} // namespace

TEST_CASE("config: file parsing, overrides, unknown keys")
{
    const std::string path = "/tmp/icmpc_test.cfg";
    {
        std::ofstream out(path);
        out << "# comment line\n";
        out << "mpc.steps = 7\n";
        out << "plant.kind = toy\n";
        out << "\n";
    }
    Config c = Config::from_file(path);
    CHECK(c.get_int("mpc.steps") == 7);
    CHECK(c.get_str("plant.kind") == "toy");
    CHECK(c.get_int("mpc.np") == 2); // default applies

    c.set_pair("mpc.steps=9"); // flag override wins
    CHECK(c.get_int("mpc.steps") == 9);

    CHECK_THROWS_AS(c.set("mpc.bogus", "1"), cfg::ConfigError);
    CHECK_THROWS_AS(c.set_pair("nonsense"), cfg::ConfigError);

    {
        std::ofstream out(path);
        out << "unknown.key = 1\n";
    }
    CHECK_THROWS_AS(Config::from_file(path), cfg::ConfigError);
}

TEST_CASE("config: typed getters and validation")
{
    Config c;
    c.set("mpc.m_diag", "500,0.5");
    Vec m = c.get_vec("mpc.m_diag");
    REQUIRE(m.size() == 2);
    CHECK(m[0] == 500.0);
    CHECK(m[1] == 0.5);

    c.set("mpc.steps", "abc");
    CHECK_THROWS_AS(c.get_int("mpc.steps"), cfg::ConfigError);
    c.set("train.icnn", "nope");
    CHECK_THROWS_AS(c.get_bool("train.icnn"), cfg::ConfigError);
    c.set("train.icnn", "false");
    CHECK(c.get_bool("train.icnn") == false);
}

TEST_CASE("config: registry help and effective text enumerate every key")
{
    const std::string help = Config::registry_help();
    const Config c;
    const std::string effective = c.effective_text();
    for (const auto& spec : Config::registry()) {
        CHECK(help.find(spec.key) != std::string::npos);
        CHECK(effective.find(std::string(spec.key) + " = ") != std::string::npos);
    }
}

TEST_CASE("pipeline: invalid state box is rejected before writing anything")
{
    const std::string out = "/tmp/icmpc_badbox_out";
    fs::remove_all(out);
    Config c = tiny_toy_config(out);
    c.set("data.x_lo", "2,2");
    c.set("data.x_hi", "-2,-2");
    CHECK_THROWS_AS(pipeline::run_gen_data(c), cfg::ConfigError);
    CHECK_FALSE(fs::exists(pipeline::dataset_path(c, 1, false)));
}

TEST_CASE("pipeline: missing dataset gives an error naming the path")
{
    const std::string out = "/tmp/icmpc_missing_out";
    fs::remove_all(out);
    Config c = tiny_toy_config(out);
    try {
        pipeline::run_train(c);
        FAIL("expected ConfigError");
    } catch (const cfg::ConfigError& e) {
        CHECK(std::string(e.what()).find(pipeline::dataset_path(c, 1, true)) != std::string::npos);
    }
}

TEST_CASE("pipeline: tiny end-to-end run produces every artifact")
{
    const std::string out = "/tmp/icmpc_tiny_out";
    fs::remove_all(out);
    Config c = tiny_toy_config(out);

    pipeline::run_gen_data(c);
    CHECK(fs::exists(pipeline::dataset_path(c, 1, false)));
    CHECK(fs::exists(pipeline::dataset_path(c, 1, true)));
    CHECK(fs::exists(out + "/effective.cfg"));

    // identical seed regenerates byte-identical datasets
    const std::string first = read_file(pipeline::dataset_path(c, 1, false));
    pipeline::run_gen_data(c);
    CHECK(read_file(pipeline::dataset_path(c, 1, false)) == first);

    pipeline::run_train(c);
    CHECK(fs::exists(pipeline::model_path(c, "icnn", 1)));
    CHECK(fs::exists(pipeline::model_path(c, "fnn", 1)));

    pipeline::run_build_regions(c);
    CHECK(fs::exists(pipeline::regions_path(c, "icnn")));

    // stats rows equal leaf count (plus the header line)
    auto tree = pwl::RegionTree::load(pipeline::regions_path(c, "icnn"));
    const std::string stats = read_file(pipeline::regions_dir(c) + "/icnn_stats.csv");
    const auto lines = static_cast<std::size_t>(std::count(stats.begin(), stats.end(), '\n'));
    CHECK(lines == tree.leaves().size() + 1);

    // rebuilding with identical inputs is identical
    const std::string tree_text = read_file(pipeline::regions_path(c, "icnn"));
    pipeline::run_build_regions(c);
    CHECK(read_file(pipeline::regions_path(c, "icnn")) == tree_text);

    auto log = pipeline::run_simulate(c);
    CHECK(fs::exists(pipeline::sim_dir(c) + "/trajectory.csv"));
    CHECK(fs::exists(pipeline::sim_dir(c) + "/summary.csv"));
    CHECK(log.rows.size() <= 5);

    pipeline::run_surface(c);
    const std::string surface = read_file(out + "/surface.csv");
    CHECK(surface.rfind("u1,u2,objective", 0) == 0);
    CHECK(std::count(surface.begin(), surface.end(), '\n') == 9 * 9 + 1);
}

TEST_CASE("cli binary: exit codes")
{
    const std::string out = "/tmp/icmpc_cli_out";
    fs::remove_all(out);

    auto help = run_cli("--help");
    CHECK(help.exit_code == 0);
    CHECK(help.output.find("gen-data") != std::string::npos);
    // help enumerates every config key
    for (const auto& spec : Config::registry())
        CHECK(help.output.find(spec.key) != std::string::npos);

    auto bad_key = run_cli("gen-data --set nope=1");
    CHECK(bad_key.exit_code == 1);
    CHECK(bad_key.output.find("config error") != std::string::npos);

    auto missing = run_cli("train --set run.out_dir=" + out);
    CHECK(missing.exit_code == 1);

    auto ok = run_cli("gen-data --set run.out_dir=" + out +
                      " --set plant.kind=toy --set data.n_traj=50 --set data.horizon=1"
                      " --set data.x_lo=-2,-2 --set data.x_hi=2,2"
                      " --set data.u_lo=-10,-10 --set data.u_hi=10,10 --set mpc.dt=1");
    CHECK(ok.exit_code == 0);

    auto proto = run_cli("bridge-run --set run.out_dir=" + out +
                         " --set bridge.endpoint=127.0.0.1:1 --set bridge.timeout_s=1");
    CHECK(proto.exit_code != 0);
}
