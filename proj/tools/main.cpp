#include "icmpc/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitProtocol = 3;

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
};

icmpc::cfg::Config build_config(const CommonArgs& args)
{
    icmpc::cfg::Config cfg;
    if (!args.config_path.empty()) cfg = icmpc::cfg::Config::from_file(args.config_path);
    for (const auto& pair : args.overrides) cfg.set_pair(pair); // flags win over the file
    return cfg;
}

void add_common(CLI::App* sub, CommonArgs& args)
{
    sub->add_option("-c,--config", args.config_path, "config file (key = value lines)");
    sub->add_option("-s,--set", args.overrides, "override a config key, e.g. --set mpc.steps=40");
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Explicit convex-surrogate model predictive control pipeline"};
    app.require_subcommand(1);
    app.footer(icmpc::cfg::Config::registry_help());

    CommonArgs args;
    std::string command;
    for (const char* name : {"gen-data", "train", "build-regions", "simulate", "compare", "serve",
                             "bridge-run", "surface"}) {
        auto* sub = app.add_subcommand(name, "");
        add_common(sub, args);
        sub->callback([&command, name]() { command = name; });
    }
    app.get_subcommand("gen-data")->description("generate open-loop training datasets");
    app.get_subcommand("train")->description("train the horizon models");
    app.get_subcommand("build-regions")->description("build the affine region trees");
    app.get_subcommand("simulate")->description("run the closed loop against the built-in plant");
    app.get_subcommand("compare")->description("compare controller stacks over an initial-state set");
    app.get_subcommand("serve")->description("serve the plant over the line protocol");
    app.get_subcommand("bridge-run")->description("run the closed loop against a plant server");
    app.get_subcommand("surface")->description("export the one-step objective surface grid");

    CLI11_PARSE(app, argc, argv);

    try {
        const auto cfg = build_config(args);
        if (command == "gen-data")
            icmpc::pipeline::run_gen_data(cfg);
        else if (command == "train")
            icmpc::pipeline::run_train(cfg);
        else if (command == "build-regions")
            icmpc::pipeline::run_build_regions(cfg);
        else if (command == "simulate") {
            const auto log = icmpc::pipeline::run_simulate(cfg);
            if (log.halted) return kExitRuntime;
        } else if (command == "compare")
            icmpc::pipeline::run_compare(cfg);
        else if (command == "serve")
            icmpc::pipeline::run_serve(cfg);
        else if (command == "bridge-run") {
            const auto result = icmpc::pipeline::run_bridge(cfg);
            if (result.protocol_error) return kExitProtocol;
            if (result.log.halted) return kExitRuntime;
        } else if (command == "surface")
            icmpc::pipeline::run_surface(cfg);
    } catch (const icmpc::cfg::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitOk;
}
