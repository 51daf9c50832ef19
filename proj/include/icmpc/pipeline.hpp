#pragma once

#include "icmpc/bridge.hpp"
#include "icmpc/config.hpp"
#include "icmpc/datagen.hpp"
#include "icmpc/loop.hpp"
#include "icmpc/pwl_build.hpp"
#include "icmpc/train.hpp"

namespace icmpc::pipeline {

using cfg::Config;

plant::PlantSim plant_from_config(const Config& cfg);
plant::OpenLoopSpec openloop_spec_from_config(const Config& cfg);
pwl::ApproxConfig approx_from_config(const Config& cfg);
sim::MpcConfig mpc_from_config(const Config& cfg);

std::string data_dir(const Config& cfg);
std::string models_dir(const Config& cfg);
std::string regions_dir(const Config& cfg);
std::string sim_dir(const Config& cfg);

std::string dataset_path(const Config& cfg, int k, bool abs_variant);
std::string model_path(const Config& cfg, const std::string& family, int k);
std::string regions_path(const Config& cfg, const std::string& family);

/// Writes the effective configuration into the output directory and makes
/// sure the directory tree exists.
void prepare_out_dir(const Config& cfg);

void run_gen_data(const Config& cfg);
void run_train(const Config& cfg);
void run_build_regions(const Config& cfg);

/// Loads the trained horizon models of one family ("icnn" or "fnn").
nn::SurrogateStack load_stack(const Config& cfg, const std::string& family);

/// Explicit controller from trained models and the stored region tree.
std::unique_ptr<sim::ExplicitController> make_controller(const Config& cfg,
                                                         const std::string& family);

/// Returns the closed-loop log; also writes trajectory and summary CSVs
/// under <out>/sim. The returned log backs the nonzero-exit-on-halt rule.
sim::TrajectoryLog run_simulate(const Config& cfg);

std::vector<sim::CompareRow> run_compare(const Config& cfg);
void run_surface(const Config& cfg);
void run_serve(const Config& cfg);
bridge::BridgeRunResult run_bridge(const Config& cfg);

bridge::Endpoint endpoint_from_config(const Config& cfg);

} // namespace icmpc::pipeline
