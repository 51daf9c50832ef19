#pragma once

#include "icmpc/dataset.hpp"
#include "icmpc/plant.hpp"

namespace icmpc::plant {

struct OpenLoopSpec {
    Box x_box;            // initial-state sampling box (also the modeling box)
    Box u_box;            // held-input sampling box
    int n_traj = 5000;    // number of random trajectories
    int horizon = 2;      // K: datasets for prediction steps 1..K
    double dt = 0.01;     // sampling period
    std::uint64_t seed = 0;
    double trunc_factor = 1.2; // trajectories leaving trunc_factor * x_box stop
};

/// Runs n_traj sample-and-hold trajectories from uniform initial states with
/// uniform held inputs and emits one dataset per prediction step k = 1..K:
/// samples (x_0, u_0..u_{k-1}), labels x_k. A trajectory is truncated at the
/// first state outside trunc_factor * x_box, so remaining labels stay inside
/// the scaler's calibrated range. Pure function of (spec, plant).
std::vector<Dataset> generate_openloop_dataset(const PlantSim& plant, const OpenLoopSpec& spec);

} // namespace icmpc::plant
