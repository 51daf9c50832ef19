#pragma once

#include "icmpc/region.hpp"
#include "icmpc/surrogate.hpp"

namespace icmpc::pwl {

struct ApproxConfig {
    double error_bound = 0.15;  // relative to the scaled output range per component
    double min_edge = 0.125;    // minimum scaled segment length
    int samples_per_dim = 32;   // fit samples = samples_per_dim * (joint_dim + 1)
    int max_samples = 4096;
    double bound_margin = 0.95; // split against margin*bound so fresh draws stay under bound
    std::uint64_t seed = 0;
    int threads = 1;

    void validate(double root_edge) const
    {
        if (!(error_bound > 0.0 && error_bound < 1.0))
            throw std::invalid_argument("ApproxConfig: error_bound must be in (0,1)");
        if (!(min_edge > 0.0 && min_edge <= root_edge))
            throw std::invalid_argument("ApproxConfig: min_edge must be in (0, root edge]");
    }
};

struct FitResult {
    std::vector<AffinePiece> pieces; // per horizon step
    Vec max_rel_err;                 // per horizon step, max over outputs and samples
};

/// Least-squares affine fit of every horizon model over `box`, sampled
/// uniformly. The error is |pred - model| divided per output component by
/// `denoms[k-1]` (the scaled label range of model k).
FitResult fit_affine(const nn::SurrogateStack& stack, const Box& box, int n_samples,
                     std::uint64_t seed, const std::vector<Vec>& denoms);

/// Per-model relative-error denominators from the models' training-label
/// ranges, floored to avoid division blow-up.
std::vector<Vec> error_denominators(const nn::SurrogateStack& stack, double floor = 1e-9);

/// Recursive bisection over the scaled joint box: fit, and while any output
/// of any horizon model is over the error bound and the longest edge can be
/// halved without dropping below min_edge, split that edge at its midpoint
/// (ties go to the lowest dimension index). Region seeds derive from box
/// coordinates, so parallel and sequential builds produce identical trees.
RegionTree build_region_tree(const nn::SurrogateStack& stack, const ApproxConfig& cfg);

struct ValidationReport {
    int checked = 0;
    int over_bound_non_saturated = 0;
    double worst_rel_err = 0;
    int worst_leaf_id = -1;
};

/// Re-measures every leaf against the true models on a fresh sample draw
/// (seed offset from the build seed).
ValidationReport validate_tree(const RegionTree& tree, const nn::SurrogateStack& stack,
                               const ApproxConfig& cfg, std::uint64_t val_seed);

} // namespace icmpc::pwl
