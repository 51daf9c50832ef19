#pragma once

#include "icmpc/network.hpp"

namespace icmpc::nn {

struct ConvexityReport {
    bool pass = false;
    bool weights_ok = false;     // static check: hidden-to-hidden weights >= 0
    bool activations_ok = false; // static check: activation tags convex and non-decreasing
    double worst_violation = 0;  // max over pairs/components of f(mid) - avg(f) (signed)
    Vec witness_a;
    Vec witness_b;
    int n_pairs = 0;
    double tol = 0;
};

/// Midpoint convexity sampling check over `domain`, plus the static weight
/// and activation conditions that guarantee convexity analytically.
ConvexityReport certify_convexity(const Network& net, const Box& domain, int n_pairs, double tol,
                                  std::uint64_t seed);

} // namespace icmpc::nn
