#pragma once

#include "icmpc/network.hpp"

#include <vector>

namespace icmpc::nn {

/// The horizon model set: models[k-1] predicts the state after k sampling
/// periods from features (x_t, u_t, ..., u_{t+k-1}). All models share the
/// feature scaling for the dimensions they have in common; construction
/// checks that.
struct SurrogateStack {
    int n = 0;  // state dim
    int m = 0;  // input dim
    int np = 0; // prediction horizon
    std::vector<Network> models;

    static SurrogateStack from_models(std::vector<Network> models, int state_dim, int input_dim);

    const Network& model(int k) const { return models.at(static_cast<std::size_t>(k - 1)); }

    /// Scale the physical state into model feature units (first n dims).
    Vec scale_state(const Vec& x_phys) const;
    Vec unscale_state(const Vec& x_scaled) const;
    /// Scale one physical input vector into feature units.
    Vec scale_input(const Vec& u_phys) const;
    Vec unscale_input(const Vec& u_scaled) const;
    /// Stacked input sequence (m*np) between physical and scaled units.
    Vec scale_input_seq(const Vec& U_phys) const;
    Vec unscale_input_seq(const Vec& U_scaled) const;

    /// Physical-unit prediction of step k from physical state and stacked
    /// physical input sequence (only the first k*m entries are used).
    Vec predict_phys(int k, const Vec& x_phys, const Vec& U_phys) const;

    /// sum_k pred_k' * diag(m_diag) * pred_k + sum_k u_k' * diag(n_diag) * u_k
    /// evaluated on the original (nonlinear) models in physical units.
    double objective(const Vec& x_phys, const Vec& U_phys, const Vec& m_diag, const Vec& n_diag) const;

    /// Per-dimension half-widths of the shared feature scaling (offset-free).
    Vec state_scale() const;
    Vec input_scale() const;
    Vec output_scale(int k) const;
};

/// objective() with the convex-stack preconditions checked (all models
/// predict absolute values, so the result is non-negative by construction).
double objective_icnn(const SurrogateStack& stack, const Vec& x_phys, const Vec& U_phys,
                      const Vec& m_diag, const Vec& n_diag);

struct SurfacePoint {
    Vec u;
    double objective;
};

struct GridSpec {
    Box u_box;
    int points_per_axis = 41;
};

/// Objective values of the one-step controller over a cartesian grid of
/// physical inputs with the state held fixed; the raw data behind the
/// objective-profile plots. Requires np == 1.
std::vector<SurfacePoint> objective_surface(const SurrogateStack& stack, const Vec& x_phys,
                                            const GridSpec& grid, const Vec& m_diag, const Vec& n_diag);

void write_surface_csv(const std::vector<SurfacePoint>& pts, const std::string& path);

} // namespace icmpc::nn
