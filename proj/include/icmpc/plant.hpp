#pragma once

#include "icmpc/types.hpp"

#include <functional>

namespace icmpc::plant {

/// Discrete two-state benchmark map.
Eigen::Vector2d toy_step(const Eigen::Vector2d& x, const Eigen::Vector2d& u);

/// Second-order exothermic A -> B reaction in a non-isothermal CSTR.
/// The state is in deviation form x = (C_A - C_As, T - Ts); the input is
/// u = (delta C_A0, delta Q). Units: kmol, m^3, K, kJ, hr.
struct CstrParams {
    double Ea = 5.0e4;    // activation energy, kJ/kmol
    double V = 1.0;       // reactor volume, m^3
    double F = 5.0;       // feed flow rate, m^3/hr
    double R = 8.314;     // gas constant, kJ/kmol K
    double T0 = 300.0;    // feed temperature, K
    double CA0s = 4.0;    // steady-state feed concentration, kmol/m^3
    double CAs = 1.95;    // steady-state concentration, kmol/m^3
    double Qs = 0.0;      // steady-state heat input, kJ/hr
    double Ts = 402.0;    // steady-state temperature, K
    double dH = -1.15e4;  // heat of reaction, kJ/kmol
    double Cp = 0.231;    // heat capacity, kJ/kg K
    double rho = 1000.0;  // liquid density, kg/m^3
    double k0 = 8.46e6;   // pre-exponential factor, m^3/kmol hr
};

/// Time derivative of the deviation state. Throws on non-physical
/// temperature (Ts + x2 <= 0).
Eigen::Vector2d cstr_rhs(const CstrParams& p, const Eigen::Vector2d& x, const Eigen::Vector2d& u);

/// One classical RK4 step of dx/dt = rhs(x).
template <typename Rhs>
Vec rk4_step(Rhs&& rhs, const Vec& x, double dt)
{
    Vec k1 = rhs(x);
    Vec k2 = rhs(x + 0.5 * dt * k1);
    Vec k3 = rhs(x + 0.5 * dt * k2);
    Vec k4 = rhs(x + dt * k3);
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Integrates dx/dt = rhs(x, u) over one sampling period with u held
/// constant, using `substeps` RK4 steps.
template <typename Rhs>
Vec integrate_hold(Rhs&& rhs, const Vec& x0, const Vec& u, double dt, int substeps)
{
    if (substeps < 1) throw std::invalid_argument("integrate_hold: substeps must be >= 1");
    const double h = dt / substeps;
    Vec x = x0;
    auto held = [&](const Vec& s) { return rhs(s, u); };
    for (int i = 0; i < substeps; ++i) x = rk4_step(held, x, h);
    return x;
}

enum class PlantKind { toy, cstr };

/// Runtime plant facade used by the closed loop, the data generator and the
/// co-simulation server. advance() applies one sample-and-hold period.
struct PlantSim {
    PlantKind kind = PlantKind::cstr;
    CstrParams cstr;
    int substeps = 10;

    int state_dim() const { return 2; }
    int input_dim() const { return 2; }

    Vec advance(const Vec& x, const Vec& u, double dt) const;
};

} // namespace icmpc::plant
