#include "icmpc/plant.hpp"

#include <cmath>

namespace icmpc::plant {

Eigen::Vector2d toy_step(const Eigen::Vector2d& x, const Eigen::Vector2d& u)
{
    return {0.5 * x[0] * x[0] - x[1] + std::sin(u[0]) - std::cos(u[1]),
            -x[0] + 0.5 * x[1] * x[1] - std::cos(u[0]) + std::sin(u[1])};
}

Eigen::Vector2d cstr_rhs(const CstrParams& p, const Eigen::Vector2d& x, const Eigen::Vector2d& u)
{
    const double CA = p.CAs + x[0];
    const double T = p.Ts + x[1];
    const double CA0 = p.CA0s + u[0];
    const double Q = p.Qs + u[1];
    if (T <= 0.0) throw std::domain_error("cstr_rhs: non-physical temperature T <= 0");

    const double rate = p.k0 * std::exp(-p.Ea / (p.R * T)) * CA * CA;
    const double dCA = (p.F / p.V) * (CA0 - CA) - rate;
    const double dT = (p.F / p.V) * (p.T0 - T) + Q / (p.rho * p.Cp * p.V) - p.dH / (p.rho * p.Cp) * rate;
    return {dCA, dT};
}

Vec PlantSim::advance(const Vec& x, const Vec& u, double dt) const
{
    if (x.size() != 2 || u.size() != 2) throw std::invalid_argument("PlantSim::advance: expects 2-d state and input");
    switch (kind) {
    case PlantKind::toy:
        // discrete map: one application per sampling period
        return toy_step(x, u);
    case PlantKind::cstr:
        return integrate_hold([this](const Vec& s, const Vec& v) -> Vec { return cstr_rhs(cstr, s, v); },
                              x, u, dt, substeps);
    }
    throw std::logic_error("PlantSim::advance: unknown plant kind");
}

} // namespace icmpc::plant
