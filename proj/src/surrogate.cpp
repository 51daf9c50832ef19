#include "icmpc/surrogate.hpp"

#include <cstdio>

namespace icmpc::nn {

SurrogateStack SurrogateStack::from_models(std::vector<Network> models, int state_dim, int input_dim)
{
    if (models.empty()) throw std::invalid_argument("SurrogateStack: no models");
    SurrogateStack s;
    s.n = state_dim;
    s.m = input_dim;
    s.np = static_cast<int>(models.size());
    s.models = std::move(models);

    for (int k = 1; k <= s.np; ++k) {
        const Network& net = s.model(k);
        if (net.input_dim != s.n + k * s.m)
            throw std::invalid_argument("SurrogateStack: model " + std::to_string(k) +
                                        " input dim != n + k*m");
        if (net.output_dim != s.n)
            throw std::invalid_argument("SurrogateStack: model output dim != state dim");
        if (net.step_index != k)
            throw std::invalid_argument("SurrogateStack: model order does not match step_index");
        // shared feature dims must be scaled identically across models
        const auto& ref = s.models.front().input_scaler;
        for (int d = 0; d < net.input_dim && d < ref.dim(); ++d) {
            if (std::abs(net.input_scaler.lo[d] - ref.lo[d]) > 1e-12 ||
                std::abs(net.input_scaler.hi[d] - ref.hi[d]) > 1e-12)
                throw std::invalid_argument("SurrogateStack: models disagree on feature scaling");
        }
        if (!net.input_scaler.is_symmetric(1e-9) || !net.output_scaler.is_symmetric(1e-9))
            throw std::invalid_argument("SurrogateStack: requires origin-preserving scalers");
    }
    return s;
}

Vec SurrogateStack::state_scale() const
{
    return models.front().input_scaler.scale().head(n);
}

Vec SurrogateStack::input_scale() const
{
    return models.front().input_scaler.scale().segment(n, m);
}

Vec SurrogateStack::output_scale(int k) const
{
    return model(k).output_scaler.scale();
}

Vec SurrogateStack::scale_state(const Vec& x) const { return x.cwiseQuotient(state_scale()); }
Vec SurrogateStack::unscale_state(const Vec& x) const { return x.cwiseProduct(state_scale()); }
Vec SurrogateStack::scale_input(const Vec& u) const { return u.cwiseQuotient(input_scale()); }
Vec SurrogateStack::unscale_input(const Vec& u) const { return u.cwiseProduct(input_scale()); }

Vec SurrogateStack::scale_input_seq(const Vec& U) const
{
    Vec out(U.size());
    const Vec s = input_scale();
    for (int k = 0; k * m < U.size(); ++k) out.segment(k * m, m) = U.segment(k * m, m).cwiseQuotient(s);
    return out;
}

Vec SurrogateStack::unscale_input_seq(const Vec& U) const
{
    Vec out(U.size());
    const Vec s = input_scale();
    for (int k = 0; k * m < U.size(); ++k) out.segment(k * m, m) = U.segment(k * m, m).cwiseProduct(s);
    return out;
}

Vec SurrogateStack::predict_phys(int k, const Vec& x_phys, const Vec& U_phys) const
{
    if (U_phys.size() < k * m) throw std::invalid_argument("predict_phys: input sequence too short");
    const Network& net = model(k);
    Vec feat(net.input_dim);
    feat.head(n) = x_phys;
    feat.tail(k * m) = U_phys.head(k * m);
    return net.predict(feat);
}

double SurrogateStack::objective(const Vec& x_phys, const Vec& U_phys, const Vec& m_diag,
                                 const Vec& n_diag) const
{
    if (U_phys.size() != static_cast<Eigen::Index>(m) * np)
        throw std::invalid_argument("objective: U size != m*np");
    double j = 0.0;
    for (int k = 1; k <= np; ++k) {
        Vec pred = predict_phys(k, x_phys, U_phys);
        j += pred.cwiseProduct(m_diag).dot(pred);
    }
    for (int k = 0; k < np; ++k) {
        Vec u = U_phys.segment(k * m, m);
        j += u.cwiseProduct(n_diag).dot(u);
    }
    return j;
}

double objective_icnn(const SurrogateStack& stack, const Vec& x_phys, const Vec& U_phys,
                      const Vec& m_diag, const Vec& n_diag)
{
    for (const auto& net : stack.models)
        if (!net.predicts_absolute)
            throw std::invalid_argument("objective_icnn: all models must predict absolute values");
    return stack.objective(x_phys, U_phys, m_diag, n_diag);
}

std::vector<SurfacePoint> objective_surface(const SurrogateStack& stack, const Vec& x_phys,
                                            const GridSpec& grid, const Vec& m_diag, const Vec& n_diag)
{
    if (stack.np != 1)
        throw std::invalid_argument("objective_surface: defined for a one-step horizon only");
    if (grid.points_per_axis < 2)
        throw std::invalid_argument("objective_surface: need >= 2 points per axis");
    if (grid.u_box.dim() != stack.m) throw std::invalid_argument("objective_surface: grid dim != m");
    if (x_phys.size() != stack.n) throw std::invalid_argument("objective_surface: state dim mismatch");

    const int md = stack.m;
    const int pts = grid.points_per_axis;
    std::vector<SurfacePoint> out;
    std::vector<int> idx(static_cast<std::size_t>(md), 0);
    const long total = static_cast<long>(std::pow(pts, md));
    out.reserve(static_cast<std::size_t>(total));
    for (long flat = 0; flat < total; ++flat) {
        long rem = flat;
        Vec u(md);
        for (int d = md - 1; d >= 0; --d) {
            int i = static_cast<int>(rem % pts);
            rem /= pts;
            u[d] = grid.u_box.lo[d] + (grid.u_box.hi[d] - grid.u_box.lo[d]) * i / (pts - 1);
        }
        out.push_back({u, stack.objective(x_phys, u, m_diag, n_diag)});
    }
    return out;
}

void write_surface_csv(const std::vector<SurfacePoint>& pts, const std::string& path)
{
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("write_surface_csv: cannot open " + path);
    if (!pts.empty()) {
        for (Eigen::Index d = 0; d < pts.front().u.size(); ++d) std::fprintf(f, "u%ld,", d + 1);
        std::fprintf(f, "objective\n");
    }
    for (const auto& p : pts) {
        for (Eigen::Index d = 0; d < p.u.size(); ++d) std::fprintf(f, "%.17g,", p.u[d]);
        std::fprintf(f, "%.17g\n", p.objective);
    }
    std::fclose(f);
}

} // namespace icmpc::nn
