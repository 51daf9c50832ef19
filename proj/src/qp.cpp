#include "icmpc/qp.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <future>

namespace icmpc::qp {

Vec RegionQp::gradient(const Vec& u, const Vec& x) const
{
    return 2.0 * (m1 * u) + m3.transpose() * x + m4.transpose();
}

double RegionQp::value(const Vec& u, const Vec& x) const
{
    return u.dot(m1 * u) + x.dot(m2 * x) + x.dot(m3 * u) + m4.dot(u) + m5.dot(x) + m6;
}

Vec require_positive_diagonal(const Mat& w, const std::string& what)
{
    if (w.rows() != w.cols()) throw std::invalid_argument(what + ": weight matrix must be square");
    for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c)
            if (r != c && w(r, c) != 0.0)
                throw std::invalid_argument(what + ": weight matrix must be diagonal");
    Vec d = w.diagonal();
    if ((d.array() <= 0.0).any())
        throw std::invalid_argument(what + ": diagonal entries must be positive");
    return d;
}

RegionQp assemble_qp(const Region& region, const Vec& m_diag, const Vec& n_diag)
{
    if ((m_diag.array() <= 0.0).any() || (n_diag.array() <= 0.0).any())
        throw std::invalid_argument("assemble_qp: weights must be positive");
    const int np = static_cast<int>(region.pieces.size());
    if (np == 0) throw std::invalid_argument("assemble_qp: region has no affine pieces");
    const int n = static_cast<int>(region.pieces.front().w_state.cols());
    const int m = static_cast<int>(region.pieces.front().w_inputs.front().cols());
    if (m_diag.size() != n || n_diag.size() != m)
        throw std::invalid_argument("assemble_qp: weight dims do not match coefficients");

    const Mat M = m_diag.asDiagonal();

    RegionQp qp;
    qp.n = n;
    qp.m = m;
    qp.np = np;
    qp.m1 = Mat::Zero(m * np, m * np);
    qp.m2 = Mat::Zero(n, n);
    qp.m3 = Mat::Zero(n, m * np);
    qp.m4 = RowVec::Zero(m * np);
    qp.m5 = RowVec::Zero(n);
    qp.m6 = 0;

    // hat-block j of step k is defined for j <= k (1-based); the (p,q)
    // block of m1 sums over steps k >= max(p,q)
    auto hat = [&](int k, int j) -> const Mat& {
        return region.pieces[static_cast<std::size_t>(k - 1)].w_inputs[static_cast<std::size_t>(j - 1)];
    };

    for (int p = 1; p <= np; ++p)
        for (int q = 1; q <= np; ++q) {
            Mat block = Mat::Zero(m, m);
            for (int k = std::max(p, q); k <= np; ++k) block += hat(k, p).transpose() * M * hat(k, q);
            if (p == q) block += Mat(n_diag.asDiagonal());
            qp.m1.block((p - 1) * m, (q - 1) * m, m, m) = block;
        }

    for (int k = 1; k <= np; ++k) {
        const auto& piece = region.pieces[static_cast<std::size_t>(k - 1)];
        qp.m2 += piece.w_state.transpose() * M * piece.w_state;
        qp.m5 += 2.0 * piece.w_const.transpose() * M * piece.w_state;
        qp.m6 += piece.w_const.dot(M * piece.w_const);
        for (int j = 1; j <= k; ++j) {
            qp.m3.middleCols((j - 1) * m, m) += 2.0 * piece.w_state.transpose() * M * hat(k, j);
            qp.m4.segment((j - 1) * m, m) += 2.0 * piece.w_const.transpose() * M * hat(k, j);
        }
    }

    Mat sym = 0.5 * (qp.m1 + qp.m1.transpose()); // symmetrize against rounding
    qp.m1 = std::move(sym);

    if (region.box.dim() == n + m * np) {
        qp.x_box = region.box.slice(0, n);
        qp.u_box = region.box.slice(n, m * np);
    } else {
        qp.x_box = Box(Vec::Constant(n, -1e30), Vec::Constant(n, 1e30));
        qp.u_box = Box(Vec::Constant(m * np, -1e30), Vec::Constant(m * np, 1e30));
    }
    return qp;
}

RegionQp assemble_qp(const Region& region, const Mat& m_weight, const Mat& n_weight)
{
    return assemble_qp(region, require_positive_diagonal(m_weight, "assemble_qp(M)"),
                       require_positive_diagonal(n_weight, "assemble_qp(N)"));
}

RegionQp assemble_qp_scaled(const Region& region, const nn::SurrogateStack& stack,
                            const Vec& m_diag_phys, const Vec& n_diag_phys)
{
    Region scaled = region;
    for (int k = 1; k <= stack.np; ++k) {
        auto& piece = scaled.pieces[static_cast<std::size_t>(k - 1)];
        const Vec sy = stack.output_scale(k);
        piece.w_state = sy.asDiagonal() * piece.w_state;
        for (auto& wu : piece.w_inputs) wu = sy.asDiagonal() * wu;
        piece.w_const = sy.cwiseProduct(piece.w_const);
    }
    const Vec su = stack.input_scale();
    const Vec n_scaled = n_diag_phys.cwiseProduct(su.cwiseProduct(su));
    return assemble_qp(scaled, m_diag_phys, n_scaled);
}

namespace {

double kkt_residual(const RegionQp& qp, const Vec& u, const Vec& g)
{
    // infinity norm of u - P(u - grad)
    const Vec projected = (u - g).cwiseMax(qp.u_box.lo).cwiseMin(qp.u_box.hi);
    return (u - projected).cwiseAbs().maxCoeff();
}

/// Exhaustive active-set enumeration; exact for small d.
QpSolution solve_enumerate(const RegionQp& qp, const Vec& x)
{
    const int d = static_cast<int>(qp.m1.rows());
    const Vec q = qp.m3.transpose() * x + qp.m4.transpose();
    QpSolution best;
    best.objective = std::numeric_limits<double>::infinity();

    std::vector<int> pattern(static_cast<std::size_t>(d), 0); // 0 lo, 1 hi, 2 free
    const long total = static_cast<long>(std::pow(3.0, d));
    for (long code = 0; code < total; ++code) {
        long rem = code;
        std::vector<int> free_idx;
        Vec u(d);
        for (int i = 0; i < d; ++i) {
            pattern[static_cast<std::size_t>(i)] = static_cast<int>(rem % 3);
            rem /= 3;
            if (pattern[static_cast<std::size_t>(i)] == 0)
                u[i] = qp.u_box.lo[i];
            else if (pattern[static_cast<std::size_t>(i)] == 1)
                u[i] = qp.u_box.hi[i];
            else
                free_idx.push_back(i);
        }
        const int nf = static_cast<int>(free_idx.size());
        if (nf > 0) {
            Mat h(nf, nf);
            Vec rhs(nf);
            for (int a = 0; a < nf; ++a) {
                rhs[a] = -0.5 * q[free_idx[static_cast<std::size_t>(a)]];
                for (int i = 0; i < d; ++i) {
                    if (pattern[static_cast<std::size_t>(i)] != 2)
                        rhs[a] -= qp.m1(free_idx[static_cast<std::size_t>(a)], i) * u[i];
                }
                for (int b = 0; b < nf; ++b)
                    h(a, b) = qp.m1(free_idx[static_cast<std::size_t>(a)], free_idx[static_cast<std::size_t>(b)]);
            }
            Vec uf = h.ldlt().solve(rhs);
            for (int a = 0; a < nf; ++a) u[free_idx[static_cast<std::size_t>(a)]] = uf[a];
        }
        // feasibility and first-order conditions
        bool ok = true;
        const Vec g = qp.gradient(u, x);
        for (int i = 0; i < d && ok; ++i) {
            if (pattern[static_cast<std::size_t>(i)] == 2)
                ok = u[i] >= qp.u_box.lo[i] - 1e-12 && u[i] <= qp.u_box.hi[i] + 1e-12;
            else if (pattern[static_cast<std::size_t>(i)] == 0)
                ok = g[i] >= -1e-9;
            else
                ok = g[i] <= 1e-9;
        }
        if (!ok) continue;
        const double val = qp.value(u, x);
        if (val < best.objective) {
            best.objective = val;
            best.u = qp.u_box.clamp(u);
            best.kkt_residual = kkt_residual(qp, best.u, qp.gradient(best.u, x));
        }
    }
    if (!std::isfinite(best.objective))
        throw std::runtime_error("solve_box_qp: active-set enumeration found no KKT point");
    return best;
}

} // namespace

namespace {

/// Newton polish on the face suggested by the current iterate: fix
/// coordinates sitting at a bound with an outward-pointing gradient, solve
/// the reduced system for the rest, clamp back into the box.
bool polish_active_set(const RegionQp& qp, const Vec& q, Vec& u, double tol)
{
    const int d = static_cast<int>(u.size());
    Vec g = 2.0 * (qp.m1 * u) + q;
    std::vector<int> free_idx;
    Vec fixed = u;
    for (int i = 0; i < d; ++i) {
        const bool at_lo = u[i] <= qp.u_box.lo[i] + 1e-12 && g[i] >= 0;
        const bool at_hi = u[i] >= qp.u_box.hi[i] - 1e-12 && g[i] <= 0;
        if (at_lo)
            fixed[i] = qp.u_box.lo[i];
        else if (at_hi)
            fixed[i] = qp.u_box.hi[i];
        else
            free_idx.push_back(i);
    }
    Vec candidate = fixed;
    const int nf = static_cast<int>(free_idx.size());
    if (nf > 0) {
        Mat h(nf, nf);
        Vec rhs(nf);
        for (int a = 0; a < nf; ++a) {
            rhs[a] = -0.5 * q[free_idx[static_cast<std::size_t>(a)]];
            for (int i = 0; i < d; ++i)
                if (std::find(free_idx.begin(), free_idx.end(), i) == free_idx.end())
                    rhs[a] -= qp.m1(free_idx[static_cast<std::size_t>(a)], i) * fixed[i];
            for (int b = 0; b < nf; ++b)
                h(a, b) = qp.m1(free_idx[static_cast<std::size_t>(a)],
                                free_idx[static_cast<std::size_t>(b)]);
        }
        Vec uf = h.ldlt().solve(rhs);
        for (int a = 0; a < nf; ++a) candidate[free_idx[static_cast<std::size_t>(a)]] = uf[a];
        candidate = qp.u_box.clamp(candidate);
    }
    const Vec g_cand = 2.0 * (qp.m1 * candidate) + q;
    if (kkt_residual(qp, candidate, g_cand) <= tol) {
        u = candidate;
        return true;
    }
    // keep whichever point is better and carry on
    if (candidate.dot(qp.m1 * candidate) + q.dot(candidate) < u.dot(qp.m1 * u) + q.dot(u))
        u = candidate;
    return false;
}

} // namespace

QpSolution solve_box_qp(const RegionQp& qp, const Vec& x)
{
    if (x.size() != qp.n) throw std::invalid_argument("solve_box_qp: state dim mismatch");
    if (!(x.array() >= qp.x_box.lo.array() - 1e-9).all() ||
        !(x.array() <= qp.x_box.hi.array() + 1e-9).all())
        throw std::invalid_argument("solve_box_qp: region not applicable to this state");

    const int d = static_cast<int>(qp.m1.rows());
    const Vec q = qp.m3.transpose() * x + qp.m4.transpose();

    // Gershgorin upper bound for the curvature; cheap and safe for the step
    double lam_max = 0;
    double diag_min = std::numeric_limits<double>::infinity();
    for (int i = 0; i < d; ++i) {
        lam_max = std::max(lam_max, qp.m1.row(i).cwiseAbs().sum());
        diag_min = std::min(diag_min, qp.m1(i, i));
    }
    if (diag_min < -1e-10)
        throw std::runtime_error("solve_box_qp: m1 is not positive semidefinite (assembly bug)");
    const double L = std::max(2.0 * lam_max, 1e-12);

    // FISTA from the projected origin, with periodic active-set polish
    Vec u = qp.u_box.clamp(Vec::Zero(d));
    Vec y = u;
    Vec g_y(d), u_next(d), g(d);
    double t = 1.0;
    const double tol = 1e-9;
    const int cap = 5000;
    QpSolution sol;
    bool converged = false;
    for (sol.iterations = 0; sol.iterations < cap && !converged; ++sol.iterations) {
        g_y.noalias() = 2.0 * (qp.m1 * y) + q;
        u_next = (y - g_y / L).cwiseMax(qp.u_box.lo).cwiseMin(qp.u_box.hi);
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = u_next + ((t - 1.0) / t_next) * (u_next - u);
        u = u_next;
        t = t_next;
        g.noalias() = 2.0 * (qp.m1 * u) + q;
        if (kkt_residual(qp, u, g) <= tol) break;
        if (sol.iterations % 25 == 24 && polish_active_set(qp, q, u, tol)) {
            converged = true;
            y = u;
            t = 1.0;
        }
    }
    sol.u = u;
    sol.kkt_residual = kkt_residual(qp, u, qp.gradient(u, x));
    sol.objective = qp.value(u, x);

    if (sol.kkt_residual > 1e-8 && d <= 6) {
        QpSolution exact = solve_enumerate(qp, x);
        exact.iterations = sol.iterations;
        return exact;
    }
    return sol;
}

std::vector<Candidate> candidates_for_state(const pwl::RegionTree& tree,
                                            const nn::SurrogateStack& stack, const Vec& m_diag,
                                            const Vec& n_diag, const Vec& x_phys, int threads)
{
    const Vec x_scaled = tree.root_box().slice(0, tree.state_dim()).clamp(stack.scale_state(x_phys));
    const std::vector<int> ids = tree.candidate_regions(x_scaled);

    std::vector<Candidate> out(ids.size());
    std::atomic<int> failures{0};
    auto solve_one = [&](std::size_t i) {
        try {
            const Region& region = tree.leaf(ids[i]);
            RegionQp qp = assemble_qp_scaled(region, stack, m_diag, n_diag);
            QpSolution s = solve_box_qp(qp, x_scaled);
            Candidate c;
            c.region_id = ids[i];
            c.u_scaled = s.u;
            c.u_phys = stack.unscale_input_seq(s.u);
            c.affine_objective = s.objective;
            c.iterations = s.iterations;
            c.kkt_residual = s.kkt_residual;
            out[i] = std::move(c);
        } catch (const std::exception&) {
            ++failures; // region skipped; never fatal while other candidates remain
        }
    };

    if (threads > 1 && ids.size() > 32) {
        const int nw = std::min<int>(threads, static_cast<int>(ids.size()));
        std::vector<std::future<void>> futs;
        std::atomic<std::size_t> next{0};
        for (int w = 0; w < nw; ++w)
            futs.push_back(std::async(std::launch::async, [&]() {
                for (std::size_t i = next.fetch_add(1); i < ids.size(); i = next.fetch_add(1))
                    solve_one(i);
            }));
        for (auto& f : futs) f.get();
    } else {
        for (std::size_t i = 0; i < ids.size(); ++i) solve_one(i);
    }

    // drop failed solves, keep region-id order (ids were sorted)
    std::vector<Candidate> kept;
    kept.reserve(out.size());
    for (auto& c : out)
        if (c.region_id >= 0) kept.push_back(std::move(c));
    if (kept.empty()) throw std::runtime_error("candidates_for_state: every region solve failed");
    return kept;
}

} // namespace icmpc::qp
