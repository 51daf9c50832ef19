#include "icmpc/select.hpp"

#include <algorithm>
#include <queue>

namespace icmpc::miqp {

ObjectiveFn stack_objective(const nn::SurrogateStack& stack, const Vec& x_phys, const Vec& m_diag,
                            const Vec& n_diag)
{
    return [&stack, x_phys, m_diag, n_diag](const Candidate& c) {
        return stack.objective(x_phys, c.u_phys, m_diag, n_diag);
    };
}

BatchObjectives batch_stack_objectives(const nn::SurrogateStack& stack, const Vec& x_phys,
                                       const std::vector<Candidate>& candidates, const Vec& m_diag,
                                       const Vec& n_diag, Deadline deadline, int chunk)
{
    BatchObjectives out;
    const auto count = static_cast<int>(candidates.size());
    out.values.assign(static_cast<std::size_t>(count), std::numeric_limits<double>::quiet_NaN());
    const Vec x_scaled = stack.scale_state(x_phys);

    for (int start = 0; start < count; start += chunk) {
        if (out.evaluated > 0 && deadline && Clock::now() >= *deadline) {
            out.budget_hit = true;
            break;
        }
        const int rows = std::min(chunk, count - start);
        Vec acc = Vec::Zero(rows);
        for (int k = 1; k <= stack.np; ++k) {
            const auto& net = stack.model(k);
            Mat feats(rows, net.input_dim);
            for (int r = 0; r < rows; ++r) {
                feats.row(r).head(stack.n) = x_scaled.transpose();
                feats.row(r).tail(k * stack.m) =
                    candidates[static_cast<std::size_t>(start + r)].u_scaled.head(k * stack.m).transpose();
            }
            Mat preds = net.forward_rows(feats); // scaled outputs
            preds.array().rowwise() *= stack.output_scale(k).transpose().array();
            acc += (preds.array().square().rowwise() * m_diag.transpose().array())
                       .rowwise()
                       .sum()
                       .matrix();
        }
        for (int r = 0; r < rows; ++r) {
            const Vec& u = candidates[static_cast<std::size_t>(start + r)].u_phys;
            double ju = 0;
            for (int k = 0; k < stack.np; ++k) {
                Vec uk = u.segment(k * stack.m, stack.m);
                ju += uk.cwiseProduct(n_diag).dot(uk);
            }
            out.values[static_cast<std::size_t>(start + r)] = acc[r] + ju;
        }
        out.evaluated += rows;
    }
    return out;
}

void refine_candidates(const nn::SurrogateStack& stack, const pwl::RegionTree& tree,
                       const Vec& x_phys, std::vector<Candidate>& candidates, const Vec& m_diag,
                       const Vec& n_diag, int iterations)
{
    const int count = static_cast<int>(candidates.size());
    if (count == 0) return;
    const int n = stack.n, m = stack.m, np = stack.np;
    const int du = m * np;
    const Vec x_scaled = stack.scale_state(x_phys);
    const Vec su = stack.input_scale();
    Vec n_scaled(du); // u' N u in physical units, as a function of scaled u
    for (int k = 0; k < np; ++k)
        n_scaled.segment(k * m, m) = n_diag.cwiseProduct(su.cwiseProduct(su));

    Mat U(count, du), lo(count, du), hi(count, du);
    for (int r = 0; r < count; ++r) {
        U.row(r) = candidates[static_cast<std::size_t>(r)].u_scaled.transpose();
        const Box box =
            tree.leaf(candidates[static_cast<std::size_t>(r)].region_id).box.slice(n, du);
        lo.row(r) = box.lo.transpose();
        hi.row(r) = box.hi.transpose();
    }

    auto objective_rows = [&](const Mat& u_rows) -> Vec {
        Vec j = (u_rows.array().square().rowwise() * n_scaled.transpose().array())
                    .rowwise()
                    .sum()
                    .matrix();
        for (int k = 1; k <= np; ++k) {
            const auto& net = stack.model(k);
            Mat feats(count, net.input_dim);
            feats.leftCols(n).rowwise() = x_scaled.transpose();
            feats.rightCols(k * m) = u_rows.leftCols(k * m);
            Mat y = net.forward_rows(feats);
            y.array().rowwise() *= stack.output_scale(k).transpose().array();
            j += (y.array().square().rowwise() * m_diag.transpose().array()).rowwise().sum().matrix();
        }
        return j;
    };

    auto gradient_rows = [&](const Mat& u_rows) -> Mat {
        Mat g = 2.0 * (u_rows.array().rowwise() * n_scaled.transpose().array()).matrix();
        for (int k = 1; k <= np; ++k) {
            const auto& net = stack.model(k);
            const Vec sy = stack.output_scale(k);
            Mat feats(count, net.input_dim);
            feats.leftCols(n).rowwise() = x_scaled.transpose();
            feats.rightCols(k * m) = u_rows.leftCols(k * m);
            Mat y = net.forward_rows(feats); // scaled outputs
            // dJ/dy for J = sum_c M_c (S_c y_c)^2
            Mat dy = 2.0 * (y.array().rowwise() *
                            (m_diag.cwiseProduct(sy.cwiseProduct(sy))).transpose().array())
                               .matrix();
            Mat ds = net.input_vjp_rows(feats, dy);
            g.leftCols(k * m) += ds.rightCols(k * m);
        }
        return g;
    };

    Vec j = objective_rows(U);
    Vec step = Vec::Constant(count, 0.05);
    for (int it = 0; it < iterations; ++it) {
        Mat g = gradient_rows(U);
        Mat proposal =
            (U - (g.array().colwise() * step.array()).matrix()).cwiseMax(lo).cwiseMin(hi);
        Vec j_new = objective_rows(proposal);
        for (int r = 0; r < count; ++r) {
            if (j_new[r] <= j[r]) { // monotone per candidate
                U.row(r) = proposal.row(r);
                j[r] = j_new[r];
                step[r] *= 1.25;
            } else {
                step[r] *= 0.5;
            }
        }
    }

    for (int r = 0; r < count; ++r) {
        auto& c = candidates[static_cast<std::size_t>(r)];
        c.u_scaled = U.row(r).transpose();
        c.u_phys = stack.unscale_input_seq(c.u_scaled);
    }
}

namespace {

bool expired(const Deadline& deadline)
{
    return deadline && Clock::now() >= *deadline;
}

void finalize(SelectionResult& r, const std::vector<Candidate>& candidates)
{
    if (r.index < 0) throw std::logic_error("selection produced no result");
    const Candidate& c = candidates[static_cast<std::size_t>(r.index)];
    r.region_id = c.region_id;
    r.u_phys = c.u_phys;
    r.u_scaled = c.u_scaled;
}

} // namespace

SelectionResult solve_exhaustive(const std::vector<Candidate>& candidates, const ObjectiveFn& objective,
                                 Deadline deadline)
{
    if (candidates.empty()) throw std::invalid_argument("solve_exhaustive: no candidates");
    SelectionResult r;
    r.mode = Mode::exhaustive;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (r.evaluations > 0 && expired(deadline)) {
            r.budget_hit = true;
            break;
        }
        const double j = objective(candidates[i]);
        ++r.evaluations;
        r.table.emplace_back(candidates[i].region_id, j);
        if (j < best || (j == best && r.index >= 0 &&
                         candidates[i].region_id < candidates[static_cast<std::size_t>(r.index)].region_id)) {
            best = j;
            r.index = static_cast<int>(i);
        }
    }
    r.objective = best;
    finalize(r, candidates);
    return r;
}

NeighborGraph build_neighbor_graph(const std::vector<Candidate>& candidates,
                                   const pwl::RegionTree& tree)
{
    const int n = tree.state_dim();
    const int du = tree.input_dim() * tree.horizon();
    const std::size_t count = candidates.size();

    std::vector<Box> boxes;
    boxes.reserve(count);
    for (const auto& c : candidates) boxes.push_back(tree.leaf(c.region_id).box.slice(n, du));

    // Adjacent = closures share at least one boundary point. This includes
    // facet, edge and corner contact; the corner cases matter because
    // refined minimizers frequently sit exactly on the dyadic box corners,
    // and descent paths may exit a box through an edge.
    NeighborGraph g;
    g.adj.resize(count);
    const double tol = 1e-12;
    for (std::size_t a = 0; a < count; ++a)
        for (std::size_t b = a + 1; b < count; ++b) {
            bool touching = true;
            for (int d = 0; d < du && touching; ++d)
                touching = boxes[a].lo[d] <= boxes[b].hi[d] + tol &&
                           boxes[b].lo[d] <= boxes[a].hi[d] + tol;
            if (touching) {
                g.adj[a].push_back(static_cast<int>(b));
                g.adj[b].push_back(static_cast<int>(a));
            }
        }

    // connectivity via BFS
    if (count > 0) {
        std::vector<bool> seen(count, false);
        std::queue<int> q;
        q.push(0);
        seen[0] = true;
        std::size_t reached = 1;
        while (!q.empty()) {
            int cur = q.front();
            q.pop();
            for (int nb : g.adj[static_cast<std::size_t>(cur)])
                if (!seen[static_cast<std::size_t>(nb)]) {
                    seen[static_cast<std::size_t>(nb)] = true;
                    ++reached;
                    q.push(nb);
                }
        }
        g.connected = reached == count;
    }
    return g;
}

SelectionResult solve_greedy(const std::vector<Candidate>& candidates, const NeighborGraph& graph,
                             const pwl::RegionTree& tree, const Vec& start_u_scaled,
                             const ObjectiveFn& objective, Deadline deadline)
{
    if (candidates.empty()) throw std::invalid_argument("solve_greedy: no candidates");
    if (!graph.connected) {
        SelectionResult r = solve_exhaustive(candidates, objective, deadline);
        r.mode = Mode::greedy;
        r.greedy_fallback = true;
        return r;
    }

    const int n = tree.state_dim();
    const int du = tree.input_dim() * tree.horizon();
    const Box root_u = tree.root_box().slice(n, du);
    const Vec start = root_u.clamp(start_u_scaled);

    // half-open membership, root hi face inclusive
    auto contains = [&](const Box& b, const Vec& p) {
        for (int d = 0; d < du; ++d) {
            if (p[d] < b.lo[d]) return false;
            const bool at_root_hi = b.hi[d] >= root_u.hi[d];
            if (at_root_hi ? p[d] > b.hi[d] : p[d] >= b.hi[d]) return false;
        }
        return true;
    };

    int cur = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i)
        if (contains(tree.leaf(candidates[i].region_id).box.slice(n, du), start)) {
            cur = static_cast<int>(i);
            break;
        }

    SelectionResult r;
    r.mode = Mode::greedy;
    std::vector<double> memo(candidates.size(), std::numeric_limits<double>::quiet_NaN());
    auto eval = [&](int i) {
        if (std::isnan(memo[static_cast<std::size_t>(i)])) {
            memo[static_cast<std::size_t>(i)] = objective(candidates[static_cast<std::size_t>(i)]);
            ++r.evaluations;
            r.table.emplace_back(candidates[static_cast<std::size_t>(i)].region_id,
                                 memo[static_cast<std::size_t>(i)]);
        }
        return memo[static_cast<std::size_t>(i)];
    };

    double cur_j = eval(cur);
    while (true) {
        int best_nb = -1;
        double best_j = cur_j;
        for (int nb : graph.adj[static_cast<std::size_t>(cur)]) {
            if (expired(deadline)) {
                r.budget_hit = true;
                break;
            }
            const double j = eval(nb);
            if (j < best_j ||
                (j == best_j && best_nb >= 0 &&
                 candidates[static_cast<std::size_t>(nb)].region_id <
                     candidates[static_cast<std::size_t>(best_nb)].region_id)) {
                best_j = j;
                best_nb = nb;
            }
        }
        if (best_nb < 0 || best_j >= cur_j || r.budget_hit) break;
        cur = best_nb;
        cur_j = best_j;
    }

    r.index = cur;
    r.objective = cur_j;
    finalize(r, candidates);
    return r;
}

} // namespace icmpc::miqp
