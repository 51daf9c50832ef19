#include "icmpc/loop.hpp"

#include <cmath>
#include <cstdio>
#include <future>

namespace icmpc::sim {

void MpcConfig::validate() const
{
    if (np < 1) throw std::invalid_argument("MpcConfig: np must be >= 1");
    if ((m_diag.array() <= 0).any() || (n_diag.array() <= 0).any())
        throw std::invalid_argument("MpcConfig: weight diagonals must be positive");
    if (!(budget_s > 0)) throw std::invalid_argument("MpcConfig: budget must be positive");
    if (!(dt > 0)) throw std::invalid_argument("MpcConfig: dt must be positive");
    if (!u_box.valid()) throw std::invalid_argument("MpcConfig: invalid input box");
}

ExplicitController::ExplicitController(nn::SurrogateStack stack, pwl::RegionTree tree, MpcConfig cfg,
                                       std::string name)
    : stack_(std::move(stack)), tree_(std::move(tree)), cfg_(std::move(cfg)), name_(std::move(name))
{
    cfg_.validate();
    if (tree_.state_dim() != stack_.n || tree_.input_dim() != stack_.m || tree_.horizon() != stack_.np)
        throw std::invalid_argument("ExplicitController: tree and model stack disagree on dimensions");
    prev_u_scaled_ = Vec::Zero(stack_.m * stack_.np);

    // assemble every region program up front; only the state changes online
    const auto& leaves = tree_.leaves();
    qps_.resize(leaves.size());
    const auto assemble_range = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i)
            qps_[i] = qp::assemble_qp_scaled(leaves[i], stack_, cfg_.m_diag, cfg_.n_diag);
    };
    const int nw = std::max(1, cfg_.threads);
    if (nw > 1 && leaves.size() > 256) {
        std::vector<std::future<void>> futs;
        const std::size_t step = (leaves.size() + nw - 1) / nw;
        for (std::size_t lo = 0; lo < leaves.size(); lo += step)
            futs.push_back(std::async(std::launch::async, assemble_range, lo,
                                      std::min(lo + step, leaves.size())));
        for (auto& f : futs) f.get();
    } else {
        assemble_range(0, leaves.size());
    }
}

std::vector<qp::Candidate> ExplicitController::cached_candidates(const Vec& x_phys) const
{
    const Vec x_scaled =
        tree_.root_box().slice(0, tree_.state_dim()).clamp(stack_.scale_state(x_phys));
    const std::vector<int> ids = tree_.candidate_regions(x_scaled);

    std::vector<qp::Candidate> out(ids.size());
    auto solve_range = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            try {
                auto sol = qp::solve_box_qp(qps_[static_cast<std::size_t>(ids[i])], x_scaled);
                out[i].region_id = ids[i];
                out[i].u_scaled = sol.u;
                out[i].u_phys = stack_.unscale_input_seq(sol.u);
                out[i].affine_objective = sol.objective;
                out[i].iterations = sol.iterations;
                out[i].kkt_residual = sol.kkt_residual;
            } catch (const std::exception&) {
                out[i].region_id = -1; // skipped, never fatal while others remain
            }
        }
    };
    const int nw = std::max(1, cfg_.threads);
    if (nw > 1 && ids.size() > 64) {
        std::vector<std::future<void>> futs;
        const std::size_t step = (ids.size() + nw - 1) / nw;
        for (std::size_t lo = 0; lo < ids.size(); lo += step)
            futs.push_back(
                std::async(std::launch::async, solve_range, lo, std::min(lo + step, ids.size())));
        for (auto& f : futs) f.get();
    } else {
        solve_range(0, ids.size());
    }

    std::vector<qp::Candidate> kept;
    kept.reserve(out.size());
    for (auto& c : out)
        if (c.region_id >= 0) kept.push_back(std::move(c));
    if (kept.empty()) throw std::runtime_error("ExplicitController: every region solve failed");
    return kept;
}

StepDecision ExplicitController::decide(const Vec& x_phys, miqp::Deadline deadline)
{
    auto candidates = cached_candidates(x_phys);
    miqp::refine_candidates(stack_, tree_, x_phys, candidates, cfg_.m_diag, cfg_.n_diag);

    miqp::SelectionResult sel;
    if (cfg_.mode == miqp::Mode::greedy) {
        auto objective = miqp::stack_objective(stack_, x_phys, cfg_.m_diag, cfg_.n_diag);
        auto graph = miqp::build_neighbor_graph(candidates, tree_);
        sel = miqp::solve_greedy(candidates, graph, tree_, prev_u_scaled_, objective, deadline);
    } else {
        // batch the model evaluations, then reduce over the evaluated prefix
        auto batch = miqp::batch_stack_objectives(stack_, x_phys, candidates, cfg_.m_diag,
                                                  cfg_.n_diag, deadline);
        std::vector<qp::Candidate> prefix(candidates.begin(),
                                          candidates.begin() + batch.evaluated);
        std::size_t cursor = 0;
        auto lookup = [&](const qp::Candidate&) { return batch.values[cursor++]; };
        sel = miqp::solve_exhaustive(prefix, lookup);
        sel.budget_hit = sel.budget_hit || batch.budget_hit;
        sel.evaluations = batch.evaluated;
    }
    prev_u_scaled_ = sel.u_scaled;

    if (!dump_dir_.empty()) {
        const std::string path =
            dump_dir_ + "/selection_step" + std::to_string(decide_calls_) + ".csv";
        std::FILE* f = std::fopen(path.c_str(), "w");
        if (f) {
            std::fprintf(f, "region_id,objective\n");
            for (const auto& [id, j] : sel.table) std::fprintf(f, "%d,%.17g\n", id, j);
            std::fclose(f);
        }
    }
    ++decide_calls_;

    StepDecision d;
    d.u_phys = sel.u_phys.head(stack_.m);
    d.objective = sel.objective;
    d.region_id = sel.region_id;
    d.n_candidates = static_cast<int>(candidates.size());
    d.evaluations = sel.evaluations;
    d.budget_exceeded = sel.budget_hit;
    return d;
}

TrajectoryLog run_closed_loop(const plant::PlantSim& plant, Controller& controller, const Vec& x0,
                              const MpcConfig& cfg)
{
    cfg.validate();
    const Vec scale = controller.state_scale();
    if ((x0.cwiseQuotient(scale).cwiseAbs().array() > 1.0).any())
        throw std::invalid_argument("run_closed_loop: x0 outside the modeling box");

    TrajectoryLog log;
    log.dt = cfg.dt;
    log.iae_per_state = Vec::Zero(x0.size());
    Vec x = x0;
    for (int step = 0; step < cfg.steps; ++step) {
        const Vec x_scaled = x.cwiseQuotient(scale);
        if (x_scaled.cwiseAbs().maxCoeff() > cfg.halt_factor) {
            log.halted = true;
            break;
        }

        const auto t_start = miqp::Clock::now();
        miqp::Deadline deadline =
            cfg.budget_s > 0
                ? miqp::Deadline(t_start + std::chrono::duration_cast<miqp::Clock::duration>(
                                               std::chrono::duration<double>(cfg.budget_s)))
                : miqp::Deadline{};
        StepDecision d = controller.decide(x, deadline);
        const double wall =
            std::chrono::duration<double>(miqp::Clock::now() - t_start).count();

        Vec u = cfg.u_box.clamp(d.u_phys);
        if ((u - d.u_phys).cwiseAbs().maxCoeff() > 1e-12) ++log.input_bound_violations;

        LogRow row;
        row.step = step;
        row.t = step * cfg.dt;
        row.x = x;
        row.u = u;
        row.objective = d.objective;
        row.region_id = d.region_id;
        row.n_candidates = d.n_candidates;
        row.evaluations = d.evaluations;
        row.solve_wall_s = wall;
        row.budget_exceeded = d.budget_exceeded;
        log.rows.push_back(row);

        x = plant.advance(x, u, cfg.dt);
    }
    log.final_state = x;

    // convergence bookkeeping in scaled units, including the terminal state
    std::vector<double> norms;
    for (const auto& row : log.rows) norms.push_back(row.x.cwiseQuotient(scale).cwiseAbs().maxCoeff());
    norms.push_back(x.cwiseQuotient(scale).cwiseAbs().maxCoeff());
    for (int i = static_cast<int>(norms.size()) - 1; i >= 0; --i) {
        if (norms[static_cast<std::size_t>(i)] < cfg.conv_band)
            log.steps_to_band = i;
        else
            break;
    }
    log.converged = !log.halted && log.steps_to_band >= 0;

    // per-state IAE over the logged samples plus the terminal state
    if (!log.rows.empty()) {
        std::vector<double> times;
        for (const auto& row : log.rows) times.push_back(row.t);
        times.push_back(log.rows.back().t + cfg.dt);
        for (Eigen::Index c = 0; c < x0.size(); ++c) {
            std::vector<double> vals;
            for (const auto& row : log.rows) vals.push_back(row.x[c]);
            vals.push_back(x[c]);
            log.iae_per_state[c] = iae(times, vals, 0.0);
        }
        log.iae_total = log.iae_per_state.sum();
    }
    return log;
}

double iae(const std::vector<double>& t, const std::vector<double>& value, double setpoint)
{
    if (t.size() != value.size()) throw std::invalid_argument("iae: size mismatch");
    if (t.size() < 2) throw std::invalid_argument("iae: need at least two samples");
    double acc = 0;
    for (std::size_t i = 0; i + 1 < t.size(); ++i) {
        const double e0 = std::abs(value[i] - setpoint);
        const double e1 = std::abs(value[i + 1] - setpoint);
        acc += 0.5 * (e0 + e1) * (t[i + 1] - t[i]);
    }
    return acc;
}

double settling_time(const std::vector<double>& t, const std::vector<double>& value, double setpoint,
                     double band_fraction, double band_scale)
{
    if (t.size() != value.size()) throw std::invalid_argument("settling_time: size mismatch");
    if (!(band_fraction > 0)) throw std::invalid_argument("settling_time: band_fraction must be > 0");
    const double scale = band_scale > 0 ? band_scale : std::abs(setpoint);
    if (!(scale > 0))
        throw std::invalid_argument("settling_time: zero setpoint needs an explicit band_scale");
    const double band = band_fraction * scale;

    // earliest sample from which every later sample stays inside the band
    std::size_t settle = t.size();
    for (std::size_t i = t.size(); i-- > 0;) {
        if (std::abs(value[i] - setpoint) <= band)
            settle = i;
        else
            break;
    }
    return settle == t.size() ? kNotSettled : t[settle];
}

namespace {

std::string vec_csv(const Vec& v)
{
    std::string s;
    char buf[64];
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", v[i]);
        s += buf;
        if (i + 1 < v.size()) s += ",";
    }
    return s;
}

} // namespace

void TrajectoryLog::write_csv(const std::string& path) const
{
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("TrajectoryLog::write_csv: cannot open " + path);
    const int n = rows.empty() ? 0 : static_cast<int>(rows.front().x.size());
    const int m = rows.empty() ? 0 : static_cast<int>(rows.front().u.size());
    std::fprintf(f, "step,t");
    for (int i = 0; i < n; ++i) std::fprintf(f, ",x%d", i + 1);
    for (int i = 0; i < m; ++i) std::fprintf(f, ",u%d", i + 1);
    std::fprintf(f, ",objective,region_id,n_candidates,evaluations,solve_wall_s,budget_exceeded\n");
    for (const auto& r : rows)
        std::fprintf(f, "%d,%.17g,%s,%s,%.17g,%d,%d,%d,%.6g,%d\n", r.step, r.t, vec_csv(r.x).c_str(),
                     vec_csv(r.u).c_str(), r.objective, r.region_id, r.n_candidates, r.evaluations,
                     r.solve_wall_s, r.budget_exceeded ? 1 : 0);
    std::fclose(f);
}

double TrajectoryLog::settling_time_value() const
{
    return steps_to_band < 0 ? kNotSettled : steps_to_band * dt;
}

void TrajectoryLog::write_summary_csv(const std::string& path) const
{
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("TrajectoryLog::write_summary_csv: cannot open " + path);
    std::fprintf(f, "steps,halted,converged,steps_to_band,settling_time,iae_total");
    for (Eigen::Index i = 0; i < iae_per_state.size(); ++i) std::fprintf(f, ",iae_x%ld", i + 1);
    std::fprintf(f, ",input_bound_violations\n");
    std::fprintf(f, "%d,%d,%d,%d,%.17g,%.17g", static_cast<int>(rows.size()), halted ? 1 : 0,
                 converged ? 1 : 0, steps_to_band, settling_time_value(), iae_total);
    for (Eigen::Index i = 0; i < iae_per_state.size(); ++i)
        std::fprintf(f, ",%.17g", iae_per_state[i]);
    std::fprintf(f, ",%d\n", input_bound_violations);
    std::fclose(f);
}

std::vector<CompareRow> compare_controllers(const plant::PlantSim& plant,
                                            const std::vector<Controller*>& stacks,
                                            const std::vector<Vec>& initial_states,
                                            const MpcConfig& cfg)
{
    if (stacks.empty()) throw std::invalid_argument("compare_controllers: no controllers");
    std::vector<CompareRow> rows;
    for (Controller* c : stacks)
        for (const Vec& x0 : initial_states) {
            TrajectoryLog log = run_closed_loop(plant, *c, x0, cfg);
            CompareRow row;
            row.controller = c->name();
            row.x0 = x0;
            row.converged = log.converged;
            row.halted = log.halted;
            row.steps_to_band = log.steps_to_band;
            row.iae_total = log.iae_total;
            row.budget_violations = 0;
            for (const auto& r : log.rows) {
                row.max_solve_s = std::max(row.max_solve_s, r.solve_wall_s);
                if (r.budget_exceeded) ++row.budget_violations;
            }
            rows.push_back(std::move(row));
        }
    return rows;
}

void write_compare_csv(const std::vector<CompareRow>& rows, const std::string& path)
{
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("write_compare_csv: cannot open " + path);
    std::fprintf(f, "controller,x0,converged,halted,steps_to_band,iae_total,max_solve_s,budget_violations\n");
    for (const auto& r : rows)
        std::fprintf(f, "%s,\"%s\",%d,%d,%d,%.17g,%.6g,%d\n", r.controller.c_str(),
                     vec_csv(r.x0).c_str(), r.converged ? 1 : 0, r.halted ? 1 : 0, r.steps_to_band,
                     r.iae_total, r.max_solve_s, r.budget_violations);
    std::fclose(f);
}

} // namespace icmpc::sim
