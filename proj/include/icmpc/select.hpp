#pragma once

#include "icmpc/qp.hpp"

#include <chrono>
#include <functional>
#include <optional>

namespace icmpc::miqp {

using qp::Candidate;
using Clock = std::chrono::steady_clock;
using Deadline = std::optional<Clock::time_point>;

enum class Mode { exhaustive, greedy };

struct SelectionResult {
    int index = -1;        // position in the candidate list
    int region_id = -1;
    Vec u_phys;
    Vec u_scaled;
    double objective = 0;
    Mode mode = Mode::exhaustive;
    int evaluations = 0;
    bool budget_hit = false;
    bool greedy_fallback = false;            // greedy hit a disconnected graph
    std::vector<std::pair<int, double>> table; // (region id, J) for evaluated candidates
};

/// Objective evaluated for one candidate; injectable so tests can model
/// slow evaluations.
using ObjectiveFn = std::function<double(const Candidate&)>;

/// Production objective: re-evaluate the candidate sequence on the original
/// models in physical units.
ObjectiveFn stack_objective(const nn::SurrogateStack& stack, const Vec& x_phys, const Vec& m_diag,
                            const Vec& n_diag);

struct BatchObjectives {
    std::vector<double> values; // one per candidate; NaN past the cutoff
    int evaluated = 0;
    bool budget_hit = false;
};

/// Descends each candidate sequence on the original convex models inside
/// its own region box (monotone projected gradient with per-row adaptive
/// steps, warm-started at the QP solution). The refined candidates are the
/// per-box minimizers of one convex function over a box tiling, which makes
/// hill descent over facet neighbors land on the global winner — the
/// property the selection layer relies on. Deterministic, fixed iteration
/// budget, batched across candidates.
void refine_candidates(const nn::SurrogateStack& stack, const pwl::RegionTree& tree,
                       const Vec& x_phys, std::vector<Candidate>& candidates, const Vec& m_diag,
                       const Vec& n_diag, int iterations = 64);

/// Chunked batch evaluation of the production objective over all candidates
/// (one forward pass per horizon model per chunk). Honors the deadline
/// between chunks, leaving a best-so-far prefix evaluated.
BatchObjectives batch_stack_objectives(const nn::SurrogateStack& stack, const Vec& x_phys,
                                       const std::vector<Candidate>& candidates, const Vec& m_diag,
                                       const Vec& n_diag, Deadline deadline = {}, int chunk = 1024);

/// Evaluates every candidate and returns the argmin; ties break toward the
/// lowest region id. With exactly one indicator active per candidate this
/// enumeration is the binary selection problem solved literally. If the
/// deadline expires mid-scan the best-so-far is returned with budget_hit.
SelectionResult solve_exhaustive(const std::vector<Candidate>& candidates, const ObjectiveFn& objective,
                                 Deadline deadline = {});

/// Adjacency of the candidates' input boxes: two candidates are neighbors
/// when their closed boxes touch (facet, edge or corner contact). The
/// candidates of one state slab tile the input space, so the graph is
/// connected for a well-formed tree.
struct NeighborGraph {
    std::vector<std::vector<int>> adj; // by candidate index
    bool connected = false;
};

NeighborGraph build_neighbor_graph(const std::vector<Candidate>& candidates,
                                   const pwl::RegionTree& tree);

/// Hill descent over adjacent candidates starting from the candidate whose
/// box contains `start_u_scaled` (the previously applied sequence; the
/// origin on the first step). With refined candidates (per-box minima of
/// the convex objective) a local minimum over touching neighbors is the
/// global one. Falls back to exhaustive when the graph is disconnected.
SelectionResult solve_greedy(const std::vector<Candidate>& candidates, const NeighborGraph& graph,
                             const pwl::RegionTree& tree, const Vec& start_u_scaled,
                             const ObjectiveFn& objective, Deadline deadline = {});

} // namespace icmpc::miqp
