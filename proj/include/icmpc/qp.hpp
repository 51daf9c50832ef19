#pragma once

#include "icmpc/region.hpp"
#include "icmpc/surrogate.hpp"

namespace icmpc::qp {

using pwl::Region;

/// Quadratic program of one region:
///   J(U; x) = U' m1 U + x' m2 x + x' m3 U + m4 U + m5 x + m6
/// minimized over the region's input box with x as a parameter. m1 is
/// symmetric positive definite whenever the input weights are positive.
struct RegionQp {
    Mat m1;      // (m*np) x (m*np)
    Mat m2;      // n x n
    Mat m3;      // n x (m*np)
    RowVec m4;   // 1 x (m*np)
    RowVec m5;   // 1 x n
    double m6 = 0;
    Box u_box;   // decision-variable bounds
    Box x_box;   // applicability slab for the parameter
    int n = 0, m = 0, np = 0;

    Vec gradient(const Vec& u, const Vec& x) const;
    double value(const Vec& u, const Vec& x) const;
};

/// Extracts the diagonal of a weight matrix, rejecting non-diagonal or
/// non-positive input.
Vec require_positive_diagonal(const Mat& w, const std::string& what);

/// Exact block assembly from the region's affine pieces, with the pieces
/// and weights taken as given (no unit conversion).
RegionQp assemble_qp(const Region& region, const Vec& m_diag, const Vec& n_diag);
RegionQp assemble_qp(const Region& region, const Mat& m_weight, const Mat& n_weight);

/// Assembly in scaled decision variables with a physical-unit objective:
/// output scales fold into the affine pieces and the input weight picks up
/// the squared input scale.
RegionQp assemble_qp_scaled(const Region& region, const nn::SurrogateStack& stack,
                            const Vec& m_diag_phys, const Vec& n_diag_phys);

struct QpSolution {
    Vec u;               // minimizer in the QP's own (scaled) units
    double objective = 0;
    int iterations = 0;
    double kkt_residual = 0;
};

/// Global minimum of the convex box QP: accelerated projected gradient with
/// an active-set enumeration fallback for small dimensions.
QpSolution solve_box_qp(const RegionQp& qp, const Vec& x);

/// One candidate control sequence per region whose state-slab contains x.
struct Candidate {
    int region_id = -1;
    Vec u_scaled;
    Vec u_phys;
    double affine_objective = 0; // diagnostics only; selection re-evaluates on the true models
    int iterations = 0;
    double kkt_residual = 0;
};

std::vector<Candidate> candidates_for_state(const pwl::RegionTree& tree,
                                            const nn::SurrogateStack& stack, const Vec& m_diag,
                                            const Vec& n_diag, const Vec& x_phys, int threads = 1);

} // namespace icmpc::qp
