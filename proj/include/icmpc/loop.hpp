#pragma once

#include "icmpc/plant.hpp"
#include "icmpc/select.hpp"

#include <memory>
#include <string>

namespace icmpc::sim {

struct MpcConfig {
    int np = 2;
    Vec m_diag;          // state weight diagonal, physical units
    Vec n_diag;          // input weight diagonal, physical units
    Box u_box;           // physical input bounds
    double dt = 0.01;    // sampling period, hr
    double budget_s = 1.0; // wall-clock compute budget per step
    int steps = 20;
    miqp::Mode mode = miqp::Mode::exhaustive;
    double conv_band = 0.1;    // scaled infinity-norm convergence band
    double halt_factor = 1.5;  // run halts when the state exits halt_factor * modeling box
    int threads = 1;

    void validate() const;
};

struct StepDecision {
    Vec u_phys;          // first input of the winning sequence, length m
    double objective = 0;
    int region_id = -1;
    int n_candidates = 0;
    int evaluations = 0;
    bool budget_exceeded = false;
};

/// Anything that can produce a control move from a measured state.
class Controller {
public:
    virtual ~Controller() = default;
    virtual StepDecision decide(const Vec& x_phys, miqp::Deadline deadline) = 0;
    virtual std::string name() const = 0;
    /// Scaled modeling box of the state space (used for halting/convergence).
    virtual Vec state_scale() const = 0;
};

/// The explicit controller: region lookup, per-region QP candidates, then
/// selection on the original models.
class ExplicitController : public Controller {
public:
    ExplicitController(nn::SurrogateStack stack, pwl::RegionTree tree, MpcConfig cfg,
                       std::string name = "explicit");

    StepDecision decide(const Vec& x_phys, miqp::Deadline deadline) override;
    std::string name() const override { return name_; }
    Vec state_scale() const override { return stack_.state_scale(); }

    const nn::SurrogateStack& stack() const { return stack_; }
    const pwl::RegionTree& tree() const { return tree_; }
    const MpcConfig& config() const { return cfg_; }

    /// When set, every decide() call dumps its candidate table (region id,
    /// objective) to <dir>/selection_step<N>.csv.
    void dump_selection_to(std::string dir) { dump_dir_ = std::move(dir); }

private:
    nn::SurrogateStack stack_;
    pwl::RegionTree tree_;
    MpcConfig cfg_;
    std::string name_;
    Vec prev_u_scaled_;             // greedy start: sequence applied at the previous step
    std::vector<qp::RegionQp> qps_; // assembled once per region; only x changes online
    std::string dump_dir_;
    int decide_calls_ = 0;

    std::vector<qp::Candidate> cached_candidates(const Vec& x_phys) const;
};

/// Open-loop baseline: u = 0 at every step.
class ZeroController : public Controller {
public:
    ZeroController(int input_dim, Vec state_scale)
        : m_(input_dim), state_scale_(std::move(state_scale))
    {
    }
    StepDecision decide(const Vec&, miqp::Deadline) override
    {
        StepDecision d;
        d.u_phys = Vec::Zero(m_);
        return d;
    }
    std::string name() const override { return "open-loop"; }
    Vec state_scale() const override { return state_scale_; }

private:
    int m_;
    Vec state_scale_;
};

struct LogRow {
    int step = 0;
    double t = 0;
    Vec x;      // physical units, measured before the move
    Vec u;      // applied input
    double objective = 0;
    int region_id = -1;
    int n_candidates = 0;
    int evaluations = 0;
    double solve_wall_s = 0;
    bool budget_exceeded = false;
};

struct TrajectoryLog {
    std::vector<LogRow> rows;
    Vec final_state;
    double dt = 0;
    bool halted = false;
    bool converged = false;     // scaled infinity-norm inside conv_band at the end
    int steps_to_band = -1;     // first step index from which the state stays in band
    double iae_total = 0;       // sum of per-state IAE values
    Vec iae_per_state;
    int input_bound_violations = 0;

    /// Settling time in simulated time units; kNotSettled when the state
    /// never stays inside the band.
    double settling_time_value() const;

    void write_csv(const std::string& path) const;
    void write_summary_csv(const std::string& path) const;
};

/// Sample-and-hold closed loop: measure, decide, clamp to bounds, advance,
/// log. Halts (partial log, halted flag) if the state leaves
/// halt_factor * modeling box.
TrajectoryLog run_closed_loop(const plant::PlantSim& plant, Controller& controller, const Vec& x0,
                              const MpcConfig& cfg);

/// Trapezoidal integral of |value - setpoint| over the time series.
double iae(const std::vector<double>& t, const std::vector<double>& value, double setpoint);

constexpr double kNotSettled = -1.0;

/// Earliest time after which every sample stays inside the band
/// band_fraction * band_scale around the setpoint; band_scale defaults to
/// |setpoint| and must be given explicitly for a zero setpoint.
double settling_time(const std::vector<double>& t, const std::vector<double>& value, double setpoint,
                     double band_fraction, double band_scale = 0.0);

struct CompareRow {
    std::string controller;
    Vec x0;
    bool converged = false;
    bool halted = false;
    int steps_to_band = -1;
    double iae_total = 0;
    double max_solve_s = 0;
    int budget_violations = 0;
};

std::vector<CompareRow> compare_controllers(const plant::PlantSim& plant,
                                            const std::vector<Controller*>& stacks,
                                            const std::vector<Vec>& initial_states,
                                            const MpcConfig& cfg);

void write_compare_csv(const std::vector<CompareRow>& rows, const std::string& path);

} // namespace icmpc::sim
