#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridprompt/grid_model.hpp"

namespace gridprompt {

struct PfOptions {
    double tolerance_pu = 1e-8;  // infinity norm of the power mismatch
    int max_iterations = 50;
};

struct PfSolution {
    std::vector<double> vm_pu;
    std::vector<double> va_deg;   // slack bus at 0
    std::vector<double> p_mw;     // per generator, slack included
    std::vector<double> q_mvar;   // per generator
    bool converged = false;
    int iterations = 0;
    double max_mismatch_pu = 0.0;
};

/// Newton-Raphson solver with the bus classification and admittance matrix of
/// one grid precomputed. Injections and voltage setpoints can be varied per
/// call, which is what the OPF needs.
class PowerFlowModel {
public:
    explicit PowerFlowModel(const GridCase& grid);

    /// `gen_p_mw` gives every generator's dispatch (the slack entry is ignored);
    /// `bus_vm_setpoint` gives |V| for PV and slack buses (other entries ignored).
    PfSolution solve(const std::vector<double>& gen_p_mw, const std::vector<double>& bus_vm_setpoint,
                     const PfOptions& opts) const;

    /// Solve with the dispatch and setpoints stored in the grid.
    PfSolution solve(const PfOptions& opts) const;

    const GridCase& grid() const { return grid_; }
    const ComplexMatrix& admittance() const { return ybus_; }
    std::vector<double> default_setpoints() const;

private:
    GridCase grid_;
    ComplexMatrix ybus_;
    int slack_bus_ = 0;
    std::vector<int> pv_;
    std::vector<int> pq_;
    std::vector<int> gens_at_bus_;
    std::vector<double> pd_pu_;
    std::vector<double> qd_pu_;
};

PfSolution solve_pf(const GridCase& grid, const PfOptions& opts = {});

/// Complex power S_ij (MVA, per unit on base) entering a line at both ends.
struct LineFlow {
    std::complex<double> from;
    std::complex<double> to;
};
std::vector<LineFlow> line_flows(const GridCase& grid, const std::vector<double>& vm_pu,
                                 const std::vector<double>& va_deg);

// ---------------------------------------------------------------------------

struct GenOutput {
    int id = 0;
    double p_mw = 0.0;
    double q_mvar = 0.0;
};

struct BusOutput {
    int id = 0;
    double vm_pu = 0.0;
    double va_deg = 0.0;
};

struct OpfSolution {
    std::vector<GenOutput> gen;  // non-slack generators
    GenOutput slack;
    std::vector<BusOutput> bus;
    double objective_cost = 0.0;  // $/h
    bool feasible = false;
    double max_violation_pu = 0.0;
    int outer_iterations = 0;
    std::string diagnostics;
};

struct OpfOptions {
    PfOptions inner_pf{1e-11, 30};
    double optimality_tol = 1e-4;   // relative cost
    double voltage_tol_pu = 1e-4;
    double power_tol_mw = 1e-2;     // also MVAr and MVA
    double penalty_initial = 100.0;
    double penalty_growth = 10.0;
    int max_outer = 20;
    int max_inner = 300;
    double fd_step = 1e-6;
};

/// Sum of quadratic generator costs at the given dispatch ($/h).
double generation_cost(const GridCase& grid, const std::vector<double>& gen_p_mw);

/// Worst limit violations of an operating point, in natural units.
struct ConstraintReport {
    double voltage_pu = 0.0;
    double gen_p_mw = 0.0;
    double gen_q_mvar = 0.0;
    double line_mva = 0.0;
    bool within(const OpfOptions& opts) const;
    std::string describe() const;
};
ConstraintReport check_limits(const GridCase& grid, const PfSolution& pf);

/// Packs a power-flow result into the Y_g / Y_s / Y_b form. `feasible` is set
/// when the flow converged and all limits hold.
OpfSolution solution_from_pf(const GridCase& grid, const PfSolution& pf,
                             const OpfOptions& opts = {});

/// Minimizes total generation cost under AC power-flow physics, generator P/Q
/// limits, bus voltage bounds and line MVA ratings.
///
/// Reduced-space augmented Lagrangian: the controls are the non-slack active
/// dispatch and the voltage magnitude of every generator bus; each evaluation
/// runs a Newton-Raphson flow. Box limits on the controls are handled by
/// projection, everything else by the multiplier terms. Gradients are central
/// finite differences. Throws ConfigError when the grid carries no cost data.
OpfSolution solve_opf(const GridCase& grid, const OpfOptions& opts = {});

}  // namespace gridprompt
