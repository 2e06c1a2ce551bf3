#include <cmath>
#include <numbers>
#include <sstream>

#include "gridprompt/errors.hpp"
#include "gridprompt/solvers.hpp"

namespace gridprompt {

namespace {

using cd = std::complex<double>;
constexpr double kDegPerRad = 180.0 / std::numbers::pi;

// Splits a bus's total reactive output across its generators in proportion to
// their Q ranges, so per-unit limits hold exactly when the bus total does.
void split_reactive(const GridCase& grid, int bus, double q_total, std::vector<double>& q_out) {
    double q_min = 0.0, range = 0.0;
    int count = 0;
    for (const Generator& g : grid.generators) {
        if (g.bus != bus) continue;
        q_min += g.q_min_mvar;
        range += g.q_max_mvar - g.q_min_mvar;
        ++count;
    }
    for (const Generator& g : grid.generators) {
        if (g.bus != bus) continue;
        if (range > 0.0 && std::isfinite(range)) {
            q_out[g.id] = g.q_min_mvar + (q_total - q_min) * (g.q_max_mvar - g.q_min_mvar) / range;
        } else {
            q_out[g.id] = q_total / count;
        }
    }
}

}  // namespace

PowerFlowModel::PowerFlowModel(const GridCase& grid) : grid_(grid) {
    validate(grid_);
    ybus_ = admittance_matrix(grid_);
    slack_bus_ = grid_.slack_bus();
    for (const Bus& b : grid_.buses) {
        if (b.kind == BusKind::pv) pv_.push_back(b.id);
        if (b.kind == BusKind::pq) pq_.push_back(b.id);
    }
    gens_at_bus_.assign(grid_.buses.size(), 0);
    for (const Generator& g : grid_.generators) ++gens_at_bus_[g.bus];
    pd_pu_.assign(grid_.buses.size(), 0.0);
    qd_pu_.assign(grid_.buses.size(), 0.0);
    for (const Load& l : grid_.loads) {
        pd_pu_[l.bus] += l.p_mw / grid_.base_mva;
        qd_pu_[l.bus] += l.q_mvar / grid_.base_mva;
    }
}

std::vector<double> PowerFlowModel::default_setpoints() const {
    std::vector<double> vset(grid_.buses.size(), 1.0);
    for (auto it = grid_.generators.rbegin(); it != grid_.generators.rend(); ++it) {
        vset[it->bus] = it->vm_setpoint_pu;
    }
    return vset;
}

PfSolution PowerFlowModel::solve(const PfOptions& opts) const {
    std::vector<double> p(grid_.generators.size());
    for (const Generator& g : grid_.generators) p[g.id] = g.p_mw;
    return solve(p, default_setpoints(), opts);
}

PfSolution PowerFlowModel::solve(const std::vector<double>& gen_p_mw,
                                 const std::vector<double>& bus_vm_setpoint,
                                 const PfOptions& opts) const {
    const auto n = static_cast<Eigen::Index>(grid_.buses.size());
    const double base = grid_.base_mva;

    std::vector<double> p_spec(n, 0.0);
    for (const Generator& g : grid_.generators) {
        if (!g.is_slack) p_spec[g.bus] += gen_p_mw[g.id] / base;
    }
    for (Eigen::Index i = 0; i < n; ++i) p_spec[i] -= pd_pu_[i];

    Eigen::VectorXd vm = Eigen::VectorXd::Ones(n);
    Eigen::VectorXd va = Eigen::VectorXd::Zero(n);
    vm[slack_bus_] = bus_vm_setpoint[slack_bus_];
    for (int b : pv_) vm[b] = bus_vm_setpoint[b];

    // Unknown ordering: angles of [pv, pq], then magnitudes of pq.
    std::vector<int> pvpq = pv_;
    pvpq.insert(pvpq.end(), pq_.begin(), pq_.end());
    const auto n_ang = static_cast<Eigen::Index>(pvpq.size());
    const auto n_mag = static_cast<Eigen::Index>(pq_.size());
    const Eigen::Index dim = n_ang + n_mag;

    Eigen::VectorXcd v(n), current(n), power(n);
    Eigen::VectorXd mismatch(dim);
    Eigen::MatrixXd jac(dim, dim);

    auto refresh = [&] {
        for (Eigen::Index i = 0; i < n; ++i) v[i] = std::polar(vm[i], va[i]);
        current = ybus_ * v;
        for (Eigen::Index i = 0; i < n; ++i) power[i] = v[i] * std::conj(current[i]);
        for (Eigen::Index k = 0; k < n_ang; ++k) mismatch[k] = power[pvpq[k]].real() - p_spec[pvpq[k]];
        for (Eigen::Index k = 0; k < n_mag; ++k) mismatch[n_ang + k] = power[pq_[k]].imag() + qd_pu_[pq_[k]];
        return dim == 0 ? 0.0 : mismatch.cwiseAbs().maxCoeff();
    };

    PfSolution sol;
    double norm = refresh();
    while (true) {
        if (!std::isfinite(norm)) break;
        if (norm <= opts.tolerance_pu) {
            sol.converged = true;
            break;
        }
        if (sol.iterations >= opts.max_iterations) break;

        // dS/dVa(i,k) = j V_i conj(d_ik I_i - Y_ik V_k)
        // dS/dVm(i,k) = V_i conj(Y_ik Vn_k) + d_ik conj(I_i) Vn_i
        auto ds_dva = [&](int i, int k) {
            cd t = -ybus_(i, k) * v[k];
            if (i == k) t += current[i];
            return cd(0.0, 1.0) * v[i] * std::conj(t);
        };
        auto ds_dvm = [&](int i, int k) {
            const cd vn_k = v[k] / vm[k];
            cd t = v[i] * std::conj(ybus_(i, k) * vn_k);
            if (i == k) t += std::conj(current[i]) * vn_k;
            return t;
        };
        for (Eigen::Index r = 0; r < n_ang; ++r) {
            for (Eigen::Index c = 0; c < n_ang; ++c) jac(r, c) = ds_dva(pvpq[r], pvpq[c]).real();
            for (Eigen::Index c = 0; c < n_mag; ++c) jac(r, n_ang + c) = ds_dvm(pvpq[r], pq_[c]).real();
        }
        for (Eigen::Index r = 0; r < n_mag; ++r) {
            for (Eigen::Index c = 0; c < n_ang; ++c) jac(n_ang + r, c) = ds_dva(pq_[r], pvpq[c]).imag();
            for (Eigen::Index c = 0; c < n_mag; ++c) {
                jac(n_ang + r, n_ang + c) = ds_dvm(pq_[r], pq_[c]).imag();
            }
        }

        Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
        const auto pivots = lu.matrixLU().diagonal().cwiseAbs();
        if (!(pivots.minCoeff() > 1e-13 * std::max(1.0, pivots.maxCoeff()))) {
            throw SolverError("singular power-flow Jacobian at iteration " +
                              std::to_string(sol.iterations));
        }
        const Eigen::VectorXd step = lu.solve(-mismatch);
        for (Eigen::Index k = 0; k < n_ang; ++k) va[pvpq[k]] += step[k];
        for (Eigen::Index k = 0; k < n_mag; ++k) vm[pq_[k]] += step[n_ang + k];
        ++sol.iterations;
        norm = refresh();
    }
    sol.max_mismatch_pu = norm;

    sol.vm_pu.assign(vm.data(), vm.data() + n);
    sol.va_deg.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) sol.va_deg[i] = (va[i] - va[slack_bus_]) * kDegPerRad;

    sol.p_mw = gen_p_mw;
    sol.q_mvar.assign(grid_.generators.size(), 0.0);
    const Generator& slack = grid_.slack_generator();
    double slack_p = power[slack_bus_].real() * base + pd_pu_[slack_bus_] * base;
    for (const Generator& g : grid_.generators) {
        if (g.bus == slack_bus_ && !g.is_slack) slack_p -= gen_p_mw[g.id];
    }
    sol.p_mw[slack.id] = slack_p;
    for (Eigen::Index b = 0; b < n; ++b) {
        if (gens_at_bus_[b] == 0) continue;
        split_reactive(grid_, static_cast<int>(b), power[b].imag() * base + qd_pu_[b] * base, sol.q_mvar);
    }
    return sol;
}

PfSolution solve_pf(const GridCase& grid, const PfOptions& opts) {
    return PowerFlowModel(grid).solve(opts);
}

std::vector<LineFlow> line_flows(const GridCase& grid, const std::vector<double>& vm_pu,
                                 const std::vector<double>& va_deg) {
    std::vector<LineFlow> flows;
    flows.reserve(grid.lines.size());
    for (const Line& l : grid.lines) {
        const cd vf = std::polar(vm_pu[l.from_bus], va_deg[l.from_bus] / kDegPerRad);
        const cd vt = std::polar(vm_pu[l.to_bus], va_deg[l.to_bus] / kDegPerRad);
        const cd series = 1.0 / cd(l.r_pu, l.x_pu);
        const cd half_shunt(0.0, l.b_pu / 2.0);
        const double tap = l.tap_ratio;
        const cd i_from = (series + half_shunt) / (tap * tap) * vf - series / tap * vt;
        const cd i_to = -series / tap * vf + (series + half_shunt) * vt;
        flows.push_back({vf * std::conj(i_from), vt * std::conj(i_to)});
    }
    return flows;
}

// ---------------------------------------------------------------------------

double generation_cost(const GridCase& grid, const std::vector<double>& gen_p_mw) {
    double total = 0.0;
    for (const Generator& g : grid.generators) total += g.cost(gen_p_mw[g.id]);
    return total;
}

bool ConstraintReport::within(const OpfOptions& opts) const {
    return voltage_pu <= opts.voltage_tol_pu && gen_p_mw <= opts.power_tol_mw &&
           gen_q_mvar <= opts.power_tol_mw && line_mva <= opts.power_tol_mw;
}

std::string ConstraintReport::describe() const {
    std::ostringstream out;
    out << "max violations: voltage " << voltage_pu << " pu, gen P " << gen_p_mw << " MW, gen Q "
        << gen_q_mvar << " MVAr, line " << line_mva << " MVA";
    return out.str();
}

ConstraintReport check_limits(const GridCase& grid, const PfSolution& pf) {
    ConstraintReport r;
    for (const Bus& b : grid.buses) {
        const double vm = pf.vm_pu[b.id];
        r.voltage_pu = std::max({r.voltage_pu, b.vm_min - vm, vm - b.vm_max});
    }
    for (const Generator& g : grid.generators) {
        r.gen_p_mw = std::max({r.gen_p_mw, g.p_min_mw - pf.p_mw[g.id], pf.p_mw[g.id] - g.p_max_mw});
        r.gen_q_mvar =
            std::max({r.gen_q_mvar, g.q_min_mvar - pf.q_mvar[g.id], pf.q_mvar[g.id] - g.q_max_mvar});
    }
    const auto flows = line_flows(grid, pf.vm_pu, pf.va_deg);
    for (const Line& l : grid.lines) {
        if (l.rate_mva <= 0.0) continue;
        const double worst = std::max(std::abs(flows[l.id].from), std::abs(flows[l.id].to)) * grid.base_mva;
        r.line_mva = std::max(r.line_mva, worst - l.rate_mva);
    }
    return r;
}

OpfSolution solution_from_pf(const GridCase& grid, const PfSolution& pf, const OpfOptions& opts) {
    OpfSolution sol;
    for (const Generator& g : grid.generators) {
        const GenOutput out{g.id, pf.p_mw[g.id], pf.q_mvar[g.id]};
        if (g.is_slack) sol.slack = out;
        else sol.gen.push_back(out);
    }
    for (const Bus& b : grid.buses) sol.bus.push_back({b.id, pf.vm_pu[b.id], pf.va_deg[b.id]});
    sol.objective_cost = generation_cost(grid, pf.p_mw);
    const ConstraintReport limits = check_limits(grid, pf);
    sol.feasible = pf.converged && limits.within(opts);
    sol.max_violation_pu =
        std::max({limits.voltage_pu, limits.gen_p_mw / grid.base_mva, limits.gen_q_mvar / grid.base_mva,
                  limits.line_mva / grid.base_mva});
    std::ostringstream diag;
    diag << (pf.converged ? "power flow converged" : "power flow did not converge") << " in "
         << pf.iterations << " iterations (mismatch " << pf.max_mismatch_pu << " pu); "
         << limits.describe();
    sol.diagnostics = diag.str();
    return sol;
}

}  // namespace gridprompt
