#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <sstream>

#include "gridprompt/errors.hpp"
#include "gridprompt/solvers.hpp"

namespace gridprompt {

namespace {

using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

// Controls: [P of each non-slack generator (pu)] ++ [|V| of each generator bus].
class OpfProblem {
public:
    OpfProblem(const GridCase& grid, const OpfOptions& opts) : model_(grid), opts_(opts) {
        const GridCase& g = model_.grid();
        const double base = g.base_mva;
        std::set<int> gen_buses;
        for (const Generator& gen : g.generators) {
            gen_buses.insert(gen.bus);
            if (gen.is_slack) continue;
            p_gens_.push_back(gen.id);
            lower_.push_back(gen.p_min_mw / base);
            upper_.push_back(gen.p_max_mw / base);
        }
        for (int b : gen_buses) {
            v_buses_.push_back(b);
            lower_.push_back(g.buses[b].vm_min);
            upper_.push_back(g.buses[b].vm_max);
        }
        for (const Bus& b : g.buses) {
            if (!gen_buses.count(b.id)) pq_buses_.push_back(b.id);
        }
        for (int b : gen_buses) {
            double q_min = 0.0, q_max = 0.0;
            for (const Generator& gen : g.generators) {
                if (gen.bus != b) continue;
                q_min += gen.q_min_mvar;
                q_max += gen.q_max_mvar;
            }
            q_limits_.push_back({b, q_min / base, q_max / base});
        }
    }

    struct Evaluation {
        bool ok = false;
        double cost = 0.0;
        VectorXd constraints;  // all of the form c(x) <= 0, per unit
        PfSolution pf;
    };

    std::size_t size() const { return lower_.size(); }
    const GridCase& grid() const { return model_.grid(); }

    VectorXd initial_point() const {
        const GridCase& g = grid();
        VectorXd x(size());
        std::size_t k = 0;
        for (int id : p_gens_) x[k++] = g.generators[id].p_mw / g.base_mva;
        const auto vset = model_.default_setpoints();
        for (int b : v_buses_) x[k++] = vset[b];
        return project(x);
    }

    VectorXd midpoint() const {
        VectorXd x(size());
        for (std::size_t i = 0; i < size(); ++i) x[i] = 0.5 * (lower_[i] + upper_[i]);
        return x;
    }

    VectorXd project(VectorXd x) const {
        for (std::size_t i = 0; i < size(); ++i) x[i] = std::clamp(x[i], lower_[i], upper_[i]);
        return x;
    }

    bool at_lower(const VectorXd& x, std::size_t i) const { return x[i] <= lower_[i]; }
    bool at_upper(const VectorXd& x, std::size_t i) const { return x[i] >= upper_[i]; }

    Evaluation evaluate(const VectorXd& x) const {
        const GridCase& g = grid();
        const double base = g.base_mva;
        std::vector<double> p(g.generators.size());
        for (const Generator& gen : g.generators) p[gen.id] = gen.p_mw;
        std::vector<double> vset = model_.default_setpoints();
        std::size_t k = 0;
        for (int id : p_gens_) p[id] = x[k++] * base;
        for (int b : v_buses_) vset[b] = x[k++];

        Evaluation e;
        try {
            e.pf = model_.solve(p, vset, opts_.inner_pf);
        } catch (const SolverError&) {
            return e;
        }
        if (!e.pf.converged) return e;
        e.ok = true;
        e.cost = generation_cost(g, e.pf.p_mw);

        std::vector<double> c;
        const Generator& slack = g.slack_generator();
        const double ps = e.pf.p_mw[slack.id] / base;
        if (std::isfinite(slack.p_min_mw)) c.push_back(slack.p_min_mw / base - ps);
        if (std::isfinite(slack.p_max_mw)) c.push_back(ps - slack.p_max_mw / base);
        for (const auto& q : q_limits_) {
            double q_bus = 0.0;
            for (const Generator& gen : g.generators) {
                if (gen.bus == q.bus) q_bus += e.pf.q_mvar[gen.id] / base;
            }
            if (std::isfinite(q.min)) c.push_back(q.min - q_bus);
            if (std::isfinite(q.max)) c.push_back(q_bus - q.max);
        }
        for (int b : pq_buses_) {
            c.push_back(g.buses[b].vm_min - e.pf.vm_pu[b]);
            c.push_back(e.pf.vm_pu[b] - g.buses[b].vm_max);
        }
        const auto flows = line_flows(g, e.pf.vm_pu, e.pf.va_deg);
        for (const Line& l : g.lines) {
            if (l.rate_mva <= 0.0) continue;
            const double rate = l.rate_mva / base;
            // (|S|^2 - R^2) / 2R behaves like |S| - R near the limit and stays smooth.
            c.push_back((std::norm(flows[l.id].from) - rate * rate) / (2.0 * rate));
            c.push_back((std::norm(flows[l.id].to) - rate * rate) / (2.0 * rate));
        }
        e.constraints = Eigen::Map<VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
        return e;
    }

private:
    struct QLimit {
        int bus;
        double min;
        double max;
    };

    PowerFlowModel model_;
    OpfOptions opts_;
    std::vector<int> p_gens_;
    std::vector<int> v_buses_;
    std::vector<int> pq_buses_;
    std::vector<QLimit> q_limits_;
    std::vector<double> lower_;
    std::vector<double> upper_;
};

double max_violation(const VectorXd& c) { return c.size() == 0 ? 0.0 : std::max(0.0, c.maxCoeff()); }

class AugmentedLagrangian {
public:
    AugmentedLagrangian(const OpfProblem& problem, double cost_scale, const VectorXd& multipliers,
                        double penalty)
        : problem_(problem), scale_(cost_scale), lambda_(multipliers), rho_(penalty) {}

    std::optional<double> value(const VectorXd& x) const {
        const auto e = problem_.evaluate(x);
        if (!e.ok) return std::nullopt;
        double phi = e.cost / scale_;
        for (Eigen::Index i = 0; i < e.constraints.size(); ++i) {
            const double shifted = std::max(0.0, lambda_[i] + rho_ * e.constraints[i]);
            phi += (shifted * shifted - lambda_[i] * lambda_[i]) / (2.0 * rho_);
        }
        return phi;
    }

    std::optional<VectorXd> gradient(const VectorXd& x, double step) const {
        VectorXd grad(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            VectorXd xp = x, xm = x;
            xp[i] += step;
            xm[i] -= step;
            const auto fp = value(xp);
            const auto fm = value(xm);
            if (!fp || !fm) return std::nullopt;
            grad[i] = (*fp - *fm) / (2.0 * step);
        }
        return grad;
    }

private:
    const OpfProblem& problem_;
    double scale_;
    const VectorXd& lambda_;
    double rho_;
};

double projected_gradient_norm(const OpfProblem& p, const VectorXd& x, const VectorXd& g) {
    return (p.project(x - g) - x).cwiseAbs().maxCoeff();
}

// Box-constrained quasi-Newton (BFGS on the free variables, projected
// backtracking line search). Returns the final iterate.
VectorXd minimize_box(const OpfProblem& problem, const AugmentedLagrangian& merit, VectorXd x,
                      const OpfOptions& opts, double tolerance) {
    const Eigen::Index n = x.size();
    auto phi = merit.value(x);
    auto grad = phi ? merit.gradient(x, opts.fd_step) : std::nullopt;
    if (!phi || !grad) return x;

    Eigen::MatrixXd hessian = Eigen::MatrixXd::Identity(n, n);
    bool scaled = false;
    for (int it = 0; it < opts.max_inner; ++it) {
        if (projected_gradient_norm(problem, x, *grad) < tolerance) break;

        std::vector<Eigen::Index> free;
        for (Eigen::Index i = 0; i < n; ++i) {
            const bool blocked = (problem.at_lower(x, i) && (*grad)[i] > 0.0) ||
                                 (problem.at_upper(x, i) && (*grad)[i] < 0.0);
            if (!blocked) free.push_back(i);
        }
        VectorXd dir = VectorXd::Zero(n);
        if (!free.empty()) {
            const auto m = static_cast<Eigen::Index>(free.size());
            Eigen::MatrixXd h(m, m);
            VectorXd g(m);
            for (Eigen::Index a = 0; a < m; ++a) {
                g[a] = (*grad)[free[a]];
                for (Eigen::Index b = 0; b < m; ++b) h(a, b) = hessian(free[a], free[b]);
            }
            const VectorXd d = h.ldlt().solve(-g);
            for (Eigen::Index a = 0; a < m; ++a) dir[free[a]] = d[a];
        }
        if (!(dir.dot(*grad) < 0.0) || !dir.allFinite()) {
            hessian.setIdentity();
            scaled = false;
            dir = -*grad;
        }

        double t = 1.0;
        VectorXd x_next;
        std::optional<double> phi_next;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
            x_next = problem.project(x + t * dir);
            phi_next = merit.value(x_next);
            if (phi_next && *phi_next <= *phi + 1e-4 * grad->dot(x_next - x)) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (scaled) {
                hessian.setIdentity();
                scaled = false;
                continue;
            }
            break;
        }
        const auto grad_next = merit.gradient(x_next, opts.fd_step);
        if (!grad_next) break;

        const VectorXd s = x_next - x;
        const VectorXd y = *grad_next - *grad;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (!scaled) {
                hessian = Eigen::MatrixXd::Identity(n, n) * (y.dot(y) / sy);
                scaled = true;
            }
            const VectorXd hs = hessian * s;
            hessian += y * y.transpose() / sy - hs * hs.transpose() / s.dot(hs);
        }
        const double change = std::abs(*phi - *phi_next);
        x = x_next;
        phi = phi_next;
        grad = grad_next;
        if (change <= 1e-15 * (1.0 + std::abs(*phi)) && s.cwiseAbs().maxCoeff() < 1e-12) break;
    }
    return x;
}

}  // namespace

OpfSolution solve_opf(const GridCase& grid, const OpfOptions& opts) {
    if (!grid.has_costs) throw ConfigError("case '" + grid.name + "' has no generator cost data");
    const OpfProblem problem(grid, opts);

    VectorXd x = problem.initial_point();
    auto start = problem.evaluate(x);
    if (!start.ok) {
        x = problem.midpoint();
        start = problem.evaluate(x);
    }
    if (!start.ok) {
        OpfSolution failed = solution_from_pf(problem.grid(), start.pf, opts);
        failed.feasible = false;
        failed.diagnostics = "no converged power flow at the starting point; " + failed.diagnostics;
        return failed;
    }

    const double cost_scale = std::max(1.0, std::abs(start.cost));
    const double target_violation = 1e-3 * std::min(opts.voltage_tol_pu, opts.power_tol_mw / grid.base_mva);
    VectorXd lambda = VectorXd::Zero(start.constraints.size());
    double rho = opts.penalty_initial;
    double previous_violation = kInf;
    double previous_cost = kInf;
    int rounds = 0;
    bool converged = false;

    for (rounds = 1; rounds <= opts.max_outer; ++rounds) {
        const AugmentedLagrangian merit(problem, cost_scale, lambda, rho);
        x = minimize_box(problem, merit, x, opts, 1e-9);
        const auto e = problem.evaluate(x);
        if (!e.ok) break;
        const double violation = max_violation(e.constraints);
        for (Eigen::Index i = 0; i < lambda.size(); ++i) {
            lambda[i] = std::max(0.0, lambda[i] + rho * e.constraints[i]);
        }
        const bool stable = std::abs(e.cost - previous_cost) <= 1e-3 * opts.optimality_tol * std::abs(e.cost);
        if (violation <= target_violation && stable) {
            converged = true;
            break;
        }
        if (violation > 0.25 * previous_violation) rho *= opts.penalty_growth;
        previous_violation = violation;
        previous_cost = e.cost;
    }

    const auto final_eval = problem.evaluate(x);
    OpfSolution sol = solution_from_pf(problem.grid(), final_eval.pf, opts);
    sol.outer_iterations = std::min(rounds, opts.max_outer);
    if (!final_eval.ok) sol.feasible = false;
    std::ostringstream diag;
    diag << (converged ? "converged" : "stopped without convergence") << " after "
         << sol.outer_iterations << " outer rounds (penalty " << rho << "); " << sol.diagnostics;
    sol.diagnostics = diag.str();
    return sol;
}

}  // namespace gridprompt
