#include <doctest.h>

#include <cmath>
#include <complex>

#include "gridprompt/errors.hpp"
#include "gridprompt/solvers.hpp"
#include "test_support.hpp"

using namespace gridprompt;
using nlohmann::json;

namespace {

void check_pf_against_reference(const char* name) {
    const GridCase g = testing::load_case(name);
    const json& ref = testing::reference()[name]["pf"];
    const PfSolution pf = solve_pf(g);
    REQUIRE(pf.converged);
    CHECK(pf.iterations <= 10);
    CHECK(pf.max_mismatch_pu <= 1e-8);
    for (std::size_t i = 0; i < g.buses.size(); ++i) {
        CHECK(std::abs(pf.vm_pu[i] - ref["vm_pu"][i].get<double>()) <= 1e-6);
        CHECK(std::abs(pf.va_deg[i] - ref["va_deg"][i].get<double>()) <= 1e-4);
    }
    for (std::size_t k = 0; k < g.generators.size(); ++k) {
        CHECK(std::abs(pf.p_mw[k] - ref["gen_p_mw"][k].get<double>()) <= 1e-4);
        CHECK(std::abs(pf.q_mvar[k] - ref["gen_q_mvar"][k].get<double>()) <= 1e-4);
    }
}

double relative_gap(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

TEST_CASE("power flow matches the reference solver") {
    SUBCASE("case9") { check_pf_against_reference("case9"); }
    SUBCASE("case30") { check_pf_against_reference("case30"); }
}

TEST_CASE("power flow conserves power: injections equal line losses") {
    const GridCase g = testing::load_case("case9");
    const PfSolution pf = solve_pf(g);
    const auto flows = line_flows(g, pf.vm_pu, pf.va_deg);
    std::complex<double> losses = 0.0;
    for (const auto& f : flows) losses += f.from + f.to;
    double gen_p = 0.0, load_p = 0.0;
    for (double p : pf.p_mw) gen_p += p;
    for (const auto& l : g.loads) load_p += l.p_mw;
    CHECK((gen_p - load_p) / g.base_mva == doctest::Approx(losses.real()).epsilon(1e-9));
}

TEST_CASE("generation cost evaluates the quadratic cost rows") {
    const GridCase g = testing::load_case("case9");
    // 0.11 p^2 + 5 p + 150, 0.085 p^2 + 1.2 p + 600, 0.1225 p^2 + p + 335
    const double expected = (0.11 * 100 * 100 + 5 * 100 + 150) + (0.085 * 50 * 50 + 1.2 * 50 + 600) +
                            (0.1225 * 10 * 10 + 10 + 335);
    CHECK(generation_cost(g, {100.0, 50.0, 10.0}) == doctest::Approx(expected));
}

TEST_CASE("case9 OPF matches the reference optimum") {
    const GridCase g = testing::load_case("case9");
    const json& ref = testing::reference()["case9"]["opf"];
    const OpfSolution sol = solve_opf(g);
    REQUIRE(sol.feasible);
    CHECK(relative_gap(sol.objective_cost, ref["objective"].get<double>()) < 1e-4);
    CHECK(std::abs(sol.slack.p_mw - ref["gen_p_mw"][0].get<double>()) < 0.1);
    for (std::size_t k = 0; k < sol.gen.size(); ++k) {
        CHECK(std::abs(sol.gen[k].p_mw - ref["gen_p_mw"][k + 1].get<double>()) < 0.1);
    }
    for (std::size_t i = 0; i < sol.bus.size(); ++i) {
        CHECK(std::abs(sol.bus[i].vm_pu - ref["vm_pu"][i].get<double>()) < 1e-3);
    }
    CHECK(sol.objective_cost ==
          doctest::Approx(generation_cost(g, {sol.slack.p_mw, sol.gen[0].p_mw, sol.gen[1].p_mw})));
}

TEST_CASE("case9 OPF with the first load scaled by 1.2 matches the reference") {
    GridCase g = testing::load_case("case9");
    g.loads[0].p_mw *= 1.2;
    g.loads[0].q_mvar *= 1.2;
    const OpfSolution sol = solve_opf(g);
    REQUIRE(sol.feasible);
    CHECK(relative_gap(sol.objective_cost,
                       testing::reference()["case9_load0_x1.2"]["opf"]["objective"].get<double>()) < 1e-4);
}

TEST_CASE("case30 OPF matches the reference optimum") {
    const GridCase g = testing::load_case("case30");
    const OpfSolution sol = solve_opf(g);
    REQUIRE(sol.feasible);
    CHECK(relative_gap(sol.objective_cost, testing::reference()["case30"]["opf"]["objective"].get<double>()) <
          1e-3);
}

TEST_CASE("OPF solution satisfies the limits when re-checked by an independent flow") {
    const GridCase g = testing::load_case("case9");
    const OpfSolution sol = solve_opf(g);
    GridCase fixed = g;
    for (const auto& gen : sol.gen) fixed.generators[gen.id].p_mw = gen.p_mw;
    for (auto& gen : fixed.generators) gen.vm_setpoint_pu = sol.bus[gen.bus].vm_pu;
    const PfSolution pf = solve_pf(fixed);
    REQUIRE(pf.converged);
    const ConstraintReport rep = check_limits(fixed, pf);
    CHECK(rep.within(OpfOptions{}));
    CHECK(pf.p_mw[0] == doctest::Approx(sol.slack.p_mw).epsilon(1e-6));
}

TEST_CASE("overloaded system is reported infeasible") {
    GridCase g = testing::load_case("case9");
    for (auto& l : g.loads) l.p_mw *= 3.0;  // 945 MW against 820 MW of capacity
    const OpfSolution sol = solve_opf(g);
    CHECK_FALSE(sol.feasible);
    CHECK_FALSE(sol.diagnostics.empty());
}

TEST_CASE("OPF without cost data is a configuration error") {
    GridCase g = testing::load_case("case9");
    g.has_costs = false;
    CHECK_THROWS_AS(solve_opf(g), ConfigError);
}

TEST_CASE("solution_from_pf flags limit violations") {
    GridCase g = testing::load_case("case9");
    const OpfSolution ok = solution_from_pf(g, solve_pf(g));
    CHECK(ok.feasible);
    g.lines[0].rate_mva = 10.0;  // the generator step-up line carries ~72 MVA
    const OpfSolution bad = solution_from_pf(g, solve_pf(g));
    CHECK_FALSE(bad.feasible);
}
