#pragma once

#include <complex>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gridprompt {

// Values match the MATPOWER bus type codes.
enum class BusKind { pq = 1, pv = 2, slack = 3 };

struct Bus {
    int id = 0;       // dense internal index
    int ext_id = 0;   // id used by the source file
    double base_kv = 0.0;
    BusKind kind = BusKind::pq;
    double vm_min = 0.9;
    double vm_max = 1.1;
    double gs_mw = 0.0;    // shunt conductance, MW at 1 pu
    double bs_mvar = 0.0;  // shunt susceptance, MVAr at 1 pu

    bool operator==(const Bus&) const = default;
};

struct Load {
    int id = 0;
    int bus = 0;
    double p_mw = 0.0;
    double q_mvar = 0.0;

    bool operator==(const Load&) const = default;
};

struct Generator {
    int id = 0;
    int bus = 0;
    double p_mw = 0.0;
    double vm_setpoint_pu = 1.0;
    double p_min_mw = 0.0;
    double p_max_mw = 0.0;
    double q_min_mvar = 0.0;
    double q_max_mvar = 0.0;
    double cost_c2 = 0.0;  // $/MW^2h
    double cost_c1 = 0.0;  // $/MWh
    double cost_c0 = 0.0;  // $/h
    bool is_slack = false;

    double cost(double p) const { return (cost_c2 * p + cost_c1) * p + cost_c0; }

    bool operator==(const Generator&) const = default;
};

struct Line {
    int id = 0;
    int from_bus = 0;
    int to_bus = 0;
    double r_pu = 0.0;
    double x_pu = 0.0;
    double b_pu = 0.0;  // total line charging
    double tap_ratio = 1.0;
    double rate_mva = 0.0;  // 0 = unlimited

    bool operator==(const Line&) const = default;
};

/// Per-unit grid model. Powers are kept in MW/MVAr; impedances are on base_mva.
struct GridCase {
    std::string name;
    double base_mva = 100.0;
    std::vector<Bus> buses;
    std::vector<Load> loads;
    std::vector<Generator> generators;
    std::vector<Line> lines;
    bool has_costs = true;

    int slack_bus() const;
    const Generator& slack_generator() const;

    bool operator==(const GridCase&) const = default;
};

/// Throws GridError naming the first offending component.
void validate(const GridCase& grid);

// ---------------------------------------------------------------------------
// Heterogeneous node-typed view

using FeatureRecord = std::map<std::string, double>;

struct HeteroEdge {
    std::string src_type;
    int src_id = 0;
    std::string dst_type;
    int dst_id = 0;

    bool operator==(const HeteroEdge&) const = default;
};

namespace node_type {
inline constexpr const char* bus = "bus";
inline constexpr const char* load = "load";
inline constexpr const char* gen = "gen";
inline constexpr const char* slack = "slack";
inline constexpr const char* line = "line";
}  // namespace node_type

/// Node tables keyed by type ("bus", "load", "gen", "slack", "line") plus the
/// component-to-bus connections. Every record carries an integer "id".
struct HeteroGrid {
    std::string name;
    double base_mva = 100.0;
    bool has_costs = true;
    std::map<std::string, std::vector<FeatureRecord>> nodes;
    std::vector<HeteroEdge> edges;

    const std::vector<FeatureRecord>& table(const std::string& type) const;
    bool operator==(const HeteroGrid&) const = default;
};

/// Feature names that hold integers (ids and references).
bool is_integer_feature(const std::string& key);

HeteroGrid to_hetero(const GridCase& grid);
GridCase from_hetero(const HeteroGrid& grid);

/// Checks that every edge endpoint resolves and that component nodes have
/// the expected bus connections. Errors name the offending path, e.g.
/// "load[0].bus".
void validate(const HeteroGrid& grid);

/// Connection edges implied by the bus-reference columns of the node tables.
std::vector<HeteroEdge> derive_edges(const HeteroGrid& grid);

// ---------------------------------------------------------------------------

using ComplexMatrix = Eigen::MatrixXcd;

/// Nodal admittance matrix in per-unit (pi-model lines, taps on the from side,
/// bus shunts on the diagonal).
ComplexMatrix admittance_matrix(const GridCase& grid);

}  // namespace gridprompt
