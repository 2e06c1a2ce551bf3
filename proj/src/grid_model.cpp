#include "gridprompt/grid_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <set>
#include <unordered_map>

#include "gridprompt/errors.hpp"

namespace gridprompt {

namespace {

std::string where(const char* type, std::size_t index) {
    return std::string(type) + "[" + std::to_string(index) + "]";
}

void check_bus_ref(int bus, std::size_t n_bus, const std::string& path) {
    if (bus < 0 || static_cast<std::size_t>(bus) >= n_bus) {
        throw GridError(path + " references missing bus " + std::to_string(bus));
    }
}

const std::vector<std::string>& required_features(const std::string& type) {
    static const std::map<std::string, std::vector<std::string>> features = {
        {node_type::bus,
         {"id", "ext_id", "kind", "base_kv", "vm_min", "vm_max", "gs_mw", "bs_mvar"}},
        {node_type::load, {"id", "bus", "p_mw", "q_mvar"}},
        {node_type::gen,
         {"id", "bus", "p_mw", "vm_setpoint_pu", "p_min_mw", "p_max_mw", "q_min_mvar",
          "q_max_mvar", "cost_c2", "cost_c1", "cost_c0"}},
        {node_type::slack,
         {"id", "bus", "p_mw", "vm_setpoint_pu", "p_min_mw", "p_max_mw", "q_min_mvar",
          "q_max_mvar", "cost_c2", "cost_c1", "cost_c0"}},
        {node_type::line,
         {"id", "from_bus", "to_bus", "r_pu", "x_pu", "b_pu", "tap_ratio", "rate_mva"}},
    };
    return features.at(type);
}

const std::vector<std::string>& all_node_types() {
    static const std::vector<std::string> types = {node_type::bus, node_type::load, node_type::gen,
                                                   node_type::slack, node_type::line};
    return types;
}

FeatureRecord generator_record(const Generator& g) {
    return {{"id", g.id},
            {"bus", g.bus},
            {"p_mw", g.p_mw},
            {"vm_setpoint_pu", g.vm_setpoint_pu},
            {"p_min_mw", g.p_min_mw},
            {"p_max_mw", g.p_max_mw},
            {"q_min_mvar", g.q_min_mvar},
            {"q_max_mvar", g.q_max_mvar},
            {"cost_c2", g.cost_c2},
            {"cost_c1", g.cost_c1},
            {"cost_c0", g.cost_c0}};
}

Generator generator_from(const FeatureRecord& r, bool slack) {
    Generator g;
    g.id = static_cast<int>(r.at("id"));
    g.bus = static_cast<int>(r.at("bus"));
    g.p_mw = r.at("p_mw");
    g.vm_setpoint_pu = r.at("vm_setpoint_pu");
    g.p_min_mw = r.at("p_min_mw");
    g.p_max_mw = r.at("p_max_mw");
    g.q_min_mvar = r.at("q_min_mvar");
    g.q_max_mvar = r.at("q_max_mvar");
    g.cost_c2 = r.at("cost_c2");
    g.cost_c1 = r.at("cost_c1");
    g.cost_c0 = r.at("cost_c0");
    g.is_slack = slack;
    return g;
}

int as_id(double v, const std::string& path) {
    if (!std::isfinite(v) || v != std::floor(v)) {
        throw GridError(path + " is not an integer");
    }
    return static_cast<int>(v);
}

}  // namespace

int GridCase::slack_bus() const {
    for (const auto& b : buses) {
        if (b.kind == BusKind::slack) return b.id;
    }
    throw GridError("case '" + name + "' has no slack bus");
}

const Generator& GridCase::slack_generator() const {
    for (const auto& g : generators) {
        if (g.is_slack) return g;
    }
    throw GridError("case '" + name + "' has no slack generator");
}

void validate(const GridCase& grid) {
    if (!(grid.base_mva > 0.0)) throw GridError("base_mva must be positive");
    const std::size_t n_bus = grid.buses.size();
    if (n_bus == 0) throw GridError("case has no buses");

    int slack_buses = 0;
    for (std::size_t i = 0; i < n_bus; ++i) {
        const Bus& b = grid.buses[i];
        if (b.id != static_cast<int>(i)) throw GridError(where("bus", i) + " id is not dense");
        if (b.vm_min > b.vm_max) throw GridError(where("bus", i) + " has vm_min > vm_max");
        if (b.kind == BusKind::slack) ++slack_buses;
    }
    if (slack_buses != 1) {
        throw GridError("expected exactly one slack bus, found " + std::to_string(slack_buses));
    }

    for (std::size_t i = 0; i < grid.loads.size(); ++i) {
        const Load& l = grid.loads[i];
        if (l.id != static_cast<int>(i)) throw GridError(where("load", i) + " id is not dense");
        check_bus_ref(l.bus, n_bus, where("load", i) + ".bus");
    }

    std::vector<int> gens_at_bus(n_bus, 0);
    int slack_gens = 0;
    for (std::size_t i = 0; i < grid.generators.size(); ++i) {
        const Generator& g = grid.generators[i];
        const std::string path = where("gen", i);
        if (g.id != static_cast<int>(i)) throw GridError(path + " id is not dense");
        check_bus_ref(g.bus, n_bus, path + ".bus");
        if (g.p_min_mw > g.p_max_mw) throw GridError(path + " has p_min_mw > p_max_mw");
        if (g.q_min_mvar > g.q_max_mvar) throw GridError(path + " has q_min_mvar > q_max_mvar");
        if (grid.buses[g.bus].kind == BusKind::pq) {
            throw GridError(path + " sits on PQ bus " + std::to_string(g.bus));
        }
        ++gens_at_bus[g.bus];
        if (g.is_slack) {
            ++slack_gens;
            if (grid.buses[g.bus].kind != BusKind::slack) {
                throw GridError(path + " is flagged slack but bus " + std::to_string(g.bus) +
                                " is not the slack bus");
            }
        }
    }
    if (slack_gens != 1) {
        throw GridError("expected exactly one slack generator, found " +
                        std::to_string(slack_gens));
    }
    for (std::size_t b = 0; b < n_bus; ++b) {
        if (grid.buses[b].kind == BusKind::pv && gens_at_bus[b] == 0) {
            throw GridError(where("bus", b) + " is PV but has no generator");
        }
    }

    std::vector<std::vector<int>> adjacency(n_bus);
    for (std::size_t i = 0; i < grid.lines.size(); ++i) {
        const Line& l = grid.lines[i];
        const std::string path = where("line", i);
        if (l.id != static_cast<int>(i)) throw GridError(path + " id is not dense");
        check_bus_ref(l.from_bus, n_bus, path + ".from_bus");
        check_bus_ref(l.to_bus, n_bus, path + ".to_bus");
        if (l.from_bus == l.to_bus) throw GridError(path + " connects a bus to itself");
        if (l.x_pu == 0.0) throw GridError(path + " has zero reactance");
        if (!(l.tap_ratio > 0.0)) throw GridError(path + " has non-positive tap ratio");
        adjacency[l.from_bus].push_back(l.to_bus);
        adjacency[l.to_bus].push_back(l.from_bus);
    }

    std::vector<bool> seen(n_bus, false);
    std::queue<int> frontier;
    frontier.push(0);
    seen[0] = true;
    std::size_t reached = 1;
    while (!frontier.empty()) {
        const int b = frontier.front();
        frontier.pop();
        for (int nb : adjacency[b]) {
            if (!seen[nb]) {
                seen[nb] = true;
                ++reached;
                frontier.push(nb);
            }
        }
    }
    if (reached != n_bus) {
        const auto island = std::find(seen.begin(), seen.end(), false) - seen.begin();
        throw GridError(where("bus", static_cast<std::size_t>(island)) +
                        " is not connected to bus 0");
    }
}

// ---------------------------------------------------------------------------

const std::vector<FeatureRecord>& HeteroGrid::table(const std::string& type) const {
    static const std::vector<FeatureRecord> empty;
    auto it = nodes.find(type);
    return it == nodes.end() ? empty : it->second;
}

bool is_integer_feature(const std::string& key) {
    static const std::set<std::string> keys = {"id", "ext_id", "kind", "bus", "from_bus", "to_bus"};
    return keys.count(key) != 0;
}

HeteroGrid to_hetero(const GridCase& grid) {
    const std::size_t n_bus = grid.buses.size();
    for (std::size_t i = 0; i < grid.loads.size(); ++i) {
        check_bus_ref(grid.loads[i].bus, n_bus, where("load", i) + ".bus");
    }
    for (std::size_t i = 0; i < grid.generators.size(); ++i) {
        check_bus_ref(grid.generators[i].bus, n_bus, where("gen", i) + ".bus");
    }
    for (std::size_t i = 0; i < grid.lines.size(); ++i) {
        check_bus_ref(grid.lines[i].from_bus, n_bus, where("line", i) + ".from_bus");
        check_bus_ref(grid.lines[i].to_bus, n_bus, where("line", i) + ".to_bus");
    }

    HeteroGrid out;
    out.name = grid.name;
    out.base_mva = grid.base_mva;
    out.has_costs = grid.has_costs;
    for (const auto& type : all_node_types()) out.nodes[type];

    auto& buses = out.nodes[node_type::bus];
    for (const Bus& b : grid.buses) {
        buses.push_back({{"id", b.id},
                         {"ext_id", b.ext_id},
                         {"kind", static_cast<int>(b.kind)},
                         {"base_kv", b.base_kv},
                         {"vm_min", b.vm_min},
                         {"vm_max", b.vm_max},
                         {"gs_mw", b.gs_mw},
                         {"bs_mvar", b.bs_mvar}});
    }
    auto& loads = out.nodes[node_type::load];
    for (const Load& l : grid.loads) {
        loads.push_back({{"id", l.id}, {"bus", l.bus}, {"p_mw", l.p_mw}, {"q_mvar", l.q_mvar}});
    }
    for (const Generator& g : grid.generators) {
        out.nodes[g.is_slack ? node_type::slack : node_type::gen].push_back(generator_record(g));
    }
    auto& lines = out.nodes[node_type::line];
    for (const Line& l : grid.lines) {
        lines.push_back({{"id", l.id},
                         {"from_bus", l.from_bus},
                         {"to_bus", l.to_bus},
                         {"r_pu", l.r_pu},
                         {"x_pu", l.x_pu},
                         {"b_pu", l.b_pu},
                         {"tap_ratio", l.tap_ratio},
                         {"rate_mva", l.rate_mva}});
    }
    out.edges = derive_edges(out);
    return out;
}

std::vector<HeteroEdge> derive_edges(const HeteroGrid& grid) {
    std::vector<HeteroEdge> edges;
    for (const char* type : {node_type::load, node_type::gen, node_type::slack}) {
        for (const auto& r : grid.table(type)) {
            edges.push_back({type, static_cast<int>(r.at("id")), node_type::bus,
                             static_cast<int>(r.at("bus"))});
        }
    }
    for (const auto& r : grid.table(node_type::line)) {
        const int id = static_cast<int>(r.at("id"));
        edges.push_back({node_type::line, id, node_type::bus, static_cast<int>(r.at("from_bus"))});
        edges.push_back({node_type::line, id, node_type::bus, static_cast<int>(r.at("to_bus"))});
    }
    return edges;
}

void validate(const HeteroGrid& grid) {
    std::map<std::string, std::set<int>> ids;
    for (const auto& [type, records] : grid.nodes) {
        if (std::find(all_node_types().begin(), all_node_types().end(), type) ==
            all_node_types().end()) {
            throw GridError("unknown node type '" + type + "'");
        }
        const auto& keys = required_features(type);
        for (std::size_t i = 0; i < records.size(); ++i) {
            for (const auto& key : keys) {
                auto it = records[i].find(key);
                const std::string path = where(type.c_str(), i) + "." + key;
                if (it == records[i].end()) throw GridError(path + " is missing");
                if (!std::isfinite(it->second)) throw GridError(path + " is not finite");
                if (is_integer_feature(key)) as_id(it->second, path);
            }
            for (const auto& [key, value] : records[i]) {
                if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
                    throw GridError(where(type.c_str(), i) + "." + key + " is not a known feature");
                }
            }
            const int id = static_cast<int>(records[i].at("id"));
            if (!ids[type].insert(id).second) {
                throw GridError(where(type.c_str(), i) + ".id duplicates " + std::to_string(id));
            }
        }
    }
    for (const auto& type : all_node_types()) {
        if (!grid.nodes.count(type)) throw GridError("node table '" + type + "' is missing");
    }
    if (grid.table(node_type::slack).size() != 1) {
        throw GridError("expected exactly one slack node, found " +
                        std::to_string(grid.table(node_type::slack).size()));
    }

    const auto& bus_ids = ids[node_type::bus];
    auto check_ref = [&](const char* type, const char* key) {
        const auto& records = grid.table(type);
        for (std::size_t i = 0; i < records.size(); ++i) {
            const int bus = static_cast<int>(records[i].at(key));
            if (!bus_ids.count(bus)) {
                throw GridError(where(type, i) + "." + key + " references missing bus " +
                                std::to_string(bus));
            }
        }
    };
    check_ref(node_type::load, "bus");
    check_ref(node_type::gen, "bus");
    check_ref(node_type::slack, "bus");
    check_ref(node_type::line, "from_bus");
    check_ref(node_type::line, "to_bus");

    // Edge endpoints must resolve and agree with the bus-reference columns.
    std::map<std::pair<std::string, int>, std::multiset<int>> attached;
    for (std::size_t i = 0; i < grid.edges.size(); ++i) {
        const HeteroEdge& e = grid.edges[i];
        const std::string path = where("edges", i);
        if (!ids.count(e.src_type) || !ids[e.src_type].count(e.src_id)) {
            throw GridError(path + " source " + e.src_type + " " + std::to_string(e.src_id) +
                            " does not resolve");
        }
        if (!ids.count(e.dst_type) || !ids[e.dst_type].count(e.dst_id)) {
            throw GridError(path + " target " + e.dst_type + " " + std::to_string(e.dst_id) +
                            " does not resolve");
        }
        if (e.dst_type != node_type::bus || e.src_type == node_type::bus) {
            throw GridError(path + " must connect a component to a bus");
        }
        attached[{e.src_type, e.src_id}].insert(e.dst_id);
    }
    if (grid.edges.empty()) return;  // tabular grids carry references only

    for (const char* type : {node_type::load, node_type::gen, node_type::slack, node_type::line}) {
        const auto& records = grid.table(type);
        for (std::size_t i = 0; i < records.size(); ++i) {
            const int id = static_cast<int>(records[i].at("id"));
            std::multiset<int> expected;
            if (std::string(type) == node_type::line) {
                expected = {static_cast<int>(records[i].at("from_bus")),
                            static_cast<int>(records[i].at("to_bus"))};
            } else {
                expected = {static_cast<int>(records[i].at("bus"))};
            }
            if (attached[{type, id}] != expected) {
                throw GridError(where(type, i) + " edges do not match its bus references");
            }
        }
    }
}

GridCase from_hetero(const HeteroGrid& grid) {
    validate(grid);
    GridCase out;
    out.name = grid.name;
    out.base_mva = grid.base_mva;
    out.has_costs = grid.has_costs;

    for (const auto& r : grid.table(node_type::bus)) {
        Bus b;
        b.id = static_cast<int>(r.at("id"));
        b.ext_id = static_cast<int>(r.at("ext_id"));
        const int kind = static_cast<int>(r.at("kind"));
        if (kind < 1 || kind > 3) throw GridError("bus " + std::to_string(b.id) + " has bad kind");
        b.kind = static_cast<BusKind>(kind);
        b.base_kv = r.at("base_kv");
        b.vm_min = r.at("vm_min");
        b.vm_max = r.at("vm_max");
        b.gs_mw = r.at("gs_mw");
        b.bs_mvar = r.at("bs_mvar");
        out.buses.push_back(b);
    }
    for (const auto& r : grid.table(node_type::load)) {
        out.loads.push_back({static_cast<int>(r.at("id")), static_cast<int>(r.at("bus")),
                             r.at("p_mw"), r.at("q_mvar")});
    }
    for (const auto& r : grid.table(node_type::gen)) out.generators.push_back(generator_from(r, false));
    for (const auto& r : grid.table(node_type::slack)) out.generators.push_back(generator_from(r, true));
    for (const auto& r : grid.table(node_type::line)) {
        Line l;
        l.id = static_cast<int>(r.at("id"));
        l.from_bus = static_cast<int>(r.at("from_bus"));
        l.to_bus = static_cast<int>(r.at("to_bus"));
        l.r_pu = r.at("r_pu");
        l.x_pu = r.at("x_pu");
        l.b_pu = r.at("b_pu");
        l.tap_ratio = r.at("tap_ratio");
        l.rate_mva = r.at("rate_mva");
        out.lines.push_back(l);
    }
    auto by_id = [](const auto& a, const auto& b) { return a.id < b.id; };
    std::sort(out.buses.begin(), out.buses.end(), by_id);
    std::sort(out.loads.begin(), out.loads.end(), by_id);
    std::sort(out.generators.begin(), out.generators.end(), by_id);
    std::sort(out.lines.begin(), out.lines.end(), by_id);
    validate(out);
    return out;
}

// ---------------------------------------------------------------------------

ComplexMatrix admittance_matrix(const GridCase& grid) {
    using cd = std::complex<double>;
    const auto n = static_cast<Eigen::Index>(grid.buses.size());
    ComplexMatrix y = ComplexMatrix::Zero(n, n);
    for (const Line& l : grid.lines) {
        if (l.r_pu == 0.0 && l.x_pu == 0.0) {
            throw GridError("line " + std::to_string(l.id) + " has zero impedance");
        }
        const cd series = 1.0 / cd(l.r_pu, l.x_pu);
        const cd half_shunt(0.0, l.b_pu / 2.0);
        const double tap = l.tap_ratio;
        y(l.from_bus, l.from_bus) += (series + half_shunt) / (tap * tap);
        y(l.to_bus, l.to_bus) += series + half_shunt;
        y(l.from_bus, l.to_bus) -= series / tap;
        y(l.to_bus, l.from_bus) -= series / tap;
    }
    for (const Bus& b : grid.buses) {
        y(b.id, b.id) += cd(b.gs_mw, b.bs_mvar) / grid.base_mva;
    }
    return y;
}

}  // namespace gridprompt
