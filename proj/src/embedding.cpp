#include "gridprompt/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "gridprompt/errors.hpp"

namespace gridprompt {

using nlohmann::json;

namespace {

const std::vector<std::string>& node_types() {
    static const std::vector<std::string> types = {node_type::bus, node_type::load, node_type::gen,
                                                   node_type::slack, node_type::line};
    return types;
}

json encode_record(const FeatureRecord& record, int decimals) {
    json out = json::object();
    for (const auto& [key, value] : record) {
        if (is_integer_feature(key)) {
            out[key] = static_cast<std::int64_t>(std::llround(value));
        } else {
            out[key] = round_feature(value, decimals);
        }
    }
    return out;
}

json encode_table(const std::vector<FeatureRecord>& records, int decimals) {
    json out = json::array();
    for (const auto& r : records) out.push_back(encode_record(r, decimals));
    return out;
}

[[noreturn]] void schema_error(const std::string& path, const std::string& what) {
    throw ParseError(path + ": " + what);
}

const json& member(const json& obj, const std::string& key, const std::string& path) {
    auto it = obj.find(key);
    if (it == obj.end()) schema_error(path.empty() ? key : path + "." + key, "missing");
    return *it;
}

std::vector<FeatureRecord> decode_table(const json& records, const std::string& type) {
    if (!records.is_array()) schema_error(type, "expected an array of records");
    std::vector<FeatureRecord> out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const std::string path = type + "[" + std::to_string(i) + "]";
        const json& r = records[i];
        if (!r.is_object()) schema_error(path, "expected an object");
        FeatureRecord rec;
        for (const auto& [key, value] : r.items()) {
            if (!value.is_number()) schema_error(path + "." + key, "expected a number");
            rec[key] = value.get<double>();
        }
        out.push_back(std::move(rec));
    }
    return out;
}

json gen_entry(const GenOutput& g, int decimals) {
    return {{"id", g.id}, {"p_mw", round_to(g.p_mw, decimals)}, {"q_mvar", round_to(g.q_mvar, decimals)}};
}

json gen_entry_exact(const GenOutput& g) {
    return {{"id", g.id}, {"p_mw", g.p_mw}, {"q_mvar", g.q_mvar}};
}

// Reads an integral id from a JSON number.
std::optional<int> integral(const json& v) {
    if (!v.is_number()) return std::nullopt;
    const double d = v.get<double>();
    if (!std::isfinite(d) || d != std::floor(d) || std::abs(d) > 1e9) return std::nullopt;
    return static_cast<int>(d);
}

std::optional<double> finite(const json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_number()) return std::nullopt;
    const double d = it->get<double>();
    if (!std::isfinite(d)) return std::nullopt;
    return d;
}

}  // namespace

std::string to_string(EmbeddingKind kind) { return kind == EmbeddingKind::graph ? "graph" : "table"; }

EmbeddingKind embedding_kind_from_string(const std::string& text) {
    if (text == "graph") return EmbeddingKind::graph;
    if (text == "table") return EmbeddingKind::table;
    throw ConfigError("unknown embedding kind '" + text + "' (expected graph or table)");
}

double round_feature(double value, int decimals) {
    if (decimals < 0 || value == 0.0 || !std::isfinite(value)) return round_to(value, decimals);
    const int magnitude = static_cast<int>(std::floor(std::log10(std::abs(value))));
    return round_to(value, std::min(15, std::max(decimals, decimals - 1 - magnitude)));
}

double round_to(double value, int decimals) {
    if (decimals < 0) return value + 0.0;
    const double scale = std::pow(10.0, decimals);
    return std::round(value * scale) / scale + 0.0;
}

std::string embed_grid(const HeteroGrid& grid, const EmbeddingFormat& fmt) {
    if (fmt.decimals < 1 && fmt.decimals != kExactDecimals) {
        throw ConfigError("embedding decimals must be at least 1");
    }
    json doc = json::object();
    doc["schema"] = kGridSchema;
    doc["kind"] = to_string(fmt.kind);
    json meta = {{"base_mva", round_feature(grid.base_mva, fmt.decimals)}, {"name", grid.name}};
    if (!grid.has_costs) meta["costs"] = false;
    doc["meta"] = meta;

    if (fmt.kind == EmbeddingKind::graph) {
        json nodes = json::object();
        for (const auto& type : node_types()) nodes[type] = encode_table(grid.table(type), fmt.decimals);
        doc["nodes"] = nodes;
        json edges = json::array();
        for (const auto& e : grid.edges) edges.push_back({e.src_type, e.src_id, e.dst_type, e.dst_id});
        doc["edges"] = edges;
    } else {
        for (const auto& type : node_types()) doc[type] = encode_table(grid.table(type), fmt.decimals);
    }
    return doc.dump();
}

HeteroGrid parse_grid(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) schema_error("$", "expected an object");
    const json& schema = member(doc, "schema", "");
    if (schema != kGridSchema) schema_error("schema", "unsupported schema " + schema.dump());
    const json& kind_value = member(doc, "kind", "");
    if (!kind_value.is_string()) schema_error("kind", "expected a string");
    const std::string kind = kind_value.get<std::string>();
    if (kind != "graph" && kind != "table") schema_error("kind", "unknown kind '" + kind + "'");

    HeteroGrid grid;
    const json& meta = member(doc, "meta", "");
    if (!meta.is_object()) schema_error("meta", "expected an object");
    const json& base = member(meta, "base_mva", "meta");
    if (!base.is_number()) schema_error("meta.base_mva", "expected a number");
    grid.base_mva = base.get<double>();
    const json& name = member(meta, "name", "meta");
    if (!name.is_string()) schema_error("meta.name", "expected a string");
    grid.name = name.get<std::string>();
    if (auto it = meta.find("costs"); it != meta.end()) {
        if (!it->is_boolean()) schema_error("meta.costs", "expected a boolean");
        grid.has_costs = it->get<bool>();
    }

    std::set<std::string> allowed = {"schema", "kind", "meta"};
    if (kind == "graph") {
        allowed.insert({"nodes", "edges"});
        const json& nodes = member(doc, "nodes", "");
        if (!nodes.is_object()) schema_error("nodes", "expected an object");
        for (const auto& [type, records] : nodes.items()) {
            if (std::find(node_types().begin(), node_types().end(), type) == node_types().end()) {
                schema_error("nodes." + type, "unknown node type");
            }
            grid.nodes[type] = decode_table(records, type);
        }
        const json& edges = member(doc, "edges", "");
        if (!edges.is_array()) schema_error("edges", "expected an array");
        for (std::size_t i = 0; i < edges.size(); ++i) {
            const json& e = edges[i];
            const std::string path = "edges[" + std::to_string(i) + "]";
            if (!e.is_array() || e.size() != 4 || !e[0].is_string() || !e[2].is_string() ||
                !integral(e[1]) || !integral(e[3])) {
                schema_error(path, "expected [src_type, src_id, dst_type, dst_id]");
            }
            grid.edges.push_back({e[0].get<std::string>(), *integral(e[1]), e[2].get<std::string>(),
                                  *integral(e[3])});
        }
    } else {
        for (const auto& type : node_types()) {
            allowed.insert(type);
            grid.nodes[type] = decode_table(member(doc, type, ""), type);
        }
    }
    for (const auto& [key, value] : doc.items()) {
        if (!allowed.count(key)) schema_error(key, "unexpected key for kind " + kind);
    }

    try {
        validate(grid);
    } catch (const GridError& e) {
        throw ParseError(e.what());
    }
    if (kind == "table") grid.edges = derive_edges(grid);
    return grid;
}

// ---------------------------------------------------------------------------

std::string encode_solution(const OpfSolution& sol, int decimals) {
    json gen = json::array();
    for (const auto& g : sol.gen) gen.push_back(gen_entry(g, decimals));
    json bus = json::array();
    for (const auto& b : sol.bus) {
        bus.push_back({{"id", b.id},
                       {"vm_pu", round_to(b.vm_pu, decimals)},
                       {"va_deg", round_to(b.va_deg, decimals)}});
    }
    json doc = {{"gen", gen}, {"slack", json::array({gen_entry(sol.slack, decimals)})}, {"bus", bus}};
    return doc.dump();
}

json solution_to_json(const OpfSolution& sol) {
    json gen = json::array();
    for (const auto& g : sol.gen) gen.push_back(gen_entry_exact(g));
    json bus = json::array();
    for (const auto& b : sol.bus) bus.push_back({{"id", b.id}, {"vm_pu", b.vm_pu}, {"va_deg", b.va_deg}});
    return {{"gen", gen},
            {"slack", json::array({gen_entry_exact(sol.slack)})},
            {"bus", bus},
            {"objective_cost", sol.objective_cost},
            {"feasible", sol.feasible},
            {"max_violation_pu", sol.max_violation_pu},
            {"outer_iterations", sol.outer_iterations},
            {"diagnostics", sol.diagnostics}};
}

OpfSolution solution_from_json(const json& doc) {
    OpfSolution sol;
    try {
        for (const auto& g : doc.at("gen")) {
            sol.gen.push_back({g.at("id").get<int>(), g.at("p_mw").get<double>(), g.at("q_mvar").get<double>()});
        }
        const auto& s = doc.at("slack").at(0);
        sol.slack = {s.at("id").get<int>(), s.at("p_mw").get<double>(), s.at("q_mvar").get<double>()};
        for (const auto& b : doc.at("bus")) {
            sol.bus.push_back({b.at("id").get<int>(), b.at("vm_pu").get<double>(), b.at("va_deg").get<double>()});
        }
        sol.objective_cost = doc.value("objective_cost", 0.0);
        sol.feasible = doc.value("feasible", false);
        sol.max_violation_pu = doc.value("max_violation_pu", 0.0);
        sol.outer_iterations = doc.value("outer_iterations", 0);
        sol.diagnostics = doc.value("diagnostics", std::string());
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed solution document: ") + e.what());
    }
    return sol;
}

std::optional<std::pair<std::size_t, std::size_t>> find_json_object(std::string_view text) {
    for (std::size_t start = text.find('{'); start != std::string_view::npos;
         start = text.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false, escaped = false;
        for (std::size_t i = start; i < text.size(); ++i) {
            const char c = text[i];
            if (in_string) {
                if (escaped) escaped = false;
                else if (c == '\\') escaped = true;
                else if (c == '"') in_string = false;
                continue;
            }
            if (c == '"') in_string = true;
            else if (c == '{') ++depth;
            else if (c == '}' && --depth == 0) {
                const auto candidate = text.substr(start, i + 1 - start);
                if (json::accept(candidate.begin(), candidate.end())) return std::make_pair(start, i + 1);
                break;
            }
        }
    }
    return std::nullopt;
}

SolutionParse parse_solution_doc(std::string_view text) {
    SolutionParse result;
    const auto span = find_json_object(text);
    if (!span) {
        result.reason = "no JSON object found";
        return result;
    }
    const auto body = text.substr(span->first, span->second - span->first);
    const json doc = json::parse(body.begin(), body.end());

    auto invalid = [&](const std::string& why) {
        result.reason = "missing or invalid values: " + why;
        return result;
    };
    SolutionDoc out;
    for (const char* key : {"gen", "slack", "bus"}) {
        if (!doc.contains(key)) return invalid(std::string("key '") + key + "' missing");
    }
    auto gen_list = [&](const char* key, std::vector<SolutionGenEntry>& dst) -> bool {
        json list = doc.at(key);
        if (list.is_object()) list = json::array({list});
        if (!list.is_array()) return false;
        for (std::size_t i = 0; i < list.size(); ++i) {
            const json& e = list[i];
            const auto id = e.is_object() && e.contains("id") ? integral(e.at("id")) : std::nullopt;
            const auto p = e.is_object() ? finite(e, "p_mw") : std::nullopt;
            const auto q = e.is_object() ? finite(e, "q_mvar") : std::nullopt;
            if (!id || !p || !q) {
                result.reason = "missing or invalid values: " + std::string(key) + "[" + std::to_string(i) + "]";
                return false;
            }
            dst.push_back({*id, *p, *q});
        }
        return true;
    };
    if (!gen_list("gen", out.gen)) return result.reason.empty() ? invalid("'gen' is not a list") : result;
    if (!gen_list("slack", out.slack)) return result.reason.empty() ? invalid("'slack' is not a list") : result;

    const json& bus = doc.at("bus");
    if (!bus.is_array()) return invalid("'bus' is not a list");
    for (std::size_t i = 0; i < bus.size(); ++i) {
        const json& e = bus[i];
        const auto id = e.is_object() && e.contains("id") ? integral(e.at("id")) : std::nullopt;
        const auto vm = e.is_object() ? finite(e, "vm_pu") : std::nullopt;
        const auto va = e.is_object() ? finite(e, "va_deg") : std::nullopt;
        if (!id || !vm || !va) return invalid("bus[" + std::to_string(i) + "]");
        out.bus.push_back({*id, *vm, *va});
    }
    result.doc = std::move(out);
    return result;
}

}  // namespace gridprompt
