#include "gridprompt/matpower_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "gridprompt/errors.hpp"

namespace gridprompt {

namespace {

// MATPOWER column indices (0-based).
namespace bus_col {
constexpr int id = 0, type = 1, pd = 2, qd = 3, gs = 4, bs = 5, base_kv = 9, vmax = 11, vmin = 12;
}
namespace gen_col {
constexpr int bus = 0, pg = 1, qmax = 3, qmin = 4, vg = 5, status = 7, pmax = 8, pmin = 9;
}
namespace branch_col {
constexpr int from = 0, to = 1, r = 2, x = 3, b = 4, rate_a = 5, ratio = 8, angle = 9, status = 10;
}

constexpr std::size_t kMinBusCols = 13;
constexpr std::size_t kMinGenCols = 10;
constexpr std::size_t kMinBranchCols = 11;
constexpr std::size_t kMinGencostCols = 4;

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string strip_comment(std::string_view line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '\'') quoted = !quoted;
        if (line[i] == '%' && !quoted) return std::string(line.substr(0, i));
    }
    return std::string(line);
}

double parse_number(std::string_view token, std::size_t line_no) {
    std::string_view t = token;
    if (!t.empty() && t.front() == '+') t.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
        throw ParseError("malformed number '" + std::string(token) + "'", line_no);
    }
    return value;
}

std::vector<double> parse_row(std::string_view row, std::size_t line_no) {
    std::vector<double> values;
    std::size_t i = 0;
    while (i < row.size()) {
        while (i < row.size() && (std::isspace(static_cast<unsigned char>(row[i])) || row[i] == ',')) ++i;
        std::size_t start = i;
        while (i < row.size() && !std::isspace(static_cast<unsigned char>(row[i])) && row[i] != ',') ++i;
        if (i > start) values.push_back(parse_number(row.substr(start, i - start), line_no));
    }
    return values;
}

std::string format_number(double v) {
    if (v == 0.0) return "0";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

std::string identifier(const std::string& name) {
    std::string out;
    for (char c : name) {
        out += (std::isalnum(static_cast<unsigned char>(c)) || c == '_') ? c : '_';
    }
    if (out.empty() || std::isdigit(static_cast<unsigned char>(out.front()))) out = "case_" + out;
    return out;
}

void require_columns(const std::vector<std::vector<double>>& table, std::size_t min_cols,
                     const char* what) {
    for (std::size_t i = 0; i < table.size(); ++i) {
        if (table[i].size() < min_cols) {
            throw ParseError(std::string("mpc.") + what + " row " + std::to_string(i + 1) + " has " +
                             std::to_string(table[i].size()) + " columns, expected at least " +
                             std::to_string(min_cols));
        }
    }
}

}  // namespace

RawCaseTables read_matpower_tables(std::string_view text) {
    RawCaseTables tables;
    bool have_base = false;

    std::vector<std::string> lines;
    {
        std::string current;
        for (char c : text) {
            if (c == '\n') {
                lines.push_back(current);
                current.clear();
            } else if (c != '\r') {
                current += c;
            }
        }
        lines.push_back(current);
    }

    std::vector<std::vector<double>>* matrix = nullptr;
    std::vector<std::vector<double>> skipped;
    std::string matrix_name;
    std::size_t matrix_start = 0;
    bool in_cell = false;

    auto add_rows = [&](std::string_view content, std::size_t line_no) {
        std::size_t start = 0;
        while (start <= content.size()) {
            std::size_t end = content.find(';', start);
            if (end == std::string_view::npos) end = content.size();
            auto row = parse_row(content.substr(start, end - start), line_no);
            if (!row.empty()) {
                if (!matrix->empty() && matrix->front().size() != row.size()) {
                    throw ParseError("mpc." + matrix_name + " row has " + std::to_string(row.size()) +
                                         " columns, previous rows have " +
                                         std::to_string(matrix->front().size()),
                                     line_no);
                }
                matrix->push_back(std::move(row));
            }
            start = end + 1;
        }
    };

    for (std::size_t idx = 0; idx < lines.size(); ++idx) {
        const std::size_t line_no = idx + 1;
        std::string line = trim(strip_comment(lines[idx]));
        if (line.empty()) continue;

        if (in_cell) {
            if (line.find('}') != std::string::npos) in_cell = false;
            continue;
        }
        if (matrix) {
            const auto close = line.find(']');
            add_rows(std::string_view(line).substr(0, close), line_no);
            if (close != std::string::npos) matrix = nullptr;
            continue;
        }

        if (line.rfind("function", 0) == 0) {
            const auto eq = line.find('=');
            if (eq != std::string::npos) tables.name = trim(std::string_view(line).substr(eq + 1));
            continue;
        }
        if (line.rfind("mpc.", 0) != 0) {
            throw ParseError("unexpected statement '" + line + "'", line_no);
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("expected assignment", line_no);
        const std::string field = trim(std::string_view(line).substr(4, eq - 4));
        if (field.find_first_of("({") != std::string::npos) {
            throw UnsupportedFeatureError("line " + std::to_string(line_no) +
                                          ": indexed assignment to mpc." + field + " is not supported");
        }
        std::string value = trim(std::string_view(line).substr(eq + 1));

        if (!value.empty() && value.front() == '[') {
            if (field == "bus") matrix = &tables.bus;
            else if (field == "gen") matrix = &tables.gen;
            else if (field == "branch") matrix = &tables.branch;
            else if (field == "gencost") matrix = &tables.gencost;
            else {
                skipped.clear();
                matrix = &skipped;
            }
            if (!matrix->empty()) throw ParseError("mpc." + field + " assigned twice", line_no);
            matrix_name = field;
            matrix_start = line_no;
            const auto close = value.find(']');
            add_rows(std::string_view(value).substr(1, close == std::string::npos ? std::string::npos
                                                                                   : close - 1),
                     line_no);
            if (close != std::string::npos) matrix = nullptr;
            continue;
        }
        if (!value.empty() && value.front() == '{') {
            in_cell = value.find('}') == std::string::npos;
            continue;
        }
        if (field == "baseMVA") {
            if (!value.empty() && value.back() == ';') value.pop_back();
            tables.base_mva = parse_number(trim(value), line_no);
            have_base = true;
        }
        // Other scalar fields (version, ...) are not used.
    }
    if (matrix) throw ParseError("unterminated matrix mpc." + matrix_name, matrix_start);
    if (in_cell) throw ParseError("unterminated cell array");
    if (!have_base) throw ParseError("mpc.baseMVA is missing");
    if (tables.bus.empty()) throw ParseError("mpc.bus is missing or empty");
    if (tables.gen.empty()) throw ParseError("mpc.gen is missing or empty");

    require_columns(tables.bus, kMinBusCols, "bus");
    require_columns(tables.gen, kMinGenCols, "gen");
    require_columns(tables.branch, kMinBranchCols, "branch");
    require_columns(tables.gencost, kMinGencostCols, "gencost");
    return tables;
}

MatpowerParseResult to_grid_case(const RawCaseTables& t) {
    MatpowerParseResult result;
    GridCase& grid = result.grid;
    grid.name = t.name.empty() ? "case" : t.name;
    grid.base_mva = t.base_mva;

    std::unordered_map<int, int> internal;
    for (const auto& row : t.bus) {
        const double ext = row[bus_col::id];
        if (ext != std::floor(ext)) throw ParseError("non-integer bus id " + format_number(ext));
        Bus b;
        b.id = static_cast<int>(grid.buses.size());
        b.ext_id = static_cast<int>(ext);
        const int type = static_cast<int>(row[bus_col::type]);
        if (type < 1 || type > 3) {
            throw UnsupportedFeatureError("bus " + std::to_string(b.ext_id) + " has type " +
                                          std::to_string(type) + " (isolated buses unsupported)");
        }
        b.kind = static_cast<BusKind>(type);
        b.base_kv = row[bus_col::base_kv];
        b.vm_max = row[bus_col::vmax];
        b.vm_min = row[bus_col::vmin];
        b.gs_mw = row[bus_col::gs];
        b.bs_mvar = row[bus_col::bs];
        if (!internal.emplace(b.ext_id, b.id).second) {
            throw ParseError("duplicate bus id " + std::to_string(b.ext_id));
        }
        grid.buses.push_back(b);
        if (row[bus_col::pd] != 0.0 || row[bus_col::qd] != 0.0) {
            grid.loads.push_back({static_cast<int>(grid.loads.size()), b.id, row[bus_col::pd],
                                  row[bus_col::qd]});
        }
    }
    auto lookup = [&](double ext, const std::string& what) {
        auto it = internal.find(static_cast<int>(ext));
        if (ext != std::floor(ext) || it == internal.end()) {
            throw GridError(what + " references unknown bus " + format_number(ext));
        }
        return it->second;
    };

    const std::size_t n_gen_rows = t.gen.size();
    grid.has_costs = !t.gencost.empty();
    if (grid.has_costs && t.gencost.size() != n_gen_rows && t.gencost.size() != 2 * n_gen_rows) {
        throw ParseError("mpc.gencost has " + std::to_string(t.gencost.size()) +
                         " rows for " + std::to_string(n_gen_rows) + " generators");
    }
    if (grid.has_costs && t.gencost.size() == 2 * n_gen_rows) {
        result.warnings.push_back("reactive power cost rows ignored");
    }

    const int slack_bus = [&] {
        for (const auto& b : grid.buses) {
            if (b.kind == BusKind::slack) return b.id;
        }
        throw GridError("case has no reference (type 3) bus");
    }();

    bool have_slack = false;
    for (std::size_t i = 0; i < n_gen_rows; ++i) {
        const auto& row = t.gen[i];
        const std::string what = "gen row " + std::to_string(i + 1);
        if (!(row[gen_col::status] > 0.0)) {
            result.warnings.push_back(what + " is out of service and was dropped");
            continue;
        }
        Generator g;
        g.id = static_cast<int>(grid.generators.size());
        g.bus = lookup(row[gen_col::bus], what);
        g.p_mw = row[gen_col::pg];
        g.vm_setpoint_pu = row[gen_col::vg];
        g.p_max_mw = row[gen_col::pmax];
        g.p_min_mw = row[gen_col::pmin];
        g.q_max_mvar = row[gen_col::qmax];
        g.q_min_mvar = row[gen_col::qmin];
        if (grid.has_costs) {
            const auto& cost = t.gencost[i];
            const int model = static_cast<int>(cost[0]);
            if (model == 1) {
                throw UnsupportedFeatureError("gencost row " + std::to_string(i + 1) +
                                              ": piecewise-linear cost model is not supported");
            }
            if (model != 2) {
                throw ParseError("gencost row " + std::to_string(i + 1) + ": unknown cost model " +
                                 std::to_string(model));
            }
            const int n = static_cast<int>(cost[3]);
            if (n < 0 || n > 3) {
                throw UnsupportedFeatureError("gencost row " + std::to_string(i + 1) + ": " +
                                              std::to_string(n) +
                                              " polynomial coefficients (at most quadratic supported)");
            }
            if (cost.size() < static_cast<std::size_t>(4 + n)) {
                throw ParseError("gencost row " + std::to_string(i + 1) + " is truncated");
            }
            double coeff[3] = {0.0, 0.0, 0.0};  // c2, c1, c0
            for (int k = 0; k < n; ++k) coeff[3 - n + k] = cost[4 + k];
            g.cost_c2 = coeff[0];
            g.cost_c1 = coeff[1];
            g.cost_c0 = coeff[2];
        }
        if (g.bus == slack_bus && !have_slack) {
            g.is_slack = true;
            have_slack = true;
        }
        grid.generators.push_back(g);
    }

    for (auto& b : grid.buses) {
        if (b.kind != BusKind::pv) continue;
        const bool has_gen = std::any_of(grid.generators.begin(), grid.generators.end(),
                                         [&](const Generator& g) { return g.bus == b.id; });
        if (!has_gen) {
            b.kind = BusKind::pq;
            result.warnings.push_back("bus " + std::to_string(b.ext_id) +
                                      " has no in-service generator and was converted to PQ");
        }
    }

    for (std::size_t i = 0; i < t.branch.size(); ++i) {
        const auto& row = t.branch[i];
        const std::string what = "branch row " + std::to_string(i + 1);
        if (!(row[branch_col::status] > 0.0)) {
            result.warnings.push_back(what + " is out of service and was dropped");
            continue;
        }
        if (row[branch_col::angle] != 0.0) {
            throw UnsupportedFeatureError(what + ": phase-shifting transformers are not supported");
        }
        Line l;
        l.id = static_cast<int>(grid.lines.size());
        l.from_bus = lookup(row[branch_col::from], what);
        l.to_bus = lookup(row[branch_col::to], what);
        l.r_pu = row[branch_col::r];
        l.x_pu = row[branch_col::x];
        l.b_pu = row[branch_col::b];
        l.rate_mva = row[branch_col::rate_a];
        l.tap_ratio = row[branch_col::ratio] == 0.0 ? 1.0 : row[branch_col::ratio];
        grid.lines.push_back(l);
    }

    validate(grid);
    return result;
}

MatpowerParseResult parse_matpower_with_warnings(std::string_view text) {
    return to_grid_case(read_matpower_tables(text));
}

GridCase parse_matpower(std::string_view text) { return parse_matpower_with_warnings(text).grid; }

GridCase load_matpower_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw GridError("cannot open case file '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_matpower(buffer.str());
}

std::string write_matpower(const GridCase& grid) {
    std::vector<double> pd(grid.buses.size(), 0.0), qd(grid.buses.size(), 0.0);
    for (const Load& l : grid.loads) {
        pd[l.bus] += l.p_mw;
        qd[l.bus] += l.q_mvar;
    }
    std::vector<double> vm(grid.buses.size(), 1.0);
    for (auto it = grid.generators.rbegin(); it != grid.generators.rend(); ++it) {
        vm[it->bus] = it->vm_setpoint_pu;
    }

    std::ostringstream out;
    auto row = [&out](std::initializer_list<double> values) {
        for (double v : values) out << '\t' << format_number(v);
        out << ";\n";
    };

    out << "function mpc = " << identifier(grid.name) << "\n\n";
    out << "%% MATPOWER Case Format : Version 2\nmpc.version = '2';\n\n";
    out << "%% system MVA base\nmpc.baseMVA = " << format_number(grid.base_mva) << ";\n\n";

    out << "%% bus data\n"
           "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\n"
           "mpc.bus = [\n";
    for (const Bus& b : grid.buses) {
        row({static_cast<double>(b.ext_id), static_cast<double>(static_cast<int>(b.kind)), pd[b.id],
             qd[b.id], b.gs_mw, b.bs_mvar, 1, vm[b.id], 0, b.base_kv, 1, b.vm_max, b.vm_min});
    }
    out << "];\n\n";

    out << "%% generator data\n"
           "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\tPc1\tPc2\tQc1min\tQc1max"
           "\tQc2min\tQc2max\tramp_agc\tramp_10\tramp_30\tramp_q\tapf\n"
           "mpc.gen = [\n";
    for (const Generator& g : grid.generators) {
        row({static_cast<double>(grid.buses[g.bus].ext_id), g.p_mw, 0, g.q_max_mvar, g.q_min_mvar,
             g.vm_setpoint_pu, grid.base_mva, 1, g.p_max_mw, g.p_min_mw, 0, 0, 0, 0, 0, 0, 0, 0, 0,
             0, 0});
    }
    out << "];\n\n";

    out << "%% branch data\n"
           "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax\n"
           "mpc.branch = [\n";
    for (const Line& l : grid.lines) {
        row({static_cast<double>(grid.buses[l.from_bus].ext_id),
             static_cast<double>(grid.buses[l.to_bus].ext_id), l.r_pu, l.x_pu, l.b_pu, l.rate_mva,
             l.rate_mva, l.rate_mva, l.tap_ratio == 1.0 ? 0.0 : l.tap_ratio, 0, 1, -360, 360});
    }
    out << "];\n";

    if (grid.has_costs) {
        out << "\n%% generator cost data\n"
               "%\t2\tstartup\tshutdown\tn\tc(n-1)\t...\tc0\n"
               "mpc.gencost = [\n";
        for (const Generator& g : grid.generators) {
            row({2, 0, 0, 3, g.cost_c2, g.cost_c1, g.cost_c0});
        }
        out << "];\n";
    }
    return out.str();
}

}  // namespace gridprompt
