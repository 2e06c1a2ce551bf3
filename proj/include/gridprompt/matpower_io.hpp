#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "gridprompt/grid_model.hpp"

namespace gridprompt {

/// Numeric tables exactly as they appear in a MATPOWER v2 case file.
struct RawCaseTables {
    std::string name;
    double base_mva = 0.0;
    std::vector<std::vector<double>> bus;      // >= 13 columns
    std::vector<std::vector<double>> gen;      // >= 21 columns (10 accepted, as MATPOWER does)
    std::vector<std::vector<double>> branch;   // >= 13 columns (11 accepted)
    std::vector<std::vector<double>> gencost;  // >= 4 columns, optional table
};

struct MatpowerParseResult {
    GridCase grid;
    std::vector<std::string> warnings;  // dropped out-of-service elements etc.
};

/// Tokenizes the `mpc.*` assignments. Throws ParseError with a line number.
RawCaseTables read_matpower_tables(std::string_view text);

/// Converts raw tables into a validated GridCase with dense bus ids.
MatpowerParseResult to_grid_case(const RawCaseTables& tables);

GridCase parse_matpower(std::string_view text);
MatpowerParseResult parse_matpower_with_warnings(std::string_view text);

GridCase load_matpower_file(const std::string& path);

std::string write_matpower(const GridCase& grid);

}  // namespace gridprompt
