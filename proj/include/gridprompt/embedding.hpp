#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridprompt/grid_model.hpp"
#include "gridprompt/solvers.hpp"

namespace gridprompt {

inline constexpr const char* kGridSchema = "gridprompt/v1";

inline constexpr int kExactDecimals = -1;

enum class EmbeddingKind { graph, table };

struct EmbeddingFormat {
    EmbeddingKind kind = EmbeddingKind::graph;
    int decimals = 4;
};

std::string to_string(EmbeddingKind kind);
EmbeddingKind embedding_kind_from_string(const std::string& text);

/// Rounds to `decimals` places; negative `decimals` leaves the value as is.
/// -0 is normalized to 0.
double round_to(double value, int decimals);

/// Grid features: `decimals` places, widened so that at least `decimals`
/// significant digits survive (small cost coefficients and impedances).
double round_feature(double value, int decimals);

/// Canonical compact JSON (sorted keys, rounded values) for a grid.
///
/// graph: {"edges": [[src_type, src_id, dst_type, dst_id], ...], "kind": "graph",
///         "meta": {...}, "nodes": {type: [records]}, "schema": ...}
/// table: {"bus": [...], "gen": [...], "kind": "table", "line": [...], "load": [...],
///         "meta": {...}, "schema": ..., "slack": [...]}
std::string embed_grid(const HeteroGrid& grid, const EmbeddingFormat& fmt);

/// Accepts either kind. Throws ParseError naming the offending path.
HeteroGrid parse_grid(std::string_view text);

// ---------------------------------------------------------------------------

struct SolutionGenEntry {
    int id = 0;
    double p_mw = 0.0;
    double q_mvar = 0.0;
};

struct SolutionBusEntry {
    int id = 0;
    double vm_pu = 0.0;
    double va_deg = 0.0;
};

/// Y_g, Y_s, Y_b as read back from text.
struct SolutionDoc {
    std::vector<SolutionGenEntry> gen;
    std::vector<SolutionGenEntry> slack;
    std::vector<SolutionBusEntry> bus;
};

/// Result of reading a (possibly chatty) model response. `doc` is empty when
/// the response is INVALID; `reason` then says why.
struct SolutionParse {
    std::optional<SolutionDoc> doc;
    std::string reason;

    bool valid() const { return doc.has_value(); }
};

/// {"bus": [{"id", "va_deg", "vm_pu"}], "gen": [{"id", "p_mw", "q_mvar"}],
///  "slack": [{"id", "p_mw", "q_mvar"}]} with values rounded to `decimals`
/// (kExactDecimals keeps full double precision).
std::string encode_solution(const OpfSolution& sol, int decimals);

/// Same layout at full double precision (dataset ground truth).
nlohmann::json solution_to_json(const OpfSolution& sol);
OpfSolution solution_from_json(const nlohmann::json& doc);

/// Extracts the first syntactically complete JSON object anywhere in `text`
/// and validates it as a solution document.
SolutionParse parse_solution_doc(std::string_view text);

/// Start/end offsets of the first complete, parseable JSON object in `text`.
std::optional<std::pair<std::size_t, std::size_t>> find_json_object(std::string_view text);

}  // namespace gridprompt
