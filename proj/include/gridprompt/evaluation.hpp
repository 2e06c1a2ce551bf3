#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridprompt/embedding.hpp"
#include "gridprompt/llm_protocol.hpp"
#include "gridprompt/solvers.hpp"

namespace gridprompt {

inline constexpr const char* kTrialSchema = "gridprompt/trial/v1";
inline constexpr const char* kReportSchema = "gridprompt/report/v1";

struct MseTriple {
    double gen = 0.0;
    double slack = 0.0;
    double bus = 0.0;
};

/// Squared errors of a predicted solution, matched by component id. Powers are
/// compared in per unit on `base_mva`, angles in radians. Throws ScoringError
/// when ids are missing, duplicated or unknown.
MseTriple score(const SolutionDoc& pred, const OpfSolution& truth, double base_mva);

struct TrialRecord {
    int trial_id = 0;
    int query_index = 0;  // dataset entry used as the query
    bool valid = false;
    std::string reason;   // empty when valid
    std::optional<double> mse_gen;
    std::optional<double> mse_slack;
    std::optional<double> mse_bus;
    std::size_t prompt_chars = 0;
    std::size_t response_chars = 0;
    double latency_ms = 0.0;
    int attempts = 0;
    int retries = 0;
};

nlohmann::json trial_to_json(const TrialRecord& rec);
TrialRecord trial_from_json(const nlohmann::json& doc);

struct EvalReport {
    nlohmann::json config;  // resolved run configuration, echoed verbatim
    int n_trials = 0;
    int n_valid = 0;
    double valid_fraction = 0.0;
    double invalid_fraction = 0.0;
    // Means over valid trials only; empty when no trial was valid.
    std::optional<double> mse_gen;
    std::optional<double> mse_slack;
    std::optional<double> mse_bus;
    int total_retries = 0;
    double mean_latency_ms = 0.0;
};

/// Aggregates records in trial_id order so the result does not depend on the
/// order in which trials finished.
EvalReport aggregate(std::vector<TrialRecord> records, nlohmann::json config);

nlohmann::json report_to_json(const EvalReport& report);

/// Re-aggregates a per-trial JSONL log. Lines must carry kTrialSchema.
EvalReport report_from_log(std::istream& log, nlohmann::json config);

// ---------------------------------------------------------------------------

/// One solved scenario as the benchmark sees it.
struct BenchItem {
    int index = 0;              // dataset entry index
    std::string grid_text;      // embedded grid in the benchmark format
    std::string solution_text;  // rounded solution used as a context answer
    OpfSolution truth;          // unrounded ground truth
};

struct BenchSettings {
    int trials = 1;
    int context_size = 65;
    std::uint64_t seed = 0;
    int concurrency = 4;
    std::size_t max_prompt_chars = 0;  // 0 = no budget
};

void validate(const BenchSettings& settings);

/// Disjoint draw of context_size + 1 entries per trial (last one is the query)
/// from a seeded shuffle of 0..n_items-1. Throws SizingError when the dataset
/// is too small.
std::vector<std::vector<std::size_t>> partition_trials(std::size_t n_items, const BenchSettings& settings);

/// Runs every trial against `backend` with up to settings.concurrency requests
/// in flight. Each record is written to `log` (if given) as one JSONL line, in
/// trial order. Trials whose prompt exceeds max_prompt_chars are marked
/// invalid without contacting the backend. Transport and protocol failures
/// invalidate the trial; authentication and configuration errors abort the run.
EvalReport run_benchmark(const std::vector<BenchItem>& items, double base_mva, ChatBackend& backend,
                         const BenchSettings& settings, nlohmann::json config, std::ostream* log = nullptr);

}  // namespace gridprompt
