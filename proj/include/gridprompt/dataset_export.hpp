#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridprompt/embedding.hpp"
#include "gridprompt/evaluation.hpp"
#include "gridprompt/grid_model.hpp"
#include "gridprompt/scenario_gen.hpp"
#include "gridprompt/solvers.hpp"

namespace gridprompt {

inline constexpr const char* kDatasetSchema = "gridprompt/dataset/v1";

struct DatasetEntry {
    std::uint64_t scenario = 0;  // mutation index the entry was generated from
    GridCase grid;
    OpfSolution solution;
};

struct RejectedScenario {
    std::uint64_t scenario = 0;
    std::string reason;
};

struct SolvedDataset {
    GridCase base;
    OpfSolution base_solution;
    MutationSpec spec;
    int decimals = 4;
    std::vector<DatasetEntry> entries;
    std::vector<RejectedScenario> rejected;
};

struct BuildOptions {
    OpfOptions opf;
    int decimals = 4;
    int threads = 0;  // 0 = hardware concurrency
};

/// Mutates and solves scenarios 0, 1, 2, ... until `n` feasible entries exist.
/// Infeasible or failed scenarios are recorded as rejected and replaced by the
/// next indices. The result does not depend on the thread count. Throws
/// SolverError when the base case itself has no feasible OPF, or when
/// rejections exceed 10·n + 100.
SolvedDataset solve_dataset(const GridCase& base, const MutationSpec& spec, std::size_t n,
                            const BuildOptions& opts = {});

/// Directory layout:
///   manifest.json, base.m, base_solution.json,
///   scenarios/{s}.m, solutions/{s}.json, embeddings/{s}.graph.json,
///   embeddings/{s}.table.json, rejected/{s}.json
/// where {s} is the scenario index.
void write_dataset(const SolvedDataset& dataset, const std::filesystem::path& dir);

SolvedDataset build_solved_dataset(const GridCase& base, const MutationSpec& spec, std::size_t n,
                                   const std::filesystem::path& dir, const BuildOptions& opts = {});

SolvedDataset load_dataset(const std::filesystem::path& dir);

/// Benchmark view of a dataset: grids embedded with `fmt`, context answers
/// rounded to fmt.decimals, unrounded truth kept for scoring.
std::vector<BenchItem> bench_items(const SolvedDataset& dataset, const EmbeddingFormat& fmt);

// ---------------------------------------------------------------------------

/// LoRA metadata emitted next to the training file; no training happens here.
/// The adapter update is dW = (alpha / rank) * A * B with only A and B trained.
struct FinetuneConfig {
    int rank = 8;
    double alpha = 16.0;
    std::string base_model;
    std::string notes;
};

void validate(const FinetuneConfig& cfg);
nlohmann::json to_json(const FinetuneConfig& cfg);

struct FinetuneOptions {
    EmbeddingFormat format;
    int examples_per_line = 1;         // >1 packs extra example pairs before the final one
    std::size_t max_line_chars = 0;    // 0 = unlimited
    FinetuneConfig config;
};

/// Writes one chat sample per line: system prompt, then user "Example Input
/// JSON: ..." / assistant "Example Output JSON: ..." pairs. Throws SizingError
/// if a line would exceed max_line_chars. Returns the number of lines.
std::size_t export_finetune_jsonl(const SolvedDataset& dataset, const FinetuneOptions& opts, std::ostream& out);

/// Writes finetune.{graph|table}.jsonl and finetune_config.json into `dir`.
/// Returns the JSONL path.
std::filesystem::path export_finetune(const SolvedDataset& dataset, const FinetuneOptions& opts,
                                      const std::filesystem::path& dir);

}  // namespace gridprompt
