#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "gridprompt/dataset_export.hpp"
#include "gridprompt/embedding.hpp"
#include "gridprompt/evaluation.hpp"
#include "gridprompt/llm_protocol.hpp"
#include "gridprompt/scenario_gen.hpp"

namespace gridprompt {

/// Everything a CLI run can be configured with. Loaded from a JSON file and
/// then overridden by command-line flags.
///
/// {
///   "mutation":  {"relative_halfwidth", "seed"},
///   "dataset":   {"n", "threads"},
///   "embedding": {"format", "decimals"},
///   "endpoint":  {"base_url", "model", "temperature", "max_output_tokens", "timeout_s",
///                 "max_retries", "api_key_env", "backoff_base_s", "backoff_factor", "backoff_jitter"},
///   "bench":     {"trials", "context_size", "concurrency", "seed", "max_prompt_chars", "replay"},
///   "finetune":  {"rank", "alpha", "base_model", "notes", "examples_per_line", "max_line_chars"},
///   "out": "dir"
/// }
struct RunConfig {
    MutationSpec mutation;
    std::size_t n = 66;
    int threads = 0;
    EmbeddingFormat embedding;
    EndpointConfig endpoint;
    BenchSettings bench;
    std::optional<std::string> replay;  // replay mode; empty means use the endpoint
    FinetuneConfig finetune;
    int examples_per_line = 1;
    std::size_t max_line_chars = 0;
    std::string out;
};

/// Throws ConfigError on unknown keys, wrong types or invalid values.
RunConfig run_config_from_json(const nlohmann::json& doc);
RunConfig load_run_config(const std::string& path);
nlohmann::json to_json(const RunConfig& cfg);
void validate(const RunConfig& cfg);

}  // namespace gridprompt
