#include "gridprompt/run_config.hpp"

#include <fstream>
#include <set>
#include <type_traits>

#include "gridprompt/errors.hpp"

namespace gridprompt {

using nlohmann::json;

namespace {

// Reads the keys of one JSON object and rejects any key nobody asked for.
class Section {
public:
    Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) throw ConfigError(label() + " must be an object");
    }

    template <typename T>
    void read(const char* key, T& dst) {
        known_.insert(key);
        auto it = obj_.find(key);
        if (it == obj_.end()) return;
        const std::string where = path_.empty() ? key : path_ + "." + key;
        if constexpr (std::is_same_v<T, bool>) {
            if (!it->is_boolean()) throw ConfigError(where + " must be a boolean");
        } else if constexpr (std::is_integral_v<T>) {
            if (!it->is_number_integer()) throw ConfigError(where + " must be an integer");
            if (std::is_unsigned_v<T> && it->get<long long>() < 0 && !it->is_number_unsigned()) {
                throw ConfigError(where + " must not be negative");
            }
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!it->is_number()) throw ConfigError(where + " must be a number");
        } else {
            if (!it->is_string()) throw ConfigError(where + " must be a string");
        }
        dst = it->get<T>();
    }

    const json* child(const char* key) {
        known_.insert(key);
        auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it) {
            if (!known_.count(it.key())) {
                throw ConfigError("unknown config key '" + (path_.empty() ? it.key() : path_ + "." + it.key()) + "'");
            }
        }
    }

private:
    std::string label() const { return path_.empty() ? "config" : "config." + path_; }

    const json& obj_;
    std::string path_;
    std::set<std::string> known_;
};

}  // namespace

RunConfig run_config_from_json(const json& doc) {
    RunConfig cfg;
    Section top(doc, "");
    top.read("out", cfg.out);

    if (const json* m = top.child("mutation")) {
        Section s(*m, "mutation");
        s.read("relative_halfwidth", cfg.mutation.relative_halfwidth);
        s.read("seed", cfg.mutation.seed);
        s.finish();
    }
    if (const json* d = top.child("dataset")) {
        Section s(*d, "dataset");
        s.read("n", cfg.n);
        s.read("threads", cfg.threads);
        s.finish();
    }
    if (const json* e = top.child("embedding")) {
        Section s(*e, "embedding");
        std::string format = to_string(cfg.embedding.kind);
        s.read("format", format);
        cfg.embedding.kind = embedding_kind_from_string(format);
        s.read("decimals", cfg.embedding.decimals);
        s.finish();
    }
    if (const json* e = top.child("endpoint")) {
        Section s(*e, "endpoint");
        auto& ep = cfg.endpoint;
        s.read("base_url", ep.base_url);
        s.read("model", ep.model);
        s.read("temperature", ep.temperature);
        s.read("max_output_tokens", ep.max_output_tokens);
        s.read("timeout_s", ep.timeout_s);
        s.read("max_retries", ep.max_retries);
        s.read("api_key_env", ep.api_key_env);
        s.read("backoff_base_s", ep.backoff_base_s);
        s.read("backoff_factor", ep.backoff_factor);
        s.read("backoff_jitter", ep.backoff_jitter);
        s.finish();
    }
    if (const json* b = top.child("bench")) {
        Section s(*b, "bench");
        s.read("trials", cfg.bench.trials);
        s.read("context_size", cfg.bench.context_size);
        s.read("concurrency", cfg.bench.concurrency);
        s.read("seed", cfg.bench.seed);
        s.read("max_prompt_chars", cfg.bench.max_prompt_chars);
        std::string replay;
        s.read("replay", replay);
        if (!replay.empty()) cfg.replay = replay;
        s.finish();
    }
    if (const json* f = top.child("finetune")) {
        Section s(*f, "finetune");
        s.read("rank", cfg.finetune.rank);
        s.read("alpha", cfg.finetune.alpha);
        s.read("base_model", cfg.finetune.base_model);
        s.read("notes", cfg.finetune.notes);
        s.read("examples_per_line", cfg.examples_per_line);
        s.read("max_line_chars", cfg.max_line_chars);
        s.finish();
    }
    top.finish();
    validate(cfg);
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return run_config_from_json(doc);
}

json to_json(const RunConfig& cfg) {
    const auto& ep = cfg.endpoint;
    json bench = {{"trials", cfg.bench.trials},
                  {"context_size", cfg.bench.context_size},
                  {"concurrency", cfg.bench.concurrency},
                  {"seed", cfg.bench.seed},
                  {"max_prompt_chars", cfg.bench.max_prompt_chars}};
    if (cfg.replay) bench["replay"] = *cfg.replay;
    return {{"mutation", {{"relative_halfwidth", cfg.mutation.relative_halfwidth}, {"seed", cfg.mutation.seed}}},
            {"dataset", {{"n", cfg.n}, {"threads", cfg.threads}}},
            {"embedding", {{"format", to_string(cfg.embedding.kind)}, {"decimals", cfg.embedding.decimals}}},
            {"endpoint",
             {{"base_url", ep.base_url},
              {"model", ep.model},
              {"temperature", ep.temperature},
              {"max_output_tokens", ep.max_output_tokens},
              {"timeout_s", ep.timeout_s},
              {"max_retries", ep.max_retries},
              {"api_key_env", ep.api_key_env},
              {"backoff_base_s", ep.backoff_base_s},
              {"backoff_factor", ep.backoff_factor},
              {"backoff_jitter", ep.backoff_jitter}}},
            {"bench", bench},
            {"finetune",
             {{"rank", cfg.finetune.rank},
              {"alpha", cfg.finetune.alpha},
              {"base_model", cfg.finetune.base_model},
              {"notes", cfg.finetune.notes},
              {"examples_per_line", cfg.examples_per_line},
              {"max_line_chars", cfg.max_line_chars}}},
            {"out", cfg.out}};
}

void validate(const RunConfig& cfg) {
    validate(cfg.mutation);
    validate(cfg.endpoint);
    validate(cfg.bench);
    validate(cfg.finetune);
    if (cfg.n < 1) throw ConfigError("dataset.n must be at least 1");
    if (cfg.threads < 0) throw ConfigError("dataset.threads must be >= 0");
    if (cfg.embedding.decimals < 1) throw ConfigError("embedding.decimals must be at least 1");
    if (cfg.examples_per_line < 1) throw ConfigError("finetune.examples_per_line must be at least 1");
    if (cfg.replay) replay_mode_from_string(*cfg.replay);
}

}  // namespace gridprompt
