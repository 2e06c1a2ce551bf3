#include "gridprompt/dataset_export.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <ostream>
#include <sstream>
#include <thread>

#include "gridprompt/errors.hpp"
#include "gridprompt/llm_protocol.hpp"
#include "gridprompt/matpower_io.hpp"

namespace gridprompt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw GridError("cannot write " + path.string());
    out << text;
    if (!out) throw GridError("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw GridError("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

json read_json(const fs::path& path) {
    try {
        return json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

std::string stem(std::uint64_t scenario) { return std::to_string(scenario); }

struct Attempt {
    OpfSolution solution;
    GridCase grid;
    std::string error;
};

Attempt attempt_scenario(const GridCase& base, const MutationSpec& spec, std::uint64_t s, const OpfOptions& opf) {
    Attempt a;
    a.grid = mutate(base, spec, s);
    try {
        a.solution = solve_opf(a.grid, opf);
        if (!a.solution.feasible) a.error = "infeasible: " + a.solution.diagnostics;
    } catch (const SolverError& e) {
        a.error = std::string("solver failure: ") + e.what();
    }
    return a;
}

std::vector<Attempt> solve_batch(const GridCase& base, const MutationSpec& spec, std::uint64_t first,
                                 std::size_t count, const BuildOptions& opts) {
    std::vector<Attempt> out(count);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t k = next++; k < count; k = next++) out[k] = attempt_scenario(base, spec, first + k, opts.opf);
    };
    unsigned threads = opts.threads > 0 ? static_cast<unsigned>(opts.threads) : std::thread::hardware_concurrency();
    threads = std::clamp<unsigned>(threads, 1, static_cast<unsigned>(std::max<std::size_t>(count, 1)));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
    return out;
}

const char* distribution_name(MutationDistribution d) {
    return d == MutationDistribution::uniform ? "uniform" : "profile";
}

}  // namespace

SolvedDataset solve_dataset(const GridCase& base, const MutationSpec& spec, std::size_t n, const BuildOptions& opts) {
    validate(base);
    validate(spec);
    if (n < 1) throw ConfigError("dataset size must be at least 1");

    SolvedDataset ds;
    ds.base = base;
    ds.spec = spec;
    ds.decimals = opts.decimals;
    ds.base_solution = solve_opf(base, opts.opf);
    if (!ds.base_solution.feasible) {
        throw SolverError("base case OPF is not feasible: " + ds.base_solution.diagnostics);
    }

    const std::size_t max_rejected = 10 * n + 100;
    std::uint64_t next = 0;
    while (ds.entries.size() < n) {
        const std::size_t need = n - ds.entries.size();
        auto batch = solve_batch(base, spec, next, need, opts);
        for (std::size_t k = 0; k < batch.size(); ++k) {
            const std::uint64_t s = next + k;
            if (batch[k].error.empty()) {
                ds.entries.push_back({s, std::move(batch[k].grid), std::move(batch[k].solution)});
            } else {
                ds.rejected.push_back({s, batch[k].error});
            }
        }
        next += need;
        if (ds.rejected.size() > max_rejected) {
            throw SolverError("gave up after " + std::to_string(ds.rejected.size()) + " rejected scenarios");
        }
    }
    return ds;
}

void write_dataset(const SolvedDataset& ds, const fs::path& dir) {
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) throw ConfigError(dir.string() + " exists and is not a directory");
        if (!fs::is_empty(dir) && !fs::exists(dir / "manifest.json")) {
            throw ConfigError(dir.string() + " is not empty and holds no dataset; refusing to overwrite");
        }
        for (const char* sub : {"scenarios", "solutions", "embeddings", "rejected"}) fs::remove_all(dir / sub);
    }
    for (const char* sub : {"scenarios", "solutions", "embeddings", "rejected"}) fs::create_directories(dir / sub);

    write_text(dir / "base.m", write_matpower(ds.base));
    write_text(dir / "base_solution.json", solution_to_json(ds.base_solution).dump(2) + "\n");

    json entries = json::array();
    for (const auto& e : ds.entries) {
        const std::string s = stem(e.scenario);
        entries.push_back(e.scenario);
        write_text(dir / "scenarios" / (s + ".m"), write_matpower(e.grid));
        write_text(dir / "solutions" / (s + ".json"), solution_to_json(e.solution).dump(2) + "\n");
        const HeteroGrid hg = to_hetero(e.grid);
        for (EmbeddingKind kind : {EmbeddingKind::graph, EmbeddingKind::table}) {
            write_text(dir / "embeddings" / (s + "." + to_string(kind) + ".json"),
                       embed_grid(hg, {kind, ds.decimals}) + "\n");
        }
    }
    json rejected = json::array();
    for (const auto& r : ds.rejected) {
        rejected.push_back(r.scenario);
        write_text(dir / "rejected" / (stem(r.scenario) + ".json"),
                   json{{"scenario", r.scenario}, {"reason", r.reason}}.dump(2) + "\n");
    }

    const json manifest = {
        {"schema", kDatasetSchema},
        {"name", ds.base.name},
        {"base_mva", ds.base.base_mva},
        {"n", ds.entries.size()},
        {"decimals", ds.decimals},
        {"mutation",
         {{"distribution", distribution_name(ds.spec.distribution)},
          {"relative_halfwidth", ds.spec.relative_halfwidth},
          {"seed", ds.spec.seed},
          {"targets", "loads_p_and_q"}}},
        {"base_objective_cost", ds.base_solution.objective_cost},
        {"entries", entries},
        {"rejected", rejected},
    };
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

SolvedDataset build_solved_dataset(const GridCase& base, const MutationSpec& spec, std::size_t n,
                                   const fs::path& dir, const BuildOptions& opts) {
    SolvedDataset ds = solve_dataset(base, spec, n, opts);
    write_dataset(ds, dir);
    return ds;
}

SolvedDataset load_dataset(const fs::path& dir) {
    if (!fs::exists(dir / "manifest.json")) throw ConfigError(dir.string() + " has no manifest.json");
    const json manifest = read_json(dir / "manifest.json");
    if (manifest.value("schema", "") != kDatasetSchema) {
        throw ParseError((dir / "manifest.json").string() + ": unsupported schema");
    }
    SolvedDataset ds;
    try {
        ds.decimals = manifest.at("decimals").get<int>();
        const json& m = manifest.at("mutation");
        ds.spec.distribution = m.at("distribution").get<std::string>() == "uniform" ? MutationDistribution::uniform
                                                                                     : MutationDistribution::profile;
        ds.spec.relative_halfwidth = m.at("relative_halfwidth").get<double>();
        ds.spec.seed = m.at("seed").get<std::uint64_t>();
        ds.base = parse_matpower(read_text(dir / "base.m"));
        ds.base_solution = solution_from_json(read_json(dir / "base_solution.json"));
        for (const auto& s : manifest.at("entries")) {
            const auto idx = s.get<std::uint64_t>();
            DatasetEntry e;
            e.scenario = idx;
            e.grid = parse_matpower(read_text(dir / "scenarios" / (stem(idx) + ".m")));
            e.solution = solution_from_json(read_json(dir / "solutions" / (stem(idx) + ".json")));
            ds.entries.push_back(std::move(e));
        }
        for (const auto& s : manifest.at("rejected")) {
            const auto idx = s.get<std::uint64_t>();
            const json r = read_json(dir / "rejected" / (stem(idx) + ".json"));
            ds.rejected.push_back({idx, r.value("reason", "")});
        }
    } catch (const json::exception& e) {
        throw ParseError((dir / "manifest.json").string() + ": " + e.what());
    }
    return ds;
}

std::vector<BenchItem> bench_items(const SolvedDataset& ds, const EmbeddingFormat& fmt) {
    std::vector<BenchItem> items;
    items.reserve(ds.entries.size());
    for (std::size_t i = 0; i < ds.entries.size(); ++i) {
        const auto& e = ds.entries[i];
        items.push_back({static_cast<int>(i), embed_grid(to_hetero(e.grid), fmt),
                         encode_solution(e.solution, fmt.decimals), e.solution});
    }
    return items;
}

// ---------------------------------------------------------------------------

void validate(const FinetuneConfig& cfg) {
    if (cfg.rank < 1) throw ConfigError("LoRA rank must be >= 1");
    if (!(cfg.alpha > 0.0)) throw ConfigError("LoRA alpha must be positive");
}

json to_json(const FinetuneConfig& cfg) {
    return {{"method", "lora"},
            {"rank", cfg.rank},
            {"alpha", cfg.alpha},
            {"scaling", cfg.alpha / cfg.rank},
            {"trainable", json::array({"A", "B"})},
            {"base_model", cfg.base_model},
            {"notes", cfg.notes}};
}

std::size_t export_finetune_jsonl(const SolvedDataset& ds, const FinetuneOptions& opts, std::ostream& out) {
    validate(opts.config);
    if (opts.examples_per_line < 1) throw ConfigError("examples_per_line must be >= 1");
    const auto items = bench_items(ds, opts.format);
    const std::size_t n = items.size();
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(opts.examples_per_line), n);
    for (std::size_t i = 0; i < n; ++i) {
        json messages = json::array({{{"role", "system"}, {"content", kSystemPrompt}}});
        // Earlier entries (cyclically) first; entry i is always the last pair.
        for (std::size_t j = k; j-- > 0;) {
            const auto& item = items[(i + n - j) % n];
            messages.push_back({{"role", "user"}, {"content", std::string(kExampleInputPrefix) + item.grid_text}});
            messages.push_back(
                {{"role", "assistant"}, {"content", std::string(kExampleOutputPrefix) + item.solution_text}});
        }
        const std::string line = json{{"messages", messages}}.dump();
        if (opts.max_line_chars > 0 && line.size() > opts.max_line_chars) {
            throw SizingError("fine-tuning line " + std::to_string(i) + " has " + std::to_string(line.size()) +
                              " chars, budget is " + std::to_string(opts.max_line_chars));
        }
        out << line << '\n';
    }
    return n;
}

fs::path export_finetune(const SolvedDataset& ds, const FinetuneOptions& opts, const fs::path& dir) {
    fs::create_directories(dir);
    const fs::path path = dir / ("finetune." + to_string(opts.format.kind) + ".jsonl");
    // Build in memory first so a sizing failure leaves no partial file behind.
    std::ostringstream buf;
    export_finetune_jsonl(ds, opts, buf);
    write_text(path, buf.str());
    json sidecar = to_json(opts.config);
    sidecar["schema"] = "gridprompt/finetune/v1";
    sidecar["format"] = to_string(opts.format.kind);
    sidecar["decimals"] = opts.format.decimals;
    sidecar["examples_per_line"] = opts.examples_per_line;
    sidecar["lines"] = ds.entries.size();
    sidecar["data"] = path.filename().string();
    write_text(dir / "finetune_config.json", sidecar.dump(2) + "\n");
    return path;
}

}  // namespace gridprompt
