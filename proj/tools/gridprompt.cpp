// gridprompt: command-line front end for the scenario -> solve -> prompt -> score pipeline.
//
// stdout carries only JSON payloads; everything meant for humans goes to stderr.
// Exit codes: 0 ok, 1 error, 2 infeasible (solve) or no valid trial (bench).

#include <CLI11.hpp>

#include <filesystem>
#include <functional>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridprompt/dataset_export.hpp"
#include "gridprompt/embedding.hpp"
#include "gridprompt/errors.hpp"
#include "gridprompt/evaluation.hpp"
#include "gridprompt/llm_protocol.hpp"
#include "gridprompt/matpower_io.hpp"
#include "gridprompt/run_config.hpp"
#include "gridprompt/solvers.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gridprompt;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitInfeasible = 2;

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw GridError("cannot write " + path.string());
    out << text;
}

// Every subcommand starts from the config file (if any) and then applies the
// flags that were actually given on the command line.
struct Overrides {
    std::vector<std::function<void(RunConfig&)>> apply;

    template <typename T, typename Fn>
    void bind(CLI::App* app, const std::string& name, T& holder, const std::string& help, Fn setter) {
        CLI::Option* opt = app->add_option(name, holder, help);
        apply.push_back([opt, &holder, setter](RunConfig& cfg) {
            if (opt->count() > 0) setter(cfg, holder);
        });
    }

    RunConfig resolve(const std::string& config_path) const {
        RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
        for (const auto& fn : apply) fn(cfg);
        validate(cfg);
        return cfg;
    }
};

int run_solve(const std::string& case_path, bool pf, int decimals) {
    const GridCase grid = load_matpower_file(case_path);
    const OpfSolution sol = pf ? solution_from_pf(grid, solve_pf(grid)) : solve_opf(grid);
    json doc = json::parse(encode_solution(sol, decimals));
    doc["feasible"] = sol.feasible;
    doc["mode"] = pf ? "pf" : "opf";
    if (!pf) doc["objective_cost"] = sol.objective_cost;
    std::cout << doc.dump() << '\n';
    if (!sol.feasible) {
        std::cerr << "infeasible: " << sol.diagnostics << '\n';
        return kExitInfeasible;
    }
    return kExitOk;
}

int run_gen(const std::string& case_path, const RunConfig& cfg) {
    if (cfg.out.empty()) throw ConfigError("gen needs an output directory (--out)");
    const GridCase base = load_matpower_file(case_path);
    BuildOptions opts;
    opts.decimals = cfg.embedding.decimals;
    opts.threads = cfg.threads;
    std::cerr << "solving " << cfg.n << " scenarios of " << base.name << " ...\n";
    const SolvedDataset ds = build_solved_dataset(base, cfg.mutation, cfg.n, cfg.out, opts);
    json rejected = json::array();
    for (const auto& r : ds.rejected) rejected.push_back(r.scenario);
    std::cout << json{{"out", cfg.out}, {"entries", ds.entries.size()}, {"rejected", rejected}}.dump() << '\n';
    return kExitOk;
}

int run_bench(const std::string& dataset_dir, RunConfig cfg) {
    const SolvedDataset ds = load_dataset(dataset_dir);
    if (cfg.out.empty()) cfg.out = (fs::path(dataset_dir) / ("bench-" + to_string(cfg.embedding.kind))).string();

    std::unique_ptr<ChatBackend> backend;
    if (cfg.replay) {
        const ReplayMode mode = replay_mode_from_string(*cfg.replay);
        backend = replay_backend(mode, mode == ReplayMode::fixed
                                           ? encode_solution(ds.base_solution, cfg.embedding.decimals)
                                           : std::string());
    } else {
        backend = std::make_unique<HttpChatBackend>(cfg.endpoint);
    }

    json echo = to_json(cfg);
    echo["dataset"]["path"] = dataset_dir;
    echo["dataset"]["entries"] = ds.entries.size();
    echo["backend"] = backend->describe();

    fs::create_directories(cfg.out);
    const fs::path log_path = fs::path(cfg.out) / "trials.jsonl";
    std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
    if (!log) throw GridError("cannot write " + log_path.string());

    const auto items = bench_items(ds, cfg.embedding);
    std::cerr << "running " << cfg.bench.trials << " trials (" << cfg.bench.context_size << " context pairs, "
              << backend->describe() << ")\n";
    const EvalReport report = run_benchmark(items, ds.base.base_mva, *backend, cfg.bench, echo, &log);
    log.close();

    const std::string text = report_to_json(report).dump(2);
    write_file(fs::path(cfg.out) / "report.json", text + "\n");
    std::cout << text << '\n';
    std::cerr << "valid " << report.n_valid << "/" << report.n_trials << "; log " << log_path.string() << '\n';
    return report.n_valid > 0 ? kExitOk : kExitInfeasible;
}

int run_export(const std::string& dataset_dir, const RunConfig& cfg) {
    const SolvedDataset ds = load_dataset(dataset_dir);
    FinetuneOptions opts;
    opts.format = cfg.embedding;
    opts.examples_per_line = cfg.examples_per_line;
    opts.max_line_chars = cfg.max_line_chars;
    opts.config = cfg.finetune;
    const fs::path out = cfg.out.empty() ? fs::path(dataset_dir) : fs::path(cfg.out);
    const fs::path path = export_finetune(ds, opts, out);
    std::cout << json{{"jsonl", path.string()},
                      {"config", (out / "finetune_config.json").string()},
                      {"lines", ds.entries.size()}}
                     .dump()
              << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Power-grid OPF scenarios, LLM prompting and scoring"};
    app.require_subcommand(1);

    std::string config_path, case_path, dataset_dir;
    Overrides over;

    // solve
    bool opf = false, pf = false;
    int solve_decimals = 6;
    CLI::App* solve = app.add_subcommand("solve", "Solve a MATPOWER case and print the solution JSON");
    solve->add_option("case", case_path, "MATPOWER .m file")->required();
    auto* opf_flag = solve->add_flag("--opf", opf, "Optimal power flow (default)");
    solve->add_flag("--pf", pf, "Plain power flow at the case's dispatch")->excludes(opf_flag);
    solve->add_option("--decimals", solve_decimals, "Rounding of printed values (-1 = full precision)");

    // shared option holders
    std::size_t n = 0;
    std::uint64_t seed = 0, bench_seed = 0;
    double halfwidth = 0.0, temperature = 0.0, timeout_s = 0.0, alpha = 0.0;
    int threads = 0, decimals = 0, max_retries = 0, trials = 0, context = 0, concurrency = 0;
    int examples_per_line = 0, rank = 0;
    std::size_t max_prompt_chars = 0, max_line_chars = 0;
    std::string format, out, endpoint, model, api_key_env, replay, base_model;

    CLI::App* gen = app.add_subcommand("gen", "Generate a solved scenario dataset");
    gen->add_option("case", case_path, "Base MATPOWER .m file")->required();
    gen->add_option("--config", config_path, "RunConfig JSON file");
    over.bind(gen, "--n", n, "Number of solved scenarios", [](RunConfig& c, std::size_t v) { c.n = v; });
    over.bind(gen, "--seed", seed, "Mutation seed", [](RunConfig& c, std::uint64_t v) { c.mutation.seed = v; });
    over.bind(gen, "--halfwidth", halfwidth, "Relative load variation h (loads scaled by U[1-h, 1+h])",
              [](RunConfig& c, double v) { c.mutation.relative_halfwidth = v; });
    over.bind(gen, "--threads", threads, "Solver threads (0 = all cores)", [](RunConfig& c, int v) { c.threads = v; });
    over.bind(gen, "--decimals", decimals, "Rounding of stored embeddings",
              [](RunConfig& c, int v) { c.embedding.decimals = v; });
    over.bind(gen, "--out", out, "Dataset directory", [](RunConfig& c, const std::string& v) { c.out = v; });

    CLI::App* bench = app.add_subcommand("bench", "Run in-context OPF trials against an endpoint or replay backend");
    bench->add_option("dataset", dataset_dir, "Dataset directory")->required();
    bench->add_option("--config", config_path, "RunConfig JSON file");
    over.bind(bench, "--format", format, "graph or table",
              [](RunConfig& c, const std::string& v) { c.embedding.kind = embedding_kind_from_string(v); });
    over.bind(bench, "--decimals", decimals, "Rounding in prompts", [](RunConfig& c, int v) { c.embedding.decimals = v; });
    over.bind(bench, "--endpoint", endpoint, "Base URL of an OpenAI-compatible API",
              [](RunConfig& c, const std::string& v) { c.endpoint.base_url = v; c.replay.reset(); });
    over.bind(bench, "--model", model, "Model name", [](RunConfig& c, const std::string& v) { c.endpoint.model = v; });
    over.bind(bench, "--api-key-env", api_key_env, "Environment variable holding the bearer token",
              [](RunConfig& c, const std::string& v) { c.endpoint.api_key_env = v; });
    over.bind(bench, "--temperature", temperature, "Sampling temperature",
              [](RunConfig& c, double v) { c.endpoint.temperature = v; });
    over.bind(bench, "--timeout", timeout_s, "Request timeout in seconds",
              [](RunConfig& c, double v) { c.endpoint.timeout_s = v; });
    over.bind(bench, "--max-retries", max_retries, "Retries on 429/5xx/timeout",
              [](RunConfig& c, int v) { c.endpoint.max_retries = v; });
    over.bind(bench, "--replay", replay, "Offline backend: oracle, nearest_context, corrupt, nominal",
              [](RunConfig& c, const std::string& v) { c.replay = v; });
    over.bind(bench, "--trials", trials, "Number of trials", [](RunConfig& c, int v) { c.bench.trials = v; });
    over.bind(bench, "--context", context, "Context pairs per trial",
              [](RunConfig& c, int v) { c.bench.context_size = v; });
    over.bind(bench, "--concurrency", concurrency, "Requests in flight",
              [](RunConfig& c, int v) { c.bench.concurrency = v; });
    over.bind(bench, "--seed", bench_seed, "Trial partition seed",
              [](RunConfig& c, std::uint64_t v) { c.bench.seed = v; });
    over.bind(bench, "--max-prompt-chars", max_prompt_chars, "Reject prompts longer than this (0 = no limit)",
              [](RunConfig& c, std::size_t v) { c.bench.max_prompt_chars = v; });
    over.bind(bench, "--out", out, "Output directory for report.json and trials.jsonl",
              [](RunConfig& c, const std::string& v) { c.out = v; });

    CLI::App* exp = app.add_subcommand("export-ft", "Export chat-format fine-tuning JSONL");
    exp->add_option("dataset", dataset_dir, "Dataset directory")->required();
    exp->add_option("--config", config_path, "RunConfig JSON file");
    over.bind(exp, "--format", format, "graph or table",
              [](RunConfig& c, const std::string& v) { c.embedding.kind = embedding_kind_from_string(v); });
    over.bind(exp, "--decimals", decimals, "Rounding in samples", [](RunConfig& c, int v) { c.embedding.decimals = v; });
    over.bind(exp, "--examples-per-line", examples_per_line, "Example pairs per training line",
              [](RunConfig& c, int v) { c.examples_per_line = v; });
    over.bind(exp, "--max-line-chars", max_line_chars, "Fail if a line is longer (0 = no limit)",
              [](RunConfig& c, std::size_t v) { c.max_line_chars = v; });
    over.bind(exp, "--rank", rank, "LoRA rank r", [](RunConfig& c, int v) { c.finetune.rank = v; });
    over.bind(exp, "--alpha", alpha, "LoRA scaling alpha", [](RunConfig& c, double v) { c.finetune.alpha = v; });
    over.bind(exp, "--base-model", base_model, "Base model name recorded in the sidecar",
              [](RunConfig& c, const std::string& v) { c.finetune.base_model = v; });
    over.bind(exp, "--out", out, "Output directory (default: the dataset)",
              [](RunConfig& c, const std::string& v) { c.out = v; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitError;
    }

    try {
        if (*solve) return run_solve(case_path, pf, solve_decimals);
        const RunConfig cfg = over.resolve(config_path);
        if (*gen) return run_gen(case_path, cfg);
        if (*bench) return run_bench(dataset_dir, cfg);
        if (*exp) return run_export(dataset_dir, cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitError;
    }
    return kExitError;
}
