#include <doctest.h>

#include <filesystem>
#include <map>
#include <sstream>

#include "gridprompt/dataset_export.hpp"
#include "gridprompt/errors.hpp"
#include "gridprompt/llm_protocol.hpp"
#include "test_support.hpp"

using namespace gridprompt;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = testing::read_file(e.path());
    }
    return files;
}

// Scenarios 2 and 5 get three times the load, which case9 cannot serve.
MutationSpec overload_some() {
    MutationSpec spec;
    spec.distribution = MutationDistribution::profile;
    spec.profile = [](const Load&, std::uint64_t index) {
        const double f = (index == 2 || index == 5) ? 3.0 : 1.0 + 0.01 * static_cast<double>(index);
        return LoadFactors{f, f};
    };
    return spec;
}

const SolvedDataset& dataset66() {
    static const SolvedDataset ds = [] {
        MutationSpec spec;
        spec.seed = 7;
        return solve_dataset(testing::load_case("case9"), spec, 66);
    }();
    return ds;
}

}  // namespace

TEST_CASE("infeasible scenarios are rejected and replaced in index order") {
    const SolvedDataset ds = solve_dataset(testing::load_case("case9"), overload_some(), 6);
    REQUIRE(ds.entries.size() == 6);
    REQUIRE(ds.rejected.size() == 2);
    CHECK(ds.rejected[0].scenario == 2);
    CHECK(ds.rejected[1].scenario == 5);
    CHECK(ds.rejected[0].reason.rfind("infeasible", 0) == 0);
    std::vector<std::uint64_t> used;
    for (const auto& e : ds.entries) used.push_back(e.scenario);
    CHECK(used == std::vector<std::uint64_t>{0, 1, 3, 4, 6, 7});
    for (const auto& e : ds.entries) CHECK(e.solution.feasible);
}

TEST_CASE("thread count does not change the dataset") {
    BuildOptions one, three;
    one.threads = 1;
    three.threads = 3;
    const GridCase base = testing::load_case("case9");
    const SolvedDataset a = solve_dataset(base, overload_some(), 5, one);
    const SolvedDataset b = solve_dataset(base, overload_some(), 5, three);
    REQUIRE(a.entries.size() == b.entries.size());
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        CHECK(a.entries[i].scenario == b.entries[i].scenario);
        CHECK(solution_to_json(a.entries[i].solution) == solution_to_json(b.entries[i].solution));
    }
}

TEST_CASE("infeasible base case aborts") {
    GridCase base = testing::load_case("case9");
    for (auto& l : base.loads) l.p_mw *= 3.0;
    CHECK_THROWS_AS(solve_dataset(base, MutationSpec{}, 3), SolverError);
}

TEST_CASE("dataset directory layout, determinism and reload") {
    const auto& ds = dataset66();
    const fs::path a = testing::scratch_dir("ds_a");
    const fs::path b = testing::scratch_dir("ds_b");
    write_dataset(ds, a);
    write_dataset(ds, b);
    const auto files = snapshot(a);
    CHECK(files == snapshot(b));

    CHECK(files.count("manifest.json"));
    CHECK(files.count("base.m"));
    CHECK(files.count("base_solution.json"));
    const json manifest = json::parse(files.at("manifest.json"));
    CHECK(manifest["schema"] == kDatasetSchema);
    CHECK(manifest["n"] == 66);
    CHECK(manifest["mutation"]["seed"] == 7);
    CHECK(manifest["entries"].size() == 66);
    const auto first = std::to_string(manifest["entries"][0].get<int>());
    CHECK(files.count("scenarios/" + first + ".m"));
    CHECK(files.count("solutions/" + first + ".json"));
    CHECK(files.count("embeddings/" + first + ".graph.json"));
    CHECK(files.count("embeddings/" + first + ".table.json"));

    // Rewriting into an existing dataset directory gives the same bytes again.
    write_dataset(ds, a);
    CHECK(snapshot(a) == files);

    const SolvedDataset back = load_dataset(a);
    REQUIRE(back.entries.size() == ds.entries.size());
    CHECK(back.base == ds.base);
    for (std::size_t i = 0; i < ds.entries.size(); ++i) {
        CHECK(back.entries[i].grid == ds.entries[i].grid);
        CHECK(solution_to_json(back.entries[i].solution) == solution_to_json(ds.entries[i].solution));
    }
    CHECK(back.spec.seed == 7);
    CHECK(back.spec.relative_halfwidth == 0.2);
}

TEST_CASE("writing refuses to clobber an unrelated directory") {
    const fs::path dir = testing::scratch_dir("ds_foreign");
    std::ofstream(dir / "notes.txt") << "keep me";
    CHECK_THROWS_AS(write_dataset(dataset66(), dir), ConfigError);
    CHECK_THROWS_AS(load_dataset(dir), ConfigError);
}

TEST_CASE("fine-tuning export") {
    const auto& ds = dataset66();
    FinetuneOptions opts;
    std::ostringstream out;
    CHECK(export_finetune_jsonl(ds, opts, out) == 66);

    std::istringstream in(out.str());
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        const json doc = json::parse(line);
        const json& m = doc["messages"];
        REQUIRE(m.size() == 3);
        CHECK(m[0]["role"] == "system");
        CHECK(m[0]["content"] == kSystemPrompt);
        CHECK(m[1]["role"] == "user");
        CHECK(m[1]["content"].get<std::string>().rfind("Example Input JSON: ", 0) == 0);
        CHECK(m[2]["role"] == "assistant");
        const std::string answer = m[2]["content"].get<std::string>().substr(kExampleOutputPrefix.size());
        const SolutionParse parsed = parse_solution_doc(answer);
        REQUIRE(parsed.valid());
        const MseTriple mse = score(*parsed.doc, ds.entries[n].solution, ds.base.base_mva);
        // Rounding to 4 decimals bounds every squared error by (0.5e-4 scaled)^2.
        CHECK(mse.gen <= 1e-12);
        CHECK(mse.slack <= 1e-12);
        CHECK(mse.bus <= 1e-9);
        ++n;
    }
    CHECK(n == 66);
}

TEST_CASE("fine-tuning export options") {
    const auto& ds = dataset66();
    SUBCASE("several examples per line, the entry's own pair last") {
        FinetuneOptions opts;
        opts.examples_per_line = 3;
        std::ostringstream out;
        export_finetune_jsonl(ds, opts, out);
        const json first = json::parse(out.str().substr(0, out.str().find('\n')));
        CHECK(first["messages"].size() == 7);
        const auto items = bench_items(ds, opts.format);
        CHECK(first["messages"][5]["content"] == std::string(kExampleInputPrefix) + items[0].grid_text);
        CHECK(first["messages"][1]["content"] == std::string(kExampleInputPrefix) + items[64].grid_text);
    }
    SUBCASE("line budget") {
        FinetuneOptions opts;
        opts.max_line_chars = 500;
        std::ostringstream out;
        CHECK_THROWS_AS(export_finetune_jsonl(ds, opts, out), SizingError);
    }
    SUBCASE("invalid LoRA settings") {
        FinetuneOptions opts;
        opts.config.rank = 0;
        std::ostringstream out;
        CHECK_THROWS_AS(export_finetune_jsonl(ds, opts, out), ConfigError);
    }
    SUBCASE("files and sidecar") {
        const fs::path dir = testing::scratch_dir("ft");
        FinetuneOptions opts;
        opts.format.kind = EmbeddingKind::table;
        const fs::path path = export_finetune(ds, opts, dir);
        CHECK(path.filename() == "finetune.table.jsonl");
        const json sidecar = json::parse(testing::read_file(dir / "finetune_config.json"));
        CHECK(sidecar["rank"] == 8);
        CHECK(sidecar["alpha"] == 16.0);
        CHECK(sidecar["scaling"] == 2.0);
        CHECK(sidecar["lines"] == 66);
    }
}
