#include <doctest.h>

#include <cmath>

#include "gridprompt/embedding.hpp"
#include "gridprompt/errors.hpp"
#include "gridprompt/scenario_gen.hpp"
#include "test_support.hpp"

using namespace gridprompt;
using nlohmann::json;

namespace {

HeteroGrid rounded(HeteroGrid h, int decimals) {
    for (auto& [type, records] : h.nodes) {
        for (auto& r : records) {
            for (auto& [key, value] : r) value = round_feature(value, decimals);
        }
    }
    h.base_mva = round_feature(h.base_mva, decimals);
    return h;
}

OpfSolution small_solution() {
    OpfSolution s;
    s.gen = {{1, 120.123456, -5.5}, {2, 80.0, 3.25}};
    s.slack = {0, 71.954701, 24.0689};
    s.bus = {{0, 1.04, 0.0}, {1, 1.025, 9.280007}, {2, 0.99, -2.216788}};
    return s;
}

}  // namespace

TEST_CASE("rounding helper") {
    CHECK(round_to(1.23456, 4) == 1.2346);
    CHECK(round_to(-0.00001, 4) == 0.0);
    CHECK_FALSE(std::signbit(round_to(-0.00001, 4)));
    CHECK(round_to(1.23456789, kExactDecimals) == 1.23456789);
    CHECK(round_feature(0.00834, 4) == 0.00834);
    CHECK(round_feature(0.000123456, 4) == 0.0001235);
    CHECK(round_feature(123.456789, 4) == 123.4568);
    CHECK(round_feature(0.0, 4) == 0.0);
}

TEST_CASE("fixtures round-trip through both embedding kinds") {
    for (const char* name : {"case9", "case30"}) {
        const HeteroGrid h = to_hetero(testing::load_case(name));
        for (EmbeddingKind kind : {EmbeddingKind::graph, EmbeddingKind::table}) {
            const std::string text = embed_grid(h, {kind, 4});
            const HeteroGrid back = parse_grid(text);
            CHECK(back == h);
            CHECK(embed_grid(back, {kind, 4}) == text);
        }
    }
}

TEST_CASE("mutated grids round-trip up to the declared rounding") {
    const GridCase base = testing::load_case("case9");
    MutationSpec spec;
    spec.seed = 11;
    for (std::uint64_t i = 0; i < 20; ++i) {
        const HeteroGrid h = to_hetero(mutate(base, spec, i));
        for (EmbeddingKind kind : {EmbeddingKind::graph, EmbeddingKind::table}) {
            const std::string text = embed_grid(h, {kind, 4});
            CHECK(parse_grid(text) == rounded(h, 4));
        }
        // Unrounded text makes the round trip exact.
        CHECK(parse_grid(embed_grid(h, {EmbeddingKind::graph, kExactDecimals})) == h);
    }
}

TEST_CASE("embedding layout") {
    const HeteroGrid h = to_hetero(testing::load_case("case9"));
    const json graph = json::parse(embed_grid(h, {EmbeddingKind::graph, 4}));
    CHECK(graph["schema"] == kGridSchema);
    CHECK(graph["kind"] == "graph");
    CHECK(graph["nodes"]["bus"].size() == 9);
    CHECK(graph["nodes"]["slack"].size() == 1);
    CHECK(graph["edges"].size() == h.edges.size());
    CHECK(graph["edges"][0] == json::array({"load", 0, "bus", 4}));
    CHECK(graph["meta"]["base_mva"] == 100.0);
    CHECK_FALSE(graph["meta"].contains("costs"));
    CHECK(graph["nodes"]["bus"][0]["kind"].is_number_integer());

    const json table = json::parse(embed_grid(h, {EmbeddingKind::table, 4}));
    CHECK(table["kind"] == "table");
    CHECK_FALSE(table.contains("edges"));
    CHECK(table["line"].size() == 9);

    CHECK(embed_grid(h, {EmbeddingKind::table, 4}).size() < embed_grid(h, {EmbeddingKind::graph, 4}).size());
}

TEST_CASE("grid parsing errors name the offending path") {
    const HeteroGrid h = to_hetero(testing::load_case("case9"));
    json doc = json::parse(embed_grid(h, {EmbeddingKind::table, 4}));

    SUBCASE("not JSON") { CHECK_THROWS_AS(parse_grid("{nope"), ParseError); }
    SUBCASE("wrong schema") {
        doc["schema"] = "other/v9";
        CHECK_THROWS_AS(parse_grid(doc.dump()), ParseError);
    }
    SUBCASE("missing feature") {
        doc["load"][1].erase("q_mvar");
        CHECK_THROWS_WITH_AS(parse_grid(doc.dump()), doctest::Contains("load[1].q_mvar"), ParseError);
    }
    SUBCASE("dangling bus") {
        doc["gen"][0]["bus"] = 42;
        CHECK_THROWS_WITH_AS(parse_grid(doc.dump()), doctest::Contains("gen[0].bus"), ParseError);
    }
    SUBCASE("string where a number belongs") {
        doc["bus"][0]["vm_max"] = "1.1";
        CHECK_THROWS_AS(parse_grid(doc.dump()), ParseError);
    }
}

TEST_CASE("unknown embedding kind is a configuration error") {
    CHECK(embedding_kind_from_string("table") == EmbeddingKind::table);
    CHECK_THROWS_AS(embedding_kind_from_string("xml"), ConfigError);
    CHECK_THROWS_AS(embed_grid(HeteroGrid{}, {EmbeddingKind::graph, 0}), ConfigError);
}

TEST_CASE("solution text round-trips") {
    const OpfSolution s = small_solution();
    const std::string text = encode_solution(s, 4);
    CHECK(text ==
          R"({"bus":[{"id":0,"va_deg":0.0,"vm_pu":1.04},{"id":1,"va_deg":9.28,"vm_pu":1.025},)"
          R"({"id":2,"va_deg":-2.2168,"vm_pu":0.99}],"gen":[{"id":1,"p_mw":120.1235,"q_mvar":-5.5},)"
          R"({"id":2,"p_mw":80.0,"q_mvar":3.25}],"slack":[{"id":0,"p_mw":71.9547,"q_mvar":24.0689}]})");
    const SolutionParse parsed = parse_solution_doc(text);
    REQUIRE(parsed.valid());
    CHECK(parsed.doc->gen.size() == 2);
    CHECK(parsed.doc->slack[0].p_mw == 71.9547);
    CHECK(parsed.doc->bus[2].va_deg == -2.2168);

    const OpfSolution exact = solution_from_json(solution_to_json(s));
    CHECK(exact.gen[0].p_mw == s.gen[0].p_mw);
    CHECK(exact.bus[1].va_deg == s.bus[1].va_deg);
}

TEST_CASE("lenient extraction from chatty responses") {
    const std::string body = encode_solution(small_solution(), 4);

    SUBCASE("prose and code fences around the JSON") {
        const auto parsed = parse_solution_doc("Sure! Here is the solution:\n```json\n" + body + "\n```\nDone.");
        CHECK(parsed.valid());
    }
    SUBCASE("brace inside a string does not confuse the scanner") {
        const auto parsed = parse_solution_doc(R"(Note {this is not json}. )" + body);
        CHECK(parsed.valid());
    }
    SUBCASE("slack given as a single object") {
        json doc = json::parse(body);
        doc["slack"] = doc["slack"][0];
        CHECK(parse_solution_doc(doc.dump()).valid());
    }
    SUBCASE("no JSON at all") {
        const auto parsed = parse_solution_doc("I would start by computing the admittance matrix.");
        CHECK_FALSE(parsed.valid());
        CHECK(parsed.reason == "no JSON object found");
    }
    SUBCASE("truncated JSON") {
        const auto parsed = parse_solution_doc(body.substr(0, body.size() - 5));
        CHECK_FALSE(parsed.valid());
    }
    SUBCASE("missing section") {
        json doc = json::parse(body);
        doc.erase("bus");
        const auto parsed = parse_solution_doc(doc.dump());
        CHECK_FALSE(parsed.valid());
        CHECK(parsed.reason.rfind("missing or invalid values", 0) == 0);
    }
    SUBCASE("non-numeric value") {
        json doc = json::parse(body);
        doc["gen"][1]["p_mw"] = "eighty";
        CHECK_FALSE(parse_solution_doc(doc.dump()).valid());
    }
    SUBCASE("null value") {
        json doc = json::parse(body);
        doc["bus"][0]["vm_pu"] = nullptr;
        CHECK_FALSE(parse_solution_doc(doc.dump()).valid());
    }
    SUBCASE("fractional id") {
        json doc = json::parse(body);
        doc["bus"][0]["id"] = 0.5;
        CHECK_FALSE(parse_solution_doc(doc.dump()).valid());
    }
}

TEST_CASE("find_json_object skips unparseable brace groups") {
    const auto span = find_json_object(R"(a {b} c {"x": "}"} d)");
    REQUIRE(span.has_value());
    CHECK(span->first == 8);
    CHECK(span->second == 18);
    CHECK_FALSE(find_json_object("no braces").has_value());
}
