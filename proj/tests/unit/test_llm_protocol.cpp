#include <doctest.h>

#include "gridprompt/embedding.hpp"
#include "gridprompt/errors.hpp"
#include "gridprompt/llm_protocol.hpp"
#include "gridprompt/scenario_gen.hpp"
#include "test_support.hpp"

using namespace gridprompt;
using nlohmann::json;

namespace {

std::vector<ContextPair> pairs(std::size_t n) {
    std::vector<ContextPair> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({"grid " + std::to_string(i), "solution " + std::to_string(i)});
    return out;
}

}  // namespace

TEST_CASE("system prompt text") {
    const std::string expected =
        "You are a power grid operator running an Optimal Power Flow simulation, and you need to return a "
        "JSON-formatted response based on the provided input JSON. The input is the description of the "
        "components of the grid, including the buses, generators, loads, lines, and external grid. The output "
        "is the solution to the optimal power flow problem. You will get a few examples of Input and Output "
        "JSON. You need to return the correct Output for the last given Input.";
    CHECK(kSystemPrompt == expected);
    CHECK(kSystemPrompt.size() == 460);
}

TEST_CASE("sequence layout") {
    SUBCASE("no context") {
        const PromptSequence seq = build_sequence({}, "Q");
        REQUIRE(seq.messages.size() == 2);
        CHECK(seq.messages[0] == ChatMessage{Role::system, kSystemPrompt});
        CHECK(seq.messages[1] == ChatMessage{Role::user, "Query Input JSON: Q"});
        CHECK(check_sequence(seq).empty());
    }
    SUBCASE("one pair") {
        const PromptSequence seq = build_sequence(pairs(1), "Q");
        REQUIRE(seq.messages.size() == 4);
        CHECK(seq.messages[1] == ChatMessage{Role::user, "Example Input JSON: grid 0"});
        CHECK(seq.messages[2] == ChatMessage{Role::assistant, "Example Output JSON: solution 0"});
        CHECK(seq.messages[3].role == Role::user);
    }
    SUBCASE("65 pairs") {
        const PromptSequence seq = build_sequence(pairs(65), "Q");
        CHECK(seq.messages.size() == 132);
        CHECK(check_sequence(seq).empty());
        std::size_t chars = 0;
        for (const auto& m : seq.messages) chars += m.content.size();
        CHECK(seq.total_chars() == chars);
    }
}

TEST_CASE("sequence checker catches structural faults") {
    PromptSequence seq = build_sequence(pairs(2), "Q");
    SUBCASE("swapped roles") {
        std::swap(seq.messages[1], seq.messages[2]);
        CHECK_FALSE(check_sequence(seq).empty());
    }
    SUBCASE("missing prefix") {
        seq.messages[3].content = "grid 1";
        CHECK_FALSE(check_sequence(seq).empty());
    }
    SUBCASE("dropped answer") {
        seq.messages.erase(seq.messages.begin() + 2);
        CHECK_FALSE(check_sequence(seq).empty());
    }
    SUBCASE("empty content") {
        seq.messages[4].content.clear();
        CHECK_FALSE(check_sequence(seq).empty());
    }
    SUBCASE("query is not last") {
        seq.messages.push_back({Role::assistant, "Example Output JSON: x"});
        seq.messages.push_back({Role::user, "Example Input JSON: y"});
        CHECK_FALSE(check_sequence(seq).empty());
    }
}

TEST_CASE("request body follows the chat-completions wire format") {
    EndpointConfig cfg;
    cfg.model = "some-model";
    cfg.max_output_tokens = 1000;
    const json body = json::parse(chat_request_body(build_sequence(pairs(1), "Q"), cfg));
    CHECK(body["model"] == "some-model");
    CHECK(body["temperature"] == 0.0);
    CHECK(body["max_tokens"] == 1000);
    REQUIRE(body["messages"].size() == 4);
    CHECK(body["messages"][0]["role"] == "system");
    CHECK(body["messages"][2]["role"] == "assistant");
    CHECK(body["messages"][3]["content"] == "Query Input JSON: Q");
}

TEST_CASE("completion extraction") {
    CHECK(extract_completion(R"({"choices":[{"message":{"role":"assistant","content":"hi"}}]})") == "hi");
    CHECK_THROWS_AS(extract_completion("<html>bad gateway</html>"), ProtocolError);
    CHECK_THROWS_AS(extract_completion(R"({"choices":[]})"), ProtocolError);
    CHECK_THROWS_AS(extract_completion(R"({"choices":[{"message":{"content":5}}]})"), ProtocolError);
}

TEST_CASE("backoff schedule") {
    EndpointConfig cfg;
    cfg.backoff_jitter = false;
    CHECK(backoff_delay_s(cfg, 0, 0.9) == 1.0);
    CHECK(backoff_delay_s(cfg, 1, 0.9) == 2.0);
    CHECK(backoff_delay_s(cfg, 3, 0.9) == 8.0);
    cfg.backoff_jitter = true;
    CHECK(backoff_delay_s(cfg, 2, 0.0) == 4.0);
    CHECK(backoff_delay_s(cfg, 2, 1.0) == 5.0);
}

TEST_CASE("endpoint config validation") {
    EndpointConfig cfg;
    CHECK_NOTHROW(validate(cfg));
    cfg.max_retries = -1;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
    cfg.max_retries = 0;
    cfg.timeout_s = 0.0;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
}

TEST_CASE("replay backends") {
    const GridCase base = testing::load_case("case9");
    MutationSpec spec;
    spec.seed = 5;
    const EmbeddingFormat fmt;
    std::vector<ContextPair> context;
    for (std::uint64_t i = 0; i < 5; ++i) {
        context.push_back({embed_grid(to_hetero(mutate(base, spec, i)), fmt), "answer " + std::to_string(i)});
    }

    SUBCASE("nearest context returns the closest example verbatim") {
        auto backend = replay_backend(ReplayMode::nearest_context);
        const PromptSequence seq = build_sequence(context, context[3].grid_text);
        CHECK(backend->complete({seq, std::nullopt}).text == "answer 3");
        CHECK_FALSE(backend->needs_reference());
    }
    SUBCASE("nearest context agrees with a brute-force distance search") {
        auto backend = replay_backend(ReplayMode::nearest_context);
        const std::string query = embed_grid(to_hetero(mutate(base, spec, 99)), fmt);
        const auto q = load_vector(query);
        std::size_t best = 0;
        double best_d = 1e300;
        for (std::size_t i = 0; i < context.size(); ++i) {
            const auto v = load_vector(context[i].grid_text);
            double d = 0;
            for (std::size_t k = 0; k < v.size(); ++k) d += (v[k] - q[k]) * (v[k] - q[k]);
            if (d < best_d) best_d = d, best = i;
        }
        const PromptSequence seq = build_sequence(context, query);
        CHECK(backend->complete({seq, std::nullopt}).text == context[best].solution_text);
    }
    SUBCASE("oracle echoes the reference and needs it") {
        auto backend = replay_backend(ReplayMode::oracle);
        CHECK(backend->needs_reference());
        const PromptSequence seq = build_sequence(context, context[0].grid_text);
        CHECK(backend->complete({seq, std::string("truth")}).text == "truth");
        CHECK_THROWS_AS(backend->complete({seq, std::nullopt}), ConfigError);
    }
    SUBCASE("corrupt answers contain no JSON") {
        auto backend = replay_backend(ReplayMode::corrupt);
        const PromptSequence seq = build_sequence(context, context[0].grid_text);
        CHECK_FALSE(parse_solution_doc(backend->complete({seq, std::nullopt}).text).valid());
    }
    SUBCASE("fixed answers with its text") {
        auto backend = replay_backend(ReplayMode::fixed, "constant");
        const PromptSequence seq = build_sequence(context, context[0].grid_text);
        CHECK(backend->complete({seq, std::nullopt}).text == "constant");
    }
    SUBCASE("mode names") {
        CHECK(replay_mode_from_string("nearest_context") == ReplayMode::nearest_context);
        CHECK(replay_mode_from_string("nominal") == ReplayMode::fixed);
        CHECK_THROWS_AS(replay_mode_from_string("psychic"), ConfigError);
    }
}
