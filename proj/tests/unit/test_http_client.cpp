#include <doctest.h>

#include <chrono>
#include <cstdlib>

#include "gridprompt/errors.hpp"
#include "gridprompt/llm_protocol.hpp"
#include "mock_chat_server.hpp"

using namespace gridprompt;
using nlohmann::json;
using testing::MockChatServer;
using testing::MockReply;

namespace {

EndpointConfig fast_config(const MockChatServer& server, int retries) {
    EndpointConfig cfg;
    cfg.base_url = server.base_url();
    cfg.model = "mock-model";
    cfg.max_retries = retries;
    cfg.timeout_s = 5.0;
    cfg.backoff_base_s = 0.01;
    cfg.api_key_env = "GRIDPROMPT_TEST_TOKEN";
    return cfg;
}

PromptSequence sample_sequence() { return build_sequence({{"g", "s"}}, "q"); }

}  // namespace

TEST_CASE("success path returns the first choice and sends a bearer token") {
    ::setenv("GRIDPROMPT_TEST_TOKEN", "sk-test-123", 1);
    MockChatServer server([](int, const std::string&) { return testing::chat_reply("the answer"); });
    const CompletionResult r = complete(sample_sequence(), fast_config(server, 3));
    CHECK(r.text == "the answer");
    CHECK(r.attempts == 1);
    CHECK(r.retries == 0);
    CHECK(server.calls() == 1);
    CHECK(server.auth_headers().at(0) == "Bearer sk-test-123");
    const json body = json::parse(server.bodies().at(0));
    CHECK(body["model"] == "mock-model");
    CHECK(body["messages"].size() == 4);
    ::unsetenv("GRIDPROMPT_TEST_TOKEN");
}

TEST_CASE("no token in the environment sends no authorization header") {
    ::unsetenv("GRIDPROMPT_TEST_TOKEN");
    MockChatServer server([](int, const std::string&) { return testing::chat_reply("ok"); });
    complete(sample_sequence(), fast_config(server, 0));
    CHECK(server.auth_headers().at(0).empty());
}

TEST_CASE("identical requests against a deterministic server give identical answers") {
    MockChatServer server([](int, const std::string& body) { return testing::chat_reply(std::to_string(body.size())); });
    const PromptSequence seq = sample_sequence();
    const PromptSequence copy = seq;
    const auto a = complete(seq, fast_config(server, 0));
    const auto b = complete(seq, fast_config(server, 0));
    CHECK(a.text == b.text);
    CHECK(seq == copy);
}

TEST_CASE("429 twice then success records two retries") {
    MockChatServer server([](int call, const std::string&) {
        return call < 2 ? testing::error_reply(429) : testing::chat_reply("finally");
    });
    const CompletionResult r = complete(sample_sequence(), fast_config(server, 3));
    CHECK(r.text == "finally");
    CHECK(r.retries == 2);
    CHECK(r.attempts == 3);
    CHECK(server.calls() == 3);
}

TEST_CASE("persistent 500 exhausts the retries") {
    MockChatServer server([](int, const std::string&) { return testing::error_reply(500); });
    CHECK_THROWS_AS(complete(sample_sequence(), fast_config(server, 3)), TransportError);
    CHECK(server.calls() == 4);
}

TEST_CASE("401 fails at once without retrying") {
    MockChatServer server([](int, const std::string&) { return testing::error_reply(401); });
    CHECK_THROWS_AS(complete(sample_sequence(), fast_config(server, 3)), AuthError);
    CHECK(server.calls() == 1);
}

TEST_CASE("non-JSON reply is a protocol error and is not retried") {
    MockChatServer server([](int, const std::string&) { return MockReply{200, "<html>gateway</html>", 0.0}; });
    CHECK_THROWS_AS(complete(sample_sequence(), fast_config(server, 3)), ProtocolError);
    CHECK(server.calls() == 1);
}

TEST_CASE("other 4xx is a protocol error") {
    MockChatServer server([](int, const std::string&) { return testing::error_reply(400); });
    CHECK_THROWS_AS(complete(sample_sequence(), fast_config(server, 3)), ProtocolError);
    CHECK(server.calls() == 1);
}

TEST_CASE("a slow reply counts as a timeout and is retried") {
    MockChatServer server([](int call, const std::string&) {
        MockReply r = testing::chat_reply("late but fine");
        if (call == 0) r.delay_s = 0.6;
        return r;
    });
    EndpointConfig cfg = fast_config(server, 2);
    cfg.timeout_s = 0.2;
    const CompletionResult r = complete(sample_sequence(), cfg);
    CHECK(r.text == "late but fine");
    CHECK(r.retries == 1);
}

TEST_CASE("backoff delays grow between attempts") {
    MockChatServer server([](int, const std::string&) { return testing::error_reply(503); });
    EndpointConfig cfg = fast_config(server, 2);
    cfg.backoff_base_s = 0.1;
    cfg.backoff_jitter = false;
    const auto start = std::chrono::steady_clock::now();
    CHECK_THROWS_AS(complete(sample_sequence(), cfg), TransportError);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(elapsed >= 0.3);  // 0.1 + 0.2
    CHECK(server.calls() == 3);
}

TEST_CASE("unreachable endpoint is a transport error") {
    EndpointConfig cfg;
    cfg.base_url = "http://127.0.0.1:1/v1";
    cfg.max_retries = 1;
    cfg.timeout_s = 1.0;
    cfg.backoff_base_s = 0.01;
    CHECK_THROWS_AS(complete(sample_sequence(), cfg), TransportError);
}

TEST_CASE("http backend wraps the client") {
    MockChatServer server([](int, const std::string&) { return testing::chat_reply("via backend"); });
    HttpChatBackend backend(fast_config(server, 0));
    const PromptSequence seq = sample_sequence();
    CHECK(backend.complete({seq, std::nullopt}).text == "via backend");
    CHECK(backend.describe().find(server.base_url()) != std::string::npos);
}
