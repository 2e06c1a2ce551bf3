#pragma once

// Local OpenAI-compatible chat endpoint for tests. Each POST to
// /v1/chat/completions is answered by a scripted function of the call number.

#include <atomic>
#include <chrono>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include <httplib.h>

namespace testing {

struct MockReply {
    int status = 200;
    std::string body;
    double delay_s = 0.0;
};

inline MockReply chat_reply(const std::string& content) {
    nlohmann::json doc = {{"id", "mock"},
                          {"object", "chat.completion"},
                          {"choices", {{{"index", 0},
                                        {"message", {{"role", "assistant"}, {"content", content}}},
                                        {"finish_reason", "stop"}}}}};
    return {200, doc.dump(), 0.0};
}

inline MockReply error_reply(int status) {
    return {status, R"({"error":{"message":"scripted failure"}})", 0.0};
}

class MockChatServer {
public:
    using Script = std::function<MockReply(int call, const std::string& body)>;

    explicit MockChatServer(Script script) : script_(std::move(script)) {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            const int call = calls_++;
            {
                std::lock_guard lock(mutex_);
                bodies_.push_back(req.body);
                auth_headers_.push_back(req.get_header_value("Authorization"));
            }
            const MockReply reply = script_(call, req.body);
            if (reply.delay_s > 0) std::this_thread::sleep_for(std::chrono::duration<double>(reply.delay_s));
            res.status = reply.status;
            res.set_content(reply.body, "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~MockChatServer() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    MockChatServer(const MockChatServer&) = delete;
    MockChatServer& operator=(const MockChatServer&) = delete;

    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
    int calls() const { return calls_; }

    std::vector<std::string> bodies() const {
        std::lock_guard lock(mutex_);
        return bodies_;
    }
    std::vector<std::string> auth_headers() const {
        std::lock_guard lock(mutex_);
        return auth_headers_;
    }

private:
    Script script_;
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
    std::atomic<int> calls_{0};
    mutable std::mutex mutex_;
    std::vector<std::string> bodies_;
    std::vector<std::string> auth_headers_;
};

}  // namespace testing
