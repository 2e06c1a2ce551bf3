#include "gridprompt/llm_protocol.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>

#include "gridprompt/embedding.hpp"
#include "gridprompt/errors.hpp"

// After Eigen: httplib pulls in <resolv.h>, whose _res macro clashes with Eigen.
#include <httplib.h>

namespace gridprompt {

using nlohmann::json;

const std::string kSystemPrompt =
    "You are a power grid operator running an Optimal Power Flow simulation, and you need to "
    "return a JSON-formatted response based on the provided input JSON. The input is the "
    "description of the components of the grid, including the buses, generators, loads, lines, "
    "and external grid. The output is the solution to the optimal power flow problem. You will get "
    "a few examples of Input and Output JSON. You need to return the correct Output for the last "
    "given Input.";

std::string to_string(Role role) {
    switch (role) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "user";
}

std::size_t PromptSequence::total_chars() const {
    std::size_t total = 0;
    for (const auto& m : messages) total += m.content.size();
    return total;
}

PromptSequence build_sequence(const std::vector<ContextPair>& context, const std::string& query_grid) {
    PromptSequence seq;
    seq.messages.reserve(2 * context.size() + 2);
    seq.messages.push_back({Role::system, kSystemPrompt});
    for (const auto& pair : context) {
        seq.messages.push_back({Role::user, std::string(kExampleInputPrefix) + pair.grid_text});
        seq.messages.push_back({Role::assistant, std::string(kExampleOutputPrefix) + pair.solution_text});
    }
    seq.messages.push_back({Role::user, std::string(kQueryInputPrefix) + query_grid});
    return seq;
}

std::string check_sequence(const PromptSequence& seq) {
    const auto& m = seq.messages;
    if (m.size() < 2) return "sequence needs at least a system prompt and a query";
    if (m.size() % 2 != 0) return "message count " + std::to_string(m.size()) + " is odd";
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (m[i].content.empty()) return "message " + std::to_string(i) + " is empty";
    }
    if (m.front().role != Role::system) return "first message is not the system prompt";
    for (std::size_t i = 1; i + 1 < m.size(); i += 2) {
        if (m[i].role != Role::user || !m[i].content.starts_with(kExampleInputPrefix)) {
            return "message " + std::to_string(i) + " is not an example input";
        }
        if (m[i + 1].role != Role::assistant || !m[i + 1].content.starts_with(kExampleOutputPrefix)) {
            return "message " + std::to_string(i + 1) + " is not an example output";
        }
    }
    if (m.back().role != Role::user || !m.back().content.starts_with(kQueryInputPrefix)) {
        return "last message is not the query";
    }
    return {};
}

// ---------------------------------------------------------------------------

void validate(const EndpointConfig& cfg) {
    if (cfg.max_retries < 0) throw ConfigError("max_retries must be >= 0");
    if (!(cfg.timeout_s > 0.0)) throw ConfigError("timeout must be positive");
    if (cfg.base_url.empty()) throw ConfigError("base_url is empty");
    if (cfg.backoff_base_s < 0.0 || cfg.backoff_factor < 1.0) throw ConfigError("invalid backoff settings");
}

double backoff_delay_s(const EndpointConfig& cfg, int retry, double jitter_unit) {
    double delay = cfg.backoff_base_s * std::pow(cfg.backoff_factor, retry);
    if (cfg.backoff_jitter) delay *= 1.0 + 0.25 * jitter_unit;
    return delay;
}

std::string chat_request_body(const PromptSequence& seq, const EndpointConfig& cfg) {
    json messages = json::array();
    for (const auto& m : seq.messages) messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    return json{{"model", cfg.model},
                {"messages", messages},
                {"temperature", cfg.temperature},
                {"max_tokens", cfg.max_output_tokens}}
        .dump();
}

std::string extract_completion(std::string_view body) {
    json reply;
    try {
        reply = json::parse(body.begin(), body.end());
    } catch (const json::parse_error&) {
        throw ProtocolError("endpoint reply is not JSON");
    }
    try {
        const json& content = reply.at("choices").at(0).at("message").at("content");
        if (content.is_null()) return {};
        return content.get<std::string>();
    } catch (const json::exception&) {
        throw ProtocolError("endpoint reply has no choices[0].message.content");
    }
}

namespace {

struct Url {
    std::string origin;  // scheme://host[:port]
    std::string path;    // prefix without trailing slash
};

Url split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("base_url '" + url + "' has no scheme");
    const auto path_start = url.find('/', scheme_end + 3);
    Url out;
    out.origin = url.substr(0, path_start);
    out.path = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
    return out;
}

double jitter_draw() {
    thread_local std::mt19937_64 rng{std::random_device{}()};
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace

CompletionResult complete(const PromptSequence& seq, const EndpointConfig& cfg) {
    validate(cfg);
    const Url url = split_url(cfg.base_url);
    httplib::Client client(url.origin);
    const auto secs = static_cast<time_t>(cfg.timeout_s);
    const auto usecs = static_cast<time_t>((cfg.timeout_s - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    httplib::Headers headers;
    if (const char* token = std::getenv(cfg.api_key_env.c_str()); token && *token) {
        headers.emplace("Authorization", std::string("Bearer ") + token);
    }
    const std::string body = chat_request_body(seq, cfg);
    const std::string path = url.path + "/chat/completions";

    CompletionResult result;
    const auto started = std::chrono::steady_clock::now();
    std::string last_error;
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        result.attempts = attempt + 1;
        result.retries = attempt;
        auto response = client.Post(path, headers, body, "application/json");
        if (!response) {
            last_error = "request failed: " + httplib::to_string(response.error());
        } else if (response->status >= 200 && response->status < 300) {
            result.text = extract_completion(response->body);
            result.latency_ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
            return result;
        } else if (response->status == 401 || response->status == 403) {
            throw AuthError("endpoint rejected credentials (HTTP " + std::to_string(response->status) + ")");
        } else if (retryable_status(response->status)) {
            last_error = "HTTP " + std::to_string(response->status);
        } else {
            throw ProtocolError("endpoint returned HTTP " + std::to_string(response->status) + ": " +
                                response->body.substr(0, 200));
        }
        if (attempt < cfg.max_retries) {
            std::this_thread::sleep_for(std::chrono::duration<double>(backoff_delay_s(cfg, attempt, jitter_draw())));
        }
    }
    throw TransportError(last_error + " after " + std::to_string(result.attempts) + " attempts");
}

HttpChatBackend::HttpChatBackend(EndpointConfig cfg) : cfg_(std::move(cfg)) { validate(cfg_); }

CompletionResult HttpChatBackend::complete(const TrialRequest& request) {
    return gridprompt::complete(request.sequence, cfg_);
}

std::string HttpChatBackend::describe() const { return "endpoint:" + cfg_.base_url + "#" + cfg_.model; }

// ---------------------------------------------------------------------------

std::string to_string(ReplayMode mode) {
    switch (mode) {
        case ReplayMode::oracle: return "oracle";
        case ReplayMode::nearest_context: return "nearest_context";
        case ReplayMode::corrupt: return "corrupt";
        case ReplayMode::fixed: return "fixed";
    }
    return "oracle";
}

ReplayMode replay_mode_from_string(const std::string& text) {
    if (text == "oracle") return ReplayMode::oracle;
    if (text == "nearest_context" || text == "nearest-context") return ReplayMode::nearest_context;
    if (text == "corrupt") return ReplayMode::corrupt;
    if (text == "fixed" || text == "nominal") return ReplayMode::fixed;
    throw ConfigError("unknown replay mode '" + text + "'");
}

std::vector<double> load_vector(std::string_view grid_text) {
    const HeteroGrid grid = parse_grid(grid_text);
    std::vector<std::pair<int, std::pair<double, double>>> loads;
    for (const auto& r : grid.table(node_type::load)) {
        loads.push_back({static_cast<int>(r.at("id")), {r.at("p_mw"), r.at("q_mvar")}});
    }
    std::sort(loads.begin(), loads.end());
    std::vector<double> out;
    for (const auto& [id, pq] : loads) {
        out.push_back(pq.first);
        out.push_back(pq.second);
    }
    return out;
}

namespace {

const char* kCorruptAnswer =
    "To solve the optimal power flow problem you should first build the admittance matrix, then "
    "run Newton-Raphson iterations on the power mismatch equations while adjusting the generator "
    "dispatch to minimize cost. Let me know if you would like a step-by-step walkthrough.";

class ReplayBackend final : public ChatBackend {
public:
    ReplayBackend(ReplayMode mode, std::string fixed) : mode_(mode), fixed_(std::move(fixed)) {}

    CompletionResult complete(const TrialRequest& request) override {
        CompletionResult result;
        result.attempts = 1;
        const auto started = std::chrono::steady_clock::now();
        switch (mode_) {
            case ReplayMode::oracle:
                if (!request.reference_solution) throw ConfigError("oracle replay needs the reference solution");
                result.text = *request.reference_solution;
                break;
            case ReplayMode::corrupt: result.text = kCorruptAnswer; break;
            case ReplayMode::fixed: result.text = fixed_; break;
            case ReplayMode::nearest_context: result.text = nearest(request.sequence); break;
        }
        result.latency_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
        return result;
    }

    std::string describe() const override { return "replay:" + to_string(mode_); }
    bool needs_reference() const override { return mode_ == ReplayMode::oracle; }

private:
    static std::string nearest(const PromptSequence& seq) {
        const auto& m = seq.messages;
        if (m.empty()) return kCorruptAnswer;
        const auto query = load_vector(std::string_view(m.back().content).substr(kQueryInputPrefix.size()));
        double best = std::numeric_limits<double>::infinity();
        std::string answer = kCorruptAnswer;
        for (std::size_t i = 1; i + 1 < m.size(); i += 2) {
            const auto example = load_vector(std::string_view(m[i].content).substr(kExampleInputPrefix.size()));
            if (example.size() != query.size()) continue;
            double dist = 0.0;
            for (std::size_t k = 0; k < query.size(); ++k) dist += (example[k] - query[k]) * (example[k] - query[k]);
            if (dist < best) {
                best = dist;
                answer = m[i + 1].content.substr(kExampleOutputPrefix.size());
            }
        }
        return answer;
    }

    ReplayMode mode_;
    std::string fixed_;
};

}  // namespace

std::unique_ptr<ChatBackend> replay_backend(ReplayMode mode, std::string fixed_text) {
    return std::make_unique<ReplayBackend>(mode, std::move(fixed_text));
}

}  // namespace gridprompt
