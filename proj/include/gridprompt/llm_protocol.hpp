#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gridprompt {

/// System prompt sent ahead of every in-context sequence and fine-tuning sample.
extern const std::string kSystemPrompt;

inline constexpr std::string_view kExampleInputPrefix = "Example Input JSON: ";
inline constexpr std::string_view kExampleOutputPrefix = "Example Output JSON: ";
inline constexpr std::string_view kQueryInputPrefix = "Query Input JSON: ";

enum class Role { system, user, assistant };

std::string to_string(Role role);

struct ChatMessage {
    Role role = Role::user;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct PromptSequence {
    std::vector<ChatMessage> messages;

    std::size_t total_chars() const;
    bool operator==(const PromptSequence&) const = default;
};

struct ContextPair {
    std::string grid_text;
    std::string solution_text;
};

/// system, then (user "Example Input JSON: ...", assistant "Example Output
/// JSON: ...") per context pair, then user "Query Input JSON: ...".
PromptSequence build_sequence(const std::vector<ContextPair>& context, const std::string& query_grid);

/// Returns an empty string when the sequence is well formed, otherwise the
/// first structural problem found.
std::string check_sequence(const PromptSequence& seq);

// ---------------------------------------------------------------------------

struct EndpointConfig {
    std::string base_url = "https://api.openai.com/v1";
    std::string model = "gpt-4o-mini";
    double temperature = 0.0;
    int max_output_tokens = 4096;
    double timeout_s = 120.0;
    int max_retries = 3;
    std::string api_key_env = "OPENAI_API_KEY";
    double backoff_base_s = 1.0;
    double backoff_factor = 2.0;
    bool backoff_jitter = true;
};

void validate(const EndpointConfig& cfg);

struct CompletionResult {
    std::string text;
    int attempts = 0;
    int retries = 0;
    double latency_ms = 0.0;
};

/// Delay before retry number `retry` (0-based), in seconds.
double backoff_delay_s(const EndpointConfig& cfg, int retry, double jitter_unit);

/// OpenAI-compatible chat body: {model, messages, temperature, max_tokens}.
std::string chat_request_body(const PromptSequence& seq, const EndpointConfig& cfg);

/// choices[0].message.content of a chat-completions reply. Throws ProtocolError.
std::string extract_completion(std::string_view body);

/// POSTs the sequence to {base_url}/chat/completions with a bearer token read
/// from cfg.api_key_env. Retries 408/429/5xx and timeouts with exponential
/// backoff; 401/403 fail immediately with AuthError; exhausted retries raise
/// TransportError; a reply that is not chat-completions JSON raises ProtocolError.
CompletionResult complete(const PromptSequence& seq, const EndpointConfig& cfg);

// ---------------------------------------------------------------------------

/// What a backend sees for one trial. The reference answer is only populated
/// for replay backends that need ground truth.
struct TrialRequest {
    const PromptSequence& sequence;
    std::optional<std::string> reference_solution;
};

/// Anything that turns a prompt into an answer. Implementations must be safe
/// to call from several threads at once.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual CompletionResult complete(const TrialRequest& request) = 0;
    virtual std::string describe() const = 0;
    virtual bool needs_reference() const { return false; }
};

class HttpChatBackend final : public ChatBackend {
public:
    explicit HttpChatBackend(EndpointConfig cfg);
    CompletionResult complete(const TrialRequest& request) override;
    std::string describe() const override;

private:
    EndpointConfig cfg_;
};

enum class ReplayMode {
    oracle,           // answer with the encoded ground truth
    nearest_context,  // answer with the context solution whose loads are closest
    corrupt,          // answer with prose and no JSON
    fixed,            // answer with one fixed text (e.g. the nominal solution)
};

std::string to_string(ReplayMode mode);
ReplayMode replay_mode_from_string(const std::string& text);

/// Deterministic offline backend. `fixed_text` is used by ReplayMode::fixed.
std::unique_ptr<ChatBackend> replay_backend(ReplayMode mode, std::string fixed_text = {});

/// Load vector (p, q of every load, by id) of an embedded grid.
std::vector<double> load_vector(std::string_view grid_text);

}  // namespace gridprompt
