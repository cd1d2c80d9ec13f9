// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace coder_consensus {

/// Engine-side bookkeeping attached to a request. Never sent over the wire;
/// the mock backend matches rules against it.
struct RequestTag {
    std::string config_id;
    std::int64_t segment_id = -1;
    int round = 0;          ///< single coder 1, arbiter max_rounds + 1
    std::string agent;      ///< agent name, e.g. "Coder 1"
    std::string role;       ///< "single_coder", "discussant" or "consensus"
    int attempt = 0;        ///< 1 on the extraction re-prompt
};

struct ChatRequest {
    std::string model_id;
    std::string system_prompt;
    std::string user_prompt;
    double temperature = 0.0;
    std::optional<std::int64_t> seed;
    RequestTag tag;

    /// Equality of everything that reaches the model.
    bool same_payload(const ChatRequest& other) const {
        return model_id == other.model_id && system_prompt == other.system_prompt &&
               user_prompt == other.user_prompt && temperature == other.temperature && seed == other.seed;
    }
};

enum class BackendKind { http, mock };

struct ChatResponse {
    std::string text;
    std::chrono::milliseconds latency{0};
    BackendKind backend = BackendKind::mock;
};

struct ProbeReport {
    bool ok = false;
    std::string detail;
};

/// Chat-completion client. Implementations are safe to call concurrently.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;

    virtual ChatResponse complete(const ChatRequest& request) = 0;
    virtual ProbeReport probe(const std::string& model_id) = 0;
    virtual BackendKind kind() const noexcept = 0;
    /// Upper bound on useful concurrent callers.
    virtual std::size_t max_in_flight() const noexcept = 0;
};

// --- HTTP -----------------------------------------------------------------

struct HttpBackendOptions {
    std::string base_url = "http://localhost:11434";
    std::chrono::seconds timeout{120};
    int transport_retries = 2;
    std::size_t max_in_flight = 4;
    std::string bearer_token;
};

/// Ollama-compatible `/api/chat` client, non-streaming.
class HttpBackend final : public ChatBackend {
public:
    /// Throws ValidationError for an unparseable or non-http URL.
    explicit HttpBackend(HttpBackendOptions options);
    ~HttpBackend() override;

    ChatResponse complete(const ChatRequest& request) override;
    ProbeReport probe(const std::string& model_id) override;
    BackendKind kind() const noexcept override { return BackendKind::http; }
    std::size_t max_in_flight() const noexcept override { return options_.max_in_flight; }

    const HttpBackendOptions& options() const noexcept { return options_; }

private:
    struct Gate;

    HttpBackendOptions options_;
    std::string host_;   ///< scheme://host:port
    std::string prefix_; ///< path prefix without trailing '/'
    std::unique_ptr<Gate> gate_;
};

/// JSON body for POST /api/chat.
std::string build_chat_body(const ChatRequest& request);
/// Reads `message.content`; throws TransportError on a malformed body.
std::string parse_chat_body(const std::string& body);

/// CODER_CONSENSUS_BASE_URL when set, `configured` otherwise.
std::string resolve_base_url(const std::string& configured);

// --- mock -----------------------------------------------------------------

/// A rule matches when every populated field equals the request's.
struct MockRule {
    std::optional<std::string> config_id;
    std::optional<std::vector<std::int64_t>> segments;
    std::optional<int> round;
    std::optional<std::string> agent;
    std::optional<std::string> role;
    std::optional<int> attempt;
    std::optional<std::string> model_id;
    std::optional<double> temperature;
    /// Substring of the user prompt.
    std::optional<std::string> contains;

    std::string response;
    /// Overrides `response` when set.
    std::function<std::string(const ChatRequest&)> responder;
    /// Simulates a transport failure instead of answering.
    bool fail = false;

    bool matches(const ChatRequest& request) const;
};

struct MockScript {
    std::vector<MockRule> rules;
    std::string default_response;

    /// JSON: {"default": "...", "rules": [{"match": {...}, "response": "...", "fail": false}]}
    /// with match keys config, segment (int or list), round, agent, role,
    /// attempt, model, temperature, contains.
    static MockScript from_json(const std::string& text, const std::string& source_name = "<mock script>");
    static MockScript load(const std::filesystem::path& path);
};

/// Deterministic scripted backend; first matching rule wins. Records every
/// request it receives.
class MockBackend final : public ChatBackend {
public:
    explicit MockBackend(MockScript script, std::size_t max_in_flight = 4);

    ChatResponse complete(const ChatRequest& request) override;
    ProbeReport probe(const std::string&) override { return {true, "mock backend"}; }
    BackendKind kind() const noexcept override { return BackendKind::mock; }
    std::size_t max_in_flight() const noexcept override { return max_in_flight_; }

    std::vector<ChatRequest> request_log() const;
    std::size_t request_count() const;
    void clear_log();

private:
    MockScript script_;
    std::size_t max_in_flight_;
    mutable std::mutex mutex_;
    std::vector<ChatRequest> log_;
};

} // namespace coder_consensus
