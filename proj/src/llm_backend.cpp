// SPDX-License-Identifier: Apache-2.0

#include "coder_consensus/llm_backend.hpp"

#include "coder_consensus/codebook.hpp"
#include "coder_consensus/errors.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <condition_variable>
#include <cstdlib>
#include <set>

namespace coder_consensus {

using nlohmann::json;

// --- wire format ----------------------------------------------------------

std::string build_chat_body(const ChatRequest& request) {
    json body;
    body["model"] = request.model_id;
    body["messages"] = json::array({
        {{"role", "system"}, {"content", request.system_prompt}},
        {{"role", "user"}, {"content", request.user_prompt}},
    });
    body["stream"] = false;
    body["options"] = {{"temperature", request.temperature}};
    if (request.seed) body["options"]["seed"] = *request.seed;
    return body.dump();
}

std::string parse_chat_body(const std::string& body) {
    json doc = json::parse(body, nullptr, false);
    if (doc.is_discarded()) throw TransportError("response body is not JSON", 1);
    if (!doc.is_object() || !doc.contains("message") || !doc["message"].is_object() ||
        !doc["message"].contains("content") || !doc["message"]["content"].is_string())
        throw TransportError("response body lacks message.content", 1);
    return doc["message"]["content"].get<std::string>();
}

std::string resolve_base_url(const std::string& configured) {
    if (const char* env = std::getenv("CODER_CONSENSUS_BASE_URL"); env && *env) return env;
    return configured;
}

// --- HTTP backend ---------------------------------------------------------

struct HttpBackend::Gate {
    std::mutex mutex;
    std::condition_variable cv;
    std::size_t in_flight = 0;
    std::size_t cap;

    explicit Gate(std::size_t c) : cap(c == 0 ? 1 : c) {}

    void acquire() {
        std::unique_lock lock(mutex);
        cv.wait(lock, [&] { return in_flight < cap; });
        ++in_flight;
    }
    void release() {
        {
            std::lock_guard lock(mutex);
            --in_flight;
        }
        cv.notify_one();
    }
};

HttpBackend::HttpBackend(HttpBackendOptions options)
    : options_(std::move(options)), gate_(std::make_unique<Gate>(options_.max_in_flight)) {
    const auto& url = options_.base_url;
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ValidationError("base URL lacks a scheme: \"" + url + "\"");
    auto scheme = url.substr(0, scheme_end);
    if (scheme != "http")
        throw ValidationError("unsupported URL scheme \"" + scheme + "\" (only http is supported): " + url);
    auto path_start = url.find('/', scheme_end + 3);
    host_ = url.substr(0, path_start);
    if (host_.size() <= scheme_end + 3) throw ValidationError("base URL lacks a host: \"" + url + "\"");
    prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
}

HttpBackend::~HttpBackend() = default;

ChatResponse HttpBackend::complete(const ChatRequest& request) {
    gate_->acquire();
    struct Release {
        Gate* gate;
        ~Release() { gate->release(); }
    } release{gate_.get()};
    const auto body = build_chat_body(request);
    const int attempts = 1 + std::max(0, options_.transport_retries);
    std::string last_error;
    bool last_was_timeout = false;

    for (int attempt = 1; attempt <= attempts; ++attempt) {
        httplib::Client client(host_);
        client.set_connection_timeout(options_.timeout);
        client.set_read_timeout(options_.timeout);
        client.set_write_timeout(options_.timeout);
        if (!options_.bearer_token.empty()) client.set_bearer_token_auth(options_.bearer_token);

        auto start = std::chrono::steady_clock::now();
        auto res = client.Post(prefix_ + "/api/chat", body, "application/json");
        auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);

        if (!res) {
            auto err = res.error();
            last_was_timeout = err == httplib::Error::ConnectionTimeout ||
                               (err == httplib::Error::Read && elapsed >= options_.timeout);
            last_error = "POST " + host_ + prefix_ + "/api/chat failed: " + httplib::to_string(err);
            continue;
        }
        last_was_timeout = false;
        if (res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status) + " from " + host_ + prefix_ + "/api/chat";
            continue;
        }
        if (res->status < 200 || res->status >= 300)
            throw TransportError("HTTP " + std::to_string(res->status) + " from " + host_ + prefix_ +
                                     "/api/chat: " + res->body,
                                 attempt);
        try {
            return ChatResponse{parse_chat_body(res->body), elapsed, BackendKind::http};
        } catch (const TransportError& e) {
            last_error = e.what();
        }
    }
    if (last_was_timeout) throw TimeoutError(last_error + " (timeout)", attempts);
    throw TransportError(last_error + " after " + std::to_string(attempts) + " attempt(s)", attempts);
}

ProbeReport HttpBackend::probe(const std::string& model_id) {
    httplib::Client client(host_);
    client.set_connection_timeout(std::chrono::seconds(10));
    client.set_read_timeout(std::chrono::seconds(30));
    if (!options_.bearer_token.empty()) client.set_bearer_token_auth(options_.bearer_token);
    auto res = client.Get(prefix_ + "/api/tags");
    if (!res)
        return {false, "endpoint " + host_ + prefix_ + " unreachable: " + httplib::to_string(res.error())};
    if (res->status != 200)
        return {false, "GET /api/tags returned HTTP " + std::to_string(res->status)};
    json doc = json::parse(res->body, nullptr, false);
    if (doc.is_discarded() || !doc.contains("models") || !doc["models"].is_array())
        return {false, "GET /api/tags returned an unexpected body"};
    for (const auto& m : doc["models"]) {
        for (const char* key : {"name", "model"}) {
            if (!m.contains(key) || !m[key].is_string()) continue;
            auto name = m[key].get<std::string>();
            if (name == model_id || name == model_id + ":latest") return {true, "model " + model_id + " is served"};
        }
    }
    return {false, "model not available: \"" + model_id + "\" is not served by " + host_ + prefix_ +
                       " (pull it first, e.g. `ollama pull " + model_id + "`)"};
}

// --- mock backend ---------------------------------------------------------

bool MockRule::matches(const ChatRequest& r) const {
    if (config_id && *config_id != r.tag.config_id) return false;
    if (segments && std::find(segments->begin(), segments->end(), r.tag.segment_id) == segments->end())
        return false;
    if (round && *round != r.tag.round) return false;
    if (agent && *agent != r.tag.agent) return false;
    if (role && *role != r.tag.role) return false;
    if (attempt && *attempt != r.tag.attempt) return false;
    if (model_id && *model_id != r.model_id) return false;
    if (temperature && *temperature != r.temperature) return false;
    if (contains && r.user_prompt.find(*contains) == std::string::npos) return false;
    return true;
}

MockScript MockScript::from_json(const std::string& text, const std::string& source_name) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(source_name, 0, "", e.what());
    }
    if (!doc.is_object()) throw ParseError(source_name, 0, "", "mock script must be a JSON object");
    MockScript script;
    if (doc.contains("default")) script.default_response = doc["default"].get<std::string>();
    if (!doc.contains("rules")) return script;
    if (!doc["rules"].is_array()) throw ParseError(source_name, 0, "rules", "expected an array");
    for (std::size_t i = 0; i < doc["rules"].size(); ++i) {
        const auto& r = doc["rules"][i];
        std::string where = "rules[" + std::to_string(i) + "]";
        MockRule rule;
        try {
            for (const auto& [key, _] : r.items())
                if (key != "match" && key != "response" && key != "fail")
                    throw ParseError(source_name, 0, where + "." + key, "unknown rule key");
            if (r.contains("match")) {
                const auto& m = r["match"];
                static const std::set<std::string> keys{"config", "segment", "round",       "agent",   "role",
                                                        "attempt", "model",   "temperature", "contains"};
                for (const auto& [key, _] : m.items())
                    if (!keys.contains(key)) throw ParseError(source_name, 0, where + ".match." + key, "unknown match key");
                if (m.contains("config")) rule.config_id = m["config"].get<std::string>();
                if (m.contains("segment")) {
                    if (m["segment"].is_array())
                        rule.segments = m["segment"].get<std::vector<std::int64_t>>();
                    else
                        rule.segments = std::vector<std::int64_t>{m["segment"].get<std::int64_t>()};
                }
                if (m.contains("round")) rule.round = m["round"].get<int>();
                if (m.contains("agent")) rule.agent = m["agent"].get<std::string>();
                if (m.contains("role")) rule.role = m["role"].get<std::string>();
                if (m.contains("attempt")) rule.attempt = m["attempt"].get<int>();
                if (m.contains("model")) rule.model_id = m["model"].get<std::string>();
                if (m.contains("temperature")) rule.temperature = m["temperature"].get<double>();
                if (m.contains("contains")) rule.contains = m["contains"].get<std::string>();
            }
            if (r.contains("response")) rule.response = r["response"].get<std::string>();
            if (r.contains("fail")) rule.fail = r["fail"].get<bool>();
        } catch (const json::exception& e) {
            throw ParseError(source_name, 0, where, e.what());
        }
        script.rules.push_back(std::move(rule));
    }
    return script;
}

MockScript MockScript::load(const std::filesystem::path& path) {
    return from_json(read_file(path), path.string());
}

MockBackend::MockBackend(MockScript script, std::size_t max_in_flight)
    : script_(std::move(script)), max_in_flight_(max_in_flight == 0 ? 1 : max_in_flight) {}

ChatResponse MockBackend::complete(const ChatRequest& request) {
    {
        std::lock_guard lock(mutex_);
        log_.push_back(request);
    }
    for (const auto& rule : script_.rules) {
        if (!rule.matches(request)) continue;
        if (rule.fail) throw TransportError("mock transport failure", 1);
        return ChatResponse{rule.responder ? rule.responder(request) : rule.response, std::chrono::milliseconds(0),
                            BackendKind::mock};
    }
    return ChatResponse{script_.default_response, std::chrono::milliseconds(0), BackendKind::mock};
}

std::vector<ChatRequest> MockBackend::request_log() const {
    std::lock_guard lock(mutex_);
    return log_;
}

std::size_t MockBackend::request_count() const {
    std::lock_guard lock(mutex_);
    return log_.size();
}

void MockBackend::clear_log() {
    std::lock_guard lock(mutex_);
    log_.clear();
}

} // namespace coder_consensus
