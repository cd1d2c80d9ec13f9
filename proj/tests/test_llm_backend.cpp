// SPDX-License-Identifier: Apache-2.0
#include "fake_ollama.hpp"
#include "test_support.hpp"

#include "coder_consensus/errors.hpp"

#include <doctest.h>

#include <cstdlib>
#include <future>

using namespace coder_consensus;
using cc_test::FakeOllama;
using nlohmann::json;

namespace {

ChatRequest request(std::string user = "code this") {
    ChatRequest r;
    r.model_id = "wizardlm2:7b";
    r.system_prompt = "You are Coder 1";
    r.user_prompt = std::move(user);
    r.temperature = 0.5;
    return r;
}

HttpBackendOptions options(const std::string& url) {
    HttpBackendOptions o;
    o.base_url = url;
    o.timeout = std::chrono::seconds(5);
    o.transport_retries = 2;
    return o;
}

} // namespace

TEST_SUITE("chat wire format") {
    TEST_CASE("request body") {
        auto r = request();
        r.seed = 42;
        r.tag.attempt = 1;
        r.tag.agent = "Coder 1";
        auto body = json::parse(build_chat_body(r));
        CHECK(body["model"] == "wizardlm2:7b");
        CHECK(body["stream"] == false);
        REQUIRE(body["messages"].size() == 2);
        CHECK(body["messages"][0]["role"] == "system");
        CHECK(body["messages"][0]["content"] == "You are Coder 1");
        CHECK(body["messages"][1]["role"] == "user");
        CHECK(body["options"]["temperature"] == 0.5);
        CHECK(body["options"]["seed"] == 42);
        CHECK(body.dump().find("attempt") == std::string::npos);
        r.seed.reset();
        CHECK_FALSE(json::parse(build_chat_body(r))["options"].contains("seed"));
    }

    TEST_CASE("response body") {
        CHECK(parse_chat_body(R"({"message": {"role": "assistant", "content": "hi"}})") == "hi");
        CHECK_THROWS_AS(parse_chat_body("not json"), TransportError);
        CHECK_THROWS_AS(parse_chat_body(R"({"message": {}})"), TransportError);
    }

    TEST_CASE("environment override") {
        ::setenv("CODER_CONSENSUS_BASE_URL", "http://override:1", 1);
        CHECK(resolve_base_url("http://configured:2") == "http://override:1");
        ::unsetenv("CODER_CONSENSUS_BASE_URL");
        CHECK(resolve_base_url("http://configured:2") == "http://configured:2");
    }
}

TEST_SUITE("http backend") {
    TEST_CASE("completes against a local endpoint") {
        FakeOllama server;
        server.on_chat([](const json& req, httplib::Response& res) {
            FakeOllama::reply(res, "echo " + req["messages"][1]["content"].get<std::string>());
        });
        HttpBackend backend(options(server.url()));
        auto out = backend.complete(request("hello"));
        CHECK(out.text == "echo hello");
        CHECK(out.backend == BackendKind::http);
        CHECK(server.calls() == 1);
    }

    TEST_CASE("path prefix and bearer token") {
        FakeOllama server;
        auto opts = options(server.url());
        opts.bearer_token = "s3cret";
        HttpBackend backend(opts);
        backend.complete(request());
        REQUIRE(server.auth_headers().size() == 1);
        CHECK(server.auth_headers()[0] == "Bearer s3cret");
        HttpBackend prefixed(options(server.url() + "/nowhere/"));
        CHECK_THROWS_AS(prefixed.complete(request()), TransportError);
    }

    TEST_CASE("5xx and malformed bodies are retried") {
        FakeOllama server;
        std::atomic<int> n{0};
        server.on_chat([&](const json&, httplib::Response& res) {
            int k = n++;
            if (k == 0) {
                res.status = 503;
            } else if (k == 1) {
                res.set_content("{oops", "application/json");
            } else {
                FakeOllama::reply(res, "ok");
            }
        });
        HttpBackend backend(options(server.url()));
        CHECK(backend.complete(request()).text == "ok");
        CHECK(server.calls() == 3);
    }

    TEST_CASE("retries are bounded") {
        FakeOllama server;
        server.on_chat([](const json&, httplib::Response& res) { res.status = 500; });
        auto opts = options(server.url());
        opts.transport_retries = 1;
        HttpBackend backend(opts);
        try {
            backend.complete(request());
            FAIL("expected TransportError");
        } catch (const TransportError& e) {
            CHECK(e.attempts() == 2);
        }
        CHECK(server.calls() == 2);
    }

    TEST_CASE("4xx is not retried") {
        FakeOllama server;
        server.on_chat([](const json&, httplib::Response& res) {
            res.status = 404;
            res.set_content(R"({"error": "model not found"})", "application/json");
        });
        HttpBackend backend(options(server.url()));
        CHECK_THROWS_WITH_AS(backend.complete(request()), doctest::Contains("404"), TransportError);
        CHECK(server.calls() == 1);
    }

    TEST_CASE("timeout") {
        FakeOllama server;
        server.on_chat([](const json&, httplib::Response& res) {
            std::this_thread::sleep_for(std::chrono::milliseconds(1600));
            FakeOllama::reply(res, "late");
        });
        auto opts = options(server.url());
        opts.timeout = std::chrono::seconds(1);
        opts.transport_retries = 0;
        HttpBackend backend(opts);
        CHECK_THROWS_AS(backend.complete(request()), TimeoutError);
    }

    TEST_CASE("unreachable endpoint") {
        auto opts = options("http://127.0.0.1:1");
        opts.transport_retries = 0;
        HttpBackend backend(opts);
        CHECK_THROWS_AS(backend.complete(request()), TransportError);
        auto report = backend.probe("wizardlm2:7b");
        CHECK_FALSE(report.ok);
        CHECK(report.detail.find("unreachable") != std::string::npos);
    }

    TEST_CASE("bad URLs are rejected up front") {
        CHECK_THROWS_AS(HttpBackend(options("ftp://host")), ValidationError);
        CHECK_THROWS_AS(HttpBackend(options("https://host")), ValidationError);
        CHECK_THROWS_AS(HttpBackend(options("not a url")), ValidationError);
    }

    TEST_CASE("probe checks model availability") {
        FakeOllama server({"wizardlm2:7b", "llama3:latest"});
        HttpBackend backend(options(server.url()));
        CHECK(backend.probe("wizardlm2:7b").ok);
        CHECK(backend.probe("llama3").ok);
        auto missing = backend.probe("mistral");
        CHECK_FALSE(missing.ok);
        CHECK(missing.detail.find("model not available") != std::string::npos);
    }

    TEST_CASE("in-flight cap") {
        FakeOllama server;
        server.on_chat([](const json&, httplib::Response& res) {
            std::this_thread::sleep_for(std::chrono::milliseconds(80));
            FakeOllama::reply(res, "ok");
        });
        auto opts = options(server.url());
        opts.max_in_flight = 2;
        HttpBackend backend(opts);
        std::vector<std::future<ChatResponse>> futures;
        for (int i = 0; i < 6; ++i)
            futures.push_back(std::async(std::launch::async, [&] { return backend.complete(request()); }));
        for (auto& f : futures) CHECK(f.get().text == "ok");
        CHECK(server.peak_in_flight() <= 2);
        CHECK(server.calls() == 6);
    }
}

TEST_SUITE("mock backend") {
    TEST_CASE("first matching rule wins and requests are logged") {
        MockScript script;
        MockRule specific;
        specific.agent = "Coder 2";
        specific.round = 2;
        specific.response = "second round";
        MockRule any;
        any.response = "anything";
        script.rules = {specific, any};
        MockBackend mock(script);
        auto r = request();
        r.tag.agent = "Coder 2";
        r.tag.round = 2;
        CHECK(mock.complete(r).text == "second round");
        r.tag.round = 1;
        CHECK(mock.complete(r).text == "anything");
        CHECK(mock.request_count() == 2);
        CHECK(mock.request_log()[0].tag.round == 2);
        mock.clear_log();
        CHECK(mock.request_count() == 0);
    }

    TEST_CASE("failure rules and default") {
        MockScript script;
        MockRule fail;
        fail.segments = std::vector<std::int64_t>{3};
        fail.fail = true;
        script.rules = {fail};
        script.default_response = "fallback";
        MockBackend mock(script);
        auto r = request();
        r.tag.segment_id = 3;
        CHECK_THROWS_AS(mock.complete(r), TransportError);
        r.tag.segment_id = 4;
        CHECK(mock.complete(r).text == "fallback");
    }

    TEST_CASE("script JSON") {
        auto script = MockScript::from_json(R"({
            "default": "d",
            "rules": [
              {"match": {"segment": [1, 2], "agent": "Coder 1", "attempt": 1, "contains": "Text"}, "response": "r1"},
              {"match": {"segment": 5, "temperature": 0.5, "model": "m", "role": "consensus"}, "fail": true}
            ]})");
        REQUIRE(script.rules.size() == 2);
        CHECK(script.default_response == "d");
        CHECK(script.rules[0].segments == std::vector<std::int64_t>{1, 2});
        CHECK(script.rules[0].attempt == 1);
        CHECK(script.rules[1].fail);
        CHECK(script.rules[1].temperature == 0.5);
        CHECK_THROWS_AS(MockScript::from_json(R"({"rules": [{"match": {"colour": "red"}}]})"), ParseError);
        CHECK_THROWS_AS(MockScript::from_json("[1"), ParseError);
        auto loaded = MockScript::load(cc_test::fixture("mock_script.json"));
        CHECK(loaded.rules.size() == 12);
    }
}
