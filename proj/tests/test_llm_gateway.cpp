#include <doctest.h>

#include <atomic>
#include <httplib.h>
#include <json.hpp>
#include <thread>

#include "hlsagent/errors.hpp"
#include "hlsagent/llm_gateway.hpp"
#include "test_support.hpp"

using namespace hlsagent;
using nlohmann::json;

namespace {

ChatRequest request(const std::string& user) {
    ChatRequest r;
    r.messages = {{Role::System, "You are a test."}, {Role::User, user}};
    r.template_id = "test/v1";
    return r;
}

/// Local chat-completion stub. `statuses` are returned in order for the first
/// requests; afterwards every request succeeds.
class StubServer {
public:
    explicit StubServer(std::vector<int> statuses) : statuses_(std::move(statuses)) {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            const std::size_t n = hits_++;
            last_body_ = req.body;
            last_auth_ = req.get_header_value("Authorization");
            if (n < statuses_.size() && statuses_[n] != 200) {
                res.status = statuses_[n];
                res.set_content(R"({"error": "busy"})", "application/json");
                return;
            }
            res.set_content(
                R"({"choices": [{"message": {"role": "assistant", "content": "stub answer"}}], )"
                R"("usage": {"prompt_tokens": 12, "completion_tokens": 2}})",
                "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~StubServer() {
        server_.stop();
        thread_.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }
    std::size_t hits() const { return hits_; }
    const std::string& last_body() const { return last_body_; }
    const std::string& last_auth() const { return last_auth_; }

private:
    std::vector<int> statuses_;
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<std::size_t> hits_{0};
    std::string last_body_;
    std::string last_auth_;
};

HttpBackendConfig config_for(const StubServer& s) {
    HttpBackendConfig c;
    c.url = s.url();
    c.api_key = "test-key";
    c.model = "stub-model";
    c.timeout = std::chrono::seconds(5);
    return c;
}

/// Backend that fails transiently a fixed number of times.
class FlakyBackend : public Backend {
public:
    explicit FlakyBackend(int failures) : failures_(failures) {}
    std::string id() const override { return "flaky"; }
    ChatResponse send(const ChatRequest&) override {
        if (calls_++ < failures_) throw TransientBackendError(503, "HTTP 503");
        ChatResponse r;
        r.content = "ok";
        r.backend_id = id();
        return r;
    }
    int calls() const { return calls_; }

private:
    int failures_;
    std::atomic<int> calls_{0};
};

}  // namespace

TEST_CASE("validate_request enforces the request invariants") {
    CHECK_NOTHROW(validate_request(request("hi")));
    ChatRequest no_system;
    no_system.messages = {{Role::User, "hi"}};
    CHECK_THROWS_AS(validate_request(no_system), std::invalid_argument);
    ChatRequest no_user;
    no_user.messages = {{Role::System, "s"}};
    CHECK_THROWS_AS(validate_request(no_user), std::invalid_argument);
    ChatRequest empty_user = request("");
    CHECK_THROWS_AS(validate_request(empty_user), std::invalid_argument);
    ChatRequest hot = request("hi");
    hot.temperature = 2.5;
    CHECK_THROWS_AS(validate_request(hot), std::invalid_argument);
    ChatRequest no_tokens = request("hi");
    no_tokens.max_tokens = 0;
    CHECK_THROWS_AS(validate_request(no_tokens), std::invalid_argument);
}

TEST_CASE("mock backend: first matching rule wins, default otherwise") {
    MockScript script = MockScript::parse(
        "{\"match\": \"alpha\", \"response\": \"first\"}\n"
        "{\"match\": \"alp\", \"response\": \"second\"}\n"
        "{\"default\": \"fallback\"}\n");
    MockBackend mock(script);
    CHECK(mock.send(request("the alpha case")).content == "first");
    CHECK(mock.send(request("only alp here")).content == "second");
    CHECK(mock.send(request("nothing")).content == "fallback");
    CHECK(mock.send(request("nothing")).backend_id == "mock");
}

TEST_CASE("mock backend is a pure function of the request") {
    MockBackend mock(MockScript::echo_default());
    ChatRequest a = request("EXEMPLAR {\"design_id\": \"x\", \"distance\": 1.0, \"targets\": {\"valid\": true, "
                            "\"latency_cycles\": 10, \"util_bram\": 0.1, \"util_lut\": 0.2, \"util_ff\": 0.3, "
                            "\"util_dsp\": 0.4}}");
    ChatRequest b = a;
    CHECK(canonical_json(a) == canonical_json(b));
    CHECK(mock.send(a).content == mock.send(b).content);
}

TEST_CASE("mock script parsing errors") {
    CHECK_THROWS_AS(MockScript::parse("{\"match\": \"a\"}\n"), MalformedRecord);
    CHECK_THROWS_AS(MockScript::parse("{\"default\": \"a\"}\n{\"default\": \"b\"}\n"), MalformedRecord);
    CHECK_THROWS_AS(MockScript::parse("not json\n"), MalformedRecord);
    CHECK_THROWS_AS(MockScript::load(testsupport::fixture("no-such-script.jsonl")), IoError);
}

TEST_CASE("echo_exemplar_mean averages the listed exemplars") {
    const std::string text =
        "intro\n"
        "EXEMPLAR {\"design_id\": \"a\", \"distance\": 1.0, \"targets\": {\"valid\": true, \"latency_cycles\": 100, "
        "\"util_bram\": 0, \"util_lut\": 0, \"util_ff\": 0, \"util_dsp\": 0}}\n"
        "EXEMPLAR {\"design_id\": \"b\", \"distance\": 1.0, \"targets\": {\"valid\": true, \"latency_cycles\": 200, "
        "\"util_bram\": 0, \"util_lut\": 0, \"util_ff\": 0, \"util_dsp\": 0}}\n";
    auto out = echo_exemplar_mean(text);
    REQUIRE(out.has_value());
    json j = json::parse(*out);
    CHECK(j["latency_cycles"].get<double>() == doctest::Approx(150.0));
    CHECK(j["valid"].get<bool>());
    CHECK(j["confidence"].get<double>() == doctest::Approx(0.5));
    CHECK_FALSE(echo_exemplar_mean("no exemplars here").has_value());
}

TEST_CASE("http backend: retries 429 twice, then succeeds on attempt 3") {
    StubServer stub({429, 429, 200});
    auto transcript = std::make_shared<TranscriptLog>();
    std::vector<std::chrono::milliseconds> sleeps;
    RetryPolicy policy;
    policy.jitter_seed = 5;
    LlmClient client(std::make_shared<HttpBackend>(config_for(stub)), policy, nullptr, transcript,
                     [&](std::chrono::milliseconds d) { sleeps.push_back(d); });

    ChatResponse r = client.complete(request("hello"), {"ep", "ep:1"});
    CHECK(r.content == "stub answer");
    CHECK(r.attempts == 3);
    CHECK(r.usage.prompt == 12);
    CHECK(stub.hits() == 3);
    REQUIRE(sleeps.size() == 2);
    CHECK(sleeps[0] <= std::chrono::milliseconds(1000));
    CHECK(sleeps[1] <= std::chrono::milliseconds(2000));

    REQUIRE(transcript->size() == 1);
    json line = json::parse(transcript->lines()[0]);
    CHECK(line["payload"]["attempts"] == 3);
    CHECK(line["episode_id"] == "ep");
    CHECK(line["payload"]["response"]["content"] == "stub answer");

    json wire = json::parse(stub.last_body());
    CHECK(wire["model"] == "stub-model");
    CHECK(wire["messages"].size() == 2);
    CHECK(wire["messages"][1]["content"] == "hello");
    CHECK(stub.last_auth() == "Bearer test-key");
}

TEST_CASE("http backend: exhausted retries become BackendUnavailable with one transcript entry") {
    StubServer stub({500, 502, 503, 500, 500, 500});
    auto transcript = std::make_shared<TranscriptLog>();
    LlmClient client(std::make_shared<HttpBackend>(config_for(stub)), RetryPolicy{}, nullptr, transcript,
                     [](std::chrono::milliseconds) {});
    CHECK_THROWS_AS(client.complete(request("x"), {"ep", "ep:1"}), BackendUnavailable);
    CHECK(stub.hits() == 5);
    REQUIRE(transcript->size() == 1);
    json line = json::parse(transcript->lines()[0]);
    CHECK(line["payload"]["error"]["kind"] == "BackendUnavailable");
    CHECK_FALSE(line["payload"].contains("response"));
    CHECK(line["direction"] == "request/error");
}

TEST_CASE("http backend: configuration and wire errors") {
    HttpBackendConfig c;
    CHECK_THROWS_AS(HttpBackend{c}, ConfigError);
    c.url = "http://127.0.0.1:1/x";
    CHECK_THROWS_AS(HttpBackend{c}, ConfigError);  // no key
    c.api_key = "k";
    c.url = "ftp://host/x";
    CHECK_THROWS_AS(HttpBackend{c}, ConfigError);

    CHECK_THROWS_AS(HttpBackend::parse_wire_response("[]"), MalformedResponse);
    CHECK_THROWS_AS(HttpBackend::parse_wire_response(R"({"choices": []})"), MalformedResponse);
    CHECK_THROWS_AS(HttpBackend::parse_wire_response(R"({"choices": [{"message": {}}]})"), MalformedResponse);
    CHECK(HttpBackend::parse_wire_response(R"({"choices": [{"message": {"content": "x"}}]})").content == "x");
}

TEST_CASE("retry backoff caps are non-decreasing and attempts never exceed 5") {
    RetryPolicy p;
    for (int i = 1; i < 5; ++i) CHECK(p.cap(i) <= p.cap(i + 1));
    CHECK(p.cap(1) == std::chrono::milliseconds(1000));
    CHECK(p.cap(4) == std::chrono::milliseconds(8000));

    auto flaky = std::make_shared<FlakyBackend>(100);
    LlmClient client(flaky, RetryPolicy{}, nullptr, nullptr, [](std::chrono::milliseconds) {});
    CHECK_THROWS_AS(client.complete(request("x"), {"e", "e:1"}), BackendUnavailable);
    CHECK(flaky->calls() == 5);

    RetryPolicy too_many;
    too_many.max_attempts = 6;
    CHECK_THROWS_AS(LlmClient(flaky, too_many), std::invalid_argument);
}

TEST_CASE("transcript: sequential calls are logged in order") {
    auto transcript = std::make_shared<TranscriptLog>();
    LlmClient client(std::make_shared<MockBackend>(MockScript{{}, "x"}), RetryPolicy{}, nullptr, transcript);
    client.complete(request("one"), {"e", "e:1"});
    client.complete(request("two"), {"e", "e:2"});
    auto lines = transcript->lines();
    REQUIRE(lines.size() == 2);
    CHECK(json::parse(lines[0])["payload"]["request_id"] == "e:1");
    CHECK(json::parse(lines[1])["payload"]["request_id"] == "e:2");
}

TEST_CASE("transcript: 8 workers x 100 calls give 800 well-formed lines") {
    testsupport::TempDir tmp("transcript");
    const auto path = tmp / "t.jsonl";
    {
        auto transcript = std::make_shared<TranscriptLog>(path);
        LlmClient client(std::make_shared<MockBackend>(MockScript{{{"w3", "three"}}, "other"}), RetryPolicy{},
                         std::make_shared<RateLimiter>(0.0), transcript);
        std::vector<std::thread> workers;
        for (int w = 0; w < 8; ++w) {
            workers.emplace_back([&, w] {
                for (int i = 0; i < 100; ++i) {
                    const std::string id = "w" + std::to_string(w);
                    client.complete(request(id + " call " + std::to_string(i)), {id, id + ":" + std::to_string(i)});
                }
            });
        }
        for (auto& t : workers) t.join();
        CHECK(transcript->size() == 800);
    }
    std::istringstream in(testsupport::slurp(path));
    std::string line;
    std::size_t n = 0;
    std::map<std::string, int> per_worker;
    while (std::getline(in, line)) {
        json j = json::parse(line);
        ++n;
        ++per_worker[j["episode_id"].get<std::string>()];
        for (const char* key : {"episode_id", "ts", "direction", "payload"}) CHECK(j.contains(key));
    }
    CHECK(n == 800);
    CHECK(per_worker.size() == 8);
    for (const auto& [id, c] : per_worker) CHECK(c == 100);
}

TEST_CASE("transcript: failure entry has the error kind and no response") {
    TranscriptEntry e;
    e.episode_id = "ep";
    e.request_id = "ep:1";
    e.request = request("x");
    e.error_kind = "BackendUnavailable";
    e.error_message = "down";
    e.attempts = 5;
    json j = json::parse(TranscriptLog::render(e));
    CHECK(j["payload"]["error"]["kind"] == "BackendUnavailable");
    CHECK_FALSE(j["payload"].contains("response"));
}

TEST_CASE("rate limiter: burst capacity, then refusal") {
    RateLimiter limiter(0.001, 3.0);
    CHECK(limiter.try_acquire());
    CHECK(limiter.try_acquire());
    CHECK(limiter.try_acquire());
    CHECK_FALSE(limiter.try_acquire());
    RateLimiter open(0.0);
    CHECK(open.unlimited());
    for (int i = 0; i < 100; ++i) CHECK(open.try_acquire());
}

TEST_CASE("rate limiter: acquire waits for a refill") {
    RateLimiter limiter(50.0, 1.0);
    limiter.acquire();
    const auto t0 = std::chrono::steady_clock::now();
    limiter.acquire();
    const auto waited = std::chrono::steady_clock::now() - t0;
    CHECK(waited >= std::chrono::milliseconds(10));
}
