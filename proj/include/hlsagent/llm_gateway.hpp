#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace hlsagent {

enum class Role { System, User, Assistant };

std::string_view to_string(Role r);

struct ChatMessage {
    Role role = Role::User;
    std::string content;
    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_tokens = 1024;
    std::string model_name;
    std::string template_id;  // recorded in transcripts, not sent on the wire

    friend bool operator==(const ChatRequest&, const ChatRequest&) = default;
};

/// Throws std::invalid_argument unless the first message is a system message,
/// there is at least one user message, system/user contents are non-empty,
/// temperature is in [0, 2] and max_tokens is positive.
void validate_request(const ChatRequest& req);

/// Stable serialization; identical requests give identical bytes.
std::string canonical_json(const ChatRequest& req);

/// All message contents joined by newlines; what mock matchers see.
std::string request_text(const ChatRequest& req);

struct TokenUsage {
    std::int64_t prompt = 0;
    std::int64_t completion = 0;
};

struct ChatResponse {
    std::string content;
    std::string backend_id;
    std::int64_t latency_ms = 0;
    TokenUsage usage;
    int attempts = 1;
};

/// One backend attempt. Implementations throw TransientBackendError for
/// retryable failures, MalformedResponse / ConfigError / BackendUnavailable
/// otherwise. Backends must be safe to call from several threads.
class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string id() const = 0;
    virtual ChatResponse send(const ChatRequest& req) = 0;
};

// ---------------------------------------------------------------------------
// Mock backend

/// Response directive: reply with the inverse-distance-weighted mean of the
/// exemplars listed in the request, formatted as a prediction object.
inline constexpr std::string_view kEchoExemplarMean = "@echo-exemplar-mean";

struct MockRule {
    std::string matcher;  // substring of request_text()
    std::string response;
};

struct MockScript {
    std::vector<MockRule> rules;
    std::string default_response;

    /// Line-delimited JSON: `{"match": "...", "response": "..."}` rules in
    /// order, and at most one `{"default": "..."}` record.
    static MockScript parse(std::string_view text);
    static MockScript load(const std::filesystem::path& path);

    /// Script used by `--backend mock` when no script file is given: echo the
    /// exemplar mean for predictions, accept for LLM critiques.
    static MockScript echo_default();
};

/// Deterministic scripted backend. First matching rule wins; the response is
/// a pure function of the request.
class MockBackend : public Backend {
public:
    explicit MockBackend(MockScript script) : script_(std::move(script)) {}
    std::string id() const override { return "mock"; }
    ChatResponse send(const ChatRequest& req) override;

    std::string respond(const ChatRequest& req) const;

private:
    MockScript script_;
};

/// Prediction object text averaging the `EXEMPLAR {...}` lines in `text`.
/// Returns nullopt when the text lists no exemplars.
std::optional<std::string> echo_exemplar_mean(std::string_view text);

// ---------------------------------------------------------------------------
// HTTP backend

struct HttpBackendConfig {
    std::string url;  // full endpoint, e.g. https://host/v1/chat/completions
    std::string api_key;
    std::string model;
    std::chrono::seconds timeout{60};

    /// HLSAGENT_API_URL, HLSAGENT_API_KEY, HLSAGENT_MODEL. Missing values stay empty.
    static HttpBackendConfig from_env();
};

/// Chat-completion endpoint over HTTP(S): one POST with model, messages,
/// temperature and max_tokens; reads choices[0].message.content.
class HttpBackend : public Backend {
public:
    /// Throws ConfigError if the URL or credential is missing or unusable.
    explicit HttpBackend(HttpBackendConfig config);
    std::string id() const override { return "http:" + config_.model; }
    ChatResponse send(const ChatRequest& req) override;

    static std::string wire_body(const ChatRequest& req, const std::string& default_model);
    /// Throws MalformedResponse.
    static ChatResponse parse_wire_response(std::string_view body);

private:
    HttpBackendConfig config_;
    std::string origin_;
    std::string path_;
};

// ---------------------------------------------------------------------------
// Retry, rate limiting, transcripts

struct RetryPolicy {
    int max_attempts = 5;
    std::chrono::milliseconds base{1000};
    double factor = 2.0;
    std::uint64_t jitter_seed = 0;

    /// Upper bound of the delay after the `failed_attempt`-th failure
    /// (1-based): base * factor^(failed_attempt - 1).
    std::chrono::milliseconds cap(int failed_attempt) const;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

/// Thread-safe token bucket. A non-positive rate disables limiting.
class RateLimiter {
public:
    using Clock = std::chrono::steady_clock;

    RateLimiter(double rate_per_second = 1.0, double capacity = 5.0);
    void acquire();
    bool try_acquire();
    bool unlimited() const { return rate_ <= 0.0; }

private:
    void refill(Clock::time_point now);

    double rate_;
    double capacity_;
    double tokens_;
    Clock::time_point last_;
    std::mutex mu_;
};

struct TranscriptEntry {
    std::string episode_id;
    std::string request_id;
    ChatRequest request;
    std::optional<ChatResponse> response;
    std::string error_kind;  // empty on success
    std::string error_message;
    int attempts = 0;
    std::string timestamp;
};

/// Append-only line-delimited transcript. Appends from concurrent callers are
/// serialized; each entry is written as one complete line.
class TranscriptLog {
public:
    /// In-memory log (tests, dry runs).
    TranscriptLog() = default;
    /// Appends to `path`, creating it if needed. Throws IoError.
    explicit TranscriptLog(const std::filesystem::path& path);

    void append(const TranscriptEntry& entry);
    std::size_t size() const;
    std::vector<std::string> lines() const;  // in-memory mode only

    static std::string render(const TranscriptEntry& entry);

private:
    mutable std::mutex mu_;
    std::optional<std::ofstream> out_;
    std::vector<std::string> memory_;
    std::size_t count_ = 0;
};

std::string utc_timestamp();

struct CallContext {
    std::string episode_id;
    std::string request_id;
};

/// Front door for every model call: validation, rate limiting, retries with
/// full-jitter exponential backoff, and exactly one transcript entry per call.
class LlmClient {
public:
    LlmClient(std::shared_ptr<Backend> backend, RetryPolicy retry = {},
              std::shared_ptr<RateLimiter> limiter = nullptr,
              std::shared_ptr<TranscriptLog> transcript = nullptr, Sleeper sleeper = {});

    /// Throws BackendUnavailable after exhausting retries; other backend
    /// errors propagate unchanged.
    ChatResponse complete(const ChatRequest& req, const CallContext& ctx);

    const Backend& backend() const { return *backend_; }
    const RetryPolicy& retry_policy() const { return retry_; }

private:
    std::chrono::milliseconds jittered_delay(int failed_attempt);
    void log(const CallContext& ctx, const ChatRequest& req, const ChatResponse* resp,
             const std::string& error_kind, const std::string& error_message, int attempts);

    std::shared_ptr<Backend> backend_;
    RetryPolicy retry_;
    std::shared_ptr<RateLimiter> limiter_;
    std::shared_ptr<TranscriptLog> transcript_;
    Sleeper sleeper_;
    std::mutex rng_mu_;
    std::mt19937_64 rng_;
};

}  // namespace hlsagent
