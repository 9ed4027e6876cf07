#include "hlsagent/llm_gateway.hpp"

#include <cmath>
#include <ctime>
#include <iomanip>
#include <sstream>
#include <thread>

#include "hlsagent/dataset.hpp"
#include "hlsagent/errors.hpp"
#include "json.hpp"

namespace hlsagent {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::int64_t word_count(std::string_view s) {
    std::int64_t n = 0;
    bool in_word = false;
    for (char c : s) {
        const bool space = std::isspace(static_cast<unsigned char>(c));
        if (!space && !in_word) ++n;
        in_word = !space;
    }
    return n;
}

ordered_json request_json(const ChatRequest& req) {
    ordered_json j;
    j["model"] = req.model_name;
    ordered_json msgs = ordered_json::array();
    for (const auto& m : req.messages) {
        msgs.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
    }
    j["messages"] = std::move(msgs);
    j["temperature"] = req.temperature;
    j["max_tokens"] = req.max_tokens;
    return j;
}

}  // namespace

std::string_view to_string(Role r) {
    switch (r) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    return "?";
}

void validate_request(const ChatRequest& req) {
    if (req.messages.empty() || req.messages.front().role != Role::System) {
        throw std::invalid_argument("chat request must start with a system message");
    }
    bool has_user = false;
    for (const auto& m : req.messages) {
        if (m.role != Role::Assistant && m.content.empty()) {
            throw std::invalid_argument("system/user message with empty content");
        }
        has_user |= m.role == Role::User;
    }
    if (!has_user) throw std::invalid_argument("chat request has no user message");
    if (!(req.temperature >= 0.0 && req.temperature <= 2.0)) {
        throw std::invalid_argument("temperature outside [0, 2]");
    }
    if (req.max_tokens <= 0) throw std::invalid_argument("max_tokens must be positive");
}

std::string canonical_json(const ChatRequest& req) {
    ordered_json j = request_json(req);
    j["template_id"] = req.template_id;
    return j.dump();
}

std::string request_text(const ChatRequest& req) {
    std::string out;
    for (std::size_t i = 0; i < req.messages.size(); ++i) {
        if (i) out += '\n';
        out += req.messages[i].content;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Mock

MockScript MockScript::parse(std::string_view text) {
    MockScript script;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    bool have_default = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw MalformedRecord(line_no, std::string("mock script: ") + e.what());
        }
        if (rec.contains("default")) {
            if (have_default) throw MalformedRecord(line_no, "mock script has two default records");
            script.default_response = rec.at("default").get<std::string>();
            have_default = true;
        } else if (rec.contains("match") && rec.contains("response")) {
            script.rules.push_back({rec.at("match").get<std::string>(), rec.at("response").get<std::string>()});
        } else {
            throw MalformedRecord(line_no, "mock script record needs match/response or default");
        }
    }
    return script;
}

MockScript MockScript::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open mock script " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

MockScript MockScript::echo_default() {
    MockScript s;
    s.rules.push_back({"ROLE: criticiser",
                       R"({"verdict": "accept", "summary": "prediction is consistent with the exemplars", "errors": []})"});
    s.default_response = std::string(kEchoExemplarMean);
    return s;
}

std::optional<std::string> echo_exemplar_mean(std::string_view text) {
    std::vector<DistanceWeighted> samples;
    double distance_sum = 0.0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() : nl + 1;
        constexpr std::string_view kTag = "EXEMPLAR ";
        if (!line.starts_with(kTag)) continue;
        json ex = json::parse(line.substr(kTag.size()), nullptr, /*allow_exceptions=*/false);
        if (!ex.is_object() || !ex.contains("distance") || !ex.contains("targets")) continue;
        const json& t = ex["targets"];
        DistanceWeighted s;
        s.distance = ex["distance"].get<double>();
        s.qor.valid = t.value("valid", false);
        for (std::size_t i = 0; i < kNumericTargets; ++i) {
            set_numeric_target(s.qor, i, t.value(std::string(kNumericTargetNames[i]), 0.0));
        }
        distance_sum += s.distance;
        samples.push_back(s);
    }
    if (samples.empty()) return std::nullopt;

    QorVector mean = inverse_distance_mean(samples);
    const double mean_distance = distance_sum / static_cast<double>(samples.size());
    ordered_json out;
    out["valid"] = mean.valid;
    auto values = numeric_targets(mean);
    for (std::size_t i = 0; i < kNumericTargets; ++i) out[std::string(kNumericTargetNames[i])] = values[i];
    out["rationale"] = "echo of the exemplar-weighted mean";
    out["confidence"] = 1.0 / (1.0 + mean_distance);
    return out.dump();
}

std::string MockBackend::respond(const ChatRequest& req) const {
    const std::string text = request_text(req);
    const std::string* chosen = &script_.default_response;
    for (const auto& rule : script_.rules) {
        if (text.find(rule.matcher) != std::string::npos) {
            chosen = &rule.response;
            break;
        }
    }
    if (*chosen == kEchoExemplarMean) {
        if (auto echoed = echo_exemplar_mean(text)) return *echoed;
        return "No exemplars were provided, so there is nothing to echo.";
    }
    return *chosen;
}

ChatResponse MockBackend::send(const ChatRequest& req) {
    ChatResponse r;
    r.content = respond(req);
    r.backend_id = id();
    r.latency_ms = 0;
    r.usage.prompt = word_count(request_text(req));
    r.usage.completion = word_count(r.content);
    return r;
}

// ---------------------------------------------------------------------------
// Retry / rate limiting

std::chrono::milliseconds RetryPolicy::cap(int failed_attempt) const {
    const double scaled = static_cast<double>(base.count()) * std::pow(factor, failed_attempt - 1);
    return std::chrono::milliseconds(static_cast<std::int64_t>(std::llround(scaled)));
}

RateLimiter::RateLimiter(double rate_per_second, double capacity)
    : rate_(rate_per_second), capacity_(std::max(1.0, capacity)), tokens_(std::max(1.0, capacity)),
      last_(Clock::now()) {}

void RateLimiter::refill(Clock::time_point now) {
    const double elapsed = std::chrono::duration<double>(now - last_).count();
    tokens_ = std::min(capacity_, tokens_ + elapsed * rate_);
    last_ = now;
}

bool RateLimiter::try_acquire() {
    if (unlimited()) return true;
    std::lock_guard lock(mu_);
    refill(Clock::now());
    if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return true;
    }
    return false;
}

void RateLimiter::acquire() {
    if (unlimited()) return;
    while (true) {
        std::chrono::duration<double> wait{};
        {
            std::lock_guard lock(mu_);
            refill(Clock::now());
            if (tokens_ >= 1.0) {
                tokens_ -= 1.0;
                return;
            }
            wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
        }
        std::this_thread::sleep_for(wait);
    }
}

// ---------------------------------------------------------------------------
// Transcripts

std::string utc_timestamp() {
    using namespace std::chrono;
    const auto now = system_clock::now();
    const std::time_t t = system_clock::to_time_t(now);
    const auto ms = duration_cast<milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << ms << 'Z';
    return os.str();
}

TranscriptLog::TranscriptLog(const std::filesystem::path& path) {
    out_.emplace(path, std::ios::binary | std::ios::app);
    if (!*out_) throw IoError("cannot open transcript " + path.string());
}

std::string TranscriptLog::render(const TranscriptEntry& e) {
    ordered_json payload;
    payload["request_id"] = e.request_id;
    payload["template_id"] = e.request.template_id;
    payload["attempts"] = e.attempts;
    payload["request"] = request_json(e.request);
    if (e.response) {
        payload["response"] = {{"content", e.response->content},
                               {"backend", e.response->backend_id},
                               {"latency_ms", e.response->latency_ms},
                               {"usage",
                                {{"prompt", e.response->usage.prompt},
                                 {"completion", e.response->usage.completion}}}};
    } else {
        payload["error"] = {{"kind", e.error_kind}, {"message", e.error_message}};
    }
    ordered_json line;
    line["episode_id"] = e.episode_id;
    line["ts"] = e.timestamp;
    line["direction"] = e.response ? "request/response" : "request/error";
    line["payload"] = std::move(payload);
    return line.dump();
}

void TranscriptLog::append(const TranscriptEntry& entry) {
    std::string line = render(entry);
    std::lock_guard lock(mu_);
    if (out_) {
        *out_ << line << '\n';
        out_->flush();
        if (!*out_) throw IoError("transcript write failed");
    } else {
        memory_.push_back(std::move(line));
    }
    ++count_;
}

std::size_t TranscriptLog::size() const {
    std::lock_guard lock(mu_);
    return count_;
}

std::vector<std::string> TranscriptLog::lines() const {
    std::lock_guard lock(mu_);
    return memory_;
}

// ---------------------------------------------------------------------------
// Client

LlmClient::LlmClient(std::shared_ptr<Backend> backend, RetryPolicy retry,
                     std::shared_ptr<RateLimiter> limiter, std::shared_ptr<TranscriptLog> transcript,
                     Sleeper sleeper)
    : backend_(std::move(backend)),
      retry_(retry),
      limiter_(std::move(limiter)),
      transcript_(std::move(transcript)),
      sleeper_(std::move(sleeper)),
      rng_(retry.jitter_seed) {
    if (!backend_) throw std::invalid_argument("LlmClient needs a backend");
    if (retry_.max_attempts < 1 || retry_.max_attempts > 5) {
        throw std::invalid_argument("max_attempts must be in [1, 5]");
    }
    if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::chrono::milliseconds LlmClient::jittered_delay(int failed_attempt) {
    const auto cap = retry_.cap(failed_attempt).count();
    std::lock_guard lock(rng_mu_);
    // Full jitter: uniform in [0, cap].
    const double u = static_cast<double>(rng_() >> 11) * (1.0 / 9007199254740992.0);
    return std::chrono::milliseconds(static_cast<std::int64_t>(u * static_cast<double>(cap + 1)));
}

void LlmClient::log(const CallContext& ctx, const ChatRequest& req, const ChatResponse* resp,
                    const std::string& error_kind, const std::string& error_message, int attempts) {
    if (!transcript_) return;
    TranscriptEntry e;
    e.episode_id = ctx.episode_id;
    e.request_id = ctx.request_id;
    e.request = req;
    if (resp) e.response = *resp;
    e.error_kind = error_kind;
    e.error_message = error_message;
    e.attempts = attempts;
    e.timestamp = utc_timestamp();
    transcript_->append(e);
}

ChatResponse LlmClient::complete(const ChatRequest& req, const CallContext& ctx) {
    validate_request(req);
    std::string last_error;
    int attempt = 0;
    for (attempt = 1; attempt <= retry_.max_attempts; ++attempt) {
        if (limiter_) limiter_->acquire();
        try {
            ChatResponse resp = backend_->send(req);
            resp.attempts = attempt;
            log(ctx, req, &resp, "", "", attempt);
            return resp;
        } catch (const TransientBackendError& e) {
            last_error = e.what();
            if (attempt == retry_.max_attempts) break;
            sleeper_(jittered_delay(attempt));
        } catch (const Error& e) {
            log(ctx, req, nullptr, e.kind(), e.what(), attempt);
            throw;
        } catch (const std::exception& e) {
            log(ctx, req, nullptr, "BackendUnavailable", e.what(), attempt);
            throw BackendUnavailable(e.what());
        }
    }
    const int attempts = std::min(attempt, retry_.max_attempts);
    BackendUnavailable err("backend " + backend_->id() + " failed after " + std::to_string(attempts) +
                           " attempts: " + last_error);
    log(ctx, req, nullptr, err.kind(), err.what(), attempts);
    throw err;
}

}  // namespace hlsagent
