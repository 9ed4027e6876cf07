#include <chrono>
#include <cstdlib>
#include <regex>

#include "hlsagent/errors.hpp"
#include "hlsagent/llm_gateway.hpp"
#include "httplib.h"
#include "json.hpp"

namespace hlsagent {

namespace {

std::string env_or_empty(const char* name) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : std::string();
}

}  // namespace

HttpBackendConfig HttpBackendConfig::from_env() {
    HttpBackendConfig c;
    c.url = env_or_empty("HLSAGENT_API_URL");
    c.api_key = env_or_empty("HLSAGENT_API_KEY");
    c.model = env_or_empty("HLSAGENT_MODEL");
    return c;
}

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
    if (config_.url.empty()) throw ConfigError("HLSAGENT_API_URL is not set");
    if (config_.api_key.empty()) throw ConfigError("HLSAGENT_API_KEY is not set");
    static const std::regex url_re(R"(^(https?)://([^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(config_.url, m, url_re)) {
        throw ConfigError("HLSAGENT_API_URL is not an http(s) URL: " + config_.url);
    }
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (m[1] == "https") throw ConfigError("built without TLS support; use an http:// endpoint");
#endif
    origin_ = m[1].str() + "://" + m[2].str();
    path_ = m[3].matched ? m[3].str() : "/";
}

std::string HttpBackend::wire_body(const ChatRequest& req, const std::string& default_model) {
    nlohmann::ordered_json j;
    j["model"] = req.model_name.empty() ? default_model : req.model_name;
    nlohmann::ordered_json msgs = nlohmann::ordered_json::array();
    for (const auto& m : req.messages) {
        msgs.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
    }
    j["messages"] = std::move(msgs);
    j["temperature"] = req.temperature;
    j["max_tokens"] = req.max_tokens;
    return j.dump();
}

ChatResponse HttpBackend::parse_wire_response(std::string_view body) {
    auto j = nlohmann::json::parse(body, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object()) throw MalformedResponse("response body is not a JSON object");
    auto choices = j.find("choices");
    if (choices == j.end() || !choices->is_array() || choices->empty()) {
        throw MalformedResponse("response has no choices");
    }
    const auto& first = (*choices)[0];
    if (!first.is_object() || !first.contains("message") || !first["message"].is_object()) {
        throw MalformedResponse("first choice has no message");
    }
    const auto& msg = first["message"];
    if (!msg.contains("content") || !msg["content"].is_string()) {
        throw MalformedResponse("first choice message has no string content");
    }
    ChatResponse r;
    r.content = msg["content"].get<std::string>();
    if (auto usage = j.find("usage"); usage != j.end() && usage->is_object()) {
        r.usage.prompt = usage->value("prompt_tokens", std::int64_t{0});
        r.usage.completion = usage->value("completion_tokens", std::int64_t{0});
    }
    return r;
}

ChatResponse HttpBackend::send(const ChatRequest& req) {
    httplib::Client client(origin_);
    const auto t = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout).count();
    client.set_connection_timeout(static_cast<time_t>(t), 0);
    client.set_read_timeout(static_cast<time_t>(t), 0);
    client.set_write_timeout(static_cast<time_t>(t), 0);
    httplib::Headers headers = {{"Authorization", "Bearer " + config_.api_key}};

    const auto t0 = std::chrono::steady_clock::now();
    auto res = client.Post(path_, headers, wire_body(req, config_.model), "application/json");
    const auto elapsed = std::chrono::steady_clock::now() - t0;

    if (!res) {
        throw TransientBackendError(0, "transport error: " + httplib::to_string(res.error()));
    }
    const int status = res->status;
    if (status == 429 || status >= 500) {
        throw TransientBackendError(status, "HTTP " + std::to_string(status));
    }
    if (status == 401 || status == 403) {
        throw ConfigError("credential rejected (HTTP " + std::to_string(status) + ")");
    }
    if (status < 200 || status >= 300) {
        throw BackendUnavailable("HTTP " + std::to_string(status) + ": " + res->body.substr(0, 200));
    }
    ChatResponse r = parse_wire_response(res->body);
    r.backend_id = id();
    r.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
    return r;
}

}  // namespace hlsagent
