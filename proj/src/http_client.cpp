#include "callsim/error.hpp"
#include "callsim/generation.hpp"

#include "httplib.h"

#include <cstdlib>
#include <regex>

namespace callsim {

using nlohmann::json;

HttpBackendConfig HttpBackendConfig::from_env() {
    HttpBackendConfig c;
    if (const char* v = std::getenv("CALLSIM_BACKEND_URL")) c.endpoint = v;
    if (const char* v = std::getenv("CALLSIM_BACKEND_MODEL")) c.model = v;
    if (const char* v = std::getenv("CALLSIM_BACKEND_KEY_ENV")) c.api_key_env = v;
    return c;
}

HttpBackendConfig HttpBackendConfig::from_json(const json& j) {
    HttpBackendConfig c = from_env();
    if (!j.is_object()) throw ParseError("backend config must be an object");
    if (j.contains("api_key") || j.contains("credential"))
        throw ParseError("backend config must name an environment variable ('api_key_env'), not hold a credential");
    c.endpoint = j.value("endpoint", c.endpoint);
    c.model = j.value("model", c.model);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.history_cap = j.value("history_cap", c.history_cap);
    return c;
}

json HttpBackendConfig::to_json() const {
    return json{{"endpoint", endpoint},
                {"model", model},
                {"api_key_env", api_key_env},
                {"timeout_seconds", timeout_seconds},
                {"history_cap", history_cap}};
}

HttpChatClient::HttpChatClient(HttpBackendConfig config) : config_(std::move(config)) {
    static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(config_.endpoint, m, url))
        throw ValidationError("backend endpoint is not an http(s) URL: '" + config_.endpoint + "'");
    base_ = m[1];
    path_ = m[2].matched ? std::string(m[2]) : "/v1/chat/completions";
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (base_.rfind("https://", 0) == 0) throw ValidationError("built without TLS support; use an http:// endpoint");
#endif
    if (config_.model.empty()) throw ValidationError("backend model name is empty");
}

json HttpChatClient::build_request(const CompletionRequest& r) const {
    json messages = json::array();
    std::string system = r.profile.persona.empty() ? std::string() : r.profile.persona + "\n\n";
    system += r.bundle.serialize();
    messages.push_back({{"role", "system"}, {"content", system}});

    auto history = r.history;
    if (config_.history_cap > 0 && history.size() > config_.history_cap)
        history = history.subspan(history.size() - config_.history_cap);
    if (history.empty()) {
        messages.push_back({{"role", "user"}, {"content", "(The call connects. Speak first.)"}});
    }
    for (const auto& t : history) {
        messages.push_back({{"role", t.speaker == Speaker::caller ? "assistant" : "user"}, {"content", t.text}});
    }
    return json{{"model", config_.model},
                {"messages", messages},
                {"temperature", r.profile.params.temperature},
                {"max_tokens", r.profile.params.max_tokens}};
}

std::string HttpChatClient::complete(const CompletionRequest& r) const {
    httplib::Client client(base_);
    client.set_connection_timeout(config_.timeout_seconds);
    client.set_read_timeout(config_.timeout_seconds);
    httplib::Headers headers;
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key)
        headers.emplace("Authorization", std::string("Bearer ") + key);

    auto res = client.Post(path_, headers, build_request(r).dump(), "application/json");
    if (!res) throw TransportError("backend request failed: " + httplib::to_string(res.error()));
    if (res->status != 200)
        throw TransportError("backend returned HTTP " + std::to_string(res->status));
    try {
        auto body = json::parse(res->body);
        const auto& content = body.at("choices").at(0).at("message").at("content");
        return content.is_string() ? content.get<std::string>() : std::string();
    } catch (const json::exception& e) {
        throw TransportError(std::string("malformed backend response: ") + e.what());
    }
}

}  // namespace callsim
