#include "autopent/llm_gateway.hpp"

#include "autopent/errors.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <thread>

namespace autopent {

std::string_view to_string(Role role) {
    switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    }
    return "user";
}

std::string chat(LlmBackend& backend, const std::vector<ChatMessage>& messages, const ChatParams& params) {
    if (messages.empty()) throw GatewayError("chat requires at least one message");
    for (const auto& m : messages) {
        if (m.role != Role::assistant && m.content.empty()) {
            throw GatewayError("system and user messages must be non-empty");
        }
    }
    if (params.temperature < 0.0 || params.temperature > 2.0) {
        throw GatewayError("temperature must lie in [0, 2]");
    }
    return backend.complete(messages, params);
}

std::size_t count_chars(const std::vector<ChatMessage>& messages) {
    std::size_t total = 0;
    for (const auto& m : messages) total += m.content.size();
    return total;
}

namespace {

const ChatMessage* last_user_message(const std::vector<ChatMessage>& messages) {
    for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
        if (it->role == Role::user) return &*it;
    }
    return nullptr;
}

} // namespace

// ── scripted backend ────────────────────────────────────────────────

std::vector<ScriptedRule> parse_scripted_rules(const nlohmann::json& doc) {
    if (!doc.is_array()) throw ConfigError("scripted rules must be a JSON array");
    std::vector<ScriptedRule> rules;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& item = doc[i];
        if (!item.is_object() || !item.contains("match") || !item.contains("response") ||
            !item["match"].is_string() || !item["response"].is_string()) {
            throw ConfigError("scripted rule " + std::to_string(i) + " needs string 'match' and 'response'");
        }
        ScriptedRule rule;
        rule.match = item["match"].get<std::string>();
        rule.response = item["response"].get<std::string>();
        rule.consume_once = item.value("once", false);
        rules.push_back(std::move(rule));
    }
    return rules;
}

std::vector<ScriptedRule> load_scripted_rules(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scripted rules file " + path.string());
    try {
        return parse_scripted_rules(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("invalid scripted rules file " + path.string() + ": " + e.what());
    }
}

ScriptedBackend::ScriptedBackend(std::vector<ScriptedRule> rules, Mode mode) : mode_(mode) {
    for (auto& rule : rules) {
        CompiledRule compiled{std::move(rule), std::nullopt, false};
        if (compiled.rule.match.starts_with("re:")) {
            try {
                compiled.pattern.emplace(compiled.rule.match.substr(3), std::regex::ECMAScript);
            } catch (const std::regex_error& e) {
                throw ConfigError("invalid rule pattern '" + compiled.rule.match + "': " + e.what());
            }
        }
        rules_.push_back(std::move(compiled));
    }
}

std::string ScriptedBackend::complete(const std::vector<ChatMessage>& messages, const ChatParams& params) {
    const auto* user = last_user_message(messages);
    const std::string text = user ? user->content : std::string();

    std::lock_guard lock(mutex_);
    for (auto& rule : rules_) {
        if (rule.consumed) continue;
        bool hit = rule.pattern ? std::regex_search(text, *rule.pattern)
                                : text.find(rule.rule.match) != std::string::npos;
        if (!hit) continue;
        if (rule.rule.consume_once) rule.consumed = true;
        calls_.push_back({messages, params, rule.rule.response});
        return rule.rule.response;
    }
    if (mode_ == Mode::strict) {
        auto head = text.substr(0, 120);
        throw NoRuleMatched("no scripted rule matched: \"" + head + (text.size() > 120 ? "...\"" : "\""));
    }
    calls_.push_back({messages, params, text});
    return text;
}

std::vector<ScriptedBackend::Call> ScriptedBackend::calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

std::size_t ScriptedBackend::call_count() const {
    std::lock_guard lock(mutex_);
    return calls_.size();
}

std::size_t ScriptedBackend::count_matching(std::string_view needle) const {
    std::lock_guard lock(mutex_);
    std::size_t n = 0;
    for (const auto& call : calls_) {
        const auto* user = last_user_message(call.messages);
        if (user && user->content.find(needle) != std::string::npos) ++n;
    }
    return n;
}

// ── live HTTP backend ───────────────────────────────────────────────

std::pair<std::string, std::string> split_base_url(std::string_view base_url) {
    auto scheme_end = base_url.find("://");
    auto host_start = scheme_end == std::string_view::npos ? 0 : scheme_end + 3;
    auto path_start = base_url.find('/', host_start);
    if (path_start == std::string_view::npos) return {std::string(base_url), ""};
    std::string prefix(base_url.substr(path_start));
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {std::string(base_url.substr(0, path_start)), prefix};
}

const nlohmann::json* lookup_path(const nlohmann::json& doc, std::string_view path) {
    const nlohmann::json* cur = &doc;
    while (!path.empty()) {
        auto dot = path.find('.');
        auto part = path.substr(0, dot);
        path = dot == std::string_view::npos ? std::string_view{} : path.substr(dot + 1);
        if (cur->is_array()) {
            std::size_t index = 0;
            for (char c : part) {
                if (c < '0' || c > '9') return nullptr;
                index = index * 10 + static_cast<std::size_t>(c - '0');
            }
            if (part.empty() || index >= cur->size()) return nullptr;
            cur = &(*cur)[index];
        } else if (cur->is_object()) {
            auto it = cur->find(std::string(part));
            if (it == cur->end()) return nullptr;
            cur = &*it;
        } else {
            return nullptr;
        }
    }
    return cur;
}

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty()) throw ConfigError("live backend requires a base URL");
    std::tie(origin_, path_) = split_base_url(config_.base_url);
}

nlohmann::json HttpBackend::request_body(const std::vector<ChatMessage>& messages,
                                         const ChatParams& params) const {
    nlohmann::json body;
    body["model"] = params.model_id.empty() ? config_.model : params.model_id;
    body["messages"] = nlohmann::json::array();
    for (const auto& m : messages) {
        body["messages"].push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
    }
    body["temperature"] = params.temperature;
    if (params.max_tokens) body["max_tokens"] = *params.max_tokens;
    return body;
}

int HttpBackend::last_retries() const {
    std::lock_guard lock(mutex_);
    return last_retries_;
}

std::string HttpBackend::complete(const std::vector<ChatMessage>& messages, const ChatParams& params) {
    httplib::Client client(origin_);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);

    httplib::Headers headers;
    if (!config_.api_key_env.empty()) {
        if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
    }
    const std::string body = request_body(messages, params).dump();
    const std::string path = path_ + "/chat";

    auto backoff = config_.initial_backoff;
    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) {
            spdlog::warn("llm backend: retry {}/{} after {}", attempt, config_.max_retries, last_error);
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
        {
            std::lock_guard lock(mutex_);
            last_retries_ = attempt;
        }
        auto res = client.Post(path, headers, body, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_error = "status " + std::to_string(res->status);
            continue;
        }
        if (res->status >= 400 || res->status < 200) throw BackendRejected(res->status, res->body);

        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            throw BackendRejected(res->status, std::string("response is not JSON: ") + e.what());
        }
        const auto* text = lookup_path(doc, config_.response_path);
        if (!text || !text->is_string()) {
            throw BackendRejected(res->status, "no text completion at '" + config_.response_path + "'");
        }
        return text->get<std::string>();
    }
    throw BackendUnavailable("llm backend unavailable after " + std::to_string(config_.max_retries) +
                             " retries: " + last_error);
}

} // namespace autopent
