#pragma once

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

namespace autopent {

enum class Role { system, user, assistant };

std::string_view to_string(Role role);

struct ChatMessage {
    Role role = Role::user;
    std::string content;
};

inline constexpr double kDefaultTemperature = 0.5;

struct ChatParams {
    double temperature = kDefaultTemperature;
    std::optional<int> max_tokens;
    std::string model_id;
};

/// Chat-completion backend. Implementations must be safe to call from
/// several session threads.
class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual std::string complete(const std::vector<ChatMessage>& messages, const ChatParams& params) = 0;
};

/// Validates the request shape, then delegates to the backend.
std::string chat(LlmBackend& backend, const std::vector<ChatMessage>& messages,
                 const ChatParams& params = {});

/// Total content length in characters; the context-budget guardrail.
std::size_t count_chars(const std::vector<ChatMessage>& messages);

// ── scripted backend ────────────────────────────────────────────────

/// `match` is a plain substring of the last user message, or an ECMAScript
/// regex when prefixed with "re:".
struct ScriptedRule {
    std::string match;
    std::string response;
    bool consume_once = false;
};

std::vector<ScriptedRule> parse_scripted_rules(const nlohmann::json& doc);
std::vector<ScriptedRule> load_scripted_rules(const std::filesystem::path& path);

class ScriptedBackend final : public LlmBackend {
public:
    enum class Mode { strict, lenient };

    struct Call {
        std::vector<ChatMessage> messages;
        ChatParams params;
        std::string response;
    };

    explicit ScriptedBackend(std::vector<ScriptedRule> rules, Mode mode = Mode::strict);

    std::string complete(const std::vector<ChatMessage>& messages, const ChatParams& params) override;

    std::vector<Call> calls() const;
    std::size_t call_count() const;
    /// Number of calls whose last user message contains `needle`.
    std::size_t count_matching(std::string_view needle) const;

private:
    struct CompiledRule {
        ScriptedRule rule;
        std::optional<std::regex> pattern;
        bool consumed = false;
    };

    std::vector<CompiledRule> rules_;
    Mode mode_;
    mutable std::mutex mutex_;
    std::vector<Call> calls_;
};

/// Adapts a plain function into a backend; used by tests and fault injection.
class FunctionBackend final : public LlmBackend {
public:
    using Fn = std::function<std::string(const std::vector<ChatMessage>&, const ChatParams&)>;
    explicit FunctionBackend(Fn fn) : fn_(std::move(fn)) {}
    std::string complete(const std::vector<ChatMessage>& messages, const ChatParams& params) override {
        return fn_(messages, params);
    }

private:
    Fn fn_;
};

// ── live HTTP backend ───────────────────────────────────────────────

struct HttpBackendConfig {
    std::string base_url;                 // e.g. "http://127.0.0.1:8000/v1"
    std::string model;
    std::string api_key_env = "AUTOPENT_API_KEY";
    std::string response_path = "choices.0.message.content";
    int max_retries = 3;
    std::chrono::milliseconds initial_backoff{500};
    std::chrono::seconds timeout{120};
};

/// Splits "scheme://host[:port][/prefix]" into the origin and the path prefix.
std::pair<std::string, std::string> split_base_url(std::string_view base_url);

/// Resolves a dotted path ("choices.0.message.content") inside a JSON value.
const nlohmann::json* lookup_path(const nlohmann::json& doc, std::string_view path);

class HttpBackend final : public LlmBackend {
public:
    explicit HttpBackend(HttpBackendConfig config);

    std::string complete(const std::vector<ChatMessage>& messages, const ChatParams& params) override;

    /// Request body exactly as sent on the wire.
    nlohmann::json request_body(const std::vector<ChatMessage>& messages, const ChatParams& params) const;

    /// Retries performed by the most recent complete() call.
    int last_retries() const;

private:
    HttpBackendConfig config_;
    std::string origin_;
    std::string path_;
    mutable std::mutex mutex_;
    int last_retries_ = 0;
};

} // namespace autopent
