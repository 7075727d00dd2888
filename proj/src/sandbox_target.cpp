#include "autopent/sandbox_target.hpp"

#include "autopent/errors.hpp"

#include <algorithm>
#include <fstream>

namespace autopent {

namespace {

SandboxState string_map(const nlohmann::json& obj, const std::string& what) {
    SandboxState out;
    if (obj.is_null()) return out;
    if (!obj.is_object()) throw ConfigError("scenario: '" + what + "' must be an object");
    for (const auto& [k, v] : obj.items()) {
        if (!v.is_string()) throw ConfigError("scenario: '" + what + "." + k + "' must be a string");
        out[k] = v.get<std::string>();
    }
    return out;
}

// Expands {{key}} from state and {{N}} from regex captures.
std::string expand(std::string_view text, const SandboxState& state, const std::smatch* captures) {
    std::string out;
    for (std::size_t i = 0; i < text.size();) {
        if (text.compare(i, 2, "{{") == 0) {
            auto close = text.find("}}", i + 2);
            if (close != std::string_view::npos) {
                std::string key(text.substr(i + 2, close - i - 2));
                if (key.size() == 1 && key[0] >= '0' && key[0] <= '9') {
                    auto n = static_cast<std::size_t>(key[0] - '0');
                    if (captures && n < captures->size()) out += (*captures)[n].str();
                } else if (auto it = state.find(key); it != state.end()) {
                    out += it->second;
                }
                i = close + 2;
                continue;
            }
        }
        out.push_back(text[i++]);
    }
    return out;
}

} // namespace

Scenario parse_scenario(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ConfigError("scenario must be a JSON object");
    Scenario s;
    s.name = doc.value("name", "");
    if (s.name.empty()) throw ConfigError("scenario needs a name");
    s.initial_state = string_map(doc.value("initial_state", nlohmann::json::object()), "initial_state");
    if (!doc.contains("rules") || !doc["rules"].is_array() || doc["rules"].empty()) {
        throw ConfigError("scenario '" + s.name + "' needs at least one rule");
    }
    for (std::size_t i = 0; i < doc["rules"].size(); ++i) {
        const auto& r = doc["rules"][i];
        if (!r.is_object() || !r.contains("match") || !r["match"].is_string()) {
            throw ConfigError("scenario rule " + std::to_string(i) + " needs a string 'match'");
        }
        ScenarioRule rule;
        rule.match = r["match"].get<std::string>();
        if (rule.match.starts_with("re:")) {
            try {
                rule.pattern.emplace(rule.match.substr(3), std::regex::ECMAScript);
            } catch (const std::regex_error& e) {
                throw ConfigError("scenario rule " + std::to_string(i) + ": bad pattern: " + e.what());
            }
        }
        rule.guard = string_map(r.value("guard", nlohmann::json()), "guard");
        rule.output = r.value("output", "");
        rule.set = string_map(r.value("set", nlohmann::json()), "set");
        rule.hang = r.value("hang", false);
        s.rules.push_back(std::move(rule));
    }
    return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario " + path.string());
    try {
        return parse_scenario(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("invalid scenario " + path.string() + ": " + e.what());
    }
}

SandboxResponse respond(const Scenario& scenario, const SandboxState& state, std::string_view command) {
    const std::string cmd(command);
    for (const auto& rule : scenario.rules) {
        std::smatch m;
        bool hit = rule.pattern ? std::regex_search(cmd, m, *rule.pattern) : cmd.find(rule.match) != std::string::npos;
        if (!hit) continue;
        bool guarded = std::all_of(rule.guard.begin(), rule.guard.end(), [&](const auto& kv) {
            auto it = state.find(kv.first);
            return it != state.end() && it->second == kv.second;
        });
        if (!guarded) continue;

        const std::smatch* captures = rule.pattern ? &m : nullptr;
        SandboxResponse out{expand(rule.output, state, captures), state, rule.hang};
        for (const auto& [k, v] : rule.set) out.state[k] = expand(v, state, captures);
        return out;
    }
    auto first = cmd.substr(0, cmd.find(' '));
    return {first + ": command not found", state, false};
}

SandboxChannel::SandboxChannel(Scenario scenario)
    : scenario_(std::move(scenario)), state_(scenario_.initial_state) {}

ChannelOutput SandboxChannel::run(const std::string& command, std::chrono::milliseconds) {
    if (!open_) throw ChannelClosed();
    history_.push_back(command);
    auto r = respond(scenario_, state_, command);
    state_ = std::move(r.state);
    return {std::move(r.output), r.hang};
}

} // namespace autopent
