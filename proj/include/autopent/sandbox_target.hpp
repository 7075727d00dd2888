#pragma once

#include "autopent/actuation.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

namespace autopent {

using SandboxState = std::map<std::string, std::string>;

/// One response rule. `match` is a substring of the command, or an ECMAScript
/// regex when prefixed with "re:" (capture groups usable as {{1}}..{{9}}).
/// Output and `set` values expand {{key}} from the current state.
struct ScenarioRule {
    std::string match;
    std::optional<std::regex> pattern;
    SandboxState guard;
    std::string output;
    SandboxState set;
    bool hang = false;
};

struct Scenario {
    std::string name;
    SandboxState initial_state;
    std::vector<ScenarioRule> rules;   // the built-in fallback is implicit and always last
};

Scenario parse_scenario(const nlohmann::json& doc);
Scenario load_scenario(const std::filesystem::path& path);

struct SandboxResponse {
    std::string output;
    SandboxState state;
    bool hang = false;
};

/// First rule whose pattern matches and whose guard holds fires. Unmatched
/// commands get "<word>: command not found" and leave the state unchanged.
SandboxResponse respond(const Scenario& scenario, const SandboxState& state, std::string_view command);

/// In-process channel over a scenario. A rule marked "hang" reports a
/// timeout with its output as the partial result.
class SandboxChannel final : public ShellChannel {
public:
    explicit SandboxChannel(Scenario scenario);

    bool is_open() const override { return open_; }
    ChannelOutput run(const std::string& command, std::chrono::milliseconds timeout) override;
    void close() override { open_ = false; }

    const SandboxState& state() const { return state_; }
    const std::vector<std::string>& history() const { return history_; }

private:
    Scenario scenario_;
    SandboxState state_;
    bool open_ = true;
    std::vector<std::string> history_;
};

} // namespace autopent
