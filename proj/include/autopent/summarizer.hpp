#pragma once

#include "autopent/llm_gateway.hpp"
#include "autopent/phase.hpp"
#include "autopent/task_graph.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace autopent {

inline constexpr std::size_t kDefaultDigestBudget = 2000;

/// What the session currently controls on the target.
struct ShellState {
    std::string description;
    int last_updated_task = 0;
    /// Session-wide step at which the description last changed; task ids are
    /// re-sequenced by replans, so this is the monotonic clock.
    int last_updated_step = 0;

    bool operator==(const ShellState&) const = default;
};

struct PhaseSummary {
    PhaseName phase = PhaseName::reconnaissance;
    std::string digest;
    std::vector<std::string> key_facts;
    ShellState shell_state;
    bool degraded = false;
};

nlohmann::json summary_to_json(const PhaseSummary& summary);

/// Truncates to at most `max_bytes` without splitting a UTF-8 sequence.
std::string truncate_utf8(std::string_view text, std::size_t max_bytes);

/// Summarises the successful tasks of a finished phase. Failed tasks never
/// reach the prompt or the digest. Falls back to a mechanical summary when
/// the gateway fails.
PhaseSummary summarize_phase(LlmBackend& gateway, const ChatParams& params, PhaseName phase,
                             const TaskGraph& graph, const ShellState& shell_state,
                             std::size_t digest_budget = kDefaultDigestBudget);

/// Asks whether a finished, successful task changed the shell posture and,
/// if so, replaces the description. Failed tasks and gateway errors leave the
/// state unchanged.
ShellState update_shell_state(LlmBackend& gateway, const ChatParams& params, const ShellState& state,
                              const TaskNode& task, int step);

/// Concatenates prior summaries in phase order, bounded by `budget` chars.
std::string render_context(const std::vector<PhaseSummary>& prior, std::size_t budget = kDefaultDigestBudget);

} // namespace autopent
