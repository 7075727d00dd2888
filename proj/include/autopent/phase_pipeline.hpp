#pragma once

#include "autopent/actuation.hpp"
#include "autopent/console_bridge.hpp"
#include "autopent/event_log.hpp"
#include "autopent/llm_gateway.hpp"
#include "autopent/memory_retriever.hpp"
#include "autopent/phase.hpp"
#include "autopent/plan_sessions.hpp"
#include "autopent/summarizer.hpp"
#include "autopent/task_graph.hpp"

#include <chrono>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace autopent {

enum class Mode { automatic, manual, semi_automatic };

std::string_view to_string(Mode mode);
/// Accepts "semi-automatic" and "semi_automatic".
std::optional<Mode> parse_mode(std::string_view text);

struct SessionConfig {
    Mode mode = Mode::automatic;
    std::string target_description;
    int per_phase_budget = kDefaultStepsPerPhase;
    double temperature = kDefaultTemperature;
    std::string model_id;
    bool retrieval_enabled = false;
    std::filesystem::path template_dir;
    std::filesystem::path knowledge_dir;
    std::string preamble;
    /// Hold every executor-bound command until the operator approves it.
    bool approval_gate = false;
    std::size_t filter_threshold = kFilterThreshold;
    std::size_t digest_budget = kDefaultDigestBudget;
    std::size_t memory_char_budget = kDefaultMemoryCharBudget;
    std::chrono::milliseconds command_timeout = kDefaultCommandTimeout;
    std::size_t retrieval_k = kDefaultTopK;
    double retrieval_threshold = kDefaultRelevanceThreshold;

    /// Throws ConfigError.
    void validate() const;
};

nlohmann::json config_to_json(const SessionConfig& config);

struct PhaseOutcome {
    PhaseName phase = PhaseName::reconnaissance;
    int steps_used = 0;
    int step_budget = 0;
    bool goal_met = false;
    PhaseSummary summary;
    std::optional<std::string> failure_stage_note;
    TaskGraph graph;
};

enum class SessionStatus { running, finished, failed };

struct SessionReport {
    std::vector<PhaseOutcome> phases;
    int total_steps = 0;
    SessionStatus status = SessionStatus::running;
    std::optional<PhaseName> failed_phase;

    /// "finished" or "failed_at(<phase>)".
    std::string status_text() const;
};

nlohmann::json report_to_json(const SessionReport& report);

/// Latest graph state published by the session thread.
struct GraphSnapshot {
    PhaseName phase = PhaseName::reconnaissance;
    TaskGraph graph;
    int steps_used = 0;
    int step_budget = 0;
    std::optional<int> running_task;
    std::uint64_t as_of_seq = 0;
};

struct Retrieval {
    VectorStore* store = nullptr;
    Embedder* embedder = nullptr;
    Reranker* reranker = nullptr;
};

struct SessionDeps {
    LlmBackend* gateway = nullptr;
    ShellChannel* channel = nullptr;
    EventLog* log = nullptr;
    std::optional<Retrieval> retrieval;
    HumanInterface* human = nullptr;
    std::function<void(const GraphSnapshot&)> on_snapshot;
};

/// Runs reconnaissance, scanning and exploitation in order. Each phase plans,
/// then loops detail -> generate -> execute -> check -> reflect until its goal
/// is judged met, its plan is exhausted, or its step budget runs out; the
/// session stops at the first failed phase.
class SessionRunner {
public:
    SessionRunner(SessionConfig config, SessionDeps deps);

    SessionReport run_session();
    PhaseOutcome run_phase(const PhaseSpec& phase, const std::string& context);

    const std::vector<PhaseSpec>& phases() const { return phases_; }
    const ShellState& shell_state() const { return shell_state_; }

private:
    struct Dispatch {
        std::string result;
        std::optional<std::string> command;
        std::optional<bool> verdict;   // decided without a gateway check
        std::string note;
    };

    Dispatch dispatch(const PhaseSpec& phase, const TaskNode& task, const std::string& detail);
    void publish(const PhaseSpec& phase, const TaskGraph& graph, int steps, std::optional<int> running);
    std::vector<KnowledgeChunk> memory_hits(const PhaseSpec& phase, const std::string& context) const;

    SessionConfig config_;
    SessionDeps deps_;
    Planner planner_;
    std::vector<PhaseSpec> phases_;
    ShellState shell_state_;
    int session_steps_ = 0;
};

/// Convenience wrapper over SessionRunner.
SessionReport run_session(const SessionConfig& config, const SessionDeps& deps);

} // namespace autopent
