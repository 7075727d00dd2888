#pragma once

#include "autopent/llm_gateway.hpp"
#include "autopent/memory_retriever.hpp"
#include "autopent/phase.hpp"
#include "autopent/task_graph.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace autopent {

// ── prompt templates ────────────────────────────────────────────────

enum class TemplateId { plan_init, task_init, base_init };

std::string_view to_string(TemplateId id);

/// The only placeholders a template body may use.
inline constexpr std::array<std::string_view, 5> kPlaceholders = {"name", "init_description", "goal", "tools",
                                                                  "context"};

struct PromptTemplate {
    TemplateId template_id = TemplateId::plan_init;
    std::string body;
};

/// Checks that every {identifier} in the body is a known placeholder.
/// Throws InvalidTemplate.
PromptTemplate make_template(TemplateId id, std::string body);

/// Placeholders occurring in the body, in order of first appearance.
std::vector<std::string> placeholders_in(std::string_view body);

/// Exact textual substitution. Throws MissingBinding for any placeholder in
/// the body without a binding.
std::string render_prompt(const PromptTemplate& tmpl, const std::map<std::string, std::string>& bindings);

struct TemplateSet {
    PromptTemplate plan_init;
    PromptTemplate task_init;
    PromptTemplate base_init;

    static TemplateSet defaults();
    /// Reads plan_init.txt, task_init.txt and base_init.txt from `dir`;
    /// files that are absent keep the built-in text.
    static TemplateSet load(const std::filesystem::path& dir);
};

// ── plan text ───────────────────────────────────────────────────────

/// Extracts the first top-level JSON array of task objects from a model
/// completion, ignoring code fences and surrounding chatter.
/// Throws NoPlanFound or MalformedTask.
std::vector<TaskDraft> parse_plan_text(std::string_view completion);

// ── sessions ────────────────────────────────────────────────────────

inline constexpr int kPlanAttempts = 3;
inline constexpr std::size_t kDefaultMemoryCharBudget = 4000;

/// Everything the planner needs besides per-call inputs.
struct Planner {
    LlmBackend* gateway = nullptr;
    TemplateSet templates = TemplateSet::defaults();
    ChatParams params;
    std::string target_description;
    /// Operator-supplied text placed before the plan prompt; empty by default.
    std::string preamble;
    std::size_t memory_char_budget = kDefaultMemoryCharBudget;
    int max_attempts = kPlanAttempts;
};

struct FeedbackEntry {
    int task_id = 0;
    std::string instruction;
    std::string result_digest;
    std::string note;   // failures only
};

struct PlanFeedback {
    std::vector<FeedbackEntry> succeeded;
    std::vector<FeedbackEntry> failed;
    std::string phase_goal;
};

/// Collects finished tasks from the graph. `notes` maps task id to an error
/// note for failed tasks (timeouts, ambiguous verdicts, ...).
PlanFeedback build_feedback(const TaskGraph& graph, const std::string& phase_goal,
                            const std::map<int, std::string>& notes = {});

struct PlanResult {
    TaskGraph graph;
    std::vector<TaskDraft> drafts;
    int retries = 0;
};

struct SuccessJudgement {
    bool success = false;
    bool ambiguous = false;
    std::string raw_reply;
};

/// Total mapping from a model reply to a verdict: the first alphabetic token
/// decides ("yes" / "no"); anything else is ambiguous and fails closed.
SuccessJudgement judge_reply(std::string_view reply);

std::string build_plan_prompt(const Planner& planner, const PhaseSpec& phase, const std::string& context,
                              const std::vector<KnowledgeChunk>& memory_hits);

PlanResult generate_plan(const Planner& planner, const PhaseSpec& phase, const std::string& context,
                         const std::vector<KnowledgeChunk>& memory_hits = {});

/// Reflects on feedback, requests a revised task list and merges it with
/// the existing graph so completed work is retained.
PlanResult update_plan(const Planner& planner, const PhaseSpec& phase, const std::string& context,
                       const TaskGraph& graph, const PlanFeedback& feedback,
                       const std::vector<KnowledgeChunk>& memory_hits = {});

std::string detail_task(const Planner& planner, const PhaseSpec& phase, const TaskNode& task,
                        const std::string& shell_state);

SuccessJudgement check_result(const Planner& planner, const PhaseSpec& phase, const TaskNode& task,
                              const std::string& raw_result);

/// Phase-goal query asked after each successful task; fail-closed.
SuccessJudgement check_phase_goal(const Planner& planner, const PhaseSpec& phase, const TaskGraph& graph);

} // namespace autopent
