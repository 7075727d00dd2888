#pragma once

#include <json.hpp>

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace autopent {

enum class Action { shell, manual };

std::string_view to_string(Action action);
std::optional<Action> parse_action(std::string_view text);

/// A task as the planner emits it: no execution state yet.
struct TaskDraft {
    int id = 0;
    std::vector<int> dependencies;
    std::string instruction;
    Action action = Action::shell;

    bool operator==(const TaskDraft&) const = default;
};

/// One vertex of the penetration task graph.
struct TaskNode {
    int id = 0;
    std::string instruction;
    Action action = Action::shell;
    std::set<int> dependencies;
    std::optional<std::string> command;
    std::optional<std::string> result;
    bool finished = false;
    bool success = false;

    bool completed() const { return finished && success; }
    bool failed() const { return finished && !success; }

    bool operator==(const TaskNode&) const = default;
};

/// Immutable DAG of tasks. Every constructor path validates; every mutation
/// returns a new graph.
class TaskGraph {
public:
    TaskGraph() = default;

    /// Builds a graph from nodes that may already carry execution state
    /// (used by merge_plan and snapshot restore). Validates structure and
    /// the finished/success invariants.
    static TaskGraph from_nodes(std::vector<TaskNode> nodes);

    const std::vector<TaskNode>& tasks() const { return tasks_; }
    std::size_t size() const { return tasks_.size(); }
    bool empty() const { return tasks_.empty(); }

    const TaskNode* find(int id) const;
    const TaskNode& at(int id) const;

    /// Edges as (dependency, dependent) pairs, sorted.
    std::vector<std::pair<int, int>> edges() const;

    bool any_finished() const;
    bool all_finished() const;

    bool operator==(const TaskGraph&) const = default;

private:
    explicit TaskGraph(std::vector<TaskNode> tasks) : tasks_(std::move(tasks)) {}

    std::vector<TaskNode> tasks_;

    friend TaskGraph validate_graph(const std::vector<TaskDraft>& drafts);
    friend TaskGraph record_result(const TaskGraph&, int, std::optional<std::string>,
                                   std::string, bool);
    friend TaskGraph record_command(const TaskGraph&, int, std::string);
};

/// Validates a planner draft list into a fresh graph (nothing finished).
/// Throws CyclicDependencies, UnknownDependency, DuplicateId, EmptyInstruction,
/// or GraphError for an empty draft list / non-positive id.
TaskGraph validate_graph(const std::vector<TaskDraft>& drafts);

/// Unfinished tasks whose dependencies all finished with success, by ascending id.
std::vector<TaskNode> ready_tasks(const TaskGraph& graph);

/// Marks a task finished. Throws UnknownTask or AlreadyFinished.
TaskGraph record_result(const TaskGraph& graph, int task_id, std::optional<std::string> command,
                        std::string result, bool success);

/// Stores the generated command on an unfinished shell task without finishing it.
TaskGraph record_command(const TaskGraph& graph, int task_id, std::string command);

/// Case-folded, whitespace-collapsed instruction text; the identity key used
/// to match tasks across replans.
std::string normalize_instruction(std::string_view instruction);

/// Merges a revised draft list into the previous plan, retaining completed
/// work. Output ids are 1..n in merged order with dependencies remapped.
std::vector<TaskNode> merge_plan(const std::vector<TaskDraft>& new_tasks,
                                 const std::vector<TaskNode>& old_tasks);

/// merge_plan followed by validation of the merged result.
TaskGraph merge_into_graph(const std::vector<TaskDraft>& new_tasks, const TaskGraph& old);

std::vector<TaskDraft> as_drafts(const std::vector<TaskNode>& nodes);

// ── plan wire format ────────────────────────────────────────────────
nlohmann::json drafts_to_json(const std::vector<TaskDraft>& drafts);
std::string serialize_drafts(const std::vector<TaskDraft>& drafts);

/// Full node state, as exposed by snapshots and the event log.
nlohmann::json node_to_json(const TaskNode& node);
nlohmann::json graph_to_json(const TaskGraph& graph);

} // namespace autopent
