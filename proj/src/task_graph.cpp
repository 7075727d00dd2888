#include "autopent/task_graph.hpp"

#include "autopent/errors.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <map>
#include <unordered_map>

namespace autopent {

std::string_view to_string(Action action) {
    return action == Action::shell ? "shell" : "manual";
}

std::optional<Action> parse_action(std::string_view text) {
    if (text == "shell") return Action::shell;
    if (text == "manual") return Action::manual;
    return std::nullopt;
}

namespace {

bool blank(std::string_view text) {
    return std::all_of(text.begin(), text.end(),
                       [](unsigned char c) { return std::isspace(c) != 0; });
}

// Structural checks shared by drafts and stateful nodes. Returns id -> index.
std::map<int, std::size_t> check_structure(const std::vector<TaskNode>& nodes) {
    if (nodes.empty()) throw GraphError("task list is empty");

    std::map<int, std::size_t> index;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto& node = nodes[i];
        if (node.id < 1) throw GraphError("task id must be positive, got " + std::to_string(node.id));
        if (!index.emplace(node.id, i).second) throw DuplicateId(node.id);
        if (blank(node.instruction)) throw EmptyInstruction(node.id);
    }
    for (const auto& node : nodes) {
        for (int dep : node.dependencies) {
            if (dep != node.id && !index.contains(dep)) throw UnknownDependency(node.id, dep);
        }
    }

    // Iterative three-colour DFS; the grey stack gives the cycle.
    enum class Colour { white, grey, black };
    std::map<int, Colour> colour;
    for (const auto& [id, _] : index) colour[id] = Colour::white;

    for (const auto& [root, _] : index) {
        if (colour[root] != Colour::white) continue;
        struct Frame {
            int id;
            std::set<int>::const_iterator next;
        };
        std::vector<Frame> stack;
        colour[root] = Colour::grey;
        stack.push_back({root, nodes[index.at(root)].dependencies.begin()});
        while (!stack.empty()) {
            auto& frame = stack.back();
            const auto& deps = nodes[index.at(frame.id)].dependencies;
            if (frame.next == deps.end()) {
                colour[frame.id] = Colour::black;
                stack.pop_back();
                continue;
            }
            int dep = *frame.next++;
            if (colour[dep] == Colour::grey) {
                std::vector<int> cycle;
                auto it = std::find_if(stack.begin(), stack.end(),
                                       [dep](const Frame& f) { return f.id == dep; });
                for (; it != stack.end(); ++it) cycle.push_back(it->id);
                throw CyclicDependencies(std::move(cycle));
            }
            if (colour[dep] == Colour::white) {
                colour[dep] = Colour::grey;
                stack.push_back({dep, nodes[index.at(dep)].dependencies.begin()});
            }
        }
    }
    return index;
}

} // namespace

TaskGraph TaskGraph::from_nodes(std::vector<TaskNode> nodes) {
    auto index = check_structure(nodes);
    for (const auto& node : nodes) {
        if (node.success && !node.finished) {
            throw InvalidTaskState("task " + std::to_string(node.id) + " succeeded but is not finished");
        }
        if (node.command && node.action != Action::shell) {
            throw InvalidTaskState("manual task " + std::to_string(node.id) + " carries a command");
        }
        if (node.completed()) {
            for (int dep : node.dependencies) {
                if (!nodes[index.at(dep)].completed()) {
                    throw InvalidTaskState("completed task " + std::to_string(node.id) +
                                           " depends on unfinished task " + std::to_string(dep));
                }
            }
        }
    }
    return TaskGraph(std::move(nodes));
}

const TaskNode* TaskGraph::find(int id) const {
    auto it = std::find_if(tasks_.begin(), tasks_.end(), [id](const TaskNode& t) { return t.id == id; });
    return it == tasks_.end() ? nullptr : &*it;
}

const TaskNode& TaskGraph::at(int id) const {
    if (const auto* node = find(id)) return *node;
    throw UnknownTask(id);
}

std::vector<std::pair<int, int>> TaskGraph::edges() const {
    std::vector<std::pair<int, int>> out;
    for (const auto& node : tasks_) {
        for (int dep : node.dependencies) out.emplace_back(dep, node.id);
    }
    std::sort(out.begin(), out.end());
    return out;
}

bool TaskGraph::any_finished() const {
    return std::any_of(tasks_.begin(), tasks_.end(), [](const TaskNode& t) { return t.finished; });
}

bool TaskGraph::all_finished() const {
    return std::all_of(tasks_.begin(), tasks_.end(), [](const TaskNode& t) { return t.finished; });
}

TaskGraph validate_graph(const std::vector<TaskDraft>& drafts) {
    std::vector<TaskNode> nodes;
    nodes.reserve(drafts.size());
    for (const auto& draft : drafts) {
        TaskNode node;
        node.id = draft.id;
        node.instruction = draft.instruction;
        node.action = draft.action;
        node.dependencies.insert(draft.dependencies.begin(), draft.dependencies.end());
        nodes.push_back(std::move(node));
    }
    check_structure(nodes);
    return TaskGraph(std::move(nodes));
}

std::vector<TaskNode> ready_tasks(const TaskGraph& graph) {
    std::vector<TaskNode> ready;
    for (const auto& node : graph.tasks()) {
        if (node.finished) continue;
        bool satisfied = std::all_of(node.dependencies.begin(), node.dependencies.end(),
                                     [&](int dep) { return graph.at(dep).completed(); });
        if (satisfied) ready.push_back(node);
    }
    std::sort(ready.begin(), ready.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return ready;
}

TaskGraph record_result(const TaskGraph& graph, int task_id, std::optional<std::string> command,
                        std::string result, bool success) {
    auto tasks = graph.tasks();
    auto it = std::find_if(tasks.begin(), tasks.end(), [&](const TaskNode& t) { return t.id == task_id; });
    if (it == tasks.end()) throw UnknownTask(task_id);
    if (it->finished) throw AlreadyFinished(task_id);
    if (success) {
        for (int dep : it->dependencies) {
            if (!graph.at(dep).completed()) {
                throw InvalidTaskState("task " + std::to_string(task_id) +
                                       " cannot succeed before dependency " + std::to_string(dep));
            }
        }
    }
    if (command && it->action == Action::shell) it->command = std::move(command);
    it->result = std::move(result);
    it->finished = true;
    it->success = success;
    return TaskGraph(std::move(tasks));
}

TaskGraph record_command(const TaskGraph& graph, int task_id, std::string command) {
    auto tasks = graph.tasks();
    auto it = std::find_if(tasks.begin(), tasks.end(), [&](const TaskNode& t) { return t.id == task_id; });
    if (it == tasks.end()) throw UnknownTask(task_id);
    if (it->finished) throw AlreadyFinished(task_id);
    if (it->action != Action::shell) {
        throw InvalidTaskState("manual task " + std::to_string(task_id) + " cannot carry a command");
    }
    it->command = std::move(command);
    return TaskGraph(std::move(tasks));
}

std::string normalize_instruction(std::string_view instruction) {
    std::string out;
    out.reserve(instruction.size());
    bool pending_space = false;
    for (unsigned char c : instruction) {
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

std::vector<TaskNode> merge_plan(const std::vector<TaskDraft>& new_tasks,
                                 const std::vector<TaskNode>& old_tasks) {
    std::vector<const TaskNode*> completed;
    std::unordered_map<std::string, const TaskNode*> completed_by_key;
    for (const auto& task : old_tasks) {
        if (!task.completed()) continue;
        completed.push_back(&task);
        completed_by_key.emplace(normalize_instruction(task.instruction), &task);
    }

    std::unordered_map<std::string, bool> in_new;
    for (const auto& draft : new_tasks) in_new[normalize_instruction(draft.instruction)] = true;

    // Each merged entry remembers which id space its dependencies live in.
    struct Entry {
        TaskNode node;
        std::vector<int> deps;
        bool deps_from_old = false;
    };
    std::vector<Entry> merged;
    std::map<int, int> old_to_merged;
    std::map<int, int> draft_to_merged;

    // Step 1: completed work the new plan no longer mentions.
    for (const auto* task : completed) {
        if (in_new.contains(normalize_instruction(task->instruction))) continue;
        Entry entry{*task, {task->dependencies.begin(), task->dependencies.end()}, true};
        old_to_merged[task->id] = static_cast<int>(merged.size()) + 1;
        merged.push_back(std::move(entry));
    }

    // Step 2: new tasks, reusing completed ones where the instruction matches.
    for (const auto& draft : new_tasks) {
        auto key = normalize_instruction(draft.instruction);
        auto hit = completed_by_key.find(key);
        if (hit != completed_by_key.end()) {
            auto reused = old_to_merged.find(hit->second->id);
            if (reused != old_to_merged.end()) {
                // Already reused by an earlier duplicate draft.
                draft_to_merged.emplace(draft.id, reused->second);
                continue;
            }
            Entry entry{*hit->second, draft.dependencies, false};
            int merged_id = static_cast<int>(merged.size()) + 1;
            old_to_merged[hit->second->id] = merged_id;
            draft_to_merged.emplace(draft.id, merged_id);
            merged.push_back(std::move(entry));
        } else {
            TaskNode fresh;
            fresh.instruction = draft.instruction;
            fresh.action = draft.action;
            draft_to_merged.emplace(draft.id, static_cast<int>(merged.size()) + 1);
            merged.push_back({std::move(fresh), draft.dependencies, false});
        }
    }

    std::vector<TaskNode> out;
    out.reserve(merged.size());
    for (std::size_t i = 0; i < merged.size(); ++i) {
        auto& entry = merged[i];
        TaskNode node = std::move(entry.node);
        node.id = static_cast<int>(i) + 1;
        node.dependencies.clear();
        const auto& map = entry.deps_from_old ? old_to_merged : draft_to_merged;
        for (int dep : entry.deps) {
            auto it = map.find(dep);
            if (it == map.end()) {
                spdlog::warn("merge_plan: task '{}' drops dependency {} (not in merged plan)",
                             node.instruction, dep);
                continue;
            }
            node.dependencies.insert(it->second);
        }
        out.push_back(std::move(node));
    }

    // A completed task may only depend on completed tasks.
    for (auto& node : out) {
        if (!node.completed()) continue;
        for (auto it = node.dependencies.begin(); it != node.dependencies.end();) {
            const auto& dep = out[static_cast<std::size_t>(*it) - 1];
            if (dep.completed()) {
                ++it;
                continue;
            }
            spdlog::warn("merge_plan: completed task '{}' drops dependency on unfinished task '{}'",
                         node.instruction, dep.instruction);
            it = node.dependencies.erase(it);
        }
    }
    return out;
}

TaskGraph merge_into_graph(const std::vector<TaskDraft>& new_tasks, const TaskGraph& old) {
    return TaskGraph::from_nodes(merge_plan(new_tasks, old.tasks()));
}

std::vector<TaskDraft> as_drafts(const std::vector<TaskNode>& nodes) {
    std::vector<TaskDraft> drafts;
    drafts.reserve(nodes.size());
    for (const auto& node : nodes) {
        drafts.push_back({node.id, {node.dependencies.begin(), node.dependencies.end()},
                          node.instruction, node.action});
    }
    return drafts;
}

nlohmann::json drafts_to_json(const std::vector<TaskDraft>& drafts) {
    auto out = nlohmann::json::array();
    for (const auto& d : drafts) {
        out.push_back({{"id", d.id},
                       {"dependencies", d.dependencies},
                       {"instruction", d.instruction},
                       {"action", std::string(to_string(d.action))}});
    }
    return out;
}

std::string serialize_drafts(const std::vector<TaskDraft>& drafts) {
    return drafts_to_json(drafts).dump();
}

nlohmann::json node_to_json(const TaskNode& node) {
    nlohmann::json out = {{"id", node.id},
                          {"instruction", node.instruction},
                          {"action", std::string(to_string(node.action))},
                          {"dependencies", std::vector<int>(node.dependencies.begin(), node.dependencies.end())},
                          {"finished", node.finished},
                          {"success", node.success}};
    out["command"] = node.command ? nlohmann::json(*node.command) : nlohmann::json(nullptr);
    out["result"] = node.result ? nlohmann::json(*node.result) : nlohmann::json(nullptr);
    return out;
}

nlohmann::json graph_to_json(const TaskGraph& graph) {
    auto out = nlohmann::json::array();
    for (const auto& node : graph.tasks()) out.push_back(node_to_json(node));
    return out;
}

} // namespace autopent
