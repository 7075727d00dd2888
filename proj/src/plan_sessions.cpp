#include "autopent/plan_sessions.hpp"

#include "autopent/errors.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace autopent {

namespace {

constexpr std::string_view kPlanInit =
    R"(You are a {name} Assistant running on Kali Linux 2023. Your role is to assist testers in the cybersecurity training process. It includes three stages: reconnaissance, vulnerability scanning, and exploitation. You focus on the {name} phase. You must consider the context of the previous phases if applicable.

Overall Target:
{init_description}

Phase Goal:
{goal}

Optional Reference Tools (may or may not be used):
{tools}

The context of the previous phases:
{context}
)";

constexpr std::string_view kTaskInit =
    R"(You are a {name} Assistant running on Kali Linux 2023. Your role is to assist testers in the cybersecurity training process.

You will receive two types of input:
1. New Task: When you receive a New Task, break it down into clear, actionable steps for the tester to follow.
2. Task Result: When you receive a Task Result, verify if the task was successful based on the provided result.

Reply with "yes" if you understood.
)";

constexpr std::string_view kBaseInit =
    R"(Role: You are a CTF player. You are working towards the final task in a step-by-step manner.

Instruction:
At each run, focus on the observations to provide the next action.
)";

constexpr std::string_view kPlanFormat =
    R"(Reply with the task list as a JSON array. Each element must be an object with exactly these fields: "id" (positive integer, unique), "dependencies" (array of ids of tasks that must succeed first), "instruction" (string), "action" ("shell" or "manual").)";

constexpr std::size_t kResultDigestChars = 600;

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

struct Span {
    std::size_t begin;
    std::size_t end;   // one past '}'
    std::string name;
};

// Every "{identifier}" occurrence in the body.
std::vector<Span> scan_placeholders(std::string_view body) {
    std::vector<Span> out;
    for (std::size_t i = 0; i < body.size(); ++i) {
        if (body[i] != '{' || i + 1 >= body.size() || !is_ident_start(body[i + 1])) continue;
        std::size_t j = i + 1;
        while (j < body.size() && is_ident(body[j])) ++j;
        if (j < body.size() && body[j] == '}') {
            out.push_back({i, j + 1, std::string(body.substr(i + 1, j - i - 1))});
            i = j;
        }
    }
    return out;
}

bool known_placeholder(std::string_view name) {
    return std::find(kPlaceholders.begin(), kPlaceholders.end(), name) != kPlaceholders.end();
}

std::string join_tools(const std::vector<std::string>& tools) {
    std::string out;
    for (const auto& t : tools) {
        if (!out.empty()) out += ", ";
        out += t;
    }
    return out.empty() ? "None" : out;
}

std::map<std::string, std::string> bindings_for(const Planner& planner, const PhaseSpec& phase,
                                                const std::string& context) {
    return {{"name", display_name(phase.name)},
            {"init_description", planner.target_description},
            {"goal", phase.goal},
            {"tools", join_tools(phase.tools)},
            {"context", context.empty() ? "None (this is the first phase)." : context}};
}

std::string digest(const std::optional<std::string>& text) {
    if (!text) return "";
    if (text->size() <= kResultDigestChars) return *text;
    return text->substr(0, kResultDigestChars) + " [...]";
}

LlmBackend& gateway_of(const Planner& planner) {
    if (!planner.gateway) throw ConfigError("planner has no gateway");
    return *planner.gateway;
}

// Task-session conversation: the init prompt, its acknowledgement, then the query.
std::vector<ChatMessage> task_session(const Planner& planner, const PhaseSpec& phase, std::string query) {
    auto init = render_prompt(planner.templates.task_init, bindings_for(planner, phase, ""));
    return {{Role::user, std::move(init)}, {Role::assistant, "yes"}, {Role::user, std::move(query)}};
}

std::string reference_section(const std::vector<KnowledgeChunk>& hits, std::size_t budget) {
    std::string body;
    for (const auto& hit : hits) {
        body += "[" + hit.source_doc + "] " + hit.text + "\n";
    }
    if (body.size() > budget) body = body.substr(0, budget);
    return body;
}

// Finds the bracket closing the array opened at `open`, honouring JSON strings.
std::optional<std::size_t> matching_bracket(std::string_view text, std::size_t open) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = open; i < text.size(); ++i) {
        char c = text[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '[' || c == '{') {
            ++depth;
        } else if (c == ']' || c == '}') {
            if (--depth == 0) return c == ']' ? std::optional(i) : std::nullopt;
            if (depth < 0) return std::nullopt;
        }
    }
    return std::nullopt;
}

std::string strip_fences(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size();) {
        if (text.compare(i, 3, "```") == 0) {
            i += 3;
            // drop an info string such as "json" directly after the fence
            while (i < text.size() && std::isalpha(static_cast<unsigned char>(text[i]))) ++i;
            continue;
        }
        out.push_back(text[i++]);
    }
    return out;
}

TaskDraft draft_from_json(const nlohmann::json& item, std::size_t index) {
    if (!item.is_object()) throw MalformedTask(index, "not an object");
    for (const auto& [key, _] : item.items()) {
        if (key != "id" && key != "dependencies" && key != "instruction" && key != "action") {
            spdlog::warn("plan task {}: ignoring unknown field '{}'", index, key);
        }
    }
    TaskDraft draft;
    if (!item.contains("id") || !item["id"].is_number_integer()) throw MalformedTask(index, "missing integer 'id'");
    auto id = item["id"].get<long long>();
    if (id < 1 || id > 1'000'000) throw MalformedTask(index, "'id' must be a positive integer");
    draft.id = static_cast<int>(id);

    if (item.contains("dependencies") && !item["dependencies"].is_null()) {
        const auto& deps = item["dependencies"];
        if (!deps.is_array()) throw MalformedTask(index, "'dependencies' must be an array");
        for (const auto& d : deps) {
            if (!d.is_number_integer()) throw MalformedTask(index, "dependency ids must be integers");
            auto dep = d.get<long long>();
            if (dep < 1 || dep > 1'000'000) throw MalformedTask(index, "dependency ids must be positive");
            if (std::find(draft.dependencies.begin(), draft.dependencies.end(), dep) == draft.dependencies.end()) {
                draft.dependencies.push_back(static_cast<int>(dep));
            }
        }
    }

    if (!item.contains("instruction") || !item["instruction"].is_string()) {
        throw MalformedTask(index, "missing string 'instruction'");
    }
    draft.instruction = item["instruction"].get<std::string>();

    if (!item.contains("action")) {
        spdlog::warn("plan task {}: missing action, using manual", index);
        draft.action = Action::manual;
    } else if (!item["action"].is_string()) {
        throw MalformedTask(index, "'action' must be a string");
    } else if (auto action = parse_action(item["action"].get<std::string>())) {
        draft.action = *action;
    } else {
        spdlog::warn("plan task {}: unknown action '{}', using manual", index, item["action"].get<std::string>());
        draft.action = Action::manual;
    }
    return draft;
}

template <typename Fn>
PlanResult with_retries(const Planner& planner, std::string prompt, const std::vector<ChatMessage>& prefix, Fn&& build) {
    std::string last_error;
    int attempts = std::max(1, planner.max_attempts);
    for (int attempt = 0; attempt < attempts; ++attempt) {
        auto messages = prefix;
        std::string text = prompt;
        if (attempt > 0) {
            text += "\n\nYour previous reply could not be used: " + last_error +
                    "\nReturn a corrected task list in the required JSON format.";
        }
        messages.push_back({Role::user, std::move(text)});
        auto completion = chat(gateway_of(planner), messages, planner.params);
        try {
            auto drafts = parse_plan_text(completion);
            if (drafts.empty()) throw GraphError("task list is empty");
            auto graph = build(drafts);
            return {std::move(graph), std::move(drafts), attempt};
        } catch (const GraphError& e) {
            last_error = e.what();
        } catch (const NoPlanFound& e) {
            last_error = e.what();
        } catch (const MalformedTask& e) {
            last_error = e.what();
        }
        spdlog::warn("plan attempt {}/{} rejected: {}", attempt + 1, attempts, last_error);
    }
    throw PlanGenerationFailed(attempts, last_error);
}

} // namespace

std::string_view to_string(TemplateId id) {
    switch (id) {
    case TemplateId::plan_init: return "plan_init";
    case TemplateId::task_init: return "task_init";
    case TemplateId::base_init: return "base_init";
    }
    return "plan_init";
}

PromptTemplate make_template(TemplateId id, std::string body) {
    for (const auto& span : scan_placeholders(body)) {
        if (!known_placeholder(span.name)) {
            throw InvalidTemplate(std::string(to_string(id)) + ": unknown placeholder {" + span.name + "}");
        }
    }
    return {id, std::move(body)};
}

std::vector<std::string> placeholders_in(std::string_view body) {
    std::vector<std::string> out;
    for (auto& span : scan_placeholders(body)) {
        if (known_placeholder(span.name) && std::find(out.begin(), out.end(), span.name) == out.end()) {
            out.push_back(std::move(span.name));
        }
    }
    return out;
}

std::string render_prompt(const PromptTemplate& tmpl, const std::map<std::string, std::string>& bindings) {
    std::string out;
    std::size_t pos = 0;
    for (const auto& span : scan_placeholders(tmpl.body)) {
        if (!known_placeholder(span.name)) continue;
        auto it = bindings.find(span.name);
        if (it == bindings.end()) throw MissingBinding(span.name);
        out.append(tmpl.body, pos, span.begin - pos);
        out += it->second;
        pos = span.end;
    }
    out.append(tmpl.body, pos);
    return out;
}

TemplateSet TemplateSet::defaults() {
    return {make_template(TemplateId::plan_init, std::string(kPlanInit)),
            make_template(TemplateId::task_init, std::string(kTaskInit)),
            make_template(TemplateId::base_init, std::string(kBaseInit))};
}

TemplateSet TemplateSet::load(const std::filesystem::path& dir) {
    auto set = defaults();
    auto read = [&](TemplateId id, PromptTemplate& slot) {
        auto file = dir / (std::string(to_string(id)) + ".txt");
        if (!std::filesystem::exists(file)) return;
        std::ifstream in(file);
        std::stringstream buf;
        buf << in.rdbuf();
        slot = make_template(id, buf.str());
    };
    read(TemplateId::plan_init, set.plan_init);
    read(TemplateId::task_init, set.task_init);
    read(TemplateId::base_init, set.base_init);
    return set;
}

std::vector<TaskDraft> parse_plan_text(std::string_view completion) {
    const auto text = strip_fences(completion);
    bool saw_empty = false;
    for (std::size_t open = text.find('['); open != std::string::npos; open = text.find('[', open + 1)) {
        auto close = matching_bracket(text, open);
        if (!close) continue;
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(text.substr(open, *close - open + 1));
        } catch (const nlohmann::json::exception&) {
            continue;
        }
        bool tasks_array = std::all_of(doc.begin(), doc.end(), [](const auto& e) { return e.is_object(); });
        if (!tasks_array) continue;
        if (doc.empty()) {
            saw_empty = true;
            continue;
        }

        std::vector<TaskDraft> drafts;
        for (std::size_t i = 0; i < doc.size(); ++i) drafts.push_back(draft_from_json(doc[i], i));
        return drafts;
    }
    if (saw_empty) return {};
    throw NoPlanFound();
}

PlanFeedback build_feedback(const TaskGraph& graph, const std::string& phase_goal,
                            const std::map<int, std::string>& notes) {
    PlanFeedback feedback;
    feedback.phase_goal = phase_goal;
    for (const auto& task : graph.tasks()) {
        if (!task.finished) continue;
        FeedbackEntry entry{task.id, task.instruction, digest(task.result), ""};
        if (task.success) {
            feedback.succeeded.push_back(std::move(entry));
        } else {
            auto it = notes.find(task.id);
            entry.note = it != notes.end() ? it->second : "judged unsuccessful";
            feedback.failed.push_back(std::move(entry));
        }
    }
    return feedback;
}

SuccessJudgement judge_reply(std::string_view reply) {
    SuccessJudgement out;
    out.raw_reply = std::string(reply);
    auto begin = std::find_if(reply.begin(), reply.end(), [](unsigned char c) { return std::isalpha(c); });
    auto end = std::find_if(begin, reply.end(), [](unsigned char c) { return !std::isalpha(c); });
    std::string token;
    for (auto it = begin; it != end; ++it) token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(*it))));
    if (token == "yes") {
        out.success = true;
    } else if (token != "no") {
        out.ambiguous = true;
    }
    return out;
}

std::string build_plan_prompt(const Planner& planner, const PhaseSpec& phase, const std::string& context,
                              const std::vector<KnowledgeChunk>& memory_hits) {
    std::string prompt;
    if (!planner.preamble.empty()) prompt += planner.preamble + "\n\n";
    prompt += render_prompt(planner.templates.plan_init, bindings_for(planner, phase, context));
    prompt += "\n";
    prompt += kPlanFormat;
    if (!memory_hits.empty()) {
        prompt += "\n\nReference knowledge:\n";
        prompt += reference_section(memory_hits, planner.memory_char_budget);
    }
    return prompt;
}

PlanResult generate_plan(const Planner& planner, const PhaseSpec& phase, const std::string& context,
                         const std::vector<KnowledgeChunk>& memory_hits) {
    return with_retries(planner, build_plan_prompt(planner, phase, context, memory_hits), {},
                        [](const std::vector<TaskDraft>& drafts) { return validate_graph(drafts); });
}

PlanResult update_plan(const Planner& planner, const PhaseSpec& phase, const std::string& context,
                       const TaskGraph& graph, const PlanFeedback& feedback,
                       const std::vector<KnowledgeChunk>& memory_hits) {
    if (!graph.any_finished()) throw Error("update_plan requires at least one finished task");

    std::ostringstream q;
    q << "Plan Update for the " << display_name(phase.name) << " phase.\n";
    q << "Phase goal: " << feedback.phase_goal << "\n\n";
    q << "Current task list:\n" << serialize_drafts(as_drafts(graph.tasks())) << "\n\n";
    q << "Successful tasks:\n";
    if (feedback.succeeded.empty()) q << "- none\n";
    for (const auto& e : feedback.succeeded) q << "- [" << e.task_id << "] " << e.instruction << " => " << e.result_digest << "\n";
    q << "\nFailed tasks:\n";
    if (feedback.failed.empty()) q << "- none\n";
    for (const auto& e : feedback.failed) {
        q << "- [" << e.task_id << "] " << e.instruction << " => " << e.result_digest << " (" << e.note << ")\n";
    }
    q << "\nReflect on why the failed tasks did not succeed and revise the plan. Keep successful tasks, "
         "replace or correct failed ones, and add any tasks still needed to reach the phase goal.\n";
    q << kPlanFormat;
    if (!memory_hits.empty()) {
        q << "\n\nReference knowledge:\n" << reference_section(memory_hits, planner.memory_char_budget);
    }

    std::vector<ChatMessage> prefix;
    std::string system;
    if (!planner.preamble.empty()) system += planner.preamble + "\n\n";
    system += render_prompt(planner.templates.plan_init, bindings_for(planner, phase, context));
    prefix.push_back({Role::system, std::move(system)});

    return with_retries(planner, q.str(), prefix, [&](const std::vector<TaskDraft>& drafts) {
        validate_graph(drafts);
        return merge_into_graph(drafts, graph);
    });
}

std::string detail_task(const Planner& planner, const PhaseSpec& phase, const TaskNode& task,
                        const std::string& shell_state) {
    std::string query = "New Task:\n" + task.instruction + "\n\nCurrent shell state: " +
                        (shell_state.empty() ? "no session established" : shell_state);
    auto reply = chat(gateway_of(planner), task_session(planner, phase, std::move(query)), planner.params);
    auto b = reply.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return task.instruction;
    auto e = reply.find_last_not_of(" \t\r\n");
    return reply.substr(b, e - b + 1);
}

SuccessJudgement check_result(const Planner& planner, const PhaseSpec& phase, const TaskNode& task,
                              const std::string& raw_result) {
    std::string query = "Task Result for: " + task.instruction + "\nResult:\n" + raw_result +
                        "\n\nWas the task successful? Reply with \"yes\" or \"no\" first, then a brief reason.";
    return judge_reply(chat(gateway_of(planner), task_session(planner, phase, std::move(query)), planner.params));
}

SuccessJudgement check_phase_goal(const Planner& planner, const PhaseSpec& phase, const TaskGraph& graph) {
    std::ostringstream q;
    q << "Phase Goal Check for the " << display_name(phase.name) << " phase.\n";
    q << "Goal: " << phase.goal << "\n\nCompleted tasks:\n";
    for (const auto& t : graph.tasks()) {
        if (t.completed()) q << "- " << t.instruction << " => " << digest(t.result) << "\n";
    }
    q << "\nHas the phase goal been met? Reply with \"yes\" or \"no\" first.";
    return judge_reply(chat(gateway_of(planner), task_session(planner, phase, q.str()), planner.params));
}

} // namespace autopent
