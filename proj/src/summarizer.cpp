#include "autopent/summarizer.hpp"

#include "autopent/errors.hpp"
#include "autopent/plan_sessions.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <sstream>

namespace autopent {

namespace {

constexpr std::size_t kResultExcerpt = 1500;
constexpr std::size_t kFactChars = 200;

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string first_nonempty_line(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        auto t = trim(line);
        if (!t.empty()) return t;
    }
    return "";
}

void add_fact(std::vector<std::string>& facts, std::string fact) {
    if (fact.empty()) return;
    if (std::find(facts.begin(), facts.end(), fact) == facts.end()) facts.push_back(std::move(fact));
}

PhaseSummary mechanical_summary(PhaseName phase, const std::vector<const TaskNode*>& done,
                                const ShellState& shell_state, std::size_t budget) {
    PhaseSummary summary{phase, "", {}, shell_state, true};
    for (const auto* task : done) {
        add_fact(summary.key_facts,
                 truncate_utf8(task->instruction + ": " + first_nonempty_line(task->result.value_or("")), kFactChars));
    }
    std::string digest;
    for (const auto& f : summary.key_facts) {
        if (!digest.empty()) digest += "\n";
        digest += f;
    }
    summary.digest = truncate_utf8(digest, budget);
    return summary;
}

} // namespace

std::string truncate_utf8(std::string_view text, std::size_t max_bytes) {
    if (text.size() <= max_bytes) return std::string(text);
    std::size_t cut = max_bytes;
    // back off continuation bytes (10xxxxxx)
    while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
    return std::string(text.substr(0, cut));
}

nlohmann::json summary_to_json(const PhaseSummary& summary) {
    return {{"phase", std::string(to_string(summary.phase))},
            {"digest", summary.digest},
            {"key_facts", summary.key_facts},
            {"shell_state",
             {{"description", summary.shell_state.description},
              {"last_updated_task", summary.shell_state.last_updated_task},
              {"last_updated_step", summary.shell_state.last_updated_step}}},
            {"degraded", summary.degraded}};
}

PhaseSummary summarize_phase(LlmBackend& gateway, const ChatParams& params, PhaseName phase,
                             const TaskGraph& graph, const ShellState& shell_state, std::size_t digest_budget) {
    std::vector<const TaskNode*> done;
    for (const auto& t : graph.tasks()) {
        if (t.completed()) done.push_back(&t);
    }
    if (done.empty()) return {phase, "no findings", {}, shell_state, false};

    std::ostringstream q;
    q << "Phase Summary for the " << display_name(phase) << " phase.\nSuccessful tasks:\n";
    for (const auto* t : done) {
        q << "- Task: " << t->instruction << "\n";
        if (t->command) q << "  Command: " << *t->command << "\n";
        q << "  Result: " << truncate_utf8(t->result.value_or(""), kResultExcerpt) << "\n";
    }
    q << "\nCurrent shell state: " << (shell_state.description.empty() ? "none" : shell_state.description) << "\n";
    q << "\nWrite a concise summary of these findings for the next phase (open ports, services, versions, "
         "vulnerabilities, credentials). Put each key fact on its own line starting with \"FACT: \".";

    std::string reply;
    try {
        reply = chat(gateway, {{Role::user, q.str()}}, params);
    } catch (const GatewayError& e) {
        spdlog::warn("summarizer: gateway failed ({}), using mechanical summary", e.what());
        return mechanical_summary(phase, done, shell_state, digest_budget);
    }

    PhaseSummary summary{phase, "", {}, shell_state, false};
    std::istringstream in(reply);
    std::string line, digest;
    while (std::getline(in, line)) {
        auto t = trim(line);
        if (t.starts_with("FACT:")) {
            add_fact(summary.key_facts, truncate_utf8(trim(t.substr(5)), kFactChars));
        } else if (!t.empty()) {
            if (!digest.empty()) digest += "\n";
            digest += t;
        }
    }
    if (digest.empty()) {
        for (const auto& f : summary.key_facts) digest += (digest.empty() ? "" : "; ") + f;
    }
    summary.digest = truncate_utf8(digest.empty() ? "no findings" : digest, digest_budget);
    return summary;
}

ShellState update_shell_state(LlmBackend& gateway, const ChatParams& params, const ShellState& state,
                              const TaskNode& task, int step) {
    if (!task.completed()) return state;
    const std::string result = truncate_utf8(task.result.value_or(""), kResultExcerpt);
    try {
        std::string check = "Shell State Check for task: " + task.instruction + "\n" +
                            (task.command ? "Command: " + *task.command + "\n" : "") + "Result:\n" + result +
                            "\n\nDid this task change the shell session held on the target (for example a new "
                            "login, user switch, or privilege change)? Reply with \"yes\" or \"no\".";
        if (!judge_reply(chat(gateway, {{Role::user, check}}, params)).success) return state;

        std::string describe = "Shell State Description for task: " + task.instruction + "\nResult:\n" + result +
                               "\n\nDescribe in one line the shell session now held on the target.";
        auto line = first_nonempty_line(chat(gateway, {{Role::user, describe}}, params));
        if (line.empty()) return state;
        return {line, task.id, std::max(step, state.last_updated_step)};
    } catch (const GatewayError& e) {
        spdlog::warn("summarizer: shell-state update skipped ({})", e.what());
        return state;
    }
}

std::string render_context(const std::vector<PhaseSummary>& prior, std::size_t budget) {
    std::string out;
    for (const auto& s : prior) {
        out += "[" + display_name(s.phase) + "]\n" + s.digest + "\n";
        if (!s.key_facts.empty()) {
            out += "Key facts:\n";
            for (const auto& f : s.key_facts) out += "- " + f + "\n";
        }
        if (!s.shell_state.description.empty()) out += "Shell state: " + s.shell_state.description + "\n";
        out += "\n";
    }
    return truncate_utf8(trim(out), budget);
}

} // namespace autopent
