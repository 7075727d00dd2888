#include "autopent/phase_pipeline.hpp"

#include "autopent/errors.hpp"

#include <spdlog/spdlog.h>

namespace autopent {

namespace {

constexpr std::string_view kManualUnavailable = "manual action unavailable in automatic mode";

nlohmann::json phase_json(PhaseName phase) { return std::string(to_string(phase)); }

} // namespace

std::string_view to_string(Mode mode) {
    switch (mode) {
    case Mode::automatic: return "automatic";
    case Mode::manual: return "manual";
    case Mode::semi_automatic: return "semi-automatic";
    }
    return "automatic";
}

std::optional<Mode> parse_mode(std::string_view text) {
    if (text == "automatic") return Mode::automatic;
    if (text == "manual") return Mode::manual;
    if (text == "semi-automatic" || text == "semi_automatic") return Mode::semi_automatic;
    return std::nullopt;
}

void SessionConfig::validate() const {
    if (per_phase_budget < 1) throw ConfigError("steps per phase must be at least 1");
    if (temperature < 0.0 || temperature > 2.0) throw ConfigError("temperature must lie in [0, 2]");
    if (target_description.empty()) throw ConfigError("a target description is required");
    if (filter_threshold == 0) throw ConfigError("filter threshold must be positive");
    if (command_timeout.count() <= 0) throw ConfigError("command timeout must be positive");
}

nlohmann::json config_to_json(const SessionConfig& c) {
    return {{"mode", std::string(to_string(c.mode))},
            {"target", c.target_description},
            {"steps_per_phase", c.per_phase_budget},
            {"temperature", c.temperature},
            {"model", c.model_id},
            {"rag", c.retrieval_enabled},
            {"template_dir", c.template_dir.string()},
            {"knowledge_dir", c.knowledge_dir.string()},
            {"approval_gate", c.approval_gate},
            {"filter_threshold", c.filter_threshold},
            {"digest_budget", c.digest_budget},
            {"memory_char_budget", c.memory_char_budget},
            {"command_timeout_s", c.command_timeout.count() / 1000.0}};
}

std::string SessionReport::status_text() const {
    switch (status) {
    case SessionStatus::running: return "running";
    case SessionStatus::finished: return "finished";
    case SessionStatus::failed:
        return "failed_at(" + std::string(to_string(failed_phase.value_or(PhaseName::reconnaissance))) + ")";
    }
    return "running";
}

nlohmann::json report_to_json(const SessionReport& report) {
    nlohmann::json phases = nlohmann::json::array();
    for (const auto& p : report.phases) {
        phases.push_back({{"phase", phase_json(p.phase)},
                          {"steps_used", p.steps_used},
                          {"step_budget", p.step_budget},
                          {"goal_met", p.goal_met},
                          {"note", p.failure_stage_note ? nlohmann::json(*p.failure_stage_note) : nlohmann::json(nullptr)},
                          {"summary", summary_to_json(p.summary)}});
    }
    return {{"status", report.status_text()}, {"total_steps", report.total_steps}, {"phases", phases}};
}

SessionRunner::SessionRunner(SessionConfig config, SessionDeps deps)
    : config_(std::move(config)), deps_(std::move(deps)) {
    config_.validate();
    if (!deps_.gateway || !deps_.channel || !deps_.log) {
        throw ConfigError("a session needs a gateway, an execution channel and an event log");
    }
    if (config_.mode != Mode::automatic && !deps_.human) {
        throw ConfigError(std::string(to_string(config_.mode)) + " mode needs an operator console");
    }
    if (config_.approval_gate && !deps_.human) throw ConfigError("the approval gate needs an operator console");

    planner_.gateway = deps_.gateway;
    planner_.templates = config_.template_dir.empty() ? TemplateSet::defaults() : TemplateSet::load(config_.template_dir);
    planner_.params.temperature = config_.temperature;
    planner_.params.model_id = config_.model_id;
    planner_.target_description = config_.target_description;
    planner_.preamble = config_.preamble;
    planner_.memory_char_budget = config_.memory_char_budget;
    phases_ = default_phases(config_.per_phase_budget);
}

void SessionRunner::publish(const PhaseSpec& phase, const TaskGraph& graph, int steps, std::optional<int> running) {
    if (!deps_.on_snapshot) return;
    deps_.on_snapshot({phase.name, graph, steps, phase.step_budget, running, deps_.log->last_seq()});
}

std::vector<KnowledgeChunk> SessionRunner::memory_hits(const PhaseSpec& phase, const std::string& context) const {
    if (!config_.retrieval_enabled || !deps_.retrieval || !deps_.retrieval->store || !deps_.retrieval->embedder) {
        return {};
    }
    auto query = display_name(phase.name) + ": " + phase.goal + "\n" + config_.target_description + "\n" + context;
    std::vector<KnowledgeChunk> out;
    for (auto& hit : retrieve(*deps_.retrieval->store, *deps_.retrieval->embedder, query, config_.retrieval_k,
                              config_.retrieval_threshold, deps_.retrieval->reranker)) {
        out.push_back(std::move(hit.chunk));
    }
    return out;
}

SessionRunner::Dispatch SessionRunner::dispatch(const PhaseSpec& phase, const TaskNode& task, const std::string& detail) {
    auto& log = *deps_.log;
    const auto& params = planner_.params;

    if (config_.mode == Mode::automatic && task.action == Action::manual) {
        return {std::string(kManualUnavailable), std::nullopt, false, std::string(kManualUnavailable)};
    }

    const bool to_human = config_.mode == Mode::manual ||
                          (config_.mode == Mode::semi_automatic && task.action == Action::manual);
    if (!to_human) {
        auto cmd = generate_command(*deps_.gateway, params, task, detail, phase, shell_state_, config_.command_timeout);
        log.append(EventKind::command_generated, {{"phase", phase_json(phase.name)}, {"task_id", task.id}, {"command", cmd.text}});
        if (config_.approval_gate) {
            auto seq = log.append(EventKind::manual_requested, {{"phase", phase_json(phase.name)},
                                                                {"task_id", task.id},
                                                                {"kind", "approval"},
                                                                {"command", cmd.text}});
            deps_.human->request_approval({task.id, cmd.text, seq});
            log.append(EventKind::manual_submitted,
                       {{"phase", phase_json(phase.name)}, {"task_id", task.id}, {"kind", "approval"}, {"approved", true}});
        }

        auto exec = execute_filtered(*deps_.channel, cmd, *deps_.gateway, params, config_.filter_threshold);
        log.append(EventKind::command_executed, {{"phase", phase_json(phase.name)},
                                                 {"task_id", task.id},
                                                 {"command", cmd.text},
                                                 {"sent", exec.sent},
                                                 {"timed_out", exec.timed_out},
                                                 {"extraction_used", exec.extraction_used},
                                                 {"filter_degraded", exec.filter_degraded},
                                                 {"output", exec.filtered}});
        Dispatch out{exec.filtered, cmd.text, std::nullopt, ""};
        if (exec.timed_out) {
            out.result += "\n[command timed out after " + std::to_string(cmd.timeout.count() / 1000) +
                          " s; the output above is partial]";
            out.note = "command timed out";
        }
        return out;
    }

    std::optional<std::string> suggested;
    if (task.action == Action::shell) {
        auto cmd = generate_command(*deps_.gateway, params, task, detail, phase, shell_state_, config_.command_timeout);
        log.append(EventKind::command_generated, {{"phase", phase_json(phase.name)}, {"task_id", task.id}, {"command", cmd.text}});
        suggested = cmd.text;
    }
    ManualRequest request{phase.name, task.id, task.instruction, detail, suggested, 0};
    nlohmann::json payload = to_json(request);
    payload.erase("requested_at_seq");
    payload["kind"] = "manual";
    request.requested_at_seq = log.append(EventKind::manual_requested, payload);

    auto submission = deps_.human->request_manual(request);
    log.append(EventKind::manual_submitted,
               {{"phase", phase_json(phase.name)},
                {"task_id", task.id},
                {"kind", "manual"},
                {"result", submission.result},
                {"success_hint", submission.success_hint ? nlohmann::json(*submission.success_hint) : nlohmann::json(nullptr)},
                {"timed_out", submission.timed_out}});

    auto filtered = filter_output(*deps_.gateway, params, submission.result, config_.filter_threshold);
    Dispatch out{filtered.text, suggested, submission.success_hint, ""};
    if (submission.timed_out) {
        out.verdict = false;
        out.note = "operator did not respond in time";
    }
    return out;
}

PhaseOutcome SessionRunner::run_phase(const PhaseSpec& phase, const std::string& context) {
    auto& log = *deps_.log;
    PhaseOutcome out;
    out.phase = phase.name;
    out.step_budget = phase.step_budget;

    TaskGraph graph;
    int steps = 0;
    std::map<int, std::string> notes;
    std::optional<std::string> note;
    const auto hits = memory_hits(phase, context);

    auto replan = [&] {
        auto plan = update_plan(planner_, phase, context, graph, build_feedback(graph, phase.goal, notes), hits);
        graph = std::move(plan.graph);
        notes.clear();
        log.append(EventKind::plan_merged,
                   {{"phase", phase_json(phase.name)}, {"retries", plan.retries}, {"tasks", graph_to_json(graph)}});
        publish(phase, graph, steps, std::nullopt);
    };

    try {
        auto plan = generate_plan(planner_, phase, context, hits);
        graph = std::move(plan.graph);
        nlohmann::json hit_ids = nlohmann::json::array();
        for (const auto& h : hits) hit_ids.push_back(h.chunk_id);
        log.append(EventKind::plan_generated, {{"phase", phase_json(phase.name)},
                                               {"retries", plan.retries},
                                               {"memory_hits", hit_ids},
                                               {"tasks", graph_to_json(graph)}});
        publish(phase, graph, steps, std::nullopt);

        while (true) {
            if (deps_.human && deps_.human->aborted()) throw OperatorAborted();

            auto ready = ready_tasks(graph);
            if (ready.empty() && graph.any_finished()) {
                replan();
                ready = ready_tasks(graph);
            }
            if (ready.empty()) {
                note = "plan exhausted";
                break;
            }
            if (steps >= phase.step_budget) {
                note = "step budget exhausted";
                break;
            }

            const TaskNode task = ready.front();
            publish(phase, graph, steps, task.id);
            auto detail = detail_task(planner_, phase, task, shell_state_.description);
            log.append(EventKind::task_detailed, {{"phase", phase_json(phase.name)},
                                                  {"task_id", task.id},
                                                  {"instruction", task.instruction},
                                                  {"detail", detail}});

            auto d = dispatch(phase, task, detail);
            ++steps;
            ++session_steps_;

            SuccessJudgement verdict;
            std::string source = "gateway";
            if (d.verdict) {
                verdict.success = *d.verdict;
                source = d.note.empty() ? "operator" : "engine";
            } else {
                verdict = check_result(planner_, phase, task, d.result);
            }
            log.append(EventKind::result_checked, {{"phase", phase_json(phase.name)},
                                                   {"scope", "task"},
                                                   {"task_id", task.id},
                                                   {"step", steps},
                                                   {"success", verdict.success},
                                                   {"ambiguous", verdict.ambiguous},
                                                   {"source", source},
                                                   {"reply", verdict.raw_reply}});
            graph = record_result(graph, task.id, d.command, d.result, verdict.success);
            publish(phase, graph, steps, std::nullopt);

            if (verdict.success) {
                const auto& done = graph.at(task.id);
                shell_state_ = update_shell_state(*deps_.gateway, planner_.params, shell_state_, done, session_steps_);
                if (config_.retrieval_enabled && deps_.retrieval && deps_.retrieval->store && deps_.retrieval->embedder) {
                    record_successful_task(*deps_.retrieval->store, done, *deps_.retrieval->embedder);
                }
                auto goal = check_phase_goal(planner_, phase, graph);
                log.append(EventKind::result_checked, {{"phase", phase_json(phase.name)},
                                                       {"scope", "phase_goal"},
                                                       {"success", goal.success},
                                                       {"ambiguous", goal.ambiguous},
                                                       {"source", "gateway"},
                                                       {"reply", goal.raw_reply}});
                if (goal.success) {
                    out.goal_met = true;
                    break;
                }
            } else {
                notes[task.id] = !d.note.empty()     ? d.note
                                 : verdict.ambiguous ? "verdict was ambiguous; treated as failure"
                                                     : "judged unsuccessful";
            }

            if (steps >= phase.step_budget) {
                note = "step budget exhausted";
                break;
            }
            if (!verdict.success) replan();
        }
    } catch (const OperatorAborted&) {
        note = "aborted by operator";
    } catch (const Error& e) {
        spdlog::error("{} phase failed: {}", to_string(phase.name), e.what());
        note = std::string("error: ") + e.what();
    }

    out.steps_used = steps;
    out.failure_stage_note = out.goal_met ? std::nullopt : note;
    out.summary = summarize_phase(*deps_.gateway, planner_.params, phase.name, graph, shell_state_, config_.digest_budget);
    out.graph = graph;

    if (out.goal_met) {
        log.append(EventKind::phase_summary, {{"phase", phase_json(phase.name)},
                                              {"steps_used", steps},
                                              {"step_budget", phase.step_budget},
                                              {"summary", summary_to_json(out.summary)}});
    } else {
        log.append(EventKind::phase_failed, {{"phase", phase_json(phase.name)},
                                             {"steps_used", steps},
                                             {"step_budget", phase.step_budget},
                                             {"note", note.value_or("phase goal not met")},
                                             {"summary", summary_to_json(out.summary)}});
    }
    return out;
}

SessionReport SessionRunner::run_session() {
    SessionReport report;
    std::vector<PhaseSummary> prior;
    for (const auto& phase : phases_) {
        auto outcome = run_phase(phase, render_context(prior, config_.digest_budget));
        report.total_steps += outcome.steps_used;
        prior.push_back(outcome.summary);
        bool met = outcome.goal_met;
        report.phases.push_back(std::move(outcome));
        if (!met) {
            report.status = SessionStatus::failed;
            report.failed_phase = phase.name;
            break;
        }
    }
    if (report.status == SessionStatus::running) report.status = SessionStatus::finished;

    nlohmann::json phases = nlohmann::json::array();
    for (const auto& p : report.phases) {
        phases.push_back({{"phase", phase_json(p.phase)}, {"steps_used", p.steps_used}, {"goal_met", p.goal_met}});
    }
    deps_.log->append(EventKind::session_finished,
                      {{"status", report.status_text()}, {"total_steps", report.total_steps}, {"phases", phases}});
    return report;
}

SessionReport run_session(const SessionConfig& config, const SessionDeps& deps) {
    return SessionRunner(config, deps).run_session();
}

} // namespace autopent
