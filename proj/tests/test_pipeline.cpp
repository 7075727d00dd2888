#include "autopent/errors.hpp"
#include "autopent/phase_pipeline.hpp"
#include "autopent/sandbox_target.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <thread>

using namespace autopent;
using namespace std::chrono_literals;

namespace {

std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(AUTOPENT_FIXTURE_DIR) / name; }

std::vector<ScriptedRule> script_of(const std::string& name) {
    std::ifstream in(fixture(name) / "llm_script.json");
    return parse_scripted_rules(nlohmann::json::parse(in));
}

struct Harness {
    ScriptedBackend gateway;
    SandboxChannel channel;
    EventLog log;

    explicit Harness(const std::string& name)
        : gateway(script_of(name)), channel(load_scenario(fixture(name) / "scenario.json")) {}
    Harness(std::vector<ScriptedRule> rules, const std::string& scenario)
        : gateway(std::move(rules)), channel(load_scenario(fixture(scenario) / "scenario.json")) {}

    SessionDeps deps(HumanInterface* human = nullptr) { return {&gateway, &channel, &log, std::nullopt, human, {}}; }

    std::vector<SessionEvent> of(EventKind kind) const {
        std::vector<SessionEvent> out;
        for (auto& e : log.events())
            if (e.kind == kind) out.push_back(e);
        return out;
    }
};

SessionConfig config(Mode mode = Mode::automatic, int budget = kDefaultStepsPerPhase) {
    SessionConfig c;
    c.mode = mode;
    c.target_description = "lab host 192.168.1.104";
    c.per_phase_budget = budget;
    return c;
}

// Answers every manual request (and approval) from a background thread.
class AutoOperator {
public:
    AutoOperator(ConsoleBridge& bridge, std::string result) : bridge_(bridge) {
        thread_ = std::thread([this, result] {
            while (!stop_) {
                for (const auto& m : bridge_.pending_manual()) {
                    bridge_.submit(m.task_id, result);
                    ++answered;
                }
                for (const auto& a : bridge_.pending_approvals()) {
                    approved.push_back(a.command);
                    bridge_.approve(a.task_id);
                }
                std::this_thread::sleep_for(2ms);
            }
        });
    }
    ~AutoOperator() {
        stop_ = true;
        thread_.join();
    }

    std::atomic<int> answered{0};
    std::vector<std::string> approved;

private:
    ConsoleBridge& bridge_;
    std::atomic<bool> stop_{false};
    std::thread thread_;
};

} // namespace

TEST(Pipeline, Fig3ScenarioFinishesWithinBudget) {
    Harness h("fig3-basic");
    auto report = run_session(config(), h.deps());
    EXPECT_EQ(report.status_text(), "finished");
    EXPECT_LE(report.total_steps, 15);
    ASSERT_EQ(report.phases.size(), 3u);
    EXPECT_EQ(report.phases[0].steps_used, 1);
    EXPECT_EQ(report.phases[1].steps_used, 2);
    EXPECT_EQ(report.phases[2].steps_used, 3);
    for (const auto& p : report.phases) {
        EXPECT_TRUE(p.goal_met);
        EXPECT_LE(p.steps_used, p.step_budget);
    }
    EXPECT_EQ(h.channel.state().at("user"), "student");
    EXPECT_NE(report.phases[2].summary.shell_state.description.find("student"), std::string::npos);
    EXPECT_EQ(h.of(EventKind::command_executed).size(), 6u);
    EXPECT_EQ(h.of(EventKind::plan_merged).size(), 1u);
}

TEST(Pipeline, PhasesRunInOrderAndLogIsWellFormed) {
    Harness h("fig3-basic");
    run_session(config(), h.deps());
    auto events = h.log.events();
    ASSERT_FALSE(events.empty());
    int last_phase = 0;
    for (std::size_t i = 0; i < events.size(); ++i) {
        EXPECT_EQ(events[i].seq, i + 1);
        if (!events[i].payload.contains("phase")) continue;
        auto phase = parse_phase(events[i].payload["phase"].get<std::string>());
        ASSERT_TRUE(phase);
        EXPECT_GE(static_cast<int>(*phase), last_phase) << "event " << i + 1;
        last_phase = static_cast<int>(*phase);
    }
    EXPECT_EQ(events.front().kind, EventKind::plan_generated);
    EXPECT_EQ(events.back().kind, EventKind::session_finished);
    EXPECT_EQ(events.back().payload["status"], "finished");
    EXPECT_EQ(h.of(EventKind::phase_summary).size(), 3u);
}

TEST(Pipeline, RunsAreDeterministic) {
    Harness a("fig3-basic");
    Harness b("fig3-basic");
    run_session(config(), a.deps());
    run_session(config(), b.deps());
    EXPECT_EQ(canonical_log(a.log.events()), canonical_log(b.log.events()));
}

TEST(Pipeline, StepBudgetIsEnforced) {
    for (int budget : {5, 8}) {
        Harness h("never-succeed");
        auto report = run_session(config(Mode::automatic, budget), h.deps());
        EXPECT_EQ(report.status_text(), "failed_at(reconnaissance)");
        EXPECT_EQ(report.total_steps, budget);
        ASSERT_EQ(report.phases.size(), 1u);
        EXPECT_EQ(report.phases[0].failure_stage_note, "step budget exhausted");
        EXPECT_EQ(h.of(EventKind::command_executed).size(), static_cast<std::size_t>(budget));
        auto failed = h.of(EventKind::phase_failed);
        ASSERT_EQ(failed.size(), 1u);
        EXPECT_EQ(failed[0].payload["steps_used"], budget);
    }
}

TEST(Pipeline, ManualTaskFailsInAutomaticMode) {
    Harness h("fig3-manual");
    auto report = run_session(config(), h.deps());
    EXPECT_EQ(report.status_text(), "failed_at(reconnaissance)");
    EXPECT_EQ(report.phases[0].failure_stage_note, "plan exhausted");
    EXPECT_TRUE(h.of(EventKind::manual_requested).empty());
    bool saw = false;
    for (const auto& e : h.of(EventKind::result_checked)) {
        if (e.payload["source"] == "engine") {
            saw = true;
            EXPECT_FALSE(e.payload["success"].get<bool>());
        }
    }
    EXPECT_TRUE(saw);
    EXPECT_EQ(report.phases[0].steps_used, 2);
}

TEST(Pipeline, SemiAutomaticRoutesManualTasksToOperator) {
    Harness h("fig3-manual");
    ConsoleBridge bridge;
    AutoOperator op(bridge, "The site runs WordPress 4.9");
    auto report = run_session(config(Mode::semi_automatic), h.deps(&bridge));
    EXPECT_EQ(report.status_text(), "finished");
    EXPECT_EQ(op.answered, 1);
    auto requested = h.of(EventKind::manual_requested);
    ASSERT_EQ(requested.size(), 1u);
    EXPECT_EQ(requested[0].payload["kind"], "manual");
    auto submitted = h.of(EventKind::manual_submitted);
    ASSERT_EQ(submitted.size(), 1u);
    EXPECT_EQ(submitted[0].payload["result"], "The site runs WordPress 4.9");
    EXPECT_EQ(h.of(EventKind::command_executed).size(), 6u);
}

TEST(Pipeline, ManualModeSendsShellTasksToOperatorWithSuggestion) {
    Harness h("fig3-basic");
    ConsoleBridge bridge;
    AutoOperator op(bridge, "22/tcp open ssh\n80/tcp open http");
    SessionRunner runner(config(Mode::manual), h.deps(&bridge));
    auto outcome = runner.run_phase(runner.phases()[0], "");
    EXPECT_TRUE(outcome.goal_met);
    EXPECT_TRUE(h.of(EventKind::command_executed).empty());
    EXPECT_TRUE(h.channel.history().empty());
    auto requested = h.of(EventKind::manual_requested);
    ASSERT_EQ(requested.size(), 1u);
    EXPECT_EQ(requested[0].payload["suggested_command"], "nmap -sV -p 22,80 192.168.1.104");
}

TEST(Pipeline, SuccessHintOverridesGateway) {
    Harness h("never-succeed");
    ConsoleBridge bridge;
    std::thread op([&] {
        while (bridge.pending_manual().empty()) std::this_thread::sleep_for(1ms);
        bridge.submit(bridge.pending_manual()[0].task_id, "nothing", true);
    });
    SessionRunner runner(config(Mode::manual), h.deps(&bridge));
    runner.run_phase(runner.phases()[0], "");
    op.join();
    auto checks = h.of(EventKind::result_checked);
    ASSERT_FALSE(checks.empty());
    EXPECT_EQ(checks[0].payload["source"], "operator");
    EXPECT_TRUE(checks[0].payload["success"].get<bool>());
    EXPECT_EQ(h.gateway.count_matching("Task Result for:"), 0u);
}

TEST(Pipeline, AbortEndsPhase) {
    Harness h("never-succeed");
    ConsoleBridge bridge;
    std::thread op([&] {
        while (bridge.pending_manual().empty()) std::this_thread::sleep_for(1ms);
        bridge.abort();
    });
    SessionRunner runner(config(Mode::manual), h.deps(&bridge));
    auto report = runner.run_session();
    op.join();
    EXPECT_EQ(report.status_text(), "failed_at(reconnaissance)");
    EXPECT_EQ(report.phases[0].failure_stage_note, "aborted by operator");
}

TEST(Pipeline, ApprovalGateHoldsCommands) {
    Harness h("fig3-basic");
    ConsoleBridge bridge;
    AutoOperator op(bridge, "");
    auto c = config();
    c.approval_gate = true;
    auto report = run_session(c, h.deps(&bridge));
    EXPECT_EQ(report.status_text(), "finished");
    EXPECT_EQ(op.approved.size(), 6u);
    EXPECT_EQ(h.of(EventKind::manual_requested).size(), 6u);
}

TEST(Pipeline, OperatorTimeoutFailsTheTask) {
    Harness h("fig3-manual");
    ConsoleBridge bridge(20ms);
    SessionRunner runner(config(Mode::semi_automatic, 2), h.deps(&bridge));
    auto outcome = runner.run_phase(runner.phases()[0], "");
    EXPECT_FALSE(outcome.goal_met);
    auto submitted = h.of(EventKind::manual_submitted);
    ASSERT_EQ(submitted.size(), 1u);
    EXPECT_TRUE(submitted[0].payload["timed_out"].get<bool>());
}

TEST(Pipeline, FailedPhaseStopsSession) {
    Harness h("never-succeed");
    auto report = run_session(config(), h.deps());
    ASSERT_TRUE(report.failed_phase);
    EXPECT_EQ(*report.failed_phase, PhaseName::reconnaissance);
    for (const auto& e : h.log.events()) {
        if (e.payload.contains("phase")) EXPECT_EQ(e.payload["phase"], "reconnaissance");
    }
}

TEST(Pipeline, PlanExhaustedWhenReplanAddsNothing) {
    std::string plan = R"([{"id":1,"dependencies":[],"instruction":"Check the current user","action":"shell"}])";
    Harness h({{"You focus on the Reconnaissance phase.", plan, false},
               {"Plan Update for the Reconnaissance phase.", plan, false},
               {"Command Request", "whoami", false},
               {"Task Result", "yes", false},
               {"Shell State Check", "no", false},
               {"Phase Goal Check", "no", false},
               {"Phase Summary", "nothing useful", false},
               {"re:^New Task:", "Run whoami.", false}},
              "fig3-basic");
    auto report = run_session(config(), h.deps());
    EXPECT_EQ(report.phases[0].failure_stage_note, "plan exhausted");
    EXPECT_EQ(report.total_steps, 1);
}

TEST(Pipeline, GatewayErrorFailsPhaseWithNote) {
    Harness h(std::vector<ScriptedRule>{}, "fig3-basic");
    auto report = run_session(config(), h.deps());
    EXPECT_EQ(report.status, SessionStatus::failed);
    ASSERT_TRUE(report.phases[0].failure_stage_note);
    EXPECT_TRUE(report.phases[0].failure_stage_note->starts_with("error: "));
}

TEST(Pipeline, SnapshotsTrackSteps) {
    Harness h("fig3-basic");
    std::vector<GraphSnapshot> snaps;
    auto deps = h.deps();
    deps.on_snapshot = [&](const GraphSnapshot& s) { snaps.push_back(s); };
    run_session(config(), deps);
    ASSERT_FALSE(snaps.empty());
    for (std::size_t i = 1; i < snaps.size(); ++i) {
        if (snaps[i].phase == snaps[i - 1].phase) EXPECT_GE(snaps[i].steps_used, snaps[i - 1].steps_used);
        EXPECT_GE(snaps[i].as_of_seq, snaps[i - 1].as_of_seq);
    }
    EXPECT_EQ(snaps.back().phase, PhaseName::exploitation);
}

TEST(SessionConfig, Validation) {
    auto c = config();
    EXPECT_NO_THROW(c.validate());
    c.per_phase_budget = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = config();
    c.temperature = 2.1;
    EXPECT_THROW(c.validate(), ConfigError);
    c = config();
    c.target_description.clear();
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_EQ(parse_mode("semi-automatic"), Mode::semi_automatic);
    EXPECT_EQ(parse_mode("semi_automatic"), Mode::semi_automatic);
    EXPECT_FALSE(parse_mode("auto"));
}

TEST(SessionRunner, RequiresHumanOutsideAutomaticMode) {
    Harness h("fig3-basic");
    EXPECT_THROW(SessionRunner(config(Mode::manual), h.deps()), ConfigError);
    auto c = config();
    c.approval_gate = true;
    EXPECT_THROW(SessionRunner(c, h.deps()), ConfigError);
}
