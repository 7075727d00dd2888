#include "autopent/errors.hpp"
#include "autopent/task_graph.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace autopent;

namespace {

std::vector<TaskDraft> fig3_drafts() {
    return {
        {1, {}, "SSH into a target machine located at IP address 192.168.1.104 on port 22", Action::shell},
        {2, {1}, "Search for writable directories", Action::shell},
        {3, {1}, "Enumerate running processes", Action::shell},
    };
}

std::vector<int> ids_of(const std::vector<TaskNode>& nodes) {
    std::vector<int> out;
    for (const auto& n : nodes) out.push_back(n.id);
    return out;
}

} // namespace

TEST(ValidateGraph, Fig3TaskListHasThreeNodesTwoEdges) {
    auto g = validate_graph(fig3_drafts());
    EXPECT_EQ(g.size(), 3u);
    EXPECT_EQ(g.edges(), (std::vector<std::pair<int, int>>{{1, 2}, {1, 3}}));
    for (const auto& t : g.tasks()) {
        EXPECT_FALSE(t.finished);
        EXPECT_FALSE(t.success);
    }
}

TEST(ValidateGraph, TwoCycleIsRejectedWithTheCycle) {
    try {
        validate_graph({{1, {2}, "a", Action::shell}, {2, {1}, "b", Action::shell}});
        FAIL() << "expected CyclicDependencies";
    } catch (const CyclicDependencies& e) {
        auto cycle = e.cycle();
        std::sort(cycle.begin(), cycle.end());
        cycle.erase(std::unique(cycle.begin(), cycle.end()), cycle.end());
        EXPECT_EQ(cycle, (std::vector<int>{1, 2}));
    }
}

TEST(ValidateGraph, DanglingDependencyNamesTheMissingId) {
    try {
        validate_graph({{1, {7}, "a", Action::shell}});
        FAIL() << "expected UnknownDependency";
    } catch (const UnknownDependency& e) {
        EXPECT_EQ(e.missing_id(), 7);
    }
}

TEST(ValidateGraph, StructuralErrors) {
    EXPECT_THROW(validate_graph({{1, {}, "a", Action::shell}, {1, {}, "b", Action::shell}}), DuplicateId);
    EXPECT_THROW(validate_graph({{1, {}, "   ", Action::shell}}), EmptyInstruction);
    EXPECT_THROW(validate_graph({}), GraphError);
    EXPECT_THROW(validate_graph({{1, {1}, "self", Action::shell}}), CyclicDependencies);
}

TEST(ValidateGraph, AgreesWithClosureOracleOnRandomDrafts) {
    std::mt19937 rng(7);
    for (int round = 0; round < 1000; ++round) {
        auto drafts = oracle::random_drafts(rng, 8);
        bool expect_ok = !oracle::has_cycle(drafts) && !oracle::has_dangling(drafts) && !oracle::has_duplicate_id(drafts);
        bool ok = true;
        try {
            validate_graph(drafts);
        } catch (const GraphError&) {
            ok = false;
        }
        ASSERT_EQ(ok, expect_ok) << "round " << round << ": " << serialize_drafts(drafts);
    }
}

TEST(ReadyTasks, Fig3Progression) {
    auto g = validate_graph(fig3_drafts());
    EXPECT_EQ(ids_of(ready_tasks(g)), std::vector<int>{1});

    g = record_result(g, 1, "ssh user@192.168.1.104 -p 22", "login banner", true);
    EXPECT_EQ(ids_of(ready_tasks(g)), (std::vector<int>{2, 3}));

    // Both remaining orders respect the dependencies; ascending id picks the first.
    auto orders = oracle::all_topological_orders(g.tasks());
    EXPECT_EQ(orders, (std::vector<std::vector<int>>{{1, 2, 3}, {1, 3, 2}}));

    g = record_result(g, 2, std::nullopt, "ok", true);
    g = record_result(g, 3, std::nullopt, "ok", true);
    EXPECT_TRUE(ready_tasks(g).empty());
    EXPECT_TRUE(g.all_finished());
}

TEST(ReadyTasks, FailureBlocksDependents) {
    auto g = validate_graph({{1, {}, "a", Action::shell}, {2, {1}, "b", Action::shell}, {3, {}, "c", Action::shell}});
    g = record_result(g, 1, std::nullopt, "permission denied", false);
    EXPECT_EQ(ids_of(ready_tasks(g)), std::vector<int>{3});
    g = record_result(g, 3, std::nullopt, "fine", true);
    EXPECT_TRUE(ready_tasks(g).empty());
    EXPECT_EQ(g.at(2).finished, false);
}

TEST(ReadyTasks, RandomExecutionOrdersAreTopological) {
    std::mt19937 rng(11);
    for (int round = 0; round < 500; ++round) {
        auto g = validate_graph(oracle::random_dag(rng, 20));
        std::vector<int> order;
        while (true) {
            auto ready = ready_tasks(g);
            if (ready.empty()) break;
            ASSERT_TRUE(std::is_sorted(ready.begin(), ready.end(), [](auto& a, auto& b) { return a.id < b.id; }));
            auto pick = ready[std::uniform_int_distribution<std::size_t>(0, ready.size() - 1)(rng)];
            order.push_back(pick.id);
            g = record_result(g, pick.id, std::nullopt, "done", true);
        }
        ASSERT_TRUE(oracle::is_topological(g.tasks(), order)) << "round " << round;
    }
}

TEST(RecordResult, Guards) {
    auto g = validate_graph(fig3_drafts());
    g = record_result(g, 1, "ssh", "banner", true);
    EXPECT_THROW(record_result(g, 1, "ssh", "banner", true), AlreadyFinished);
    EXPECT_THROW(record_result(g, 9, std::nullopt, "x", true), UnknownTask);

    auto before = g;
    auto after = record_result(g, 2, std::nullopt, "permission denied", false);
    EXPECT_EQ(g, before);   // value semantics
    EXPECT_TRUE(after.at(2).failed());
    EXPECT_EQ(after.at(2).result, "permission denied");
}

TEST(RecordResult, SuccessNeedsCompletedPrerequisites) {
    auto g = validate_graph(fig3_drafts());
    EXPECT_THROW(record_result(g, 2, std::nullopt, "x", true), InvalidTaskState);
}

TEST(NormalizeInstruction, CaseAndWhitespace) {
    EXPECT_EQ(normalize_instruction("  Scan\tPORTS   of\n10.0.0.5 "), "scan ports of 10.0.0.5");
    EXPECT_EQ(normalize_instruction("x"), oracle::norm("x"));
}

TEST(MergePlan, EmptyOldIsIdentity) {
    auto merged = merge_plan({{4, {}, "A", Action::shell}, {9, {4}, "B", Action::manual}}, {});
    ASSERT_EQ(merged.size(), 2u);
    EXPECT_EQ(merged[0].id, 1);
    EXPECT_EQ(merged[1].id, 2);
    EXPECT_EQ(merged[1].dependencies, std::set<int>{1});
    EXPECT_FALSE(merged[0].finished);
    EXPECT_EQ(merged[1].action, Action::manual);
}

TEST(MergePlan, CompletedTaskNotRelistedIsKept) {
    auto g = validate_graph({{1, {}, "T1", Action::shell}});
    g = record_result(g, 1, "cmd", "res", true);
    auto merged = merge_plan({{1, {}, "T2", Action::shell}}, g.tasks());
    ASSERT_EQ(merged.size(), 2u);
    EXPECT_EQ(merged[0].instruction, "T1");
    EXPECT_TRUE(merged[0].completed());
    EXPECT_EQ(merged[0].result, "res");
    EXPECT_EQ(merged[1].instruction, "T2");
    EXPECT_FALSE(merged[1].finished);
}

TEST(MergePlan, ReusesMatchAndDropsFailed) {
    auto g = validate_graph({{1, {}, "T1", Action::shell}, {2, {}, "T2", Action::shell}});
    g = record_result(g, 1, "cmd1", "res1", true);
    g = record_result(g, 2, "cmd2", "bad", false);
    auto merged = merge_plan({{5, {}, "t1 ", Action::shell}, {6, {5}, "T3", Action::shell}}, g.tasks());
    ASSERT_EQ(merged.size(), 2u);
    EXPECT_EQ(merged[0].instruction, "T1");
    EXPECT_TRUE(merged[0].completed());
    EXPECT_EQ(merged[0].command, "cmd1");
    EXPECT_EQ(merged[1].instruction, "T3");
    EXPECT_EQ(merged[1].dependencies, std::set<int>{1});
}

TEST(MergePlan, MatchesLiteralReferenceOnRandomPairs) {
    std::mt19937 rng(2024);
    for (int round = 0; round < 1000; ++round) {
        auto old = oracle::random_old_plan(rng, 8);
        auto revision = oracle::random_revision(rng, old, 8);
        auto mine = oracle::to_keyed(merge_plan(revision, old));
        ASSERT_TRUE(mine.has_value()) << "ids not 1..n in round " << round;
        ASSERT_EQ(*mine, oracle::merge_reference(revision, old)) << "round " << round;
    }
}

TEST(MergePlan, ConservesCompletedWorkAndIsIdempotent) {
    std::mt19937 rng(99);
    for (int round = 0; round < 300; ++round) {
        auto old = oracle::random_old_plan(rng, 8);
        auto revision = oracle::random_revision(rng, old, 8);
        auto merged = merge_plan(revision, old);
        for (const auto& t : old) {
            if (!t.completed()) continue;
            auto n = std::count_if(merged.begin(), merged.end(), [&](const TaskNode& m) {
                return m.instruction == t.instruction && m.completed() && m.result == t.result;
            });
            ASSERT_EQ(n, 1) << "round " << round << " lost " << t.instruction;
        }
        if (merged.empty()) continue;
        auto graph = TaskGraph::from_nodes(merged);
        auto again = merge_plan(as_drafts(merged), merged);
        std::vector<TaskNode> a, b;
        for (const auto& t : merged)
            if (t.completed()) a.push_back(t);
        for (const auto& t : again)
            if (t.completed()) b.push_back(t);
        ASSERT_EQ(a, b) << "round " << round;
    }
}

TEST(MergePlan, DanglingDependencyIsDropped) {
    auto merged = merge_plan({{1, {42}, "A", Action::shell}}, {});
    ASSERT_EQ(merged.size(), 1u);
    EXPECT_TRUE(merged[0].dependencies.empty());
}

TEST(WireFormat, SerializesExactKeys) {
    auto doc = drafts_to_json({{1, {}, "a", Action::shell}, {2, {1}, "b", Action::manual}});
    EXPECT_EQ(doc.dump(),
              R"([{"action":"shell","dependencies":[],"id":1,"instruction":"a"},)"
              R"({"action":"manual","dependencies":[1],"id":2,"instruction":"b"}])");
}
