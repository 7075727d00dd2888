// Runs every primary acceptance criterion once and prints one line each.

#include "autopent/actuation.hpp"
#include "autopent/errors.hpp"
#include "autopent/event_log.hpp"
#include "autopent/memory_retriever.hpp"
#include "autopent/plan_sessions.hpp"
#include "autopent/session_service.hpp"
#include "autopent/task_graph.hpp"
#include "fuzz_corpus.hpp"
#include "oracles.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

using namespace autopent;
namespace fs = std::filesystem;

namespace {

// Empty string means the check held.
using Check = std::function<std::string()>;

#define REQUIRE(cond, msg)                                                                                             \
    do {                                                                                                               \
        if (!(cond)) {                                                                                                 \
            std::ostringstream os_;                                                                                    \
            os_ << msg;                                                                                                \
            return os_.str();                                                                                          \
        }                                                                                                              \
    } while (0)

fs::path work_dir() {
    static fs::path dir = [] {
        auto d = fs::temp_directory_path() / ("autopent-acceptance-" + std::to_string(::getpid()));
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

int cli(std::vector<std::string> args) {
    args.insert(args.begin(), {"autopent", "--log-level", "off"});
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream sink;
    auto* saved = std::cout.rdbuf(sink.rdbuf());
    int rc = cli_main(static_cast<int>(argv.size()), argv.data());
    std::cout.rdbuf(saved);
    return rc;
}

std::size_t count_kind(const std::vector<SessionEvent>& events, EventKind kind) {
    return static_cast<std::size_t>(
        std::count_if(events.begin(), events.end(), [&](const SessionEvent& e) { return e.kind == kind; }));
}

std::string merge_oracle() {
    std::mt19937 rng(2024);
    for (int round = 0; round < 1000; ++round) {
        auto old = oracle::random_old_plan(rng, 8);
        auto revision = oracle::random_revision(rng, old, 8);
        auto mine = oracle::to_keyed(merge_plan(revision, old));
        REQUIRE(mine, "round " << round << ": ids not 1..n");
        REQUIRE(*mine == oracle::merge_reference(revision, old), "round " << round << ": differs from reference");
    }
    return "";
}

std::string scheduling() {
    std::mt19937 rng(11);
    for (int round = 0; round < 500; ++round) {
        auto g = validate_graph(oracle::random_dag(rng, 20));
        std::vector<int> order;
        while (true) {
            auto ready = ready_tasks(g);
            if (ready.empty()) break;
            auto pick = ready[std::uniform_int_distribution<std::size_t>(0, ready.size() - 1)(rng)];
            order.push_back(pick.id);
            g = record_result(g, pick.id, std::nullopt, "done", true);
        }
        REQUIRE(order.size() == g.size(), "round " << round << ": not every task ran");
        REQUIRE(oracle::is_topological(g.tasks(), order), "round " << round << ": order not topological");
    }
    int rejected = 0;
    for (int round = 0; round < 500; ++round) {
        auto drafts = oracle::random_drafts(rng, 8);
        if (!oracle::has_cycle(drafts) && !oracle::has_dangling(drafts)) continue;
        bool threw = false;
        try {
            validate_graph(drafts);
        } catch (const GraphError&) {
            threw = true;
        }
        REQUIRE(threw, "accepted a cyclic or dangling draft: " << serialize_drafts(drafts));
        ++rejected;
    }
    REQUIRE(rejected > 0, "fuzzer produced no cyclic or dangling drafts");
    return "";
}

std::string determinism() {
    std::vector<std::string> logs;
    for (int run = 0; run < 2; ++run) {
        auto log = work_dir() / ("fig3-" + std::to_string(run) + ".jsonl");
        int rc = cli({"run", "--mode", "automatic", "--scenario", "fig3-basic", "--log", log.string()});
        REQUIRE(rc == 0, "run " << run << " exited " << rc);
        auto events = replay(log);
        REQUIRE(!events.empty() && events.back().kind == EventKind::session_finished, "no session_finished event");
        const auto& done = events.back().payload;
        REQUIRE(done["status"] == "finished", "status " << done["status"]);
        REQUIRE(done["phases"].size() == 3, "phases " << done["phases"].size());
        int steps = done["total_steps"];
        REQUIRE(steps <= 15, "took " << steps << " steps");
        REQUIRE(count_kind(events, EventKind::command_executed) <= 15, "more than 15 executions");
        logs.push_back(canonical_log(events));
    }
    REQUIRE(logs[0] == logs[1], "event logs differ between runs");
    return "";
}

std::string budget() {
    for (int b : {5, 8}) {
        auto log = work_dir() / ("never-" + std::to_string(b) + ".jsonl");
        std::vector<std::string> args = {"run", "--mode", "automatic", "--scenario", "never-succeed", "--log", log.string()};
        if (b != 5) args.insert(args.end(), {"--steps-per-phase", std::to_string(b)});
        int rc = cli(args);
        REQUIRE(rc == 1, "budget " << b << ": exit " << rc);
        auto events = replay(log);
        REQUIRE(events.back().payload["status"] == "failed_at(reconnaissance)",
                "budget " << b << ": status " << events.back().payload["status"]);
        auto executed = count_kind(events, EventKind::command_executed);
        REQUIRE(executed == static_cast<std::size_t>(b), "budget " << b << ": " << executed << " attempts");
    }
    return "";
}

std::string filter_boundary() {
    for (std::size_t size : {std::size_t{7999}, std::size_t{8000}, std::size_t{8001}}) {
        ScriptedBackend backend({{"Output Extraction.", "key lines", false}});
        filter_output(backend, {}, std::string(size, 'x'));
        std::size_t expect = size == 8001 ? 1 : 0;
        REQUIRE(backend.count_matching("Output Extraction.") == expect && backend.call_count() == expect,
                size << " chars: " << backend.call_count() << " extraction calls");
    }
    return "";
}

std::string retrieval() {
    std::mt19937 rng(17);
    HashEmbedder embedder;
    TermOverlapReranker reranker;
    VectorStore store;
    for (int i = 0; i < 300; ++i) {
        auto text = fuzz::random_words(rng, std::uniform_int_distribution<std::size_t>(3, 12)(rng));
        store.upsert({"c" + std::to_string(i), "doc", 0, "knowledge", text, embedder.embed(text)});
    }
    int with_hits = 0;
    for (int q = 0; q < 200; ++q) {
        auto query = fuzz::random_words(rng, std::uniform_int_distribution<std::size_t>(2, 8)(rng));
        auto qv = embedder.embed(query);
        auto hits = retrieve(store, embedder, query, 3, 0.5, &reranker);
        REQUIRE(hits.size() <= 3, "query " << q << ": " << hits.size() << " hits");

        std::vector<std::pair<double, std::string>> above;
        for (const auto& c : store.snapshot()) {
            double s = oracle::cosine(qv, c.embedding);
            if (s > 0.5) above.push_back({s, c.chunk_id});
        }
        REQUIRE(hits.size() == std::min<std::size_t>(3, above.size()), "query " << q << ": hit count");
        for (std::size_t i = 0; i < hits.size(); ++i) {
            double s = oracle::cosine(qv, hits[i].chunk.embedding);
            REQUIRE(s > 0.5, "query " << q << ": similarity " << s);
            REQUIRE(std::abs(s - hits[i].similarity) < 1e-6, "query " << q << ": reported similarity");
            double r = reranker.score(query, hits[i].chunk.text);
            REQUIRE(r == hits[i].rerank_score, "query " << q << ": rerank score");
            if (i) REQUIRE(hits[i - 1].rerank_score >= hits[i].rerank_score, "query " << q << ": not rerank-ordered");
        }
        if (!hits.empty()) ++with_hits;
    }
    REQUIRE(with_hits > 0, "no query retrieved anything");

    for (int doc = 0; doc < 200; ++doc) {
        auto text = fuzz::random_words(rng, std::uniform_int_distribution<std::size_t>(1, 3000)(rng));
        auto chunks = chunk_document(text);
        std::vector<std::string> rejoined;
        for (std::size_t i = 0; i < chunks.size(); ++i) {
            auto words = tokenize_words(chunks[i]);
            if (i + 1 < chunks.size()) REQUIRE(words.size() == 750, "doc " << doc << " chunk " << i << ": " << words.size());
            else REQUIRE(!words.empty() && words.size() <= 750, "doc " << doc << ": final chunk " << words.size());
            rejoined.insert(rejoined.end(), words.begin(), words.end());
        }
        REQUIRE(rejoined == tokenize_words(text), "doc " << doc << ": words lost or reordered");
    }
    return "";
}

std::string conservation() {
    std::mt19937 rng(31);
    auto phases = default_phases(5);
    TaskGraph graph = TaskGraph::from_nodes(oracle::random_old_plan(rng, 8));
    std::set<std::pair<std::string, std::string>> completed;
    int executed = 0;
    for (int cycle = 0; cycle < 200; ++cycle) {
        // run a few ready tasks so there is something to conserve
        for (int n = std::uniform_int_distribution<int>(1, 3)(rng); n > 0; --n) {
            auto ready = ready_tasks(graph);
            if (ready.empty()) break;
            const auto& t = ready[std::uniform_int_distribution<std::size_t>(0, ready.size() - 1)(rng)];
            bool ok = std::bernoulli_distribution(0.6)(rng);
            graph = record_result(graph, t.id, "cmd", "result " + std::to_string(++executed), ok);
        }
        if (!graph.any_finished()) continue;
        for (const auto& t : graph.tasks())
            if (t.completed()) completed.insert({t.instruction, *t.result});

        auto revision = oracle::random_revision(rng, graph.tasks(), 8);
        if (revision.empty()) revision.push_back({1, {}, "Fresh task " + std::to_string(cycle), Action::shell});
        FunctionBackend backend([&](const auto&, const auto&) { return serialize_drafts(revision); });
        Planner planner;
        planner.gateway = &backend;
        planner.target_description = "fuzz target";
        graph = update_plan(planner, phases[0], "", graph, build_feedback(graph, phases[0].goal)).graph;

        for (const auto& [instruction, result] : completed) {
            auto n = std::count_if(graph.tasks().begin(), graph.tasks().end(), [&](const TaskNode& m) {
                return m.completed() && m.instruction == instruction && m.result == result;
            });
            REQUIRE(n == 1, "cycle " << cycle << ": '" << instruction << "' appears " << n << " times");
        }
    }
    REQUIRE(!completed.empty(), "no task ever completed");
    return "";
}

std::string plan_parse() {
    std::mt19937 rng(5);
    auto phases = default_phases(5);
    int failed = 0;
    for (int round = 0; round < 100; ++round) {
        std::vector<std::string> replies = {fuzz::adversarial_completion(rng), fuzz::adversarial_completion(rng),
                                            fuzz::adversarial_completion(rng)};
        std::size_t calls = 0;
        FunctionBackend backend([&](const auto&, const auto&) { return replies[std::min(calls++, replies.size() - 1)]; });
        Planner planner;
        planner.gateway = &backend;
        planner.target_description = "fuzz target";
        try {
            auto result = generate_plan(planner, phases[0], "");
            auto drafts = as_drafts(result.graph.tasks());
            REQUIRE(!drafts.empty(), "round " << round << ": empty graph");
            REQUIRE(!oracle::has_cycle(drafts) && !oracle::has_dangling(drafts) && !oracle::has_duplicate_id(drafts),
                    "round " << round << ": invalid graph " << serialize_drafts(drafts));
            for (const auto& d : drafts) REQUIRE(!oracle::norm(d.instruction).empty(), "round " << round << ": blank task");
        } catch (const PlanGenerationFailed& e) {
            REQUIRE(e.attempts() == 3 && calls == 3, "round " << round << ": gave up after " << calls << " calls");
            ++failed;
        } catch (const std::exception& e) {
            return "round " + std::to_string(round) + ": unexpected " + e.what();
        }
    }
    REQUIRE(failed > 0, "no completion exhausted the retries");
    return "";
}

struct Criterion {
    const char* name;
    double limit_s;
    Check check;
};

} // namespace

int main() {
    spdlog::set_level(spdlog::level::off);
    const std::vector<Criterion> criteria = {
        {"merge-oracle-equivalence", 5, merge_oracle},
        {"scheduling-soundness", 5, scheduling},
        {"end-to-end-determinism", 10, determinism},
        {"budget-enforcement", 10, budget},
        {"output-filter-boundary", 1, filter_boundary},
        {"retrieval-contract", 5, retrieval},
        {"conservation-under-reflection", 10, conservation},
        {"plan-parse-robustness", 5, plan_parse},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        auto start = std::chrono::steady_clock::now();
        std::string why;
        try {
            why = c.check();
        } catch (const std::exception& e) {
            why = std::string("threw: ") + e.what();
        }
        double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (why.empty() && elapsed >= c.limit_s) why = "too slow";
        bool pass = why.empty();
        failures += !pass;
        std::printf("%s %-30s %7.3f s (limit %g s)%s%s\n", pass ? "PASS" : "FAIL", c.name, elapsed, c.limit_s,
                    pass ? "" : "  ", why.c_str());
    }
    std::fflush(stdout);
    fs::remove_all(work_dir());
    return failures == 0 ? 0 : 1;
}
