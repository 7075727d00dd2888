#include "autopent/errors.hpp"
#include "autopent/sandbox_target.hpp"

#include <gtest/gtest.h>

using namespace autopent;
using namespace std::chrono_literals;

namespace {

Scenario fig3() { return load_scenario(std::filesystem::path(AUTOPENT_FIXTURE_DIR) / "fig3-basic" / "scenario.json"); }

} // namespace

TEST(Sandbox, ExpandsStateAndCaptures) {
    SandboxChannel box(fig3());
    EXPECT_EQ(box.run("whoami", 1s).output, "root");
    box.run("cd /var/www", 1s);
    EXPECT_EQ(box.run("pwd", 1s).output, "/var/www");
    box.run("ssh student@192.168.1.104", 1s);
    EXPECT_EQ(box.run("whoami", 1s).output, "student");
    EXPECT_EQ(box.state().at("host"), "target");
    EXPECT_EQ(box.history().size(), 5u);
}

TEST(Sandbox, GuardsGateRules) {
    auto s = fig3();
    auto before = respond(s, s.initial_state, "ps aux");
    EXPECT_EQ(before.output, "ps: command not found");
    auto state = respond(s, s.initial_state, "ssh -p 22 student@192.168.1.104").state;
    EXPECT_NE(respond(s, state, "ps aux").output.find("/opt/backup.sh"), std::string::npos);
}

TEST(Sandbox, FallbackLeavesStateAlone) {
    auto s = fig3();
    auto r = respond(s, s.initial_state, "gobuster dir -u http://x");
    EXPECT_EQ(r.output, "gobuster: command not found");
    EXPECT_EQ(r.state, s.initial_state);
}

TEST(Sandbox, RespondIsPure) {
    auto s = fig3();
    auto a = respond(s, s.initial_state, "nmap -sV 192.168.1.104");
    auto b = respond(s, s.initial_state, "nmap -sV 192.168.1.104");
    EXPECT_EQ(a.output, b.output);
    EXPECT_EQ(a.state, b.state);
}

TEST(Sandbox, HangReportsTimeout) {
    auto s = parse_scenario(nlohmann::json::parse(
        R"({"name":"h","rules":[{"match":"tail -f","output":"line 1","hang":true}]})"));
    SandboxChannel box(s);
    auto r = execute(box, {"tail -f /var/log/syslog", 1, 50ms});
    EXPECT_TRUE(r.timed_out);
    EXPECT_EQ(r.raw, "line 1");
}

TEST(Sandbox, ClosedChannelThrows) {
    SandboxChannel box(fig3());
    box.close();
    EXPECT_THROW(box.run("whoami", 1s), ChannelClosed);
}

TEST(Sandbox, BadScenariosRejected) {
    using nlohmann::json;
    EXPECT_THROW(parse_scenario(json::parse(R"({"rules":[{"match":"x"}]})")), ConfigError);
    EXPECT_THROW(parse_scenario(json::parse(R"({"name":"n","rules":[]})")), ConfigError);
    EXPECT_THROW(parse_scenario(json::parse(R"({"name":"n","rules":[{"match":"re:("}]})")), ConfigError);
    EXPECT_THROW(parse_scenario(json::parse(R"({"name":"n","rules":[{"match":"x","set":{"a":1}}]})")), ConfigError);
    EXPECT_THROW(load_scenario("/nonexistent/scenario.json"), ConfigError);
}
