#include "autopent/actuation.hpp"
#include "autopent/errors.hpp"

#include <gtest/gtest.h>

using namespace autopent;
using namespace std::chrono_literals;

namespace {

Command cmd(std::string text, std::chrono::milliseconds timeout = 5s) { return {std::move(text), 1, timeout}; }

ScriptedBackend extractor() { return ScriptedBackend({{"Output Extraction.", "extracted: port 22 open", false}}); }

} // namespace

TEST(ProcessShell, KeepsStateAcrossCommands) {
    ProcessShellChannel shell(ProcessShellConfig{});
    auto r = execute(shell, cmd("cd /tmp"));
    EXPECT_FALSE(r.timed_out);
    r = execute(shell, cmd("pwd"));
    EXPECT_EQ(r.raw, "/tmp\n");
    r = execute(shell, cmd("echo oops 1>&2"));
    EXPECT_EQ(r.raw, "oops\n");
}

TEST(ProcessShell, TimeoutReturnsPartialOutputAndRespawns) {
    ProcessShellChannel shell(ProcessShellConfig{});
    execute(shell, cmd("cd /tmp"));
    auto start = std::chrono::steady_clock::now();
    auto r = execute(shell, cmd("echo partial; sleep 5", 300ms));
    EXPECT_LT(std::chrono::steady_clock::now() - start, 3s);
    EXPECT_TRUE(r.timed_out);
    EXPECT_EQ(r.raw, "partial\n");
    ASSERT_TRUE(shell.is_open());
    auto after = execute(shell, cmd("echo alive"));
    EXPECT_EQ(after.raw, "alive\n");
    EXPECT_NE(execute(shell, cmd("pwd")).raw, "/tmp\n");
}

TEST(ProcessShell, ExitedShellIsClosed) {
    ProcessShellChannel shell(ProcessShellConfig{});
    EXPECT_THROW(execute(shell, cmd("exit 0")), ChannelClosed);
    EXPECT_FALSE(shell.is_open());
    EXPECT_THROW(execute(shell, cmd("echo x")), ChannelClosed);
}

TEST(ProcessShell, PromptCompletion) {
    ProcessShellConfig config;
    config.argv = {"/bin/sh", "-c", "while read l; do echo \"got $l\"; printf '$ '; done"};
    config.completion = ProcessShellConfig::Completion::prompt;
    ProcessShellChannel shell(config);
    auto r = execute(shell, cmd("hello"));
    EXPECT_EQ(r.raw, "got hello\n");
}

TEST(Execute, RejectsBadCommands) {
    ProcessShellChannel shell(ProcessShellConfig{});
    EXPECT_THROW(execute(shell, cmd("")), EmptyCommand);
    EXPECT_THROW(execute(shell, cmd("echo a\necho b")), Error);
    auto r = execute(shell, cmd("vim /etc/passwd"));
    EXPECT_TRUE(r.sent.empty());
    EXPECT_NE(r.raw.find("interactive editor"), std::string::npos);
}

TEST(Execute, RewritesPagers) {
    ProcessShellChannel shell(ProcessShellConfig{});
    auto r = execute(shell, cmd("less /etc/hostname"));
    EXPECT_EQ(r.sent, "cat /etc/hostname");
    EXPECT_FALSE(r.raw.empty());
}

TEST(RewriteInteractive, Table) {
    EXPECT_EQ(*rewrite_interactive("less -N notes.txt").command, "cat -N notes.txt");
    EXPECT_EQ(*rewrite_interactive("more a").command, "cat a");
    EXPECT_EQ(*rewrite_interactive("top").command, "top -b -n 1");
    EXPECT_EQ(*rewrite_interactive("sudo less /var/log/auth.log").command, "sudo cat /var/log/auth.log");
    EXPECT_EQ(*rewrite_interactive("nmap -sV 10.0.0.1").command, "nmap -sV 10.0.0.1");
    EXPECT_EQ(*rewrite_interactive("cat file | less").command, "cat file | less");
    for (auto editor : {"vi x", "vim x", "nano x", "sudo nano /etc/hosts"}) {
        auto check = rewrite_interactive(editor);
        EXPECT_FALSE(check.command) << editor;
        EXPECT_FALSE(check.rejection.empty());
    }
}

TEST(ExtractCommand, StripsFencesAndPrompt) {
    EXPECT_EQ(extract_command("```bash\nnmap -sV 192.168.1.104\n```"), "nmap -sV 192.168.1.104");
    EXPECT_EQ(extract_command("\n\n$ whoami\nextra"), "whoami");
    EXPECT_THROW(extract_command("```\n```\n  "), EmptyCommand);
}

TEST(FilterOutput, ThresholdIsStrictlyGreater) {
    for (std::size_t size : {std::size_t{7999}, std::size_t{8000}, std::size_t{8001}}) {
        auto backend = extractor();
        std::string raw(size, 'x');
        auto out = filter_output(backend, {}, raw);
        bool expect = size > 8000;
        EXPECT_EQ(backend.count_matching("Output Extraction."), expect ? 1u : 0u) << size;
        EXPECT_EQ(out.extraction_used, expect) << size;
        EXPECT_EQ(out.text, expect ? "extracted: port 22 open" : raw) << size;
    }
}

TEST(FilterOutput, GatewayFailureFallsBackToHeadAndTail) {
    FunctionBackend down([](const auto&, const auto&) -> std::string { throw BackendUnavailable("down"); });
    std::string raw = std::string(5000, 'h') + std::string(5000, 't');
    auto out = filter_output(down, {}, raw);
    EXPECT_TRUE(out.degraded);
    EXPECT_TRUE(out.text.starts_with(std::string(4000, 'h')));
    EXPECT_TRUE(out.text.ends_with(std::string(4000, 't')));
    EXPECT_NE(out.text.find("truncated"), std::string::npos);
    EXPECT_LT(out.text.size(), raw.size());
}

TEST(FilterOutput, OverlongExtractionIsCapped) {
    FunctionBackend chatty([](const auto&, const auto&) { return std::string(20000, 'e'); });
    auto out = filter_output(chatty, {}, std::string(9000, 'x'));
    EXPECT_LE(out.text.size(), kFilterThreshold);
    EXPECT_FALSE(out.degraded);
}

TEST(ExecuteFiltered, LongOutputGoesThroughExtraction) {
    ProcessShellChannel shell(ProcessShellConfig{});
    auto backend = extractor();
    auto r = execute_filtered(shell, cmd("head -c 9000 /dev/zero | tr '\\0' a"), backend, {});
    EXPECT_EQ(r.raw.size(), 9000u);
    EXPECT_TRUE(r.extraction_used);
    EXPECT_EQ(r.filtered, "extracted: port 22 open");
}

TEST(SshChannel, BuildsArgv) {
    SshConfig config;
    config.host = "10.0.0.2";
    config.user = "kali";
    config.port = 2222;
    config.extra_args = {"-o", "ConnectTimeout=5"};
    auto argv = SshChannel::build_argv(config, "/tmp/key");
    std::vector<std::string> expect = {"ssh", "-T", "-o", "BatchMode=yes", "-o", "StrictHostKeyChecking=accept-new",
                                       "-p", "2222", "-i", "/tmp/key", "-o", "ConnectTimeout=5", "kali@10.0.0.2"};
    EXPECT_EQ(argv, expect);
    config.user.clear();
    EXPECT_EQ(SshChannel::build_argv(config, "").back(), "10.0.0.2");
    EXPECT_THROW(SshChannel(SshConfig{}), ConfigError);
}
