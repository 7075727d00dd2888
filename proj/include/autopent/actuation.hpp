#pragma once

#include "autopent/llm_gateway.hpp"
#include "autopent/phase.hpp"
#include "autopent/summarizer.hpp"
#include "autopent/task_graph.hpp"

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include <sys/types.h>

namespace autopent {

inline constexpr std::size_t kFilterThreshold = 8000;
inline constexpr std::chrono::milliseconds kDefaultCommandTimeout{300'000};

struct Command {
    std::string text;
    int task_id = 0;
    std::chrono::milliseconds timeout = kDefaultCommandTimeout;
};

struct ExecutionResult {
    std::string raw;
    std::string filtered;
    std::chrono::milliseconds duration{0};
    bool timed_out = false;
    bool extraction_used = false;
    bool filter_degraded = false;
    /// The command actually sent (after interactive rewrites); empty if rejected.
    std::string sent;
};

struct ChannelOutput {
    std::string output;
    bool timed_out = false;
};

/// An interactive shell that keeps state (cwd, environment, logins) across
/// commands. Owned by one session thread.
class ShellChannel {
public:
    virtual ~ShellChannel() = default;
    virtual bool is_open() const = 0;
    virtual ChannelOutput run(const std::string& command, std::chrono::milliseconds timeout) = 0;
    virtual void close() = 0;
};

/// Fence-strips a completion and takes its first non-empty line.
/// Throws EmptyCommand.
std::string extract_command(std::string_view completion);

/// Asks the generator for one command for the detailed task.
Command generate_command(LlmBackend& gateway, const ChatParams& params, const TaskNode& task,
                         const std::string& detail, const PhaseSpec& phase, const ShellState& shell_state,
                         std::chrono::milliseconds timeout = kDefaultCommandTimeout);

struct InteractiveCheck {
    std::optional<std::string> command;   // rewritten or original command
    std::string rejection;                // set when the command cannot run unattended
};

/// Pagers and `top` become batch equivalents; editors are rejected.
InteractiveCheck rewrite_interactive(std::string_view command);

/// Runs a command on the channel. A timeout is data (timed_out = true with
/// partial output), not an error. Throws ChannelClosed.
ExecutionResult execute(ShellChannel& channel, const Command& command);

struct FilterOutcome {
    std::string text;
    bool extraction_used = false;
    bool degraded = false;
};

/// Output longer than `threshold` goes through one extraction call; anything
/// else is returned verbatim without touching the gateway.
FilterOutcome filter_output(LlmBackend& gateway, const ChatParams& params, std::string_view raw,
                            std::size_t threshold = kFilterThreshold);

/// execute() followed by filter_output() on the raw text.
ExecutionResult execute_filtered(ShellChannel& channel, const Command& command, LlmBackend& gateway,
                                 const ChatParams& params, std::size_t threshold = kFilterThreshold);

// ── process-backed channel ──────────────────────────────────────────

struct ProcessShellConfig {
    std::vector<std::string> argv = {"/bin/sh"};
    enum class Completion { end_marker, prompt } completion = Completion::end_marker;
    /// Matched against the tail of the output in prompt mode.
    std::string prompt_pattern = R"((\$ |# |> )$)";
};

/// Drives a child process (a local shell, or `ssh` to the attack machine)
/// through pipes with stderr merged into stdout. After a timeout the child
/// is killed and respawned, so shell state is lost.
class ProcessShellChannel final : public ShellChannel {
public:
    explicit ProcessShellChannel(ProcessShellConfig config);
    ~ProcessShellChannel() override;

    ProcessShellChannel(const ProcessShellChannel&) = delete;
    ProcessShellChannel& operator=(const ProcessShellChannel&) = delete;

    bool is_open() const override { return pid_ > 0 && !eof_; }
    ChannelOutput run(const std::string& command, std::chrono::milliseconds timeout) override;
    void close() override;

private:
    void spawn();
    void reap();
    bool write_all(std::string_view data);

    ProcessShellConfig config_;
    std::regex prompt_;
    pid_t pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    bool eof_ = false;
    unsigned marker_seq_ = 0;
    std::string pending_;
};

struct SshConfig {
    std::string host;
    int port = 22;
    std::string user;
    std::string key_path;                       // file path, or
    std::string key_env = "AUTOPENT_SSH_KEY";   // env var holding key material
    std::vector<std::string> extra_args;
};

/// Builds an ssh-backed channel to the attack machine. Key material from the
/// environment is written to a private temp file that lives as long as the
/// channel. Never logs the key.
class SshChannel final : public ShellChannel {
public:
    explicit SshChannel(const SshConfig& config);
    ~SshChannel() override;

    bool is_open() const override { return inner_ && inner_->is_open(); }
    ChannelOutput run(const std::string& command, std::chrono::milliseconds timeout) override {
        return inner_->run(command, timeout);
    }
    void close() override {
        if (inner_) inner_->close();
    }

    static std::vector<std::string> build_argv(const SshConfig& config, const std::string& key_file);

private:
    std::filesystem::path temp_key_;
    std::unique_ptr<ProcessShellChannel> inner_;
};

} // namespace autopent
