#include "autopent/actuation.hpp"

#include "autopent/errors.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cerrno>
#include <csignal>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <fcntl.h>
#include <poll.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

namespace autopent {

namespace {

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_words(std::string_view s) {
    std::vector<std::string> out;
    std::istringstream in{std::string(s)};
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
}

constexpr std::string_view kExtractionMarker = "\n[... output truncated ...]\n";

} // namespace

std::string extract_command(std::string_view completion) {
    std::istringstream in{std::string(completion)};
    std::string line;
    while (std::getline(in, line)) {
        auto t = trim(line);
        if (t.empty() || t.starts_with("```")) continue;
        if (t.starts_with("$ ")) t = trim(t.substr(2));
        if (!t.empty()) return t;
    }
    throw EmptyCommand();
}

Command generate_command(LlmBackend& gateway, const ChatParams& params, const TaskNode& task,
                         const std::string& detail, const PhaseSpec& phase, const ShellState& shell_state,
                         std::chrono::milliseconds timeout) {
    std::string system = "You are the command generator for a " + display_name(phase.name) +
                         " Assistant running on Kali Linux 2023. You translate one task into one "
                         "tool-specific shell command for the attack machine.";
    std::string query = "Command Request for task: " + task.instruction + "\nPhase: " + display_name(phase.name) +
                        "\nTask details:\n" + detail + "\n\nCurrent shell state: " +
                        (shell_state.description.empty() ? "no session established" : shell_state.description) +
                        "\n\nReply with exactly one shell command on a single line, with no explanation.";
    auto reply = chat(gateway, {{Role::system, system}, {Role::user, query}}, params);
    return {extract_command(reply), task.id, timeout};
}

InteractiveCheck rewrite_interactive(std::string_view command) {
    auto words = split_words(command);
    std::size_t head = (!words.empty() && words[0] == "sudo") ? 1 : 0;
    if (head >= words.size()) return {std::string(command), ""};

    const auto& tool = words[head];
    auto rest = [&](std::size_t from) {
        std::string out;
        for (auto i = from; i < words.size(); ++i) out += " " + words[i];
        return out;
    };
    std::string prefix = head ? "sudo " : "";
    if (tool == "less" || tool == "more") return {prefix + "cat" + rest(head + 1), ""};
    if (tool == "top") return {prefix + "top -b -n 1", ""};
    if (tool == "vi" || tool == "vim" || tool == "nano") {
        return {std::nullopt, "error: interactive editor '" + tool +
                                  "' cannot run in the automated shell; use non-interactive tools "
                                  "such as cat, sed or echo instead"};
    }
    return {std::string(command), ""};
}

ExecutionResult execute(ShellChannel& channel, const Command& command) {
    if (!channel.is_open()) throw ChannelClosed();
    if (command.text.empty()) throw EmptyCommand();
    if (command.text.find_first_of("\r\n") != std::string::npos) {
        throw Error("command must be a single line");
    }

    ExecutionResult result;
    auto check = rewrite_interactive(command.text);
    if (!check.command) {
        result.raw = check.rejection;
        result.filtered = result.raw;
        return result;
    }
    if (*check.command != command.text) {
        spdlog::info("rewrote interactive command '{}' as '{}'", command.text, *check.command);
    }
    result.sent = *check.command;

    auto start = std::chrono::steady_clock::now();
    auto out = channel.run(result.sent, command.timeout);
    result.duration = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
    result.raw = std::move(out.output);
    result.timed_out = out.timed_out;
    result.filtered = result.raw;
    return result;
}

FilterOutcome filter_output(LlmBackend& gateway, const ChatParams& params, std::string_view raw, std::size_t threshold) {
    if (raw.size() <= threshold) return {std::string(raw), false, false};

    std::string query =
        "Output Extraction.\nThe following command output is too long. Extract the key information relevant "
        "to the penetration test (open ports, services, versions, vulnerabilities, credentials, errors).\n\n";
    query += raw;
    try {
        auto extracted = chat(gateway, {{Role::user, query}}, params);
        if (extracted.size() > threshold) {
            auto keep = threshold > kExtractionMarker.size() ? threshold - kExtractionMarker.size() : 0;
            extracted = truncate_utf8(extracted, keep) + std::string(kExtractionMarker.substr(0, threshold - keep));
        }
        return {std::move(extracted), true, false};
    } catch (const GatewayError& e) {
        spdlog::warn("output filter: extraction failed ({}), truncating mechanically", e.what());
        auto half = threshold / 2;
        std::string text(raw.substr(0, half));
        text += kExtractionMarker;
        text += raw.substr(raw.size() - half);
        return {std::move(text), true, true};
    }
}

ExecutionResult execute_filtered(ShellChannel& channel, const Command& command, LlmBackend& gateway,
                                 const ChatParams& params, std::size_t threshold) {
    auto result = execute(channel, command);
    auto filtered = filter_output(gateway, params, result.raw, threshold);
    result.filtered = std::move(filtered.text);
    result.extraction_used = filtered.extraction_used;
    result.filter_degraded = filtered.degraded;
    return result;
}

// ── ProcessShellChannel ─────────────────────────────────────────────

ProcessShellChannel::ProcessShellChannel(ProcessShellConfig config)
    : config_(std::move(config)), prompt_(config_.prompt_pattern, std::regex::ECMAScript) {
    if (config_.argv.empty()) throw ConfigError("process channel needs a command");
    spawn();
}

ProcessShellChannel::~ProcessShellChannel() { close(); }

void ProcessShellChannel::spawn() {
    int in_pipe[2];
    int out_pipe[2];
    if (::pipe(in_pipe) != 0 || ::pipe(out_pipe) != 0) throw Error(std::string("pipe: ") + std::strerror(errno));

    pid_t pid = ::fork();
    if (pid < 0) throw Error(std::string("fork: ") + std::strerror(errno));
    if (pid == 0) {
        ::setsid();
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::dup2(out_pipe[1], STDERR_FILENO);
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        ::close(out_pipe[0]);
        ::close(out_pipe[1]);
        std::vector<char*> args;
        for (auto& a : config_.argv) args.push_back(a.data());
        args.push_back(nullptr);
        ::execvp(args[0], args.data());
        ::_exit(127);
    }
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
    ::fcntl(from_child_, F_SETFL, ::fcntl(from_child_, F_GETFL) | O_NONBLOCK);
    pid_ = pid;
    eof_ = false;
    pending_.clear();
}

void ProcessShellChannel::reap() {
    if (to_child_ >= 0) ::close(to_child_);
    if (from_child_ >= 0) ::close(from_child_);
    to_child_ = from_child_ = -1;
    if (pid_ > 0) {
        ::kill(-pid_, SIGKILL);
        ::kill(pid_, SIGKILL);
        int status = 0;
        ::waitpid(pid_, &status, 0);
    }
    pid_ = -1;
}

void ProcessShellChannel::close() {
    reap();
    eof_ = true;
}

bool ProcessShellChannel::write_all(std::string_view data) {
    while (!data.empty()) {
        auto n = ::write(to_child_, data.data(), data.size());
        if (n < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
}

ChannelOutput ProcessShellChannel::run(const std::string& command, std::chrono::milliseconds timeout) {
    if (!is_open()) throw ChannelClosed();

    std::signal(SIGPIPE, SIG_IGN);
    const bool marker_mode = config_.completion == ProcessShellConfig::Completion::end_marker;
    const std::string marker = "__AUTOPENT_END_" + std::to_string(++marker_seq_) + "__";
    std::string payload = command + "\n";
    if (marker_mode) payload += "echo " + marker + "\n";
    if (!write_all(payload)) {
        close();
        throw ChannelClosed();
    }

    std::string output = std::move(pending_);
    pending_.clear();
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    char buf[4096];
    while (true) {
        if (marker_mode) {
            if (auto pos = output.find(marker + "\n"); pos != std::string::npos) {
                pending_ = output.substr(pos + marker.size() + 1);
                output.resize(pos);
                return {std::move(output), false};
            }
        } else {
            std::smatch m;
            if (std::regex_search(output, m, prompt_) && m.position(0) + m.length(0) == static_cast<long>(output.size())) {
                output.resize(static_cast<std::size_t>(m.position(0)));
                return {std::move(output), false};
            }
        }

        auto now = std::chrono::steady_clock::now();
        if (now >= deadline) {
            spdlog::warn("command timed out after {} ms; restarting channel", timeout.count());
            reap();
            spawn();
            return {std::move(output), true};
        }
        auto wait = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
        pollfd pfd{from_child_, POLLIN, 0};
        int rc = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(wait, 100)));
        if (rc < 0 && errno != EINTR) throw Error(std::string("poll: ") + std::strerror(errno));
        if (rc <= 0) continue;
        auto n = ::read(from_child_, buf, sizeof buf);
        if (n > 0) {
            output.append(buf, static_cast<std::size_t>(n));
        } else if (n == 0) {
            close();
            throw ChannelClosed();
        }
    }
}

// ── SshChannel ──────────────────────────────────────────────────────

std::vector<std::string> SshChannel::build_argv(const SshConfig& config, const std::string& key_file) {
    std::vector<std::string> argv = {"ssh", "-T", "-o", "BatchMode=yes", "-o", "StrictHostKeyChecking=accept-new",
                                     "-p", std::to_string(config.port)};
    if (!key_file.empty()) {
        argv.push_back("-i");
        argv.push_back(key_file);
    }
    argv.insert(argv.end(), config.extra_args.begin(), config.extra_args.end());
    argv.push_back(config.user.empty() ? config.host : config.user + "@" + config.host);
    return argv;
}

SshChannel::SshChannel(const SshConfig& config) {
    if (config.host.empty()) throw ConfigError("ssh channel requires a host");
    std::string key_file = config.key_path;
    if (key_file.empty() && !config.key_env.empty()) {
        if (const char* material = std::getenv(config.key_env.c_str()); material && *material) {
            std::random_device rd;
            temp_key_ = std::filesystem::temp_directory_path() / ("autopent-key-" + std::to_string(rd()));
            {
                std::ofstream out(temp_key_);
                out << material;
                if (std::string_view(material).back() != '\n') out << '\n';
            }
            std::filesystem::permissions(temp_key_, std::filesystem::perms::owner_read | std::filesystem::perms::owner_write,
                                         std::filesystem::perm_options::replace);
            key_file = temp_key_.string();
        }
    }
    inner_ = std::make_unique<ProcessShellChannel>(ProcessShellConfig{build_argv(config, key_file)});
}

SshChannel::~SshChannel() {
    inner_.reset();
    if (!temp_key_.empty()) {
        std::error_code ec;
        std::filesystem::remove(temp_key_, ec);
    }
}

} // namespace autopent
