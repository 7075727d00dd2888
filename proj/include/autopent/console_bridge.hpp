#pragma once

#include "autopent/phase.hpp"

#include <json.hpp>

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace autopent {

struct ManualRequest {
    PhaseName phase = PhaseName::reconnaissance;
    int task_id = 0;
    std::string instruction;
    std::string detail;
    std::optional<std::string> suggested_command;
    std::uint64_t requested_at_seq = 0;
};

struct ManualSubmission {
    std::string result;
    std::optional<bool> success_hint;
    bool timed_out = false;
};

struct ApprovalRequest {
    int task_id = 0;
    std::string command;
    std::uint64_t requested_at_seq = 0;
};

nlohmann::json to_json(const ManualRequest& request);
nlohmann::json to_json(const ApprovalRequest& request);

/// The human side of manual and semi-automatic operation. Calls block the
/// session thread; both throw OperatorAborted once the session is aborted.
class HumanInterface {
public:
    virtual ~HumanInterface() = default;
    virtual ManualSubmission request_manual(const ManualRequest& request) = 0;
    virtual void request_approval(const ApprovalRequest& request) = 0;
    virtual bool aborted() const = 0;
};

enum class SubmitStatus { accepted, not_pending };

/// Thread-safe hand-off between a session thread and the HTTP API: pending
/// requests flow out, submissions and approvals flow in.
class ConsoleBridge final : public HumanInterface {
public:
    /// No timeout means wait indefinitely.
    explicit ConsoleBridge(std::optional<std::chrono::milliseconds> wait_timeout = std::nullopt);

    ManualSubmission request_manual(const ManualRequest& request) override;
    void request_approval(const ApprovalRequest& request) override;
    bool aborted() const override;

    std::vector<ManualRequest> pending_manual() const;
    std::vector<ApprovalRequest> pending_approvals() const;

    SubmitStatus submit(int task_id, std::string result, std::optional<bool> success_hint = std::nullopt);
    SubmitStatus approve(int task_id);
    void abort();

private:
    std::optional<std::chrono::milliseconds> wait_timeout_;
    mutable std::mutex mutex_;
    std::condition_variable changed_;
    std::optional<ManualRequest> manual_;
    std::optional<ManualSubmission> submission_;
    std::optional<ApprovalRequest> approval_;
    bool approved_ = false;
    bool aborted_ = false;
};

/// Prompts on a terminal. A manual result is every line up to a line holding
/// a single "."; end of input aborts the session.
class TerminalConsole final : public HumanInterface {
public:
    TerminalConsole(std::istream& in, std::ostream& out) : in_(in), out_(out) {}

    ManualSubmission request_manual(const ManualRequest& request) override;
    void request_approval(const ApprovalRequest& request) override;
    bool aborted() const override { return aborted_; }

private:
    std::istream& in_;
    std::ostream& out_;
    bool aborted_ = false;
};

} // namespace autopent
