#include "autopent/console_bridge.hpp"

#include "autopent/errors.hpp"

#include <istream>
#include <ostream>

namespace autopent {

nlohmann::json to_json(const ManualRequest& r) {
    return {{"phase", std::string(to_string(r.phase))},
            {"task_id", r.task_id},
            {"instruction", r.instruction},
            {"detail", r.detail},
            {"suggested_command", r.suggested_command ? nlohmann::json(*r.suggested_command) : nlohmann::json(nullptr)},
            {"requested_at_seq", r.requested_at_seq}};
}

nlohmann::json to_json(const ApprovalRequest& r) {
    return {{"task_id", r.task_id}, {"command", r.command}, {"requested_at_seq", r.requested_at_seq}};
}

ConsoleBridge::ConsoleBridge(std::optional<std::chrono::milliseconds> wait_timeout) : wait_timeout_(wait_timeout) {}

ManualSubmission ConsoleBridge::request_manual(const ManualRequest& request) {
    std::unique_lock lock(mutex_);
    if (aborted_) throw OperatorAborted();
    manual_ = request;
    submission_.reset();
    auto ready = [&] { return aborted_ || submission_.has_value(); };
    bool done = true;
    if (wait_timeout_) {
        done = changed_.wait_for(lock, *wait_timeout_, ready);
    } else {
        changed_.wait(lock, ready);
    }
    manual_.reset();
    if (aborted_) throw OperatorAborted();
    if (!done) return {"no result was submitted before the operator wait timeout", false, true};
    auto out = std::move(*submission_);
    submission_.reset();
    return out;
}

void ConsoleBridge::request_approval(const ApprovalRequest& request) {
    std::unique_lock lock(mutex_);
    if (aborted_) throw OperatorAborted();
    approval_ = request;
    approved_ = false;
    auto ready = [&] { return aborted_ || approved_; };
    bool done = true;
    if (wait_timeout_) {
        done = changed_.wait_for(lock, *wait_timeout_, ready);
    } else {
        changed_.wait(lock, ready);
    }
    approval_.reset();
    if (aborted_ || !done) {
        aborted_ = true;
        throw OperatorAborted();
    }
}

bool ConsoleBridge::aborted() const {
    std::lock_guard lock(mutex_);
    return aborted_;
}

std::vector<ManualRequest> ConsoleBridge::pending_manual() const {
    std::lock_guard lock(mutex_);
    if (manual_ && !submission_) return {*manual_};
    return {};
}

std::vector<ApprovalRequest> ConsoleBridge::pending_approvals() const {
    std::lock_guard lock(mutex_);
    if (approval_ && !approved_) return {*approval_};
    return {};
}

SubmitStatus ConsoleBridge::submit(int task_id, std::string result, std::optional<bool> success_hint) {
    {
        std::lock_guard lock(mutex_);
        if (aborted_ || !manual_ || submission_ || manual_->task_id != task_id) return SubmitStatus::not_pending;
        submission_ = ManualSubmission{std::move(result), success_hint, false};
    }
    changed_.notify_all();
    return SubmitStatus::accepted;
}

SubmitStatus ConsoleBridge::approve(int task_id) {
    {
        std::lock_guard lock(mutex_);
        if (aborted_ || !approval_ || approved_ || approval_->task_id != task_id) return SubmitStatus::not_pending;
        approved_ = true;
    }
    changed_.notify_all();
    return SubmitStatus::accepted;
}

void ConsoleBridge::abort() {
    {
        std::lock_guard lock(mutex_);
        aborted_ = true;
    }
    changed_.notify_all();
}

ManualSubmission TerminalConsole::request_manual(const ManualRequest& request) {
    if (aborted_) throw OperatorAborted();
    out_ << "\n=== manual task " << request.task_id << " (" << to_string(request.phase) << ") ===\n"
         << request.instruction << "\n\n" << request.detail << "\n";
    if (request.suggested_command) out_ << "\nSuggested command: " << *request.suggested_command << "\n";
    out_ << "\nEnter the result, then a line containing only \".\":" << std::endl;

    std::string result, line;
    while (true) {
        if (!std::getline(in_, line)) {
            aborted_ = true;
            throw OperatorAborted();
        }
        if (line == ".") break;
        if (!result.empty()) result += "\n";
        result += line;
    }
    return {result, std::nullopt, false};
}

void TerminalConsole::request_approval(const ApprovalRequest& request) {
    if (aborted_) throw OperatorAborted();
    out_ << "\nApprove command for task " << request.task_id << "? [y/N]\n  " << request.command << std::endl;
    std::string line;
    if (!std::getline(in_, line) || (line != "y" && line != "Y" && line != "yes")) {
        aborted_ = true;
        throw OperatorAborted();
    }
}

} // namespace autopent
