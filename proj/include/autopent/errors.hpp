#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace autopent {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ── task graph ──────────────────────────────────────────────────────
class GraphError : public Error {
public:
    using Error::Error;
};

class CyclicDependencies : public GraphError {
public:
    explicit CyclicDependencies(std::vector<int> cycle);
    const std::vector<int>& cycle() const { return cycle_; }

private:
    std::vector<int> cycle_;
};

class UnknownDependency : public GraphError {
public:
    UnknownDependency(int task_id, int missing_id);
    int task_id() const { return task_id_; }
    int missing_id() const { return missing_id_; }

private:
    int task_id_;
    int missing_id_;
};

class DuplicateId : public GraphError {
public:
    explicit DuplicateId(int id);
    int id() const { return id_; }

private:
    int id_;
};

class EmptyInstruction : public GraphError {
public:
    explicit EmptyInstruction(int id);
    int id() const { return id_; }

private:
    int id_;
};

class InvalidTaskState : public GraphError {
public:
    using GraphError::GraphError;
};

class UnknownTask : public GraphError {
public:
    explicit UnknownTask(int id);
    int id() const { return id_; }

private:
    int id_;
};

class AlreadyFinished : public GraphError {
public:
    explicit AlreadyFinished(int id);
    int id() const { return id_; }

private:
    int id_;
};

// ── plan sessions ───────────────────────────────────────────────────
class MissingBinding : public Error {
public:
    explicit MissingBinding(std::string name);
    const std::string& name() const { return name_; }

private:
    std::string name_;
};

class InvalidTemplate : public Error {
public:
    using Error::Error;
};

class NoPlanFound : public Error {
public:
    NoPlanFound() : Error("no task list found in completion") {}
};

class MalformedTask : public Error {
public:
    MalformedTask(std::size_t index, std::string reason);
    std::size_t index() const { return index_; }
    const std::string& reason() const { return reason_; }

private:
    std::size_t index_;
    std::string reason_;
};

class PlanGenerationFailed : public Error {
public:
    PlanGenerationFailed(int attempts, std::string last_error);
    int attempts() const { return attempts_; }
    const std::string& last_error() const { return last_error_; }

private:
    int attempts_;
    std::string last_error_;
};

// ── llm gateway ─────────────────────────────────────────────────────
class GatewayError : public Error {
public:
    using Error::Error;
};

// Transport failures or 5xx after the retry budget is spent.
class BackendUnavailable : public GatewayError {
public:
    using GatewayError::GatewayError;
};

// Non-retryable response (4xx, unparseable body, missing completion field).
class BackendRejected : public GatewayError {
public:
    BackendRejected(int status, const std::string& what);
    int status() const { return status_; }

private:
    int status_;
};

class NoRuleMatched : public GatewayError {
public:
    using GatewayError::GatewayError;
};

// ── actuation ───────────────────────────────────────────────────────
class EmptyCommand : public Error {
public:
    EmptyCommand() : Error("completion contained no command") {}
};

class ChannelClosed : public Error {
public:
    ChannelClosed() : Error("execution channel is closed") {}
};

// ── memory retriever ────────────────────────────────────────────────
class DimensionMismatch : public Error {
public:
    DimensionMismatch(std::size_t expected, std::size_t actual);
};

class RejectUnsuccessful : public Error {
public:
    explicit RejectUnsuccessful(int task_id);
};

// ── session service ─────────────────────────────────────────────────
class LogCorrupt : public Error {
public:
    LogCorrupt(std::size_t line, const std::string& why);
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class OperatorAborted : public Error {
public:
    OperatorAborted() : Error("session aborted by operator") {}
};

class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace autopent
