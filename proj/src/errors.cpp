#include "autopent/errors.hpp"

#include <sstream>

namespace autopent {

namespace {

std::string describe_cycle(const std::vector<int>& cycle) {
    std::ostringstream out;
    out << "cyclic dependencies: ";
    for (std::size_t i = 0; i < cycle.size(); ++i) {
        if (i) out << " -> ";
        out << cycle[i];
    }
    if (!cycle.empty()) out << " -> " << cycle.front();
    return out.str();
}

} // namespace

CyclicDependencies::CyclicDependencies(std::vector<int> cycle)
    : GraphError(describe_cycle(cycle)), cycle_(std::move(cycle)) {}

UnknownDependency::UnknownDependency(int task_id, int missing_id)
    : GraphError("task " + std::to_string(task_id) + " depends on unknown task " +
                 std::to_string(missing_id)),
      task_id_(task_id), missing_id_(missing_id) {}

DuplicateId::DuplicateId(int id)
    : GraphError("duplicate task id " + std::to_string(id)), id_(id) {}

EmptyInstruction::EmptyInstruction(int id)
    : GraphError("task " + std::to_string(id) + " has an empty instruction"), id_(id) {}

UnknownTask::UnknownTask(int id) : GraphError("unknown task " + std::to_string(id)), id_(id) {}

AlreadyFinished::AlreadyFinished(int id)
    : GraphError("task " + std::to_string(id) + " is already finished"), id_(id) {}

MissingBinding::MissingBinding(std::string name)
    : Error("missing binding for placeholder {" + name + "}"), name_(std::move(name)) {}

MalformedTask::MalformedTask(std::size_t index, std::string reason)
    : Error("malformed task at index " + std::to_string(index) + ": " + reason),
      index_(index), reason_(std::move(reason)) {}

PlanGenerationFailed::PlanGenerationFailed(int attempts, std::string last_error)
    : Error("plan generation failed after " + std::to_string(attempts) +
            " attempts: " + last_error),
      attempts_(attempts), last_error_(std::move(last_error)) {}

BackendRejected::BackendRejected(int status, const std::string& what)
    : GatewayError("backend rejected request (status " + std::to_string(status) + "): " + what),
      status_(status) {}

DimensionMismatch::DimensionMismatch(std::size_t expected, std::size_t actual)
    : Error("embedding dimension mismatch: expected " + std::to_string(expected) + ", got " +
            std::to_string(actual)) {}

RejectUnsuccessful::RejectUnsuccessful(int task_id)
    : Error("task " + std::to_string(task_id) + " is not finished with success") {}

LogCorrupt::LogCorrupt(std::size_t line, const std::string& why)
    : Error("event log corrupt at line " + std::to_string(line) + ": " + why), line_(line) {}

} // namespace autopent
