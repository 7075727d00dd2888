#pragma once

#include <json.hpp>

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace autopent {

enum class EventKind {
    plan_generated,
    plan_merged,
    task_detailed,
    command_generated,
    command_executed,
    result_checked,
    manual_requested,
    manual_submitted,
    phase_summary,
    phase_failed,
    session_finished,
};

std::string_view to_string(EventKind kind);
std::optional<EventKind> parse_event_kind(std::string_view text);

struct SessionEvent {
    std::uint64_t seq = 0;
    std::string timestamp;
    EventKind kind = EventKind::plan_generated;
    nlohmann::json payload;

    bool operator==(const SessionEvent&) const = default;
};

nlohmann::json event_to_json(const SessionEvent& event);
SessionEvent event_from_json(const nlohmann::json& doc);

/// One event per line, timestamps dropped; the form compared for determinism.
std::string canonical_log(const std::vector<SessionEvent>& events);

/// Append-only, gapless session log. Optionally mirrored to a JSON-lines
/// file, flushed after every record. Appends are serialised; readers can
/// block for new events.
class EventLog {
public:
    using Clock = std::function<std::string()>;

    EventLog();
    /// Appends to `file`, continuing the sequence of any events already in it.
    explicit EventLog(std::filesystem::path file);

    std::uint64_t append(EventKind kind, nlohmann::json payload);

    std::vector<SessionEvent> events() const;
    std::vector<SessionEvent> events_since(std::uint64_t seq) const;
    /// Blocks until an event with seq > `seq` exists or the timeout passes.
    std::vector<SessionEvent> wait_since(std::uint64_t seq, std::chrono::milliseconds timeout) const;
    std::uint64_t last_seq() const;

    void set_clock(Clock clock);
    const std::optional<std::filesystem::path>& file() const { return file_; }

private:
    std::optional<std::filesystem::path> file_;
    std::ofstream out_;
    Clock clock_;
    mutable std::mutex mutex_;
    mutable std::condition_variable changed_;
    std::vector<SessionEvent> events_;
};

/// Reads a log. A torn final record is dropped with a warning; any other bad
/// line, or a sequence gap, throws LogCorrupt.
std::vector<SessionEvent> replay(std::istream& in);
std::vector<SessionEvent> replay(const std::filesystem::path& file);

/// ISO-8601 UTC with milliseconds.
std::string utc_timestamp();

} // namespace autopent
