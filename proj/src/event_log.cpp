#include "autopent/event_log.hpp"

#include "autopent/errors.hpp"

#include <spdlog/spdlog.h>

#include <array>
#include <ctime>
#include <sstream>

namespace autopent {

namespace {

constexpr std::array<std::pair<EventKind, std::string_view>, 11> kKinds = {{
    {EventKind::plan_generated, "plan_generated"},
    {EventKind::plan_merged, "plan_merged"},
    {EventKind::task_detailed, "task_detailed"},
    {EventKind::command_generated, "command_generated"},
    {EventKind::command_executed, "command_executed"},
    {EventKind::result_checked, "result_checked"},
    {EventKind::manual_requested, "manual_requested"},
    {EventKind::manual_submitted, "manual_submitted"},
    {EventKind::phase_summary, "phase_summary"},
    {EventKind::phase_failed, "phase_failed"},
    {EventKind::session_finished, "session_finished"},
}};

} // namespace

std::string_view to_string(EventKind kind) {
    for (const auto& [k, name] : kKinds) {
        if (k == kind) return name;
    }
    return "unknown";
}

std::optional<EventKind> parse_event_kind(std::string_view text) {
    for (const auto& [k, name] : kKinds) {
        if (name == text) return k;
    }
    return std::nullopt;
}

std::string utc_timestamp() {
    auto now = std::chrono::system_clock::now();
    auto secs = std::chrono::system_clock::to_time_t(now);
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof out, "%s.%03lldZ", buf, static_cast<long long>(ms));
    return out;
}

nlohmann::json event_to_json(const SessionEvent& event) {
    return {{"seq", event.seq}, {"ts", event.timestamp}, {"kind", std::string(to_string(event.kind))},
            {"payload", event.payload}};
}

SessionEvent event_from_json(const nlohmann::json& doc) {
    SessionEvent e;
    e.seq = doc.at("seq").get<std::uint64_t>();
    e.timestamp = doc.value("ts", "");
    auto kind = parse_event_kind(doc.at("kind").get<std::string>());
    if (!kind) throw Error("unknown event kind '" + doc.at("kind").get<std::string>() + "'");
    e.kind = *kind;
    e.payload = doc.value("payload", nlohmann::json::object());
    return e;
}

std::string canonical_log(const std::vector<SessionEvent>& events) {
    std::string out;
    for (const auto& e : events) {
        auto doc = event_to_json(e);
        doc.erase("ts");
        out += doc.dump() + "\n";
    }
    return out;
}

EventLog::EventLog() : clock_(utc_timestamp) {}

EventLog::EventLog(std::filesystem::path file) : file_(std::move(file)), clock_(utc_timestamp) {
    if (std::filesystem::exists(*file_)) {
        events_ = replay(*file_);
        std::ofstream rewrite(*file_, std::ios::trunc);
        for (const auto& e : events_) rewrite << event_to_json(e).dump() << '\n';
    } else if (file_->has_parent_path()) {
        std::filesystem::create_directories(file_->parent_path());
    }
    out_.open(*file_, std::ios::app);
    if (!out_) throw Error("cannot open event log " + file_->string());
}

std::uint64_t EventLog::append(EventKind kind, nlohmann::json payload) {
    std::uint64_t seq;
    {
        std::lock_guard lock(mutex_);
        SessionEvent e{events_.size() + 1, clock_(), kind, std::move(payload)};
        seq = e.seq;
        if (out_.is_open()) {
            out_ << event_to_json(e).dump() << '\n';
            out_.flush();
        }
        events_.push_back(std::move(e));
    }
    changed_.notify_all();
    return seq;
}

std::vector<SessionEvent> EventLog::events() const {
    std::lock_guard lock(mutex_);
    return events_;
}

std::vector<SessionEvent> EventLog::events_since(std::uint64_t seq) const {
    std::lock_guard lock(mutex_);
    if (seq >= events_.size()) return {};
    return {events_.begin() + static_cast<std::ptrdiff_t>(seq), events_.end()};
}

std::vector<SessionEvent> EventLog::wait_since(std::uint64_t seq, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mutex_);
    changed_.wait_for(lock, timeout, [&] { return events_.size() > seq; });
    if (seq >= events_.size()) return {};
    return {events_.begin() + static_cast<std::ptrdiff_t>(seq), events_.end()};
}

std::uint64_t EventLog::last_seq() const {
    std::lock_guard lock(mutex_);
    return events_.size();
}

void EventLog::set_clock(Clock clock) {
    std::lock_guard lock(mutex_);
    clock_ = std::move(clock);
}

std::vector<SessionEvent> replay(std::istream& in) {
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(std::move(line));

    std::vector<SessionEvent> events;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const bool final_line = i + 1 == lines.size();
        if (lines[i].empty()) {
            if (final_line) break;
            throw LogCorrupt(i + 1, "empty record");
        }
        try {
            auto e = event_from_json(nlohmann::json::parse(lines[i]));
            if (e.seq != events.size() + 1) {
                throw LogCorrupt(i + 1, "expected seq " + std::to_string(events.size() + 1) + ", found " +
                                            std::to_string(e.seq));
            }
            events.push_back(std::move(e));
        } catch (const LogCorrupt&) {
            throw;
        } catch (const std::exception& e) {
            if (final_line) {
                spdlog::warn("event log: dropping torn final record at line {}", i + 1);
                break;
            }
            throw LogCorrupt(i + 1, e.what());
        }
    }
    return events;
}

std::vector<SessionEvent> replay(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw Error("cannot open event log " + file.string());
    return replay(in);
}

} // namespace autopent
