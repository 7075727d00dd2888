#pragma once

#include "autopent/actuation.hpp"
#include "autopent/console_bridge.hpp"
#include "autopent/event_log.hpp"
#include "autopent/llm_gateway.hpp"
#include "autopent/memory_retriever.hpp"
#include "autopent/phase_pipeline.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace autopent {

struct LlmSettings {
    std::string kind = "scripted";   // "scripted" or "http"
    HttpBackendConfig http;
    std::filesystem::path script;
    bool strict = true;
};

struct RetrievalSettings {
    std::filesystem::path store_path;
    /// Empty base_url selects the built-in hash embedder / term-overlap reranker.
    HttpModelConfig embedder;
    std::size_t embedding_dimension = 256;
    HttpModelConfig reranker;
};

struct ServiceConfig {
    SessionConfig session;
    LlmSettings llm;
    RetrievalSettings retrieval;
    std::optional<SshConfig> ssh;
    std::filesystem::path scenario;   // directory holding scenario.json [+ llm_script.json]
    std::filesystem::path log_path;
    std::optional<std::chrono::milliseconds> operator_wait;
};

/// Reads the structured config file format. Unknown keys are ignored with a warning.
ServiceConfig parse_service_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
ServiceConfig load_service_config(const std::filesystem::path& path);

/// AUTOPENT_LLM_URL, AUTOPENT_LLM_MODEL, AUTOPENT_SSH_HOST and AUTOPENT_SSH_USER
/// override file values. Secrets are only ever read from the environment at use.
void apply_env_overrides(ServiceConfig& config, const std::function<const char*(const char*)>& getenv_fn);

/// Resolves a scenario argument: an existing directory, or the name of a bundled fixture.
std::filesystem::path resolve_scenario(const std::filesystem::path& arg);

/// Owns the collaborators one session needs.
struct Runtime {
    std::unique_ptr<LlmBackend> gateway;
    std::unique_ptr<ShellChannel> channel;
    std::unique_ptr<VectorStore> store;
    std::unique_ptr<Embedder> embedder;
    std::unique_ptr<Reranker> reranker;

    SessionDeps deps(EventLog& log, HumanInterface* human) const;
};

/// Builds gateway, channel and retrieval from config. A scenario directory
/// selects the sandbox channel and, when it holds llm_script.json and no
/// other backend is configured, the scripted backend.
Runtime build_runtime(ServiceConfig& config);

/// "pending", "ready", "running", "success" or "failed".
std::string node_state(const TaskGraph& graph, const TaskNode& node, std::optional<int> running);
nlohmann::json snapshot_to_json(const GraphSnapshot& snapshot);

class SessionRecord {
public:
    SessionRecord(std::string id, nlohmann::json config, std::shared_ptr<EventLog> log,
                  std::shared_ptr<ConsoleBridge> bridge);
    ~SessionRecord();

    const std::string& id() const { return id_; }
    const nlohmann::json& config() const { return config_; }
    EventLog& log() const { return *log_; }
    ConsoleBridge& bridge() const { return *bridge_; }

    void publish(const GraphSnapshot& snapshot);
    std::optional<GraphSnapshot> snapshot() const;
    std::string status() const;
    void set_status(std::string status);

    /// Runs `body` on the session thread; its return value becomes the status.
    void launch(std::function<std::string()> body);
    void join();

private:
    std::string id_;
    nlohmann::json config_;
    std::shared_ptr<EventLog> log_;
    std::shared_ptr<ConsoleBridge> bridge_;
    mutable std::mutex mutex_;
    std::optional<GraphSnapshot> snapshot_;
    std::string status_ = "created";
    std::thread thread_;
};

class SessionRegistry {
public:
    /// Throws ConfigError when the id is already taken.
    std::shared_ptr<SessionRecord> create(const std::string& id, nlohmann::json config,
                                          std::shared_ptr<EventLog> log, std::shared_ptr<ConsoleBridge> bridge);
    std::shared_ptr<SessionRecord> find(const std::string& id) const;
    std::vector<std::shared_ptr<SessionRecord>> list() const;
    std::string next_id();

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<SessionRecord>> sessions_;
    int counter_ = 0;
};

/// Starts the configured session on a background thread inside `registry`.
std::shared_ptr<SessionRecord> start_session(SessionRegistry& registry, ServiceConfig config,
                                             std::optional<std::string> id = std::nullopt);

/// HTTP view over a registry. POST /sessions with a config document starts a
/// new session; every other mutation goes through the console bridge.
class ApiServer {
public:
    explicit ApiServer(SessionRegistry& registry);
    ~ApiServer();

    /// Binds (port 0 picks a free port) and serves on a background thread.
    int start(const std::string& host, int port);
    void stop();

private:
    void routes();

    SessionRegistry& registry_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
};

/// Entry point of the command-line tool.
int cli_main(int argc, char** argv);

} // namespace autopent
