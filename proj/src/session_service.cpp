#include "autopent/session_service.hpp"

#include "autopent/errors.hpp"
#include "autopent/sandbox_target.hpp"

#include <CLI11.hpp>
#include <httplib.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <set>

#ifndef AUTOPENT_FIXTURE_DIR
#define AUTOPENT_FIXTURE_DIR "fixtures"
#endif

namespace autopent {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve_path(const json& value, const fs::path& base_dir) {
    fs::path p = value.get<std::string>();
    if (p.empty() || p.is_absolute() || base_dir.empty()) return p;
    return base_dir / p;
}

void warn_unknown(const json& doc, const std::set<std::string>& known, std::string_view where) {
    for (const auto& [key, _] : doc.items()) {
        if (!known.count(key)) spdlog::warn("config: ignoring unknown key '{}' in {}", key, where);
    }
}

HttpModelConfig parse_model(const json& doc) {
    HttpModelConfig m;
    m.base_url = doc.value("base_url", "");
    m.model = doc.value("model", "");
    m.api_key_env = doc.value("api_key_env", m.api_key_env);
    m.response_path = doc.value("response_path", "");
    return m;
}

} // namespace

ServiceConfig parse_service_config(const json& doc, const fs::path& base_dir) {
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    warn_unknown(doc,
                 {"mode", "target", "steps_per_phase", "temperature", "model", "rag", "template_dir", "knowledge_dir",
                  "preamble", "approval_gate", "filter_threshold", "digest_budget", "memory_char_budget", "retrieval_k",
                  "retrieval_threshold", "log_path", "scenario", "operator_wait_s", "executor", "llm", "retrieval",
                  "ssh"},
                 "config");

    ServiceConfig c;
    auto& s = c.session;
    try {
        if (doc.contains("mode")) {
            auto mode = parse_mode(doc["mode"].get<std::string>());
            if (!mode) throw ConfigError("unknown mode '" + doc["mode"].get<std::string>() + "'");
            s.mode = *mode;
        }
        s.target_description = doc.value("target", "");
        s.per_phase_budget = doc.value("steps_per_phase", s.per_phase_budget);
        s.temperature = doc.value("temperature", s.temperature);
        s.model_id = doc.value("model", "");
        s.retrieval_enabled = doc.value("rag", false);
        if (doc.contains("template_dir")) s.template_dir = resolve_path(doc["template_dir"], base_dir);
        if (doc.contains("knowledge_dir")) s.knowledge_dir = resolve_path(doc["knowledge_dir"], base_dir);
        s.preamble = doc.value("preamble", "");
        s.approval_gate = doc.value("approval_gate", false);
        s.filter_threshold = doc.value("filter_threshold", s.filter_threshold);
        s.digest_budget = doc.value("digest_budget", s.digest_budget);
        s.memory_char_budget = doc.value("memory_char_budget", s.memory_char_budget);
        s.retrieval_k = doc.value("retrieval_k", s.retrieval_k);
        s.retrieval_threshold = doc.value("retrieval_threshold", s.retrieval_threshold);
        if (doc.contains("log_path")) c.log_path = resolve_path(doc["log_path"], base_dir);
        if (doc.contains("scenario")) {
            // a bare name refers to a bundled scenario unless it exists next to the config
            auto local = resolve_path(doc["scenario"], base_dir);
            c.scenario = fs::exists(local) ? local : fs::path(doc["scenario"].get<std::string>());
        }
        if (doc.contains("operator_wait_s")) {
            c.operator_wait = std::chrono::milliseconds(
                static_cast<long long>(doc["operator_wait_s"].get<double>() * 1000));
        }

        if (doc.contains("executor")) {
            const auto& e = doc["executor"];
            warn_unknown(e, {"timeout_s"}, "executor");
            if (e.contains("timeout_s")) {
                s.command_timeout = std::chrono::milliseconds(static_cast<long long>(e["timeout_s"].get<double>() * 1000));
            }
        }
        if (doc.contains("llm")) {
            const auto& l = doc["llm"];
            warn_unknown(l, {"kind", "base_url", "model", "api_key_env", "response_path", "max_retries", "timeout_s",
                             "script", "strict"},
                         "llm");
            c.llm.kind = l.value("kind", c.llm.kind);
            if (c.llm.kind != "scripted" && c.llm.kind != "http") {
                throw ConfigError("llm.kind must be \"scripted\" or \"http\"");
            }
            c.llm.http.base_url = l.value("base_url", "");
            c.llm.http.model = l.value("model", "");
            c.llm.http.api_key_env = l.value("api_key_env", c.llm.http.api_key_env);
            c.llm.http.response_path = l.value("response_path", c.llm.http.response_path);
            c.llm.http.max_retries = l.value("max_retries", c.llm.http.max_retries);
            if (l.contains("timeout_s")) c.llm.http.timeout = std::chrono::seconds(l["timeout_s"].get<int>());
            if (l.contains("script")) c.llm.script = resolve_path(l["script"], base_dir);
            c.llm.strict = l.value("strict", true);
            if (s.model_id.empty()) s.model_id = c.llm.http.model;
        }
        if (doc.contains("retrieval")) {
            const auto& r = doc["retrieval"];
            warn_unknown(r, {"store_path", "embedder", "reranker"}, "retrieval");
            if (r.contains("store_path")) c.retrieval.store_path = resolve_path(r["store_path"], base_dir);
            if (r.contains("embedder")) {
                c.retrieval.embedder = parse_model(r["embedder"]);
                c.retrieval.embedding_dimension = r["embedder"].value("dimension", c.retrieval.embedding_dimension);
            }
            if (r.contains("reranker")) c.retrieval.reranker = parse_model(r["reranker"]);
        }
        if (doc.contains("ssh")) {
            const auto& h = doc["ssh"];
            warn_unknown(h, {"host", "port", "user", "key_path", "key_env", "extra_args"}, "ssh");
            SshConfig ssh;
            ssh.host = h.value("host", "");
            ssh.port = h.value("port", 22);
            ssh.user = h.value("user", "");
            if (h.contains("key_path")) ssh.key_path = resolve_path(h["key_path"], base_dir).string();
            ssh.key_env = h.value("key_env", ssh.key_env);
            ssh.extra_args = h.value("extra_args", std::vector<std::string>{});
            c.ssh = ssh;
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
    return c;
}

ServiceConfig load_service_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return parse_service_config(doc, path.parent_path());
}

void apply_env_overrides(ServiceConfig& config, const std::function<const char*(const char*)>& getenv_fn) {
    auto get = [&](const char* name) -> std::optional<std::string> {
        const char* v = getenv_fn(name);
        if (!v || !*v) return std::nullopt;
        return std::string(v);
    };
    if (auto v = get("AUTOPENT_LLM_URL")) {
        config.llm.kind = "http";
        config.llm.http.base_url = *v;
    }
    if (auto v = get("AUTOPENT_LLM_MODEL")) {
        config.llm.http.model = *v;
        config.session.model_id = *v;
    }
    if (auto v = get("AUTOPENT_SSH_HOST")) {
        if (!config.ssh) config.ssh = SshConfig{};
        config.ssh->host = *v;
    }
    if (auto v = get("AUTOPENT_SSH_USER")) {
        if (!config.ssh) config.ssh = SshConfig{};
        config.ssh->user = *v;
    }
}

fs::path resolve_scenario(const fs::path& arg) {
    if (fs::is_directory(arg)) return arg;
    if (fs::is_regular_file(arg) && arg.filename() == "scenario.json") return arg.parent_path();
    fs::path bundled_root = AUTOPENT_FIXTURE_DIR;
    if (const char* env = std::getenv("AUTOPENT_FIXTURES"); env && *env) bundled_root = env;
    if (fs::is_directory(bundled_root / arg)) return bundled_root / arg;
    throw ConfigError("no scenario named '" + arg.string() + "'");
}

SessionDeps Runtime::deps(EventLog& log, HumanInterface* human) const {
    SessionDeps d;
    d.gateway = gateway.get();
    d.channel = channel.get();
    d.log = &log;
    d.human = human;
    if (store && embedder) d.retrieval = Retrieval{store.get(), embedder.get(), reranker.get()};
    return d;
}

Runtime build_runtime(ServiceConfig& config) {
    Runtime rt;
    if (!config.scenario.empty()) {
        rt.channel = std::make_unique<SandboxChannel>(load_scenario(config.scenario / "scenario.json"));
        auto script = config.scenario / "llm_script.json";
        if (config.llm.kind == "scripted" && config.llm.script.empty() && fs::exists(script)) config.llm.script = script;
    } else if (config.ssh) {
        if (config.ssh->host.empty()) throw ConfigError("ssh.host is required");
        rt.channel = std::make_unique<SshChannel>(*config.ssh);
    } else {
        rt.channel = std::make_unique<ProcessShellChannel>(ProcessShellConfig{});
    }

    if (config.llm.kind == "http") {
        if (config.llm.http.base_url.empty()) throw ConfigError("llm.base_url is required for the http backend");
        rt.gateway = std::make_unique<HttpBackend>(config.llm.http);
    } else {
        if (config.llm.script.empty()) throw ConfigError("the scripted backend needs llm.script or a scenario script");
        rt.gateway = std::make_unique<ScriptedBackend>(
            load_scripted_rules(config.llm.script),
            config.llm.strict ? ScriptedBackend::Mode::strict : ScriptedBackend::Mode::lenient);
    }

    if (config.session.retrieval_enabled) {
        const auto& r = config.retrieval;
        rt.store = r.store_path.empty() ? std::make_unique<VectorStore>() : std::make_unique<VectorStore>(r.store_path);
        rt.store->load();
        if (r.embedder.base_url.empty()) {
            rt.embedder = std::make_unique<HashEmbedder>(r.embedding_dimension);
        } else {
            rt.embedder = std::make_unique<HttpEmbedder>(r.embedder, r.embedding_dimension);
        }
        if (r.reranker.base_url.empty()) {
            rt.reranker = std::make_unique<TermOverlapReranker>();
        } else {
            rt.reranker = std::make_unique<HttpReranker>(r.reranker);
        }
        if (!config.session.knowledge_dir.empty()) {
            auto n = ingest_directory(*rt.store, config.session.knowledge_dir, *rt.embedder);
            spdlog::info("ingested {} knowledge chunks from {}", n, config.session.knowledge_dir.string());
        }
    }
    return rt;
}

std::string node_state(const TaskGraph& graph, const TaskNode& node, std::optional<int> running) {
    if (node.finished) return node.success ? "success" : "failed";
    if (running && *running == node.id) return "running";
    for (int dep : node.dependencies) {
        const auto* d = graph.find(dep);
        if (!d || !d->completed()) return "pending";
    }
    return "ready";
}

json snapshot_to_json(const GraphSnapshot& s) {
    json nodes = json::array();
    for (const auto& node : s.graph.tasks()) {
        auto doc = node_to_json(node);
        doc["state"] = node_state(s.graph, node, s.running_task);
        nodes.push_back(std::move(doc));
    }
    json edges = json::array();
    for (const auto& [from, to] : s.graph.edges()) edges.push_back({from, to});
    return {{"phase", std::string(to_string(s.phase))},
            {"steps_used", s.steps_used},
            {"step_budget", s.step_budget},
            {"running_task", s.running_task ? json(*s.running_task) : json(nullptr)},
            {"as_of_seq", s.as_of_seq},
            {"nodes", nodes},
            {"edges", edges}};
}

SessionRecord::SessionRecord(std::string id, json config, std::shared_ptr<EventLog> log,
                             std::shared_ptr<ConsoleBridge> bridge)
    : id_(std::move(id)), config_(std::move(config)), log_(std::move(log)), bridge_(std::move(bridge)) {}

SessionRecord::~SessionRecord() {
    if (thread_.joinable()) {
        bridge_->abort();
        thread_.join();
    }
}

void SessionRecord::publish(const GraphSnapshot& snapshot) {
    std::lock_guard lock(mutex_);
    snapshot_ = snapshot;
}

std::optional<GraphSnapshot> SessionRecord::snapshot() const {
    std::lock_guard lock(mutex_);
    return snapshot_;
}

std::string SessionRecord::status() const {
    std::lock_guard lock(mutex_);
    return status_;
}

void SessionRecord::set_status(std::string status) {
    std::lock_guard lock(mutex_);
    status_ = std::move(status);
}

void SessionRecord::launch(std::function<std::string()> body) {
    std::lock_guard lock(mutex_);
    if (thread_.joinable()) throw ConfigError("session " + id_ + " is already running");
    status_ = "running";
    thread_ = std::thread([this, body = std::move(body)] { set_status(body()); });
}

void SessionRecord::join() {
    if (thread_.joinable()) thread_.join();
}

std::shared_ptr<SessionRecord> SessionRegistry::create(const std::string& id, json config,
                                                       std::shared_ptr<EventLog> log,
                                                       std::shared_ptr<ConsoleBridge> bridge) {
    std::lock_guard lock(mutex_);
    if (sessions_.count(id)) throw ConfigError("session id '" + id + "' already exists");
    auto record = std::make_shared<SessionRecord>(id, std::move(config), std::move(log), std::move(bridge));
    sessions_.emplace(id, record);
    return record;
}

std::shared_ptr<SessionRecord> SessionRegistry::find(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
}

std::vector<std::shared_ptr<SessionRecord>> SessionRegistry::list() const {
    std::lock_guard lock(mutex_);
    std::vector<std::shared_ptr<SessionRecord>> out;
    for (const auto& [_, r] : sessions_) out.push_back(r);
    return out;
}

std::string SessionRegistry::next_id() {
    std::lock_guard lock(mutex_);
    while (sessions_.count("s" + std::to_string(counter_ + 1))) ++counter_;
    return "s" + std::to_string(++counter_);
}

std::shared_ptr<SessionRecord> start_session(SessionRegistry& registry, ServiceConfig config,
                                             std::optional<std::string> id) {
    config.session.validate();
    auto runtime = std::make_shared<Runtime>(build_runtime(config));
    auto log = config.log_path.empty() ? std::make_shared<EventLog>() : std::make_shared<EventLog>(config.log_path);
    auto bridge = std::make_shared<ConsoleBridge>(config.operator_wait);
    auto record = registry.create(id.value_or(registry.next_id()), config_to_json(config.session), log, bridge);

    auto deps = runtime->deps(*log, bridge.get());
    SessionRecord* raw = record.get();
    deps.on_snapshot = [raw](const GraphSnapshot& s) { raw->publish(s); };
    auto runner = std::make_shared<SessionRunner>(config.session, deps);

    record->launch([runtime, runner, raw] {
        try {
            auto report = runner->run_session();
            if (runtime->store) runtime->store->save();
            return report.status_text();
        } catch (const std::exception& e) {
            spdlog::error("session {} stopped: {}", raw->id(), e.what());
            return std::string("error: ") + e.what();
        }
    });
    return record;
}

namespace {

void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& message) {
    reply(res, status, {{"error", message}});
}

json session_json(const SessionRecord& r) {
    return {{"id", r.id()}, {"status", r.status()}, {"last_seq", r.log().last_seq()}, {"config", r.config()}};
}

bool parse_int(const std::string& text, long long& out) {
    try {
        std::size_t used = 0;
        out = std::stoll(text, &used);
        return used == text.size() && out >= 0;
    } catch (const std::exception&) {
        return false;
    }
}

} // namespace

ApiServer::ApiServer(SessionRegistry& registry) : registry_(registry), server_(std::make_unique<httplib::Server>()) {
    routes();
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::start(const std::string& host, int port) {
    int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    return bound;
}

void ApiServer::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

void ApiServer::routes() {
    using httplib::Request;
    using httplib::Response;
    auto& srv = *server_;

    srv.Get("/sessions", [this](const Request&, Response& res) {
        json out = json::array();
        for (const auto& r : registry_.list()) out.push_back(session_json(*r));
        reply(res, 200, out);
    });

    srv.Post("/sessions", [this](const Request& req, Response& res) {
        try {
            auto doc = json::parse(req.body);
            auto config = parse_service_config(doc, fs::current_path());
            apply_env_overrides(config, [](const char* n) { return std::getenv(n); });
            if (!config.scenario.empty()) config.scenario = resolve_scenario(config.scenario);
            std::optional<std::string> id;
            if (doc.contains("id")) id = doc["id"].get<std::string>();
            auto record = start_session(registry_, std::move(config), id);
            reply(res, 201, session_json(*record));
        } catch (const json::exception& e) {
            reply_error(res, 400, e.what());
        } catch (const Error& e) {
            reply_error(res, 400, e.what());
        }
    });

    srv.Get(R"(/sessions/([^/]+))", [this](const Request& req, Response& res) {
        auto r = registry_.find(req.matches[1]);
        if (!r) return reply_error(res, 404, "unknown session");
        reply(res, 200, session_json(*r));
    });

    srv.Get(R"(/sessions/([^/]+)/graph)", [this](const Request& req, Response& res) {
        auto r = registry_.find(req.matches[1]);
        if (!r) return reply_error(res, 404, "unknown session");
        auto snap = r->snapshot();
        if (!snap) {
            return reply(res, 200,
                         {{"phase", nullptr}, {"steps_used", 0}, {"step_budget", 0}, {"running_task", nullptr},
                          {"as_of_seq", 0}, {"nodes", json::array()}, {"edges", json::array()}});
        }
        reply(res, 200, snapshot_to_json(*snap));
    });

    srv.Get(R"(/sessions/([^/]+)/events)", [this](const Request& req, Response& res) {
        auto r = registry_.find(req.matches[1]);
        if (!r) return reply_error(res, 404, "unknown session");
        long long since = 0, wait = 0;
        if (req.has_param("since") && !parse_int(req.get_param_value("since"), since)) {
            return reply_error(res, 400, "since must be a non-negative integer");
        }
        if (req.has_param("wait") && !parse_int(req.get_param_value("wait"), wait)) {
            return reply_error(res, 400, "wait must be a non-negative integer (milliseconds)");
        }
        wait = std::min<long long>(wait, 30000);
        auto events = wait > 0 ? r->log().wait_since(since, std::chrono::milliseconds(wait))
                               : r->log().events_since(since);
        json out = json::array();
        for (const auto& e : events) out.push_back(event_to_json(e));
        std::uint64_t next = events.empty() ? static_cast<std::uint64_t>(since) : events.back().seq;
        reply(res, 200, {{"events", out}, {"next", next}, {"status", r->status()}});
    });

    srv.Get(R"(/sessions/([^/]+)/pending)", [this](const Request& req, Response& res) {
        auto r = registry_.find(req.matches[1]);
        if (!r) return reply_error(res, 404, "unknown session");
        json manual = json::array(), approvals = json::array();
        for (const auto& m : r->bridge().pending_manual()) manual.push_back(to_json(m));
        for (const auto& a : r->bridge().pending_approvals()) approvals.push_back(to_json(a));
        reply(res, 200, {{"manual", manual}, {"approvals", approvals}});
    });

    auto task_known = [](const SessionRecord& r, int tid) {
        auto snap = r.snapshot();
        return snap && snap->graph.find(tid) != nullptr;
    };

    srv.Post(R"(/sessions/([^/]+)/tasks/(\d+)/result)", [this, task_known](const Request& req, Response& res) {
        auto r = registry_.find(req.matches[1]);
        if (!r) return reply_error(res, 404, "unknown session");
        int tid = std::stoi(req.matches[2]);
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::exception& e) {
            return reply_error(res, 400, e.what());
        }
        if (!body.is_object() || !body.contains("result") || !body["result"].is_string()) {
            return reply_error(res, 400, "body must be {\"result\": string, \"success_hint\": boolean?}");
        }
        std::optional<bool> hint;
        if (body.contains("success_hint") && !body["success_hint"].is_null()) {
            if (!body["success_hint"].is_boolean()) return reply_error(res, 400, "success_hint must be a boolean");
            hint = body["success_hint"].get<bool>();
        }
        if (!task_known(*r, tid)) return reply_error(res, 404, "unknown task");
        if (r->bridge().submit(tid, body["result"].get<std::string>(), hint) != SubmitStatus::accepted) {
            return reply_error(res, 409, "task has no pending manual request");
        }
        reply(res, 200, {{"status", "accepted"}});
    });

    srv.Post(R"(/sessions/([^/]+)/tasks/(\d+)/approve)", [this, task_known](const Request& req, Response& res) {
        auto r = registry_.find(req.matches[1]);
        if (!r) return reply_error(res, 404, "unknown session");
        int tid = std::stoi(req.matches[2]);
        if (!task_known(*r, tid)) return reply_error(res, 404, "unknown task");
        if (r->bridge().approve(tid) != SubmitStatus::accepted) {
            return reply_error(res, 409, "task has no pending approval");
        }
        reply(res, 200, {{"status", "accepted"}});
    });

    srv.Post(R"(/sessions/([^/]+)/abort)", [this](const Request& req, Response& res) {
        auto r = registry_.find(req.matches[1]);
        if (!r) return reply_error(res, 404, "unknown session");
        r->bridge().abort();
        reply(res, 200, {{"status", "aborting"}});
    });
}

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

std::string default_log_name() {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[64];
    std::strftime(buf, sizeof buf, "autopent-%Y%m%dT%H%M%SZ.jsonl", &tm);
    return buf;
}

struct RunFlags {
    std::string mode, target, config, knowledge_dir, scenario, log, host = "127.0.0.1";
    std::optional<int> steps;
    std::optional<double> temperature;
    std::optional<int> port;
    bool rag = false, no_rag = false, approval_gate = false;
};

int do_run(const RunFlags& f) {
    ServiceConfig cfg = f.config.empty() ? ServiceConfig{} : load_service_config(f.config);
    apply_env_overrides(cfg, [](const char* n) { return std::getenv(n); });
    if (!f.mode.empty()) {
        auto mode = parse_mode(f.mode);
        if (!mode) throw ConfigError("unknown mode '" + f.mode + "'");
        cfg.session.mode = *mode;
    }
    if (!f.target.empty()) cfg.session.target_description = f.target;
    if (f.steps) cfg.session.per_phase_budget = *f.steps;
    if (f.temperature) cfg.session.temperature = *f.temperature;
    if (!f.knowledge_dir.empty()) cfg.session.knowledge_dir = f.knowledge_dir;
    if (f.rag) cfg.session.retrieval_enabled = true;
    if (f.no_rag) cfg.session.retrieval_enabled = false;
    if (f.approval_gate) cfg.session.approval_gate = true;
    if (!f.scenario.empty()) cfg.scenario = resolve_scenario(f.scenario);
    if (cfg.session.target_description.empty() && !cfg.scenario.empty()) {
        cfg.session.target_description = "sandbox target of scenario " + cfg.scenario.filename().string();
    }
    if (!f.log.empty()) cfg.log_path = f.log;
    if (cfg.log_path.empty()) cfg.log_path = default_log_name();
    if (fs::exists(cfg.log_path)) throw ConfigError("event log " + cfg.log_path.string() + " already exists");
    cfg.session.validate();

    std::string status;
    json report_doc;
    if (f.port) {
        SessionRegistry registry;
        ApiServer api(registry);
        int port = api.start(f.host, *f.port);
        std::cerr << "serving the session API on http://" << f.host << ":" << port << std::endl;
        auto record = start_session(registry, cfg, "s1");
        record->join();
        status = record->status();
        report_doc = {{"status", status}, {"events", record->log().last_seq()}};
    } else {
        auto runtime = build_runtime(cfg);
        EventLog log(cfg.log_path);
        std::unique_ptr<TerminalConsole> console;
        HumanInterface* human = nullptr;
        if (cfg.session.mode != Mode::automatic || cfg.session.approval_gate) {
            console = std::make_unique<TerminalConsole>(std::cin, std::cerr);
            human = console.get();
        }
        auto report = run_session(cfg.session, runtime.deps(log, human));
        if (runtime.store) runtime.store->save();
        status = report.status_text();
        report_doc = report_to_json(report);
    }
    report_doc["log"] = cfg.log_path.string();
    std::cout << report_doc.dump(2) << std::endl;
    return status == "finished" ? 0 : 1;
}

int do_replay(const std::string& path) {
    auto events = replay(fs::path(path));
    for (const auto& e : events) std::cout << event_to_json(e).dump() << '\n';
    std::cerr << events.size() << " events" << std::endl;
    return 0;
}

int do_ingest(const std::string& dir, const std::string& store_path, std::size_t words) {
    VectorStore store(store_path);
    store.load();
    HashEmbedder embedder;
    auto n = ingest_directory(store, dir, embedder, words);
    store.save();
    std::cout << n << " chunks ingested; store holds " << store.size() << " chunks" << std::endl;
    return 0;
}

int do_serve(const std::string& host, int port, const std::string& config) {
    SessionRegistry registry;
    ApiServer api(registry);
    int bound = api.start(host, port);
    std::cerr << "serving on http://" << host << ":" << bound << std::endl;
    if (!config.empty()) {
        auto cfg = load_service_config(config);
        apply_env_overrides(cfg, [](const char* n) { return std::getenv(n); });
        if (!cfg.scenario.empty()) cfg.scenario = resolve_scenario(cfg.scenario);
        start_session(registry, std::move(cfg));
    }
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
    for (const auto& r : registry.list()) r->bridge().abort();
    api.stop();
    return 0;
}

} // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"autopent: phase-driven penetration testing orchestrator"};
    app.require_subcommand(1);
    std::string level = "warn";
    app.add_option("--log-level", level, "trace, debug, info, warn, error")->capture_default_str();

    RunFlags rf;
    auto* run = app.add_subcommand("run", "run one session");
    run->add_option("--mode", rf.mode, "automatic, manual or semi-automatic");
    run->add_option("--target", rf.target, "target description");
    run->add_option("--config", rf.config, "config file")->check(CLI::ExistingFile);
    run->add_option("--steps-per-phase", rf.steps, "step budget of each phase")->check(CLI::PositiveNumber);
    run->add_option("--temperature", rf.temperature, "sampling temperature");
    run->add_option("--knowledge-dir", rf.knowledge_dir, "documents to ingest for retrieval");
    run->add_option("--scenario", rf.scenario, "sandbox scenario directory or bundled scenario name");
    auto* rag = run->add_flag("--rag", rf.rag, "enable retrieval");
    run->add_flag("--no-rag", rf.no_rag, "disable retrieval")->excludes(rag);
    run->add_flag("--approval-gate", rf.approval_gate, "hold commands until approved");
    run->add_option("--log", rf.log, "event log path");
    run->add_option("--port", rf.port, "serve the session API while running");
    run->add_option("--host", rf.host, "API bind address")->capture_default_str();

    std::string replay_path;
    auto* rep = app.add_subcommand("replay", "print the events of a log");
    rep->add_option("log", replay_path)->required()->check(CLI::ExistingFile);

    std::string ingest_dir, store_path = "knowledge.jsonl";
    std::size_t words = kDefaultWordsPerChunk;
    auto* ing = app.add_subcommand("ingest", "chunk and embed a knowledge directory");
    ing->add_option("knowledge-dir", ingest_dir)->required()->check(CLI::ExistingDirectory);
    ing->add_option("--store", store_path, "vector store file")->capture_default_str();
    ing->add_option("--words-per-chunk", words)->check(CLI::PositiveNumber)->capture_default_str();

    int serve_port = 8080;
    std::string serve_host = "127.0.0.1", serve_config;
    auto* srv = app.add_subcommand("serve", "serve the session API");
    srv->add_option("--port", serve_port)->required();
    srv->add_option("--host", serve_host)->capture_default_str();
    srv->add_option("--config", serve_config, "start a session from this config")->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    spdlog::drop("autopent");
    spdlog::set_default_logger(spdlog::stderr_color_mt("autopent"));
    spdlog::set_level(spdlog::level::from_str(level));

    try {
        if (*run) return do_run(rf);
        if (*rep) return do_replay(replay_path);
        if (*ing) return do_ingest(ingest_dir, store_path, words);
        if (*srv) return do_serve(serve_host, serve_port, serve_config);
    } catch (const LogCorrupt& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    }
    return 2;
}

} // namespace autopent
