#pragma once

#include "callsim/validation.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace httplib {
class Server;
}

namespace callsim {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Backend selection. "mock" reads a script file; "http" talks to a
/// chat-completion endpoint whose key is read from the named variable.
///   {"type": "mock", "script": "...", "fault_rate": 0.4, "fault_text": "..."}
///   {"type": "http", "endpoint": "...", "model": "...", "api_key_env": "CALLSIM_API_KEY"}
struct BackendConfig {
    std::string type = "mock";
    std::string mock_script = "data/mock/default_script.json";  // mock only
    double fault_rate = 0.0;                                     // mock only
    std::string fault_text = "I'm at 742 Evergreen Terrace.";    // mock only
    HttpBackendConfig http;                                      // http only

    static BackendConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// Service settings.
///
/// File schema (JSON):
///   {"host": "127.0.0.1", "port": 8080, "data_dir": "var/sessions",
///    "taxonomy": "...", "corpus": "...", "gazetteer": "...",
///    "connectivity": "...", "protocols": "...", "profiles": "...",
///    "paraphrases": "...", "classifier": "...", "threshold": 3,
///    "ablation": [], "instructor_token_env": "CALLSIM_INSTRUCTOR_TOKEN",
///    "backend": {"type": "mock", "script": "..."}}
/// Relative paths given in the file resolve against its directory; the
/// defaults resolve against the working directory. Secrets are
/// never stored here, only names of environment variables that hold them;
/// inline "api_key", "credential" or "instructor_token" keys are rejected.
struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string data_dir = "sessions";
    std::string taxonomy = "data/taxonomy.json";
    std::string corpus = "data/corpus.jsonl";
    std::string gazetteer = "data/gazetteer.txt";
    std::string connectivity = "data/connectivity.json";
    std::string protocols = "data/protocols.json";
    std::string profiles = "data/profiles.json";
    std::string paraphrases;  // built-in descriptions when empty
    std::string classifier;   // trained from the corpus when empty
    int threshold = 3;
    AblationSet ablation;
    std::string instructor_token_env = "CALLSIM_INSTRUCTOR_TOKEN";
    BackendConfig backend;

    static ServiceConfig from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
    static ServiceConfig load(const std::string& path);
    nlohmann::json to_json() const;

    /// Token from the environment; nullopt when unset or empty.
    std::optional<std::string> instructor_token() const;
};

/// Everything a running service or CLI command shares read-only.
struct Runtime {
    std::shared_ptr<const KnowledgeSet> knowledge;
    std::unique_ptr<IncidentClassifier> classifier;
    std::unique_ptr<LexicalAnswerer> answerer;
    ProfileSet profiles;
    ParaphraseTable paraphrases;
    std::unique_ptr<BackendClient> client;
};

/// Loads the knowledge files, profiles and backend named in `config`.
Runtime build_runtime(const ServiceConfig& config);
std::unique_ptr<BackendClient> make_backend(const BackendConfig& config);

// ---------------------------------------------------------------------------
// Session records
// ---------------------------------------------------------------------------

struct SessionRecord {
    SessionState state;
    AblationSet ablation;
    int threshold = 3;
    std::int64_t created_ms = 0;
    std::int64_t updated_ms = 0;
    std::int64_t active_ms = 0;  // accumulated up to updated_ms

    /// Active time up to `now_ms`; frozen once the session is not active.
    double active_seconds(std::int64_t now_ms) const;
    /// Full record, sensitive labels included.
    nlohmann::json to_json() const;
};

/// Append-only events, one JSON object per line:
///   {"type": "created", "ts": ..., "id": ..., "instruction": {...}, "ablation": [...], "threshold": 3}
///   {"type": "turn", "ts": ..., "turn": {...}, "report": {...}}   report for caller turns only
///   {"type": "feedback", "ts": ..., "feedback": {...}}
///   {"type": "end", "ts": ..., "status": "completed"}
class EventLog {
public:
    explicit EventLog(std::filesystem::path path);
    const std::filesystem::path& path() const noexcept { return path_; }
    void append(const nlohmann::json& event) const;
    /// Every complete event; a torn final line is ignored, any other bad line
    /// is a ParseError.
    std::vector<nlohmann::json> read() const;

private:
    std::filesystem::path path_;
};

/// Applies one event. `created` needs the validation deps and prompt
/// options to rebuild the prompt bundle.
void apply_event(SessionRecord& record, const nlohmann::json& event, const ValidationDeps& deps,
                 const PromptOptions& prompt = {});

/// Rebuilds a record from its events.
SessionRecord replay_events(const std::vector<nlohmann::json>& events, const ValidationDeps& deps,
                            const PromptOptions& prompt = {});

// ---------------------------------------------------------------------------
// Service
// ---------------------------------------------------------------------------

/// Replaces sensitive labels (case-insensitive) with "[redacted]".
std::string redact(std::string_view text, const std::vector<std::string>& sensitive);

struct ServiceDeps {
    const BackendClient* client = nullptr;
    const KnowledgeSet* knowledge = nullptr;
    const IncidentClassifier* classifier = nullptr;
    const ExtractiveAnswerer* answerer = nullptr;
    const ProfileSet* profiles = nullptr;
    const ParaphraseTable* paraphrases = nullptr;
    const Clock* clock = nullptr;
};

/// Session lifecycle over the validation loop with per-session event logs.
/// Calls on one session are serialized; different sessions run in parallel.
/// Views come in two forms: the trainee view drops vulnerable-group tags
/// and scrubs sensitive labels from every string; the instructor view is
/// the full record.
class SessionService {
public:
    SessionService(ServiceDeps deps, std::filesystem::path data_dir, int threshold = 3, AblationSet ablation = {});

    /// Loads every event log in the data directory. Returns the count.
    std::size_t recover();

    /// Validates the instruction, opens the session and generates the
    /// caller's opening turn. Nothing is stored when generation fails.
    nlohmann::json create(const SimulationInstruction& instruction);
    nlohmann::json post_turn(const std::string& id, const std::string& text);
    nlohmann::json post_feedback(const std::string& id, std::size_t turn_index, int rating,
                                 std::optional<std::string> comment, bool rejected);
    nlohmann::json end(const std::string& id);
    nlohmann::json get(const std::string& id, bool instructor = false) const;
    std::vector<nlohmann::json> export_all(bool instructor = false) const;

    /// Record rebuilt from the session's event log, for consistency checks.
    SessionRecord reload(const std::string& id) const;
    SessionRecord snapshot(const std::string& id) const;
    std::vector<std::string> ids() const;

    const TagTaxonomy& taxonomy() const { return deps_.knowledge->taxonomy; }

private:
    struct Entry {
        mutable std::mutex mu;
        SessionRecord record;
        std::unique_ptr<EventLog> log;
    };

    std::shared_ptr<Entry> find(const std::string& id) const;
    ValidationDeps validation_deps(const SessionRecord& r) const;
    std::int64_t now() const;
    PromptOptions prompt_options() const;
    std::string new_id();
    nlohmann::json trainee_view(const SessionRecord& r) const;
    nlohmann::json view(const SessionRecord& r, bool instructor) const;
    nlohmann::json turn_view(const SessionRecord& r, const Turn& t) const;

    ServiceDeps deps_;
    std::filesystem::path data_dir_;
    int threshold_;
    AblationSet ablation_;
    std::vector<std::string> sensitive_;
    mutable std::shared_mutex map_mu_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
    std::atomic<std::uint64_t> counter_{0};
};

// ---------------------------------------------------------------------------
// HTTP
// ---------------------------------------------------------------------------

/// JSON API:
///   POST /sessions                   {"instruction": {...}} or the instruction itself
///   POST /sessions/{id}/turns        {"text": "..."}
///   POST /sessions/{id}/feedback     {"turn_index": 3, "rating": 4, "comment": "...", "rejected": false}
///   GET  /sessions/{id}              ?view=instructor with header X-Instructor-Token
///   GET  /sessions                   export, same view rules
///   POST /sessions/{id}/end
///   GET  /health
/// Errors: {"code": "...", "message": "..."} with 400, 403, 404, 409, 502 or 500.
class HttpApi {
public:
    HttpApi(SessionService& service, std::optional<std::string> instructor_token);
    ~HttpApi();
    HttpApi(const HttpApi&) = delete;
    HttpApi& operator=(const HttpApi&) = delete;

    /// Binds (port 0 picks a free port) and returns the bound port.
    int bind(const std::string& host, int port);
    /// Blocks until stop().
    void listen();
    void stop();

private:
    void routes();

    SessionService& service_;
    std::optional<std::string> token_;
    std::unique_ptr<httplib::Server> server_;
};

}  // namespace callsim
