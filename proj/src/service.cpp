#include "callsim/service.hpp"

#include "callsim/error.hpp"
#include "callsim/text.hpp"

#include <httplib.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>

namespace callsim {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

namespace {

void reject_secrets(const json& j, const std::string& where) {
    for (const char* key : {"api_key", "credential", "instructor_token", "token", "password"})
        if (j.contains(key))
            throw ParseError(where + ": '" + key + "' must not appear in a config file; name an environment variable instead");
}

std::string resolve_path(const std::string& p, const fs::path& base) {
    if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
    return (base / p).lexically_normal().string();
}

}  // namespace

BackendConfig BackendConfig::from_json(const json& j) {
    if (!j.is_object()) throw ParseError("backend config must be an object");
    reject_secrets(j, "backend config");
    BackendConfig c;
    c.type = j.value("type", std::string("mock"));
    if (c.type == "mock") {
        c.mock_script = j.value("script", c.mock_script);
        c.fault_rate = j.value("fault_rate", c.fault_rate);
        c.fault_text = j.value("fault_text", c.fault_text);
        if (c.fault_rate < 0.0 || c.fault_rate > 1.0) throw ParseError("fault_rate must lie in [0, 1]");
    } else if (c.type == "http") {
        auto h = j;
        h.erase("type");
        c.http = HttpBackendConfig::from_json(h);
    } else {
        throw ParseError("unknown backend type '" + c.type + "'");
    }
    return c;
}

json BackendConfig::to_json() const {
    if (type == "mock")
        return json{{"type", type}, {"script", mock_script}, {"fault_rate", fault_rate}, {"fault_text", fault_text}};
    auto j = http.to_json();
    j["type"] = type;
    return j;
}

ServiceConfig ServiceConfig::from_json(const json& j, const fs::path& base) {
    if (!j.is_object()) throw ParseError("service config must be an object");
    reject_secrets(j, "service config");
    ServiceConfig c;
    try {
        c.host = j.value("host", c.host);
        c.port = j.value("port", c.port);
        for (auto [key, field] : std::initializer_list<std::pair<const char*, std::string*>>{
                 {"data_dir", &c.data_dir},         {"taxonomy", &c.taxonomy},   {"corpus", &c.corpus},
                 {"gazetteer", &c.gazetteer},       {"connectivity", &c.connectivity},
                 {"protocols", &c.protocols},       {"profiles", &c.profiles},   {"paraphrases", &c.paraphrases},
                 {"classifier", &c.classifier}}) {
            if (j.contains(key)) *field = resolve_path(j.at(key).get<std::string>(), base);
        }
        c.threshold = j.value("threshold", c.threshold);
        if (j.contains("ablation")) c.ablation = AblationSet::parse(j.at("ablation").get<std::vector<std::string>>());
        c.instructor_token_env = j.value("instructor_token_env", c.instructor_token_env);
        if (j.contains("backend")) {
            c.backend = BackendConfig::from_json(j.at("backend"));
            if (j.at("backend").contains("script")) c.backend.mock_script = resolve_path(c.backend.mock_script, base);
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("service config: ") + e.what());
    }
    if (c.threshold < 1) throw ValidationError("threshold must be at least 1");
    if (c.port < 0 || c.port > 65535) throw ValidationError("port out of range");
    return c;
}

ServiceConfig ServiceConfig::load(const std::string& path) {
    json j;
    try {
        j = json::parse(text::read_file(path));
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    return from_json(j, fs::path(path).parent_path());
}

json ServiceConfig::to_json() const {
    return json{{"host", host},
                {"port", port},
                {"data_dir", data_dir},
                {"taxonomy", taxonomy},
                {"corpus", corpus},
                {"gazetteer", gazetteer},
                {"connectivity", connectivity},
                {"protocols", protocols},
                {"profiles", profiles},
                {"paraphrases", paraphrases},
                {"classifier", classifier},
                {"threshold", threshold},
                {"ablation", ablation.flags()},
                {"instructor_token_env", instructor_token_env},
                {"backend", backend.to_json()}};
}

std::optional<std::string> ServiceConfig::instructor_token() const {
    if (instructor_token_env.empty()) return std::nullopt;
    const char* v = std::getenv(instructor_token_env.c_str());
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

std::unique_ptr<BackendClient> make_backend(const BackendConfig& config) {
    if (config.type == "mock") {
        if (config.mock_script.empty()) throw ValidationError("mock backend needs a script file");
        auto m = std::make_unique<MockClient>(MockClient::load(config.mock_script));
        if (config.fault_rate > 0.0) m->set_fault(config.fault_rate, config.fault_text);
        return m;
    }
    if (config.type == "http") return std::make_unique<HttpChatClient>(config.http);
    throw ValidationError("unknown backend type '" + config.type + "'");
}

Runtime build_runtime(const ServiceConfig& config) {
    Runtime r;
    auto taxonomy = TagTaxonomy::load(config.taxonomy);
    auto corpus = parse_corpus(config.corpus, taxonomy);
    r.knowledge = build_knowledge(std::move(taxonomy), std::move(corpus),
                                  KnowledgePaths{config.gazetteer, config.connectivity, config.protocols});
    if (config.classifier.empty())
        r.classifier = std::make_unique<CentroidModel>(train_centroid_classifier(r.knowledge->corpus));
    else
        r.classifier = std::make_unique<CentroidModel>(CentroidModel::load(config.classifier));
    r.answerer = std::make_unique<LexicalAnswerer>();
    r.answerer->attach_gazetteer(&r.knowledge->gazetteer);
    r.profiles = ProfileSet::load(config.profiles);
    r.paraphrases = config.paraphrases.empty() ? ParaphraseTable::defaults() : ParaphraseTable::load(config.paraphrases);
    r.paraphrases.validate(r.knowledge->taxonomy);
    r.client = make_backend(config.backend);
    return r;
}

// ---------------------------------------------------------------------------
// Records and events
// ---------------------------------------------------------------------------

double SessionRecord::active_seconds(std::int64_t now_ms) const {
    auto ms = active_ms;
    if (state.status == SessionStatus::active && now_ms > updated_ms) ms += now_ms - updated_ms;
    return static_cast<double>(ms) / 1000.0;
}

json SessionRecord::to_json() const {
    return json{{"session", state.to_json()},  {"ablation", ablation.flags()},
                {"threshold", threshold},      {"created", format_utc(created_ms)},
                {"created_ms", created_ms},    {"updated", format_utc(updated_ms)},
                {"updated_ms", updated_ms},    {"active_ms", active_ms}};
}

EventLog::EventLog(fs::path path) : path_(std::move(path)) {}

void EventLog::append(const json& event) const {
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    if (!out) throw Error("cannot open event log " + path_.string());
    out << event.dump() << "\n";
    out.flush();
    if (!out) throw Error("cannot write event log " + path_.string());
}

std::vector<json> EventLog::read() const {
    std::ifstream in(path_, std::ios::binary);
    if (!in) throw NotFoundError("no event log " + path_.string());
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::vector<json> events;
    std::size_t pos = 0, line_no = 0;
    while (pos < content.size()) {
        auto nl = content.find('\n', pos);
        bool last = nl == std::string::npos;
        auto line = content.substr(pos, last ? std::string::npos : nl - pos);
        pos = last ? content.size() : nl + 1;
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            events.push_back(json::parse(line));
        } catch (const json::exception& e) {
            if (last) break;  // torn write
            throw ParseError(path_.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return events;
}

namespace {

json turn_json(const Turn& t) {
    return json{{"index", t.index}, {"speaker", callsim::to_string(t.speaker)}, {"text", t.text}};
}

Turn turn_from_json(const json& j) {
    Turn t;
    t.index = j.at("index").get<std::size_t>();
    t.speaker = speaker_from_string(j.at("speaker").get<std::string>());
    t.text = j.at("text").get<std::string>();
    return t;
}

}  // namespace

void apply_event(SessionRecord& r, const json& event, const ValidationDeps& deps, const PromptOptions& prompt) {
    try {
        const auto type = event.at("type").get<std::string>();
        const auto ts = event.at("ts").get<std::int64_t>();
        if (type == "created") {
            auto instruction = parse_instruction(event.at("instruction"), deps.knowledge->taxonomy);
            r.ablation = AblationSet::parse(event.at("ablation").get<std::vector<std::string>>());
            r.threshold = event.at("threshold").get<int>();
            auto vd = deps;
            vd.ablation = r.ablation;
            vd.config.threshold = r.threshold;
            r.state = open_session(event.at("id").get<std::string>(), instruction, vd, prompt);
            r.created_ms = r.updated_ms = ts;
            r.active_ms = 0;
            return;
        }
        if (r.state.id.empty()) throw ParseError("event log does not start with 'created'");
        if (r.state.status == SessionStatus::active && ts > r.updated_ms) r.active_ms += ts - r.updated_ms;
        r.updated_ms = std::max(r.updated_ms, ts);
        if (type == "turn") {
            auto t = turn_from_json(event.at("turn"));
            if (t.index != r.state.history.size()) throw ParseError("turn index out of sequence");
            r.state.history.push_back(t);
            if (event.contains("report")) r.state.reports.push_back(ValidationReport::from_json(event.at("report")));
        } else if (type == "feedback") {
            auto f = FeedbackRecord::from_json(event.at("feedback"));
            if (f.rejected) r.state.rejected.insert(f.turn_index);
            r.state.feedback.push_back(std::move(f));
        } else if (type == "end") {
            r.state.status = session_status_from_string(event.at("status").get<std::string>());
        } else {
            throw ParseError("unknown event type '" + type + "'");
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad event: ") + e.what());
    }
}

SessionRecord replay_events(const std::vector<json>& events, const ValidationDeps& deps, const PromptOptions& prompt) {
    if (events.empty()) throw ParseError("empty event log");
    SessionRecord r;
    for (const auto& e : events) apply_event(r, e, deps, prompt);
    return r;
}

// ---------------------------------------------------------------------------
// Redaction
// ---------------------------------------------------------------------------

std::string redact(std::string_view input, const std::vector<std::string>& sensitive) {
    std::string out(input);
    for (const auto& label : sensitive) {
        if (label.empty()) continue;
        auto lower = text::to_lower(out);
        std::string result;
        std::size_t pos = 0;
        for (auto hit = lower.find(label); hit != std::string::npos; hit = lower.find(label, pos)) {
            result.append(out, pos, hit - pos);
            result += "[redacted]";
            pos = hit + label.size();
        }
        result.append(out, pos, std::string::npos);
        out = std::move(result);
    }
    return out;
}

namespace {

void scrub(json& j, const std::vector<std::string>& sensitive) {
    if (j.is_string()) {
        j = redact(j.get<std::string>(), sensitive);
    } else if (j.is_array()) {
        for (auto& x : j) scrub(x, sensitive);
    } else if (j.is_object()) {
        json out = json::object();
        for (auto& [k, v] : j.items()) {
            scrub(v, sensitive);
            out[redact(k, sensitive)] = v;
        }
        j = std::move(out);
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Service
// ---------------------------------------------------------------------------

SessionService::SessionService(ServiceDeps deps, fs::path data_dir, int threshold, AblationSet ablation)
    : deps_(deps), data_dir_(std::move(data_dir)), threshold_(threshold), ablation_(ablation) {
    if (!deps_.client || !deps_.knowledge || !deps_.classifier || !deps_.answerer || !deps_.profiles)
        throw ValidationError("session service needs a backend, knowledge, classifier, answerer and profiles");
    if (threshold_ < 1) throw ValidationError("threshold must be at least 1");
    sensitive_ = deps_.knowledge->taxonomy.sensitive_labels();
    fs::create_directories(data_dir_);
}

std::int64_t SessionService::now() const { return (deps_.clock ? *deps_.clock : system_clock()).now_ms(); }

ValidationDeps SessionService::validation_deps(const SessionRecord& r) const {
    ValidationDeps d;
    d.client = deps_.client;
    d.knowledge = deps_.knowledge;
    d.classifier = deps_.classifier;
    d.answerer = deps_.answerer;
    d.profiles = deps_.profiles;
    d.clock = deps_.clock;
    d.ablation = r.ablation;
    d.config.threshold = r.threshold;
    return d;
}

PromptOptions SessionService::prompt_options() const {
    PromptOptions p;
    p.paraphrases = deps_.paraphrases;
    return p;
}

std::size_t SessionService::recover() {
    std::vector<fs::path> paths;
    for (const auto& e : fs::directory_iterator(data_dir_))
        if (e.is_regular_file() && e.path().extension() == ".jsonl") paths.push_back(e.path());
    std::sort(paths.begin(), paths.end());
    SessionRecord base;
    base.ablation = ablation_;
    base.threshold = threshold_;
    std::size_t n = 0;
    for (const auto& p : paths) {
        auto entry = std::make_shared<Entry>();
        entry->log = std::make_unique<EventLog>(p);
        entry->record = replay_events(entry->log->read(), validation_deps(base), prompt_options());
        std::unique_lock lock(map_mu_);
        sessions_[entry->record.state.id] = entry;
        ++n;
    }
    return n;
}

std::string SessionService::new_id() {
    for (;;) {
        char buf[48];
        std::snprintf(buf, sizeof buf, "s%llx-%llu", static_cast<unsigned long long>(now()),
                      static_cast<unsigned long long>(counter_.fetch_add(1)));
        std::string id = buf;
        std::shared_lock lock(map_mu_);
        if (!sessions_.count(id) && !fs::exists(data_dir_ / (id + ".jsonl"))) return id;
    }
}

std::shared_ptr<SessionService::Entry> SessionService::find(const std::string& id) const {
    std::shared_lock lock(map_mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFoundError("no session '" + id + "'");
    return it->second;
}

json SessionService::turn_view(const SessionRecord& r, const Turn& t) const {
    json j = turn_json(t);
    if (r.state.rejected.count(t.index)) j["rejected"] = true;
    if (const auto* rep = r.state.report_for(t.index)) {
        json checks = json::array();
        for (const auto& c : rep->accepted().checks)
            checks.push_back(json{{"check", std::string(to_string(c.check))}, {"passed", c.passed}});
        j["report"] = json{{"status", std::string(to_string(rep->status))},
                           {"accepted_attempt", rep->accepted_attempt},
                           {"attempts", rep->attempts.size()},
                           {"regeneration", rep->regeneration},
                           {"checks", checks}};
    }
    return j;
}

json SessionService::trainee_view(const SessionRecord& r) const {
    const auto& in = r.state.instruction;
    json turns = json::array();
    for (const auto& t : r.state.history) turns.push_back(turn_view(r, t));
    json feedback = json::array();
    for (const auto& f : r.state.feedback) {
        json fj{{"turn_index", f.turn_index}, {"rating", f.rating}, {"rejected", f.rejected},
                {"timestamp", format_utc(f.timestamp_ms)}};
        if (f.comment) fj["comment"] = *f.comment;
        feedback.push_back(fj);
    }
    json j{{"id", r.state.id},
           {"status", std::string(to_string(r.state.status))},
           {"scenario",
            {{"incident_type", in.is.incident_type},
             {"scenario_contexts", in.is.scenario_contexts},
             {"special_requests", in.is.special_requests},
             {"age", in.ci.age},
             {"emotion", in.ci.emotion}}},
           {"turns", turns},
           {"feedback", feedback},
           {"created", format_utc(r.created_ms)},
           {"updated", format_utc(r.updated_ms)},
           {"active_seconds", r.active_seconds(now())}};
    scrub(j, sensitive_);
    return j;
}

json SessionService::view(const SessionRecord& r, bool instructor) const {
    if (!instructor) return trainee_view(r);
    auto j = r.to_json();
    j["active_seconds"] = r.active_seconds(now());
    return j;
}

json SessionService::create(const SimulationInstruction& instruction) {
    validate_instruction(instruction, deps_.knowledge->taxonomy);
    auto id = new_id();
    auto entry = std::make_shared<Entry>();
    entry->record.ablation = ablation_;
    entry->record.threshold = threshold_;
    auto vd = validation_deps(entry->record);

    std::vector<json> events;
    events.push_back(json{{"type", "created"},
                          {"ts", now()},
                          {"id", id},
                          {"instruction", to_json(instruction)},
                          {"ablation", ablation_.flags()},
                          {"threshold", threshold_}});
    SessionRecord scratch;
    apply_event(scratch, events[0], vd, prompt_options());
    auto [turn, report] = validated_generate(scratch.state, vd);
    events.push_back(json{{"type", "turn"}, {"ts", now()}, {"turn", turn_json(turn)}, {"report", report.to_json()}});

    entry->log = std::make_unique<EventLog>(data_dir_ / (id + ".jsonl"));
    for (const auto& e : events) {
        apply_event(entry->record, e, vd, prompt_options());
        entry->log->append(e);
    }
    json out;
    {
        std::lock_guard lock(entry->mu);
        std::unique_lock map_lock(map_mu_);
        sessions_[id] = entry;
        out = trainee_view(entry->record);
    }
    return out;
}

json SessionService::post_turn(const std::string& id, const std::string& text_in) {
    auto entry = find(id);
    std::lock_guard lock(entry->mu);
    auto& r = entry->record;
    if (r.state.status != SessionStatus::active) throw StateError("session '" + id + "' is not active");
    auto trimmed = text::trim(text_in);
    if (trimmed.empty()) throw ValidationError("turn text must be non-empty");
    auto vd = validation_deps(r);

    auto scratch = r.state;
    const auto& ct = append_calltaker_turn(scratch, trimmed);
    json ct_event{{"type", "turn"}, {"ts", now()}, {"turn", turn_json(ct)}};
    auto [turn, report] = validated_generate(scratch, vd);
    json caller_event{{"type", "turn"}, {"ts", now()}, {"turn", turn_json(turn)}, {"report", report.to_json()}};

    for (const auto* e : {&ct_event, &caller_event}) {
        apply_event(r, *e, vd);
        entry->log->append(*e);
    }
    json out{{"id", id}, {"calltaker_turn", turn_view(r, r.state.history[turn.index - 1])},
             {"turn", turn_view(r, r.state.history[turn.index])}};
    scrub(out, sensitive_);
    return out;
}

json SessionService::post_feedback(const std::string& id, std::size_t turn_index, int rating,
                                   std::optional<std::string> comment, bool rejected) {
    auto entry = find(id);
    std::lock_guard lock(entry->mu);
    auto& r = entry->record;
    auto vd = validation_deps(r);

    auto scratch = r.state;
    const Clock& clock = deps_.clock ? *deps_.clock : system_clock();
    auto fb = record_feedback(scratch, turn_index, rating, std::move(comment), rejected, clock);
    std::vector<json> events{json{{"type", "feedback"}, {"ts", fb.timestamp_ms}, {"feedback", fb.to_json()}}};
    if (rejected) {
        auto [turn, report] = validated_generate(scratch, vd);
        events.push_back(json{{"type", "turn"}, {"ts", now()}, {"turn", turn_json(turn)}, {"report", report.to_json()}});
    }
    for (const auto& e : events) {
        apply_event(r, e, vd);
        entry->log->append(e);
    }
    json fj{{"turn_index", fb.turn_index}, {"rating", fb.rating}, {"rejected", fb.rejected},
            {"timestamp", format_utc(fb.timestamp_ms)}};
    if (fb.comment) fj["comment"] = *fb.comment;
    json out{{"id", id}, {"feedback", fj}};
    if (rejected) out["turn"] = turn_view(r, r.state.history.back());
    scrub(out, sensitive_);
    return out;
}

json SessionService::end(const std::string& id) {
    auto entry = find(id);
    std::lock_guard lock(entry->mu);
    auto& r = entry->record;
    if (r.state.status != SessionStatus::active) throw StateError("session '" + id + "' is not active");
    json e{{"type", "end"}, {"ts", now()}, {"status", "completed"}};
    apply_event(r, e, validation_deps(r));
    entry->log->append(e);
    return trainee_view(r);
}

json SessionService::get(const std::string& id, bool instructor) const {
    auto entry = find(id);
    std::lock_guard lock(entry->mu);
    return view(entry->record, instructor);
}

std::vector<json> SessionService::export_all(bool instructor) const {
    std::vector<json> out;
    for (const auto& id : ids()) out.push_back(get(id, instructor));
    return out;
}

std::vector<std::string> SessionService::ids() const {
    std::shared_lock lock(map_mu_);
    std::vector<std::string> out;
    for (const auto& [id, _] : sessions_) out.push_back(id);
    return out;
}

SessionRecord SessionService::snapshot(const std::string& id) const {
    auto entry = find(id);
    std::lock_guard lock(entry->mu);
    return entry->record;
}

SessionRecord SessionService::reload(const std::string& id) const {
    auto entry = find(id);
    std::lock_guard lock(entry->mu);
    return replay_events(entry->log->read(), validation_deps(entry->record), prompt_options());
}

// ---------------------------------------------------------------------------
// HTTP
// ---------------------------------------------------------------------------

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
    send_json(res, status, json{{"code", code}, {"message", message}});
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
    try {
        f();
    } catch (const json::exception& e) {
        send_error(res, 400, "invalid_json", e.what());
    } catch (const TagError& e) {
        send_error(res, 400, "unknown_tag", e.what());
    } catch (const ParseError& e) {
        send_error(res, 400, "invalid_request", e.what());
    } catch (const ValidationError& e) {
        send_error(res, 400, "invalid_request", e.what());
    } catch (const NotFoundError& e) {
        send_error(res, 404, "not_found", e.what());
    } catch (const StateError& e) {
        send_error(res, 409, "conflict", e.what());
    } catch (const TransportError& e) {
        send_error(res, 502, "backend_unavailable", e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
    }
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    auto j = json::parse(req.body);
    if (!j.is_object()) throw ValidationError("request body must be a JSON object");
    return j;
}

}  // namespace

HttpApi::HttpApi(SessionService& service, std::optional<std::string> instructor_token)
    : service_(service), token_(std::move(instructor_token)), server_(std::make_unique<httplib::Server>()) {
    routes();
}

HttpApi::~HttpApi() { stop(); }

int HttpApi::bind(const std::string& host, int port) {
    if (port == 0) {
        int p = server_->bind_to_any_port(host);
        if (p < 0) throw Error("cannot bind " + host);
        return p;
    }
    if (!server_->bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void HttpApi::listen() { server_->listen_after_bind(); }

void HttpApi::stop() {
    if (server_) server_->stop();
}

void HttpApi::routes() {
    auto instructor = [this](const httplib::Request& req) {
        if (req.get_param_value("view") != "instructor") return false;
        if (!token_) throw std::invalid_argument("instructor view is disabled");
        if (req.get_header_value("X-Instructor-Token") != *token_) throw std::invalid_argument("bad instructor token");
        return true;
    };
    auto with_view = [instructor](const httplib::Request& req, httplib::Response& res, auto&& f) {
        bool instr = false;
        try {
            instr = instructor(req);
        } catch (const std::invalid_argument& e) {
            send_error(res, 403, "forbidden", e.what());
            return;
        }
        guarded(res, [&] { f(instr); });
    };

    server_->Get("/health", [](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, json{{"status", "ok"}});
    });

    server_->Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto body = parse_body(req);
            const json& ij = body.contains("instruction") ? body.at("instruction") : body;
            auto instruction = parse_instruction(ij, service_.taxonomy());
            send_json(res, 201, service_.create(instruction));
        });
    });

    server_->Get("/sessions", [this, with_view](const httplib::Request& req, httplib::Response& res) {
        with_view(req, res, [&](bool instr) { send_json(res, 200, json{{"sessions", service_.export_all(instr)}}); });
    });

    server_->Get(R"(/sessions/([^/]+))", [this, with_view](const httplib::Request& req, httplib::Response& res) {
        with_view(req, res, [&](bool instr) { send_json(res, 200, service_.get(req.matches[1], instr)); });
    });

    server_->Post(R"(/sessions/([^/]+)/turns)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto body = parse_body(req);
            if (!body.contains("text") || !body.at("text").is_string())
                throw ValidationError("'text' must be a string");
            send_json(res, 200, service_.post_turn(req.matches[1], body.at("text").get<std::string>()));
        });
    });

    server_->Post(R"(/sessions/([^/]+)/feedback)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto body = parse_body(req);
            if (!body.contains("turn_index") || !body.at("turn_index").is_number_unsigned())
                throw ValidationError("'turn_index' must be a non-negative integer");
            if (!body.contains("rating") || !body.at("rating").is_number_integer())
                throw ValidationError("'rating' must be an integer");
            std::optional<std::string> comment;
            if (body.contains("comment") && !body.at("comment").is_null())
                comment = body.at("comment").get<std::string>();
            bool rejected = body.value("rejected", false);
            send_json(res, 200,
                      service_.post_feedback(req.matches[1], body.at("turn_index").get<std::size_t>(),
                                             body.at("rating").get<int>(), comment, rejected));
        });
    });

    server_->Post(R"(/sessions/([^/]+)/end)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, service_.end(req.matches[1])); });
    });

    server_->set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty()) send_error(res, res.status, res.status == 404 ? "not_found" : "error", "no such route");
    });
}

}  // namespace callsim
