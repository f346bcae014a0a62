#include "callsim/error.hpp"
#include "callsim/harness.hpp"
#include "callsim/service.hpp"
#include "callsim/text.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

using namespace callsim;
using callsim::testing::data_path;
using callsim::testing::default_knowledge;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

SimulationInstruction storm_crash_instruction() {
    SimulationInstruction in;
    in.is = {"crash report", {"severe weather"}, {"medical emergency"}};
    in.ci = {"adult", "anxious", {"unhoused", "non-native speaker"}};
    in.seed = 7;
    return in;
}

class CountingClient final : public BackendClient {
public:
    explicit CountingClient(const BackendClient& inner) : inner_(inner) {}
    std::string complete(const CompletionRequest& r) const override {
        ++calls;
        return inner_.complete(r);
    }
    std::string name() const override { return inner_.name(); }
    mutable std::atomic<int> calls{0};

private:
    const BackendClient& inner_;
};

class DownClient final : public BackendClient {
public:
    std::string complete(const CompletionRequest&) const override { throw TransportError("backend down"); }
    std::string name() const override { return "down"; }
};

fs::path fresh_dir(const std::string& name) {
    auto d = fs::temp_directory_path() / ("callsim_service_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp_dir(const fs::path& dir) {
    std::string out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file()) out += text::read_file(e.path().string());
    return out;
}

struct Env {
    std::shared_ptr<const KnowledgeSet> knowledge = default_knowledge();
    CentroidModel classifier = train_centroid_classifier(knowledge->corpus);
    LexicalAnswerer answerer;
    ProfileSet profiles = ProfileSet::load(data_path("profiles.json"));
    ParaphraseTable paraphrases = ParaphraseTable::load(data_path("paraphrases.json"));
    MockClient mock = MockClient::load(data_path("mock/default_script.json"));
    CountingClient counting{mock};
    ManualClock clock{1'700'000'000'000};

    Env() { answerer.attach_gazetteer(&knowledge->gazetteer); }

    ServiceDeps deps(const BackendClient* client = nullptr) {
        ServiceDeps d;
        d.client = client ? client : &counting;
        d.knowledge = knowledge.get();
        d.classifier = &classifier;
        d.answerer = &answerer;
        d.profiles = &profiles;
        d.paraphrases = &paraphrases;
        d.clock = &clock;
        return d;
    }
};

std::size_t size_of(const fs::path& p) { return fs::file_size(p); }

}  // namespace

TEST(SessionService, CreateOpensWithCallerTurn) {
    Env env;
    auto dir = fresh_dir("create");
    SessionService svc(env.deps(), dir);
    auto a = svc.create(storm_crash_instruction());
    auto b = svc.create(storm_crash_instruction());
    EXPECT_NE(a["id"], b["id"]);
    ASSERT_EQ(a["turns"].size(), 1u);
    EXPECT_EQ(a["turns"][0]["speaker"], "caller");
    EXPECT_EQ(a["turns"][0]["text"], b["turns"][0]["text"]);
    EXPECT_EQ(a["status"], "active");
    EXPECT_TRUE(fs::exists(dir / (a["id"].get<std::string>() + ".jsonl")));
}

TEST(SessionService, UnknownIncidentTypeRejectedBeforeBackend) {
    Env env;
    auto dir = fresh_dir("unknown");
    SessionService svc(env.deps(), dir);
    auto in = storm_crash_instruction();
    in.is.incident_type = "alien landing";
    EXPECT_THROW(svc.create(in), TagError);
    EXPECT_EQ(env.counting.calls.load(), 0);
    EXPECT_TRUE(svc.ids().empty());
    EXPECT_TRUE(fs::is_empty(dir));
}

TEST(SessionService, BackendFailureStoresNothing) {
    Env env;
    DownClient down;
    auto dir = fresh_dir("down");
    SessionService svc(env.deps(&down), dir);
    EXPECT_THROW(svc.create(storm_crash_instruction()), TransportError);
    EXPECT_TRUE(svc.ids().empty());
    EXPECT_TRUE(fs::is_empty(dir));
}

TEST(SessionService, AddressReplyResolves) {
    Env env;
    SessionService svc(env.deps(), fresh_dir("address"));
    auto id = svc.create(storm_crash_instruction())["id"].get<std::string>();
    auto r = svc.post_turn(id, "9-1-1, what is the address of the emergency?");
    EXPECT_EQ(r["calltaker_turn"]["speaker"], "calltaker");
    EXPECT_EQ(r["turn"]["speaker"], "caller");
    EXPECT_EQ(r["turn"]["index"], 2);
    auto snap = svc.snapshot(id);
    auto g = locating_success(snap.state.history, env.answerer, env.knowledge->gazetteer);
    ASSERT_TRUE(g.has_value());
    EXPECT_DOUBLE_EQ(*g, 100.0);
    EXPECT_THROW(svc.post_turn(id, "   "), ValidationError);
    EXPECT_THROW(svc.post_turn("missing", "hello"), NotFoundError);
}

TEST(SessionService, TraineeViewHidesSensitiveLabels) {
    Env env;
    SessionService svc(env.deps(), fresh_dir("redact"));
    auto created = svc.create(storm_crash_instruction());
    auto id = created["id"].get<std::string>();
    svc.post_turn(id, "Are you unhoused? Do you have mental health concerns?");
    auto trainee = text::to_lower(svc.get(id).dump());
    for (const auto& label : env.knowledge->taxonomy.sensitive_labels()) EXPECT_EQ(trainee.find(label), std::string::npos) << label;
    EXPECT_FALSE(svc.get(id).at("scenario").contains("vulnerable"));
    EXPECT_NE(trainee.find("[redacted]"), std::string::npos);
    auto instructor = svc.get(id, true).dump();
    EXPECT_NE(instructor.find("unhoused"), std::string::npos);
    EXPECT_NE(instructor.find("non-native speaker"), std::string::npos);
}

TEST(SessionService, RedactIsCaseInsensitive) {
    EXPECT_EQ(redact("Unhoused and UNHOUSED", {"unhoused"}), "[redacted] and [redacted]");
    EXPECT_EQ(redact("nothing here", {"unhoused"}), "nothing here");
}

TEST(SessionService, EndedSessionRejectsWrites) {
    Env env;
    SessionService svc(env.deps(), fresh_dir("end"));
    auto id = svc.create(storm_crash_instruction())["id"].get<std::string>();
    EXPECT_EQ(svc.end(id)["status"], "completed");
    EXPECT_THROW(svc.post_turn(id, "hello?"), StateError);
    EXPECT_THROW(svc.end(id), StateError);
}

TEST(SessionService, FeedbackPersistsAndRejectionRegenerates) {
    Env env;
    auto dir = fresh_dir("feedback");
    SessionService svc(env.deps(), dir);
    auto id = svc.create(storm_crash_instruction())["id"].get<std::string>();
    svc.post_turn(id, "What is the address of the emergency?");
    auto log = dir / (id + ".jsonl");

    auto f = svc.post_feedback(id, 2, 4, std::string("good"), false);
    EXPECT_EQ(f["feedback"]["rating"], 4);
    auto snap = svc.snapshot(id);
    ASSERT_EQ(snap.state.feedback.size(), 1u);
    EXPECT_EQ(snap.state.feedback[0].rating, 4);
    EXPECT_EQ(snap.state.feedback[0].comment, "good");

    auto before = size_of(log);
    EXPECT_THROW(svc.post_feedback(id, 2, 6, std::nullopt, false), ValidationError);
    EXPECT_THROW(svc.post_feedback(id, 1, 3, std::nullopt, false), ValidationError);
    EXPECT_EQ(size_of(log), before);

    auto r = svc.post_feedback(id, 2, 1, std::nullopt, true);
    ASSERT_TRUE(r.contains("turn"));
    EXPECT_EQ(r["turn"]["index"], 3);
    EXPECT_TRUE(r["turn"]["report"]["regeneration"].get<bool>());
    snap = svc.snapshot(id);
    EXPECT_EQ(snap.state.history.size(), 4u);
    EXPECT_TRUE(snap.state.rejected.count(2));
    EXPECT_EQ(svc.get(id)["turns"][2]["rejected"], true);
}

TEST(SessionService, ExportCardinalityAndViews) {
    Env env;
    SessionService svc(env.deps(), fresh_dir("export"));
    for (int i = 0; i < 4; ++i) svc.create(storm_crash_instruction());
    auto trainee = svc.export_all();
    auto instructor = svc.export_all(true);
    EXPECT_EQ(trainee.size(), 4u);
    EXPECT_EQ(instructor.size(), 4u);
    for (const auto& t : trainee) EXPECT_FALSE(t.contains("session"));
    for (const auto& t : instructor) EXPECT_TRUE(t.contains("session"));
}

TEST(SessionService, EventLogReplayMatchesLiveRecord) {
    Env env;
    env.mock.set_fault(0.4, "I'm at 742 Evergreen Terrace.");
    auto dir = fresh_dir("replay");
    std::string id;
    json live;
    {
        SessionService svc(env.deps(), dir);
        id = svc.create(storm_crash_instruction())["id"].get<std::string>();
        env.clock.advance(2000);
        svc.post_turn(id, "What is the address of the emergency?");
        env.clock.advance(1500);
        svc.post_turn(id, "Is anyone hurt?");
        svc.post_feedback(id, 4, 2, std::string("too vague"), true);
        env.clock.advance(700);
        svc.end(id);
        live = svc.snapshot(id).to_json();
        EXPECT_EQ(svc.reload(id).to_json().dump(), live.dump());
    }
    SessionService again(env.deps(), dir);
    EXPECT_EQ(again.recover(), 1u);
    EXPECT_EQ(again.snapshot(id).to_json().dump(), live.dump());
    EXPECT_EQ(again.get(id, true).dump(), again.get(id, true).dump());
}

TEST(SessionService, TornFinalLineTolerated) {
    Env env;
    auto dir = fresh_dir("torn");
    std::string id;
    json live;
    {
        SessionService svc(env.deps(), dir);
        id = svc.create(storm_crash_instruction())["id"].get<std::string>();
        svc.post_turn(id, "What is the address of the emergency?");
        live = svc.snapshot(id).to_json();
    }
    auto log = dir / (id + ".jsonl");
    {
        std::ofstream out(log, std::ios::app);
        out << R"({"type": "turn", "ts": 17)";
    }
    SessionService again(env.deps(), dir);
    EXPECT_EQ(again.recover(), 1u);
    EXPECT_EQ(again.snapshot(id).to_json().dump(), live.dump());

    auto lines = EventLog(log).read();
    std::ofstream bad(dir / "broken.jsonl");
    bad << lines[0].dump() << "\n" << "{oops\n" << lines[1].dump() << "\n";
    bad.close();
    EXPECT_THROW(EventLog(dir / "broken.jsonl").read(), ParseError);
}

TEST(SessionService, ActiveDurationFreezesAtEnd) {
    Env env;
    SessionService svc(env.deps(), fresh_dir("duration"));
    auto id = svc.create(storm_crash_instruction())["id"].get<std::string>();
    env.clock.advance(5000);
    EXPECT_DOUBLE_EQ(svc.get(id)["active_seconds"].get<double>(), 5.0);
    svc.post_turn(id, "What is the address of the emergency?");
    env.clock.advance(3000);
    svc.end(id);
    EXPECT_DOUBLE_EQ(svc.get(id)["active_seconds"].get<double>(), 8.0);
    env.clock.advance(10000);
    EXPECT_DOUBLE_EQ(svc.get(id)["active_seconds"].get<double>(), 8.0);
    EXPECT_DOUBLE_EQ(svc.get(id, true)["active_seconds"].get<double>(), 8.0);
}

TEST(SessionService, ConcurrentSessionsAndTurns) {
    Env env;
    SessionService svc(env.deps(), fresh_dir("concurrent"));
    auto shared = svc.create(storm_crash_instruction())["id"].get<std::string>();
    std::vector<std::thread> threads;
    std::atomic<int> failures{0};
    for (int t = 0; t < 6; ++t) {
        threads.emplace_back([&] {
            try {
                auto own = svc.create(storm_crash_instruction())["id"].get<std::string>();
                for (int k = 0; k < 3; ++k) {
                    svc.post_turn(own, "Can you tell me more?");
                    svc.post_turn(shared, "What is happening now?");
                }
            } catch (...) {
                ++failures;
            }
        });
    }
    for (auto& th : threads) th.join();
    EXPECT_EQ(failures.load(), 0);
    EXPECT_EQ(svc.ids().size(), 7u);
    auto snap = svc.snapshot(shared);
    EXPECT_EQ(snap.state.history.size(), 1u + 2u * 18u);
    for (std::size_t i = 0; i < snap.state.history.size(); ++i) EXPECT_EQ(snap.state.history[i].index, i);
    EXPECT_EQ(svc.reload(shared).to_json().dump(), snap.to_json().dump());
}

// ---------------------------------------------------------------------------
// HTTP
// ---------------------------------------------------------------------------

namespace {

struct Server {
    SessionService& svc;
    HttpApi api;
    int port;
    std::thread th;

    Server(SessionService& s, std::optional<std::string> token)
        : svc(s), api(s, std::move(token)), port(api.bind("127.0.0.1", 0)), th([this] { api.listen(); }) {}
    ~Server() {
        api.stop();
        th.join();
    }
    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port);
        c.set_read_timeout(30, 0);
        return c;
    }
};

json body_of(const httplib::Result& r) { return json::parse(r->body); }

void expect_error(const httplib::Result& r, int status, const std::string& code) {
    ASSERT_TRUE(r) << "no response";
    EXPECT_EQ(r->status, status) << r->body;
    auto j = body_of(r);
    EXPECT_EQ(j.value("code", ""), code);
    EXPECT_TRUE(j.contains("message"));
}

}  // namespace

TEST(HttpApi, SessionLifecycle) {
    Env env;
    SessionService svc(env.deps(), fresh_dir("http"));
    Server server(svc, std::string("instructor-secret"));
    auto c = server.client();

    ASSERT_EQ(c.Get("/health")->status, 200);

    json req{{"instruction", to_json(storm_crash_instruction())}};
    auto created = c.Post("/sessions", req.dump(), "application/json");
    ASSERT_TRUE(created);
    ASSERT_EQ(created->status, 201) << created->body;
    auto id = body_of(created)["id"].get<std::string>();
    EXPECT_EQ(body_of(created)["turns"][0]["speaker"], "caller");

    auto turn = c.Post("/sessions/" + id + "/turns", json{{"text", "What is the address?"}}.dump(), "application/json");
    ASSERT_EQ(turn->status, 200) << turn->body;
    EXPECT_EQ(body_of(turn)["turn"]["index"], 2);

    auto fb = c.Post("/sessions/" + id + "/feedback", json{{"turn_index", 2}, {"rating", 5}}.dump(),
                     "application/json");
    ASSERT_EQ(fb->status, 200) << fb->body;
    EXPECT_EQ(body_of(fb)["feedback"]["rating"], 5);

    auto got = c.Get("/sessions/" + id);
    ASSERT_EQ(got->status, 200);
    EXPECT_EQ(body_of(got)["turns"].size(), 3u);
    EXPECT_EQ(text::to_lower(got->body).find("unhoused"), std::string::npos);

    auto list = c.Get("/sessions");
    ASSERT_EQ(list->status, 200);
    EXPECT_EQ(body_of(list)["sessions"].size(), 1u);

    auto ended = c.Post("/sessions/" + id + "/end", "", "application/json");
    ASSERT_EQ(ended->status, 200);
    EXPECT_EQ(body_of(ended)["status"], "completed");
    expect_error(c.Post("/sessions/" + id + "/turns", json{{"text", "hello"}}.dump(), "application/json"), 409,
                 "conflict");
}

TEST(HttpApi, ErrorsAreCodeAndMessage) {
    Env env;
    SessionService svc(env.deps(), fresh_dir("http_errors"));
    Server server(svc, std::nullopt);
    auto c = server.client();

    expect_error(c.Post("/sessions", "{not json", "application/json"), 400, "invalid_json");
    auto bad = to_json(storm_crash_instruction());
    bad["is"]["incident_type"] = "alien landing";
    expect_error(c.Post("/sessions", bad.dump(), "application/json"), 400, "unknown_tag");
    expect_error(c.Get("/sessions/nope"), 404, "not_found");
    expect_error(c.Post("/sessions/nope/turns", json{{"text", "hi"}}.dump(), "application/json"), 404, "not_found");

    auto id = svc.create(storm_crash_instruction())["id"].get<std::string>();
    expect_error(c.Post("/sessions/" + id + "/turns", json{{"words", "hi"}}.dump(), "application/json"), 400,
                 "invalid_request");
    expect_error(c.Post("/sessions/" + id + "/feedback", json{{"turn_index", 0}, {"rating", 9}}.dump(),
                        "application/json"),
                 400, "invalid_request");
    expect_error(c.Get("/sessions/" + id + "?view=instructor"), 403, "forbidden");
    expect_error(c.Get("/no/such/route"), 404, "not_found");
}

TEST(HttpApi, InstructorViewNeedsToken) {
    Env env;
    SessionService svc(env.deps(), fresh_dir("http_token"));
    Server server(svc, std::string("instructor-secret"));
    auto c = server.client();
    auto id = svc.create(storm_crash_instruction())["id"].get<std::string>();

    expect_error(c.Get("/sessions/" + id + "?view=instructor"), 403, "forbidden");
    expect_error(c.Get("/sessions/" + id + "?view=instructor", {{"X-Instructor-Token", "wrong"}}), 403, "forbidden");
    auto ok = c.Get("/sessions/" + id + "?view=instructor", {{"X-Instructor-Token", "instructor-secret"}});
    ASSERT_EQ(ok->status, 200);
    EXPECT_NE(ok->body.find("unhoused"), std::string::npos);
    auto all = c.Get("/sessions?view=instructor", {{"X-Instructor-Token", "instructor-secret"}});
    ASSERT_EQ(all->status, 200);
    EXPECT_TRUE(body_of(all)["sessions"][0].contains("session"));
}

TEST(HttpApi, BackendOutageIs502) {
    Env env;
    DownClient down;
    SessionService svc(env.deps(&down), fresh_dir("http_down"));
    Server server(svc, std::nullopt);
    auto c = server.client();
    expect_error(c.Post("/sessions", to_json(storm_crash_instruction()).dump(), "application/json"), 502,
                 "backend_unavailable");
}

// ---------------------------------------------------------------------------
// Configuration and credentials
// ---------------------------------------------------------------------------

TEST(ServiceConfig, ResolvesPathsAndRejectsInlineSecrets) {
    auto c = ServiceConfig::from_json(json{{"corpus", "corpus.jsonl"}, {"backend", {{"type", "mock"}, {"script", "m.json"}}}},
                                      "/etc/callsim");
    EXPECT_EQ(c.corpus, "/etc/callsim/corpus.jsonl");
    EXPECT_EQ(c.backend.mock_script, "/etc/callsim/m.json");
    EXPECT_THROW(ServiceConfig::from_json(json{{"instructor_token", "x"}}), ParseError);
    EXPECT_THROW(ServiceConfig::from_json(json{{"backend", {{"type", "http"}, {"api_key", "x"}}}}), ParseError);
    EXPECT_THROW(ServiceConfig::from_json(json{{"backend", {{"type", "carrier-pigeon"}}}}), ParseError);
    EXPECT_THROW(ServiceConfig::from_json(json{{"threshold", 0}}), ValidationError);
}

TEST(ServiceConfig, InstructorTokenComesFromEnvironment) {
    ServiceConfig c;
    c.instructor_token_env = "CALLSIM_TEST_INSTRUCTOR_TOKEN";
    ::unsetenv("CALLSIM_TEST_INSTRUCTOR_TOKEN");
    EXPECT_FALSE(c.instructor_token().has_value());
    ::setenv("CALLSIM_TEST_INSTRUCTOR_TOKEN", "tok-123", 1);
    EXPECT_EQ(c.instructor_token(), "tok-123");
    EXPECT_EQ(c.to_json().dump().find("tok-123"), std::string::npos);
    ::unsetenv("CALLSIM_TEST_INSTRUCTOR_TOKEN");
}

TEST(ServiceConfig, BuildRuntimeFromBundledData) {
    ServiceConfig c;
    c.taxonomy = data_path("taxonomy.json");
    c.corpus = data_path("corpus.jsonl");
    c.gazetteer = data_path("gazetteer.txt");
    c.connectivity = data_path("connectivity.json");
    c.protocols = data_path("protocols.json");
    c.profiles = data_path("profiles.json");
    c.paraphrases = data_path("paraphrases.json");
    c.backend.mock_script = data_path("mock/default_script.json");
    auto rt = build_runtime(c);
    EXPECT_EQ(rt.client->name(), "mock");
    c.backend.mock_script.clear();
    EXPECT_THROW(build_runtime(c), ValidationError);
}

TEST(Credentials, NeverWrittenToLogsOrDumps) {
    const std::string secret = "sk-live-DO-NOT-LEAK-4242";
    ::setenv("CALLSIM_TEST_API_KEY", secret.c_str(), 1);
    BackendConfig bc = BackendConfig::from_json(
        json{{"type", "http"}, {"endpoint", "http://127.0.0.1:9/v1/chat/completions"}, {"model", "m"},
             {"api_key_env", "CALLSIM_TEST_API_KEY"}, {"timeout_seconds", 1}});
    EXPECT_EQ(bc.to_json().dump().find(secret), std::string::npos);
    EXPECT_EQ(bc.to_json()["api_key_env"], "CALLSIM_TEST_API_KEY");

    Env env;
    auto client = make_backend(bc);
    auto dir = fresh_dir("credentials");
    SessionService svc(env.deps(client.get()), dir);
    try {
        svc.create(storm_crash_instruction());
        ADD_FAILURE() << "expected the unreachable backend to fail";
    } catch (const TransportError& e) {
        EXPECT_EQ(std::string(e.what()).find(secret), std::string::npos);
    }

    SessionService mock_svc(env.deps(), dir);
    auto id = mock_svc.create(storm_crash_instruction())["id"].get<std::string>();
    mock_svc.post_turn(id, "What is the address?");
    EXPECT_EQ(slurp_dir(dir).find(secret), std::string::npos);
    EXPECT_EQ(mock_svc.get(id, true).dump().find(secret), std::string::npos);
    ::unsetenv("CALLSIM_TEST_API_KEY");
}
