#include "callsim/error.hpp"
#include "callsim/generation.hpp"
#include "test_support.hpp"

#include "httplib.h"

#include <gtest/gtest.h>

#include <cstdlib>
#include <thread>

using namespace callsim;
using callsim::testing::data_path;
using callsim::testing::default_knowledge;
using callsim::testing::default_taxonomy;
using nlohmann::json;
using Script = std::vector<std::vector<std::string>>;

namespace {

SimulationInstruction storm_crash_instruction(std::uint64_t seed = 7) {
    SimulationInstruction in;
    in.is.incident_type = "crash report";
    in.is.scenario_contexts = {"severe weather"};
    in.is.special_requests = {"medical emergency"};
    in.ci.age = "adult";
    in.ci.emotion = "anxious";
    in.ci.vulnerable = {"unhoused", "non-native speaker"};
    in.seed = seed;
    return in;
}

const AnnotatedCall& call_by_id(const std::string& id) {
    for (const auto& c : default_knowledge()->corpus)
        if (c.id == id) return c;
    throw std::runtime_error("no call " + id);
}

bool contains(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

}  // namespace

TEST(Instruction, ParseAndValidate) {
    auto j = json::parse(R"({"is": {"incident_type": "Crash Report", "scenario_contexts": ["severe weather"],
                                    "special_requests": ["medical emergency"]},
                             "ci": {"age": "adult", "emotion": "anxious", "vulnerable": ["unhoused"]},
                             "seed": 11, "reference_id": "call-0001"})");
    auto in = parse_instruction(j, default_taxonomy());
    EXPECT_EQ(in.is.incident_type, "crash report");
    EXPECT_EQ(in.seed, 11u);
    EXPECT_EQ(in.reference_id, "call-0001");
    EXPECT_EQ(parse_instruction(to_json(in), default_taxonomy()), in);

    auto bad = storm_crash_instruction();
    bad.is.incident_type = "teleportation";
    try {
        validate_instruction(bad, default_taxonomy());
        FAIL();
    } catch (const TagError& e) {
        EXPECT_EQ(e.label(), "teleportation");
    }
    bad = storm_crash_instruction();
    bad.ci.vulnerable.insert("severe weather");
    EXPECT_THROW(validate_instruction(bad, default_taxonomy()), TagError);
}

TEST(Ablation, ParseAndNames) {
    auto rows = standard_ablations();
    std::vector<std::string> names;
    for (const auto& r : rows) names.push_back(r.name());
    EXPECT_EQ(names, (std::vector<std::string>{"full", "\xc2\xacKC", "\xc2\xac" "CoT", "\xc2\xac" "FSP",
                                               "\xc2\xacRAG", "\xc2\xacVLC", "\xc2\xac" "All"}));
    EXPECT_EQ(AblationSet::parse({"no-rag"}), AblationSet::parse({"RAG"}));
    EXPECT_EQ(AblationSet::parse({"!vlc"}), AblationSet::parse({"\xc2\xacVLC"}));
    auto all = AblationSet::parse({"All"});
    EXPECT_TRUE(all.is_all());
    EXPECT_FALSE(all.fact_context_enabled());
    EXPECT_FALSE(all.task_explanation_enabled());
    EXPECT_FALSE(all.few_shot_enabled());
    EXPECT_FALSE(all.validation_enabled());
    EXPECT_THROW(AblationSet::parse({"XYZ"}), ValidationError);
}

TEST(Profiles, SelectBackend) {
    auto profiles = ProfileSet::load(data_path("profiles.json"));
    CallerImage ci{"adult", "anxious", {}};
    EXPECT_EQ(select_backend(ci, profiles).key(), "adult/anxious");
    CallerImage kid{"kid", "irrational", {}};
    EXPECT_EQ(select_backend(kid, profiles).key(), "default");
    CallerImage with_tags{"adult", "anxious", {"unhoused", "mental health"}};
    EXPECT_EQ(&select_backend(with_tags, profiles), &select_backend(ci, profiles));
}

TEST(Profiles, BackendKeyIgnoresVulnerableTags) {
    auto profiles = ProfileSet::load(data_path("profiles.json"));
    const auto& vuln = default_taxonomy().vulnerable();
    for (const auto& age : canonical_ages()) {
        for (const auto& emotion : canonical_emotions()) {
            CallerImage base{age, emotion, {}};
            const auto* expected = &select_backend(base, profiles);
            for (unsigned mask = 1; mask < (1u << vuln.size()); ++mask) {
                CallerImage ci = base;
                for (std::size_t i = 0; i < vuln.size(); ++i)
                    if (mask & (1u << i)) ci.vulnerable.insert(vuln[i]);
                EXPECT_EQ(&select_backend(ci, profiles), expected);
            }
        }
    }
}

TEST(Profiles, Errors) {
    EXPECT_THROW(ProfileSet::from_json(json::parse(R"({"profiles": []})")), ParseError);
    EXPECT_THROW(ProfileSet::from_json(json::parse(R"({"default": {}, "profiles": [
        {"age": "adult", "emotion": "calm"}, {"age": "Adult", "emotion": "calm"}]})")),
                 ParseError);
}

TEST(Paraphrases, ShippedTableIsValid) {
    auto t = ParaphraseTable::load(data_path("paraphrases.json"));
    EXPECT_NO_THROW(t.validate(default_taxonomy()));
    EXPECT_NO_THROW(ParaphraseTable::defaults().validate(default_taxonomy()));
    EXPECT_EQ(t.describe("non-native speaker"), ParaphraseTable::defaults().describe("non-native speaker"));
}

TEST(Paraphrases, RejectsGapsAndLeaks) {
    auto missing = ParaphraseTable::from_json(json::parse(R"({"unhoused": "sleeps outside"})"));
    EXPECT_THROW(missing.validate(default_taxonomy()), ValidationError);
    auto leaky = ParaphraseTable::from_json(json::parse(R"({
        "unhoused": "is unhoused", "mental health": "x", "non-native speaker": "y", "low-income housing area": "z"})"));
    EXPECT_THROW(leaky.validate(default_taxonomy()), ValidationError);
}

TEST(AssemblePrompt, StormCrashInstruction) {
    auto k = default_knowledge();
    auto in = storm_crash_instruction();
    auto b = assemble_prompt(in, *k, AblationSet::none(), "adult/anxious");
    ASSERT_TRUE(b.fact_context && b.task_explanation && b.few_shot_examples);
    for (std::string label : {"crash report", "severe weather", "medical emergency"})
        EXPECT_TRUE(contains(*b.task_explanation, label)) << label;
    ASSERT_FALSE(b.exemplars.empty());
    for (const auto& ex : b.exemplars) {
        auto labels = call_by_id(ex.call_id).labels();
        for (const auto& tag : in.caller_image_labels()) EXPECT_TRUE(labels.count(tag)) << ex.call_id << " " << tag;
    }
    EXPECT_FALSE(b.retrieved_call_ids.empty());
    for (const auto& id : b.retrieved_call_ids) EXPECT_EQ(call_by_id(id).is.incident_type, "crash report");
    EXPECT_TRUE(contains(*b.fact_context, "Is anyone injured?"));
    EXPECT_FALSE(b.valid_addresses.empty());
    for (const auto& a : b.valid_addresses) EXPECT_TRUE(k->gazetteer.lookup(a).matched) << a;
}

TEST(AssemblePrompt, SensitiveLabelsAreParaphrased) {
    auto k = default_knowledge();
    const auto& sensitive = k->taxonomy.sensitive_labels();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto in = storm_crash_instruction(seed);
        in.ci.vulnerable = LabelSet(sensitive.begin(), sensitive.end());
        auto b = assemble_prompt(in, *k, AblationSet::none());
        auto text = b.serialize();
        for (const auto& s : sensitive) {
            EXPECT_FALSE(contains(*b.task_explanation, s)) << s;
            EXPECT_FALSE(contains(text, s)) << s;
        }
        EXPECT_TRUE(contains(*b.task_explanation, "speaks limited English"));
    }
}

TEST(AssemblePrompt, AblationRemovesExactlyOneSection) {
    auto k = default_knowledge();
    auto in = storm_crash_instruction();
    auto full = assemble_prompt(in, *k, AblationSet::none());
    auto no_fsp = assemble_prompt(in, *k, AblationSet::parse({"FSP"}));
    EXPECT_FALSE(no_fsp.few_shot_examples.has_value());
    EXPECT_TRUE(no_fsp.exemplars.empty());
    EXPECT_EQ(no_fsp.fact_context, full.fact_context);
    EXPECT_EQ(no_fsp.task_explanation, full.task_explanation);

    auto no_rag = assemble_prompt(in, *k, AblationSet::parse({"RAG"}));
    EXPECT_FALSE(no_rag.fact_context.has_value());
    EXPECT_TRUE(no_rag.valid_addresses.empty());
    EXPECT_EQ(no_rag.task_explanation, full.task_explanation);
    EXPECT_EQ(no_rag.few_shot_examples, full.few_shot_examples);
    EXPECT_FALSE(contains(no_rag.serialize(), "=== fact_context ==="));

    auto no_cot = assemble_prompt(in, *k, AblationSet::parse({"CoT"}));
    EXPECT_FALSE(no_cot.task_explanation.has_value());
    EXPECT_EQ(no_cot.fact_context, full.fact_context);
    EXPECT_EQ(no_cot.few_shot_examples, full.few_shot_examples);

    auto no_kc = assemble_prompt(in, *k, AblationSet::parse({"KC"}));
    EXPECT_FALSE(no_kc.fact_context.has_value());
    EXPECT_FALSE(no_kc.few_shot_examples.has_value());
    EXPECT_EQ(no_kc.task_explanation, full.task_explanation);

    auto none = assemble_prompt(in, *k, AblationSet::all());
    EXPECT_EQ(none.serialize(), "=== profile ===\ndefault\n=== end ===\n");

    // Each remaining section keeps its exact bytes inside the serialization.
    auto s = no_fsp.serialize();
    EXPECT_TRUE(contains(s, "=== fact_context ===\n" + *full.fact_context + "=== task_explanation ===\n" +
                                *full.task_explanation + "=== end ===\n"));
}

TEST(AssemblePrompt, UnmatchedCallerImageYieldsMarker) {
    auto k = default_knowledge();
    auto in = storm_crash_instruction();
    in.ci = {"kid", "irrational", {"low-income housing area"}};
    auto b = assemble_prompt(in, *k, AblationSet::none());
    ASSERT_TRUE(b.few_shot_examples.has_value());
    EXPECT_EQ(*b.few_shot_examples, std::string(kNoExemplarsMarker) + "\n");
    EXPECT_TRUE(b.exemplars.empty());
}

TEST(AssemblePrompt, MissingProtocolIsNotedNotFatal) {
    auto k = default_knowledge();
    auto in = storm_crash_instruction();
    in.is = {"gas leak", {}, {}};
    auto b = assemble_prompt(in, *k, AblationSet::none());
    EXPECT_TRUE(contains(*b.fact_context, "No dispatcher protocol is on file for gas leak."));
    EXPECT_TRUE(b.protocol_questions.empty());
}

TEST(AssemblePrompt, DeterministicPerSeed) {
    auto k = default_knowledge();
    auto a = assemble_prompt(storm_crash_instruction(3), *k, AblationSet::none());
    auto b = assemble_prompt(storm_crash_instruction(3), *k, AblationSet::none());
    EXPECT_EQ(a.serialize(), b.serialize());
    EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
}

TEST(MockClient, ScriptedOutputsAndDeterminism) {
    auto k = default_knowledge();
    auto bundle = assemble_prompt(storm_crash_instruction(), *k, AblationSet::none());
    auto profiles = ProfileSet::load(data_path("profiles.json"));
    const auto& profile = select_backend(bundle.instruction.ci, profiles);
    ManualClock clock(1000);

    MockClient mock(Script{{"Hello, I need to report..."}});
    auto c = generate_candidate(mock, bundle, {}, profile, 1, clock);
    EXPECT_EQ(c.text, "Hello, I need to report...");
    EXPECT_EQ(c.attempt, 1);
    EXPECT_EQ(c.elapsed_ms, 0);
    EXPECT_EQ(c.token_count, 5u);
    EXPECT_EQ(to_json(c).dump(), to_json(generate_candidate(mock, bundle, {}, profile, 1, clock)).dump());

    MockClient per_attempt(Script{{"bad", "good"}});
    EXPECT_EQ(generate_candidate(per_attempt, bundle, {}, profile, 2, clock).text, "good");
    EXPECT_EQ(generate_candidate(per_attempt, bundle, {}, profile, 3, clock).text, "good");
    EXPECT_THROW(generate_candidate(per_attempt, bundle, {}, profile, 0, clock), ValidationError);
}

TEST(MockClient, TurnIndexFollowsCallerTurns) {
    auto k = default_knowledge();
    auto bundle = assemble_prompt(storm_crash_instruction(), *k, AblationSet::none());
    auto profile = ProfileSet::load(data_path("profiles.json")).default_profile();
    auto mock = MockClient::load(data_path("mock/default_script.json"));
    std::vector<Turn> history{{Speaker::caller, "hi", 0}, {Speaker::calltaker, "What is the address?", 1}};
    auto text = mock.complete({bundle, history, profile, 1});
    EXPECT_EQ(text, "The crash is at " + bundle.valid_addresses[bundle.instruction.seed % bundle.valid_addresses.size()] +
                        ".");
    EXPECT_TRUE(k->gazetteer.lookup(bundle.valid_addresses.front()).matched);

    auto no_rag = assemble_prompt(storm_crash_instruction(), *k, AblationSet::parse({"RAG"}));
    EXPECT_EQ(mock.complete({no_rag, history, profile, 1}), "The crash is at 742 Evergreen Terrace.");
    EXPECT_TRUE(mock.complete({bundle, {}, profile, 1}).starts_with("Hello, there's been a car accident"));

    auto other = storm_crash_instruction();
    other.is = {"gas leak", {}, {}};
    auto generic = assemble_prompt(other, *k, AblationSet::none());
    EXPECT_EQ(mock.complete({generic, {}, profile, 1}), "Hello, I am calling about a gas leak. Please send someone.");
}

TEST(MockClient, FaultRateIsSeededAndCalibrated) {
    MockClient mock(Script{{"fine"}});
    mock.set_fault(0.4, "bad");
    int hits = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) hits += mock.faults(static_cast<std::uint64_t>(i), 0, 1) ? 1 : 0;
    double rate = static_cast<double>(hits) / n;
    EXPECT_NEAR(rate, 0.4, 0.02);
    for (int i = 0; i < 50; ++i) EXPECT_EQ(mock.faults(5, 2, i), mock.faults(5, 2, i));
    EXPECT_THROW(mock.set_fault(1.5, "x"), ValidationError);
    EXPECT_THROW(MockClient::from_json(json::parse(R"({"turns": []})")), ValidationError);
    EXPECT_THROW(MockClient::from_json(json::parse(R"({"turns": [3]})")), ParseError);
}

TEST(HttpChatClient, SpeaksChatCompletionJson) {
    httplib::Server server;
    json seen;
    std::string auth;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen = json::parse(req.body);
        auth = req.get_header_value("Authorization");
        res.set_content(R"({"choices": [{"message": {"role": "assistant", "content": "My address is 322 Broadway."}}]})",
                        "application/json");
    });
    server.Post("/broken", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
    server.Post("/garbage", [](const httplib::Request&, httplib::Response& res) { res.set_content("{}", "application/json"); });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ::setenv("CALLSIM_TEST_KEY", "sk-test-123", 1);
    HttpBackendConfig cfg;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    cfg.model = "test-model";
    cfg.api_key_env = "CALLSIM_TEST_KEY";
    HttpChatClient client(cfg);

    auto k = default_knowledge();
    auto bundle = assemble_prompt(storm_crash_instruction(), *k, AblationSet::none());
    auto profile = ProfileSet::load(data_path("profiles.json")).default_profile();
    std::vector<Turn> history{{Speaker::caller, "Hello?", 0}, {Speaker::calltaker, "What is your address?", 1}};
    EXPECT_EQ(client.complete({bundle, history, profile, 1}), "My address is 322 Broadway.");
    EXPECT_EQ(auth, "Bearer sk-test-123");
    EXPECT_EQ(seen["model"], "test-model");
    ASSERT_EQ(seen["messages"].size(), 3u);
    EXPECT_EQ(seen["messages"][0]["role"], "system");
    EXPECT_TRUE(contains(seen["messages"][0]["content"].get<std::string>(), bundle.serialize()));
    EXPECT_EQ(seen["messages"][1]["role"], "assistant");
    EXPECT_EQ(seen["messages"][2]["role"], "user");
    EXPECT_EQ(seen["messages"][2]["content"], "What is your address?");
    EXPECT_FALSE(contains(cfg.to_json().dump(), "sk-test-123"));

    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/broken";
    EXPECT_THROW(HttpChatClient(cfg).complete({bundle, history, profile, 1}), TransportError);
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/garbage";
    EXPECT_THROW(HttpChatClient(cfg).complete({bundle, history, profile, 1}), TransportError);

    server.stop();
    t.join();
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    cfg.timeout_seconds = 2;
    EXPECT_THROW(HttpChatClient(cfg).complete({bundle, history, profile, 1}), TransportError);
}

TEST(HttpChatClient, ConfigRefusesInlineCredentials) {
    EXPECT_THROW(HttpBackendConfig::from_json(json::parse(R"({"endpoint": "http://x", "api_key": "sk"})")), ParseError);
    HttpBackendConfig cfg;
    cfg.endpoint = "ftp://example.com";
    cfg.model = "m";
    EXPECT_THROW(HttpChatClient{cfg}, ValidationError);
}
