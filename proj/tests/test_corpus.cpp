#include "callsim/corpus.hpp"
#include "callsim/error.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace callsim;
using callsim::testing::data_path;
using callsim::testing::default_taxonomy;
using callsim::testing::fixture_path;

TEST(Taxonomy, BundledDefaultHas57IncidentTypesAnd14CallerImageLabels) {
    const auto& t = default_taxonomy();
    EXPECT_EQ(t.incident_types().size(), 57u);
    EXPECT_EQ(t.caller_image_label_count(), 14u);
}

TEST(Taxonomy, DuplicateLabelAcrossFamiliesIsRejected) {
    try {
        TagTaxonomy::load(fixture_path("duplicate_taxonomy.json"));
        FAIL() << "expected TagError";
    } catch (const TagError& e) {
        EXPECT_EQ(e.label(), "crash report");
    }
}

TEST(Taxonomy, MinimalTaxonomyIsValid) {
    auto t = TagTaxonomy::load(fixture_path("minimal_taxonomy.json"));
    EXPECT_EQ(t.incident_types().size(), 1u);
    EXPECT_EQ(t.ages().size(), 4u);
    EXPECT_EQ(t.emotions().size(), 6u);
    EXPECT_EQ(t.vulnerable().size(), 4u);
}

TEST(Taxonomy, MissingFamilyIsAParseError) {
    EXPECT_THROW(TagTaxonomy::load(fixture_path("missing_family_taxonomy.json")), ParseError);
}

TEST(Taxonomy, MissingRequiredVulnerableLabelIsRejected) {
    auto j = default_taxonomy().to_json();
    j["ci_vulnerable"] = {"mental health", "unhoused", "non-native speaker"};
    EXPECT_THROW(TagTaxonomy::from_json(j), TagError);
}

TEST(Taxonomy, UnknownAgeLabelIsRejected) {
    auto j = default_taxonomy().to_json();
    j["ci_general"]["age"] = {"adult", "toddler"};
    EXPECT_THROW(TagTaxonomy::from_json(j), TagError);
}

TEST(Taxonomy, SensitivityFollowsFamily) {
    const auto& t = default_taxonomy();
    for (const auto& v : t.vulnerable()) EXPECT_EQ(t.sensitivity(v), Sensitivity::sensitive) << v;
    for (const auto& a : t.ages()) EXPECT_EQ(t.sensitivity(a), Sensitivity::general) << a;
    for (const auto& e : t.emotions()) EXPECT_EQ(t.sensitivity(e), Sensitivity::general) << e;
    EXPECT_THROW(t.sensitivity("teleportation"), TagError);
}

TEST(Taxonomy, RoundTripsThroughJson) {
    const auto& t = default_taxonomy();
    auto again = TagTaxonomy::from_json(t.to_json());
    EXPECT_EQ(again, t);
    EXPECT_EQ(again.to_json(), t.to_json());
}

TEST(Taxonomy, FamiliesAreDisjointAfterLoad) {
    const auto& t = default_taxonomy();
    std::vector<std::string> all;
    for (const auto* fam : {&t.incident_types(), &t.scenario_contexts(), &t.special_requests(), &t.ages(),
                            &t.emotions(), &t.vulnerable()})
        all.insert(all.end(), fam->begin(), fam->end());
    auto sorted = all;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(std::adjacent_find(sorted.begin(), sorted.end()), sorted.end());
}

TEST(Corpus, StormCrashRecordCarriesExactlyItsLabels) {
    auto calls = parse_corpus(fixture_path("storm_crash_record.jsonl"), default_taxonomy());
    ASSERT_EQ(calls.size(), 1u);
    const auto& c = calls.front();
    EXPECT_EQ(c.is.incident_type, "crash report");
    EXPECT_EQ(c.is.scenario_contexts, (LabelSet{"severe weather"}));
    EXPECT_EQ(c.is.special_requests, (LabelSet{"medical emergency"}));
    EXPECT_EQ(c.ci.age, "adult");
    EXPECT_EQ(c.ci.vulnerable, (LabelSet{"non-native speaker", "unhoused"}));
    // The six reference-instruction tags plus the mandatory emotion label.
    EXPECT_EQ(c.labels(), (LabelSet{"crash report", "severe weather", "medical emergency", "adult", "anxious",
                                    "non-native speaker", "unhoused"}));
}

TEST(Corpus, UnknownIncidentTypeNamesTheLabel) {
    try {
        parse_corpus(fixture_path("unknown_tag.jsonl"), default_taxonomy());
        FAIL() << "expected TagError";
    } catch (const TagError& e) {
        EXPECT_EQ(e.label(), "teleportation");
        EXPECT_NE(std::string(e.what()).find("tele"), std::string::npos);  // record id
    }
}

TEST(Corpus, EmptyTurnListIsRejected) {
    EXPECT_THROW(parse_corpus(fixture_path("empty_turns.jsonl"), default_taxonomy()), ParseError);
}

TEST(Corpus, MalformedRecordIsRejected) {
    EXPECT_THROW(parse_corpus(fixture_path("malformed.jsonl"), default_taxonomy()), ParseError);
}

TEST(Corpus, CallWithoutCallerTurnIsRejected) {
    std::string rec =
        R"({"id":"x","turns":[{"speaker":"calltaker","text":"9-1-1"}],"is":{"incident_type":"burglary"},"ci":{"age":"adult","emotion":"calm"}})";
    EXPECT_THROW(parse_corpus_text(rec, default_taxonomy()), ParseError);
}

TEST(Corpus, WhitespaceOnlyTurnIsRejected) {
    std::string rec =
        R"({"id":"x","turns":[{"speaker":"caller","text":"   "}],"is":{"incident_type":"burglary"},"ci":{"age":"adult","emotion":"calm"}})";
    EXPECT_THROW(parse_corpus_text(rec, default_taxonomy()), ParseError);
}

TEST(Corpus, MissingEmotionIsRejected) {
    std::string rec =
        R"({"id":"x","turns":[{"speaker":"caller","text":"help"}],"is":{"incident_type":"burglary"},"ci":{"age":"adult"}})";
    EXPECT_THROW(parse_corpus_text(rec, default_taxonomy()), ParseError);
}

TEST(Corpus, Snippet1FirstCallerTurn) {
    auto calls = parse_corpus(fixture_path("snippet1.jsonl"), default_taxonomy());
    ASSERT_EQ(calls.size(), 1u);
    auto it = std::find_if(calls[0].turns.begin(), calls[0].turns.end(),
                           [](const Turn& t) { return t.speaker == Speaker::caller; });
    ASSERT_NE(it, calls[0].turns.end());
    EXPECT_EQ(it->text.rfind("A 322 Broadway", 0), 0u);
    for (std::size_t i = 0; i < calls[0].turns.size(); ++i) EXPECT_EQ(calls[0].turns[i].index, i);
}

TEST(Corpus, BundledCorpusParsesInFileOrder) {
    auto calls = parse_corpus(data_path("corpus.jsonl"), default_taxonomy());
    ASSERT_GE(calls.size(), 10u);
    for (std::size_t i = 1; i < calls.size(); ++i) EXPECT_LT(calls[i - 1].id, calls[i].id);
}

TEST(Corpus, SerializeThenParseIsStructurallyEqual) {
    auto calls = parse_corpus(data_path("corpus.jsonl"), default_taxonomy());
    auto again = parse_corpus_text(serialize_corpus(calls), default_taxonomy());
    EXPECT_EQ(again, calls);
}

TEST(Filter, EmptyTagSetReturnsFullCorpus) {
    auto calls = parse_corpus(fixture_path("three_calls.jsonl"), default_taxonomy());
    EXPECT_EQ(filter_calls(calls, {}, default_taxonomy()), calls);
}

TEST(Filter, CrashReportAndUnhousedSelectsOneCall) {
    auto calls = parse_corpus(fixture_path("three_calls.jsonl"), default_taxonomy());
    auto got = filter_calls(calls, {"crash report", "Unhoused"}, default_taxonomy());
    ASSERT_EQ(got.size(), 1u);
    EXPECT_EQ(got[0].id, "a-crash");
}

TEST(Filter, LabelAbsentFromCorpusGivesEmpty) {
    auto calls = parse_corpus(fixture_path("three_calls.jsonl"), default_taxonomy());
    EXPECT_TRUE(filter_calls(calls, {"gas leak"}, default_taxonomy()).empty());
}

TEST(Filter, UnknownTagIsAnError) {
    auto calls = parse_corpus(fixture_path("three_calls.jsonl"), default_taxonomy());
    EXPECT_THROW(filter_calls(calls, {"teleportation"}, default_taxonomy()), TagError);
}

// Random corpora: the filter equals the brute-force superset scan.
TEST(FilterProperty, MatchesBruteForceSupersetScan) {
    const auto& tax = default_taxonomy();
    std::mt19937 rng(1234);
    std::vector<std::string> pool{"crash report", "burglary", "severe weather", "nighttime", "medical emergency",
                                  "tow truck"};
    for (int round = 0; round < 100; ++round) {
        std::vector<AnnotatedCall> corpus;
        int n = 1 + static_cast<int>(rng() % 12);
        for (int i = 0; i < n; ++i) {
            AnnotatedCall c;
            c.id = "c" + std::to_string(i);
            c.turns.push_back({Speaker::caller, "help", 0});
            c.is.incident_type = rng() % 2 ? "crash report" : "burglary";
            if (rng() % 2) c.is.scenario_contexts.insert("severe weather");
            if (rng() % 2) c.is.scenario_contexts.insert("nighttime");
            if (rng() % 2) c.is.special_requests.insert(rng() % 2 ? "medical emergency" : "tow truck");
            c.ci.age = tax.ages()[rng() % tax.ages().size()];
            c.ci.emotion = tax.emotions()[rng() % tax.emotions().size()];
            for (const auto& v : tax.vulnerable())
                if (rng() % 3 == 0) c.ci.vulnerable.insert(v);
            corpus.push_back(c);
        }
        LabelSet tags;
        for (const auto& p : pool)
            if (rng() % 4 == 0) tags.insert(p);
        for (const auto& v : tax.vulnerable())
            if (rng() % 5 == 0) tags.insert(v);

        std::vector<std::string> expected;
        for (const auto& c : corpus) {
            bool all = true;
            for (const auto& t : tags) {
                bool has = c.is.incident_type == t || c.is.scenario_contexts.count(t) || c.is.special_requests.count(t) ||
                           c.ci.age == t || c.ci.emotion == t || c.ci.vulnerable.count(t);
                all = all && has;
            }
            if (all) expected.push_back(c.id);
        }
        std::vector<std::string> got;
        for (const auto& c : filter_calls(corpus, tags, tax)) got.push_back(c.id);
        EXPECT_EQ(got, expected);
    }
}
