#include "callsim/copilot.hpp"
#include "callsim/error.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace callsim;
using callsim::testing::data_path;
using callsim::testing::default_taxonomy;
using callsim::testing::fixture_path;

namespace {

AnnotatedCall make_call(const std::string& id, const std::string& type, const std::string& caller_text) {
    AnnotatedCall c;
    c.id = id;
    c.turns.push_back({Speaker::caller, caller_text, 0});
    c.is.incident_type = type;
    c.ci.age = "adult";
    c.ci.emotion = "calm";
    return c;
}

Turn caller(const std::string& s) { return {Speaker::caller, s, 0}; }

std::vector<std::string> oracle_features(const std::string& s) {
    std::vector<std::string> out;
    for (const auto& t : text::content_tokens(s))
        if (t.find_first_not_of("0123456789") != std::string::npos) out.push_back(t);
    return out;
}

// Nearest-centroid reference: mean of unit tf-idf vectors per label,
// renormalized; argmax cosine with lexicographic tie-break.
std::pair<std::string, double> brute_force_classify(const std::vector<AnnotatedCall>& corpus, const std::string& query) {
    std::vector<std::vector<std::string>> docs;
    for (const auto& c : corpus) docs.push_back(oracle_features(c.full_text()));
    std::map<std::string, oracle::Vec> centroid;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        auto v = oracle::tfidf(docs[i], docs);
        double n = 0;
        for (auto& [_, w] : v) n += w * w;
        n = std::sqrt(n);
        auto& c = centroid[corpus[i].is.incident_type];
        if (n == 0) continue;
        for (auto& [t, w] : v) c[t] += w / n;
    }
    auto q = oracle::tfidf(oracle_features(query), docs);
    std::string best;
    double best_score = -1;
    for (const auto& [label, c] : centroid) {
        double s = oracle::cosine(q, c);
        if (s > best_score + 1e-12) {
            best = label;
            best_score = s;
        }
    }
    return {best, best_score};
}

}  // namespace

TEST(CentroidClassifier, DisjointVocabulariesPickTheRightLabel) {
    std::vector<AnnotatedCall> corpus{make_call("1", "crash report", "vehicle collision bumper airbag"),
                                      make_call("2", "crash report", "car crash windshield highway"),
                                      make_call("3", "burglary", "window smashed jewelry stolen"),
                                      make_call("4", "burglary", "intruder basement burglar alarm")};
    auto model = train_centroid_classifier(corpus);
    std::vector<Turn> turns{caller("the airbag went off after the collision, the windshield cracked and the car crash blocked the highway")};
    auto c = model.classify(turns);
    EXPECT_EQ(c.label, "crash report");
    EXPECT_GT(c.confidence, 0.5);
    auto [label, score] = brute_force_classify(corpus, turns[0].text);
    EXPECT_EQ(c.label, label);
    EXPECT_NEAR(c.confidence, score, 1e-12);
}

TEST(CentroidClassifier, ZeroOverlapFallsBackToLowestLabel) {
    std::vector<AnnotatedCall> corpus{make_call("1", "crash report", "vehicle collision"),
                                      make_call("2", "burglary", "window smashed")};
    auto model = train_centroid_classifier(corpus);
    std::vector<Turn> turns{caller("purple elephants dancing")};
    auto c = model.classify(turns);
    EXPECT_EQ(c.label, "burglary");
    EXPECT_EQ(c.confidence, 0.0);
}

TEST(CentroidClassifier, EmptyTurnsAndEmptyCorpusAreErrors) {
    std::vector<AnnotatedCall> corpus{make_call("1", "crash report", "vehicle collision"),
                                      make_call("2", "burglary", "window smashed")};
    auto model = train_centroid_classifier(corpus);
    EXPECT_THROW(model.classify(std::span<const Turn>{}), ValidationError);
    EXPECT_THROW(train_centroid_classifier({}), ValidationError);
}

TEST(CentroidClassifier, LabelWithoutUsableTokensIsAnError) {
    std::vector<AnnotatedCall> corpus{make_call("1", "crash report", "vehicle collision"),
                                      make_call("2", "burglary", "and the of it")};
    EXPECT_THROW(train_centroid_classifier(corpus), ValidationError);
}

TEST(CentroidClassifier, SaveLoadPreservesPredictions) {
    auto corpus = parse_corpus(data_path("corpus.jsonl"), default_taxonomy());
    auto model = train_centroid_classifier(corpus);
    auto again = CentroidModel::parse(model.serialize());
    EXPECT_EQ(again.fingerprint(), model.fingerprint());
    EXPECT_EQ(again.serialize(), model.serialize());
    for (const auto& call : corpus) {
        auto a = model.classify(call.turns);
        auto b = again.classify(call.turns);
        EXPECT_EQ(a.label, b.label);
        EXPECT_DOUBLE_EQ(a.confidence, b.confidence);
    }
}

TEST(CentroidClassifier, MatchesBruteForceOnRandomSmallCorpora) {
    std::mt19937 rng(99);
    std::vector<std::string> words{"car", "crash", "truck", "window", "stolen", "fire", "smoke", "gun", "shots",
                                   "bleeding", "alarm", "parked", "weeks", "tow", "loud", "music", "neighbor"};
    std::vector<std::string> labels{"crash report", "burglary", "structure fire", "abandoned vehicle"};
    int checked = 0;
    for (int round = 0; round < 60; ++round) {
        std::vector<AnnotatedCall> corpus;
        int n = 2 + static_cast<int>(rng() % 29);
        for (int i = 0; i < n; ++i) {
            std::string s;
            int len = 2 + static_cast<int>(rng() % 6);
            for (int w = 0; w < len; ++w) s += words[rng() % words.size()] + " ";
            corpus.push_back(make_call("c" + std::to_string(i), labels[rng() % labels.size()], s));
        }
        std::unique_ptr<CentroidModel> model;
        try {
            model = std::make_unique<CentroidModel>(train_centroid_classifier(corpus));
        } catch (const ValidationError&) {
            continue;  // a label drew only corpus-wide words
        }
        for (int q = 0; q < 5; ++q) {
            std::string query;
            for (int w = 0; w < 4; ++w) query += words[rng() % words.size()] + " ";
            auto got = model->classify_text(query);
            auto [label, score] = brute_force_classify(corpus, query);
            EXPECT_NEAR(got.confidence, std::clamp(score, 0.0, 1.0), 1e-9);
            if (std::abs(got.confidence - score) < 1e-9) {
                // Same maximum; label may differ only by a near-exact tie.
                auto scores = model->scores(query);
                EXPECT_NEAR(scores.at(label), scores.at(got.label), 1e-9);
            }
            auto again = model->classify_text(query);
            EXPECT_EQ(again.label, got.label);
            ++checked;
        }
    }
    EXPECT_GT(checked, 100);
}

TEST(LexicalAnswerer, AddressFromTranscriptSnippets) {
    LexicalAnswerer a;
    auto r1 = extract_answer_lexical(a, caller("My address is 322 Broadway"), "address");
    EXPECT_TRUE(r1.present);
    EXPECT_EQ(r1.span, "322 Broadway");
    auto r2 = extract_answer_lexical(a, caller("He's wearing a red jacket"), "address");
    EXPECT_FALSE(r2.present);
    EXPECT_FALSE(r2.span.has_value());
    auto r3 = extract_answer_lexical(a, caller("It's 411 Murfreesboro Pike, Apartment 302"), "address");
    EXPECT_EQ(r3.span, "411 Murfreesboro Pike, Apartment 302");
    auto r4 = extract_answer_lexical(a, caller("A 322 Broadway."), "address");
    EXPECT_EQ(r4.span, "322 Broadway");
    auto r5 = extract_answer_lexical(a, caller("It's 742 Evergreen Terrace, in City X."), "address");
    EXPECT_EQ(r5.span, "742 Evergreen Terrace");
}

TEST(LexicalAnswerer, NonAddressNumbersAreIgnored) {
    LexicalAnswerer a;
    for (std::string s : {"My phone number is 615-555-0123.", "It's been there for about four days now.",
                          "Yes, it's right around mile marker 210. This person is driving a red pickup truck.",
                          "He's been there since 10 o'clock last night."}) {
        EXPECT_FALSE(a.answer(caller(s), "address").present) << s;
    }
}

TEST(LexicalAnswerer, GazetteerPrefersResolvingPrefix) {
    auto g = AddressGazetteer::load(fixture_path("gazetteer10.txt"));
    LexicalAnswerer a;
    a.attach_gazetteer(&g);
    auto r = a.answer(caller("Come to 322 Broadway Margaritaville please"), "address");
    EXPECT_EQ(r.span, "322 Broadway");
    LexicalAnswerer plain;
    EXPECT_EQ(plain.answer(caller("Come to 322 Broadway Margaritaville please"), "address").span,
              "322 Broadway Margaritaville");
}

TEST(LexicalAnswerer, OtherQuestionsAndRegistry) {
    LexicalAnswerer a;
    EXPECT_EQ(a.answer(caller("407-456-0938."), "phone").span, "407-456-0938");
    EXPECT_EQ(a.answer(caller("My name is Jordan Smith."), "name").span, "Jordan Smith");
    EXPECT_THROW(a.answer(caller("hi"), "blood type"), ValidationError);
    auto custom = LexicalAnswerer::from_json(nlohmann::json::parse(R"({"questions":{"plate":["[A-Z]{3}-\\d{4}"]}})"));
    EXPECT_TRUE(custom.supports("plate"));
    EXPECT_TRUE(custom.supports("address"));
    EXPECT_EQ(custom.answer(caller("plate ABC-1234 on it"), "plate").span, "ABC-1234");
}

TEST(LexicalAnswerer, SpanIsAlwaysASubstring) {
    LexicalAnswerer a;
    auto g = AddressGazetteer::load(data_path("gazetteer.txt"));
    a.attach_gazetteer(&g);
    auto corpus = parse_corpus(data_path("corpus.jsonl"), default_taxonomy());
    int present = 0;
    for (const auto& call : corpus) {
        for (const auto& t : call.turns) {
            for (std::string q : {"address", "phone", "name"}) {
                auto r = a.answer(t, q);
                EXPECT_EQ(r.present, r.span.has_value());
                if (r.span) {
                    EXPECT_NE(t.text.find(*r.span), std::string::npos);
                    ++present;
                }
            }
        }
    }
    EXPECT_GT(present, 10);
}
