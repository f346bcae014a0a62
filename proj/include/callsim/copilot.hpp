#pragma once

#include "callsim/corpus.hpp"
#include "callsim/knowledge.hpp"
#include "callsim/tfidf.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <vector>

namespace callsim {

struct Classification {
    std::string label;
    double confidence = 0.0;  // in [0, 1]
};

/// Predicts the incident type of a conversation.
class IncidentClassifier {
public:
    virtual ~IncidentClassifier() = default;
    /// Throws ValidationError on an empty turn list.
    virtual Classification classify(std::span<const Turn> turns) const = 0;
};

struct ExtractedAnswer {
    bool present = false;
    std::optional<std::string> span;  // set iff present; substring of the turn
};

/// Decides whether a single turn answers a preset question.
class ExtractiveAnswerer {
public:
    virtual ~ExtractiveAnswerer() = default;
    virtual bool supports(const std::string& question_id) const = 0;
    /// Throws ValidationError for an unregistered question id.
    virtual ExtractedAnswer answer(const Turn& turn, const std::string& question_id) const = 0;
};

/// Nearest-centroid classifier over TF-iDF vectors.
///
/// Each training call contributes its unit-normalized vector to the centroid
/// of its incident type; centroids are re-normalized. Classification picks
/// the maximal cosine, ties broken by lexicographic label order, and the
/// confidence is that cosine clipped to [0, 1].
class CentroidModel final : public IncidentClassifier {
public:
    /// Throws ValidationError on an empty corpus or when a label ends up
    /// with a zero centroid.
    static CentroidModel train(const std::vector<AnnotatedCall>& corpus);

    static CentroidModel load(const std::string& path);
    static CentroidModel parse(std::string_view serialized);
    void save(const std::string& path) const;
    std::string serialize() const;

    Classification classify(std::span<const Turn> turns) const override;
    Classification classify_text(std::string_view text) const;

    /// Cosine of `text` to every centroid, by label.
    std::map<std::string, double> scores(std::string_view text) const;

    const std::map<std::string, SparseVector>& centroids() const noexcept { return centroids_; }
    const TfIdfIndex& index() const noexcept { return index_; }
    std::uint64_t fingerprint() const noexcept { return fingerprint_; }

private:
    TfIdfIndex index_;
    std::map<std::string, SparseVector> centroids_;
    std::uint64_t fingerprint_ = 0;
};

inline CentroidModel train_centroid_classifier(const std::vector<AnnotatedCall>& corpus) {
    return CentroidModel::train(corpus);
}

/// Pattern-driven answerer. Each question id maps to a list of regular
/// expressions; the longest match across patterns wins (earliest on ties).
///
/// With a gazetteer attached, the "address" question prefers the longest
/// candidate (or word-prefix of a candidate) that resolves in the gazetteer.
class LexicalAnswerer final : public ExtractiveAnswerer {
public:
    /// Registry with the built-in "address", "phone" and "name" questions.
    LexicalAnswerer();

    /// Registry read from JSON: {"questions": {"<id>": ["<regex>", ...]}}.
    /// Entries extend or replace the built-ins.
    static LexicalAnswerer from_json(const nlohmann::json& j);
    static LexicalAnswerer load(const std::string& path);

    void register_question(const std::string& id, const std::vector<std::string>& patterns);
    void attach_gazetteer(const AddressGazetteer* gazetteer) { gazetteer_ = gazetteer; }

    bool supports(const std::string& question_id) const override;
    ExtractedAnswer answer(const Turn& turn, const std::string& question_id) const override;

private:
    struct Pattern {
        std::string source;
        std::regex re;
    };
    std::map<std::string, std::vector<Pattern>> questions_;
    const AddressGazetteer* gazetteer_ = nullptr;
};

inline ExtractedAnswer extract_answer_lexical(const LexicalAnswerer& answerer, const Turn& turn,
                                              const std::string& question_id) {
    return answerer.answer(turn, question_id);
}

inline const std::string kAddressQuestion = "address";

}  // namespace callsim
