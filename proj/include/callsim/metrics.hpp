#pragma once

#include "callsim/corpus.hpp"
#include "callsim/tfidf.hpp"

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace callsim {

// ---------------------------------------------------------------------------
// METEOR
// ---------------------------------------------------------------------------

struct MeteorBreakdown {
    std::size_t matches = 0;  // m
    std::size_t candidate_length = 0;
    std::size_t reference_length = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f_mean = 0.0;
    std::size_t chunks = 0;
    double fragmentation = 0.0;  // P_frag
    double score = 0.0;
};

/// Exact matches first, then matches between stems of the leftover tokens.
/// F_mean = 10PR / (R + 9P); P_frag = min(1, 0.5 * chunks / m);
/// score = F_mean * (1 - P_frag). Throws ValidationError on an empty reference.
MeteorBreakdown meteor(std::string_view candidate, std::string_view reference);

// ---------------------------------------------------------------------------
// Language models
// ---------------------------------------------------------------------------

inline const std::string kUnknownToken = "<unk>";
inline const std::string kStartToken = "<s>";

class LanguageModel {
public:
    virtual ~LanguageModel() = default;
    virtual std::size_t order() const = 0;
    /// P(word | context); context holds the previous order()-1 tokens, already
    /// mapped, left-padded with <s>.
    virtual double probability(const std::string& word, std::span<const std::string> context) const = 0;
    /// Token as the model sees it (out-of-vocabulary -> <unk>). Throws
    /// ValidationError when the model has no way to represent the token.
    virtual std::string map_token(const std::string& token) const = 0;
    /// Prediction vocabulary; probabilities over it sum to 1 for any context.
    virtual std::vector<std::string> vocabulary() const = 0;
};

/// Additive-smoothed n-gram model:
/// P(w | h) = (c(h, w) + alpha) / (c(h) + alpha * |V|), V = training types + <unk>.
class NGramLM final : public LanguageModel {
public:
    /// Throws ValidationError on an empty corpus, order < 1 or alpha <= 0.
    static NGramLM train(const std::vector<std::string>& texts, std::size_t order = 2, double alpha = 0.1);
    /// Count-free model: uniform over exactly `vocabulary` (no <unk>).
    static NGramLM uniform(const std::vector<std::string>& vocabulary, std::size_t order = 1);

    std::size_t order() const override { return order_; }
    double alpha() const { return alpha_; }
    double probability(const std::string& word, std::span<const std::string> context) const override;
    std::string map_token(const std::string& token) const override;
    std::vector<std::string> vocabulary() const override;

private:
    std::size_t order_ = 2;
    double alpha_ = 0.1;
    bool has_unknown_ = true;
    std::set<std::string> vocab_;
    std::map<std::vector<std::string>, std::map<std::string, double>> counts_;
    std::map<std::vector<std::string>, double> context_totals_;
};

/// Unigram model with explicit probabilities; tokens outside the table have
/// probability 0.
class UnigramTable final : public LanguageModel {
public:
    /// Throws ValidationError when a probability is outside [0, 1] or the
    /// total exceeds 1.
    explicit UnigramTable(std::map<std::string, double> probabilities);

    std::size_t order() const override { return 1; }
    double probability(const std::string& word, std::span<const std::string> context) const override;
    std::string map_token(const std::string& token) const override { return token; }
    std::vector<std::string> vocabulary() const override;

private:
    std::map<std::string, double> p_;
};

/// H = -(1/N) * sum ln P(w_i | context). Throws ValidationError on text
/// without tokens.
double cross_entropy(const LanguageModel& lm, std::string_view text);

/// exp(H), computed as the geometric mean of inverse token probabilities.
double perplexity(const LanguageModel& lm, std::string_view text);

// ---------------------------------------------------------------------------
// Lexical statistics and readability
// ---------------------------------------------------------------------------

struct LexicalStats {
    std::size_t types = 0;   // V
    std::size_t tokens = 0;  // N
    double ttr = 0.0;
};

/// Throws ValidationError on text without tokens.
LexicalStats ttr(std::string_view text);

/// Syllables by vowel groups (a, e, i, o, u, y) after dropping an "es" or
/// "ed" ending and a silent final "e"; at least one. A stripped "ing" counts
/// as one more.
std::size_t count_syllables(std::string_view word);

/// 0.4 * (words / sentences + 100 * complex / words), complex meaning three
/// or more syllables. Throws ValidationError on text without words.
double gunning_fog(std::string_view text);

// ---------------------------------------------------------------------------
// Set and vector similarity
// ---------------------------------------------------------------------------

/// |A n B| / |A u B|; 1 when both are empty.
double jaccard(const std::set<std::string>& a, const std::set<std::string>& b);

/// Cosine of the TF-iDF vectors of two texts under `index`; in [0, 1].
double tfidf_cosine(std::string_view a, std::string_view b, const TfIdfIndex& index);

// ---------------------------------------------------------------------------
// Sentiment and emotion lexicons
// ---------------------------------------------------------------------------

struct SentimentVector {
    double polarity = 0.0;      // [-1, 1]
    double subjectivity = 0.0;  // [0, 1]
    std::size_t hits = 0;
};

/// word -> (polarity, subjectivity).
///
/// File format: tab-separated "word<TAB>polarity<TAB>subjectivity", '#' comments.
class SentimentLexicon {
public:
    static SentimentLexicon load(const std::string& path);
    static SentimentLexicon from_lines(const std::vector<std::string>& lines);

    std::size_t size() const { return entries_.size(); }
    /// Mean polarity and subjectivity over lexicon hits; zeros without hits.
    SentimentVector score(std::string_view text) const;

private:
    std::map<std::string, std::pair<double, double>> entries_;
};

inline constexpr std::array<const char*, 8> kEmotions{"anger", "anticipation", "disgust", "fear",
                                                      "joy",   "sadness",      "surprise", "trust"};

struct EmotionProfile {
    std::array<double, 8> weights{};  // indexed like kEmotions; sums to 1 unless all_zero
    bool all_zero = true;
    std::string dominant;  // empty when all_zero; ties go to the earlier emotion
};

/// word -> set of emotions.
///
/// File format: tab-separated "word<TAB>emotion[,emotion...]", '#' comments.
class EmotionLexicon {
public:
    static EmotionLexicon load(const std::string& path);
    static EmotionLexicon from_lines(const std::vector<std::string>& lines);

    std::size_t size() const { return entries_.size(); }
    EmotionProfile profile(std::string_view text) const;

private:
    std::map<std::string, std::vector<std::size_t>> entries_;
};

// ---------------------------------------------------------------------------
// Syntax
// ---------------------------------------------------------------------------

/// Context-free grammar with a part-of-speech lexicon, parsed by CKY.
///
/// File format, one item per line, '#' comments:
///   S -> NP VP          binary or unary production
///   @lex DT the a an    words for a part-of-speech tag
///   @start S            start symbol (default S)
/// Productions must have one or two right-hand symbols. Part-of-speech tags
/// are terminals of the productions. Unknown words get a tag from suffix
/// rules (digits CD, -ly RB, -ing VBG, -ed VBD, -s NNS, else NN).
class Grammar {
public:
    static Grammar load(const std::string& path);
    static Grammar parse(std::string_view text);

    const std::string& start() const { return start_; }
    std::size_t production_count() const { return binary_.size() + unary_.size(); }

    /// Tag of each word (first listed tag for ambiguous words).
    std::vector<std::string> tag(const std::vector<std::string>& words) const;
    std::vector<std::string> tags_of(const std::string& word) const;

    /// Productions ("A -> B C", "A -> B") of one CKY tree spanning the
    /// sentence from the start symbol; nullopt when none exists.
    std::optional<std::vector<std::string>> parse_productions(const std::vector<std::string>& words) const;

private:
    struct Binary {
        std::string lhs, left, right;
    };
    struct Unary {
        std::string lhs, rhs;
    };
    std::string start_ = "S";
    std::vector<Binary> binary_;
    std::vector<Unary> unary_;
    std::map<std::string, std::vector<std::string>> lexicon_;
};

struct SyntaxOverlap {
    double value = 0.0;
    bool fallback = false;  // some sentence did not parse; tag bigrams used for it
};

/// Multiset Jaccard (sum of min counts over sum of max counts) over the
/// productions of every sentence in each text. A sentence without a parse
/// contributes its part-of-speech bigrams instead.
SyntaxOverlap syntax_overlap(std::string_view a, std::string_view b, const Grammar& grammar);

double multiset_jaccard(const std::map<std::string, int>& a, const std::map<std::string, int>& b);

// ---------------------------------------------------------------------------
// Equity scores
// ---------------------------------------------------------------------------

struct MarginResult {
    double sim_a = 0.0;
    double sim_not_a = 0.0;
    double margin = 0.0;
    bool degenerate = false;  // both similarities zero
};

/// (a - b) / (a + b), 0 with the degenerate flag when both are 0.
MarginResult margin_from_similarities(double sim_a, double sim_not_a);

struct SimilarityWeights {
    double syntax = 1.0;
    double lexical = 1.0;
    double sentiment = 1.0;
};

struct SimilarityModels {
    const Grammar* grammar = nullptr;
    const SentimentLexicon* sentiment = nullptr;
};

/// Sentiment vectors compared by cosine after shifting polarity to [0, 1],
/// so the value lies in [0, 1].
double sentiment_similarity(const SentimentVector& a, const SentimentVector& b);

/// Weighted mean of syntax overlap, TF-iDF cosine and sentiment similarity.
double text_similarity(std::string_view a, std::string_view b, const TfIdfIndex& index, const SimilarityModels& models,
                       const SimilarityWeights& weights = {});

/// Similarity(X) is the mean over all (output, reference) pairs; the TF-iDF
/// index is fitted on all three sets. Throws ValidationError on an empty set.
MarginResult margin_score(const std::vector<std::string>& outputs_a, const std::vector<std::string>& refs_a,
                          const std::vector<std::string>& refs_not_a, const SimilarityModels& models,
                          const SimilarityWeights& weights = {});

/// Binary per-tag predictor.
class TagPredictor {
public:
    virtual ~TagPredictor() = default;
    virtual bool supports(const std::string& tag) const = 0;
    virtual bool predict(std::string_view text, const std::string& tag) const = 0;
};

/// Per tag, nearest of two centroids (calls with the tag vs without it) over
/// caller-text TF-iDF. A tag needs positive and negative training calls.
class CentroidTagPredictor final : public TagPredictor {
public:
    CentroidTagPredictor(const std::vector<AnnotatedCall>& corpus, const std::vector<std::string>& tags);

    bool supports(const std::string& tag) const override { return centroids_.count(tag) > 0; }
    bool predict(std::string_view text, const std::string& tag) const override;

private:
    TfIdfIndex index_;
    std::map<std::string, std::pair<SparseVector, SparseVector>> centroids_;  // (with, without)
};

struct TaggedText {
    std::string text;
    LabelSet truth;
};

struct TagAccuracyResult {
    std::vector<double> per_call;  // Acc(x_i)
    double overall = 0.0;
    std::vector<std::vector<bool>> predictions;  // [call][tag]
};

/// Acc(x_i) = (1/k) * sum_j 1[C_j(x_i) == 1[t_j in T(x_i)]], averaged over
/// calls. Throws ValidationError for an empty call or tag list or a tag the
/// predictor does not support.
TagAccuracyResult tag_accuracy(const std::vector<TaggedText>& calls, const std::vector<std::string>& tags,
                               const TagPredictor& predictor);

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct MetricRow {
    std::string metric;
    double value = 0.0;
    std::optional<double> stddev;
};

/// "metric<TAB>value<TAB>stddev" rows under a header line; empty stddev when
/// absent. Values use %.6f.
std::string format_metric_report(const std::vector<MetricRow>& rows);

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0;  // population standard deviation
};

MeanStd mean_std(const std::vector<double>& values);

}  // namespace callsim
