#include "callsim/metrics.hpp"

#include "callsim/error.hpp"
#include "callsim/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <tuple>

namespace callsim {

// ---------------------------------------------------------------------------
// METEOR
// ---------------------------------------------------------------------------

MeteorBreakdown meteor(std::string_view candidate, std::string_view reference) {
    auto c = text::tokenize(candidate);
    auto r = text::tokenize(reference);
    if (r.empty()) throw ValidationError("METEOR needs a non-empty reference");

    std::vector<long> c_to_r(c.size(), -1);
    std::vector<bool> r_used(r.size(), false);
    auto stage = [&](auto key) {
        std::vector<std::string> rk(r.size());
        for (std::size_t j = 0; j < r.size(); ++j) rk[j] = key(r[j]);
        for (std::size_t i = 0; i < c.size(); ++i) {
            if (c_to_r[i] >= 0) continue;
            auto ck = key(c[i]);
            long pick = -1;
            if (i > 0 && c_to_r[i - 1] >= 0) {
                auto next = static_cast<std::size_t>(c_to_r[i - 1] + 1);
                if (next < r.size() && !r_used[next] && rk[next] == ck) pick = static_cast<long>(next);
            }
            for (std::size_t j = 0; pick < 0 && j < r.size(); ++j)
                if (!r_used[j] && rk[j] == ck) pick = static_cast<long>(j);
            if (pick >= 0) {
                c_to_r[i] = pick;
                r_used[static_cast<std::size_t>(pick)] = true;
            }
        }
    };
    stage([](const std::string& t) { return t; });
    stage([](const std::string& t) { return text::stem(t); });

    MeteorBreakdown b;
    b.candidate_length = c.size();
    b.reference_length = r.size();
    long prev_i = -2, prev_j = -2;
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (c_to_r[i] < 0) continue;
        ++b.matches;
        if (static_cast<long>(i) != prev_i + 1 || c_to_r[i] != prev_j + 1) ++b.chunks;
        prev_i = static_cast<long>(i);
        prev_j = c_to_r[i];
    }
    if (b.matches == 0) return b;
    double m = static_cast<double>(b.matches);
    b.precision = m / static_cast<double>(c.size());
    b.recall = m / static_cast<double>(r.size());
    b.f_mean = 10.0 * b.precision * b.recall / (b.recall + 9.0 * b.precision);
    b.fragmentation = std::min(1.0, 0.5 * static_cast<double>(b.chunks) / m);
    b.score = b.f_mean * (1.0 - b.fragmentation);
    return b;
}

// ---------------------------------------------------------------------------
// Language models
// ---------------------------------------------------------------------------

NGramLM NGramLM::train(const std::vector<std::string>& texts, std::size_t order, double alpha) {
    if (order < 1) throw ValidationError("n-gram order must be at least 1");
    if (!(alpha > 0.0)) throw ValidationError("smoothing constant must be positive");
    NGramLM lm;
    lm.order_ = order;
    lm.alpha_ = alpha;
    std::size_t total = 0;
    for (const auto& t : texts) {
        auto tokens = text::tokenize(t);
        total += tokens.size();
        std::vector<std::string> padded(order - 1, kStartToken);
        padded.insert(padded.end(), tokens.begin(), tokens.end());
        for (std::size_t pos = order - 1; pos < padded.size(); ++pos) {
            std::vector<std::string> ctx(padded.begin() + static_cast<long>(pos - (order - 1)),
                                         padded.begin() + static_cast<long>(pos));
            lm.counts_[ctx][padded[pos]] += 1.0;
            lm.context_totals_[ctx] += 1.0;
            lm.vocab_.insert(padded[pos]);
        }
    }
    if (total == 0) throw ValidationError("cannot train a language model on an empty corpus");
    return lm;
}

NGramLM NGramLM::uniform(const std::vector<std::string>& vocabulary, std::size_t order) {
    if (vocabulary.empty()) throw ValidationError("uniform model needs a vocabulary");
    if (order < 1) throw ValidationError("n-gram order must be at least 1");
    NGramLM lm;
    lm.order_ = order;
    lm.alpha_ = 1.0;
    lm.has_unknown_ = false;
    lm.vocab_.insert(vocabulary.begin(), vocabulary.end());
    return lm;
}

double NGramLM::probability(const std::string& word, std::span<const std::string> context) const {
    double v = static_cast<double>(vocab_.size() + (has_unknown_ ? 1 : 0));
    std::vector<std::string> ctx(context.begin(), context.end());
    double c = 0.0, total = 0.0;
    if (auto it = context_totals_.find(ctx); it != context_totals_.end()) {
        total = it->second;
        const auto& row = counts_.at(ctx);
        if (auto w = row.find(word); w != row.end()) c = w->second;
    }
    return (c + alpha_) / (total + alpha_ * v);
}

std::string NGramLM::map_token(const std::string& token) const {
    if (vocab_.count(token)) return token;
    if (!has_unknown_) throw ValidationError("token '" + token + "' is outside the model vocabulary");
    return kUnknownToken;
}

std::vector<std::string> NGramLM::vocabulary() const {
    std::vector<std::string> out(vocab_.begin(), vocab_.end());
    if (has_unknown_) out.push_back(kUnknownToken);
    return out;
}

UnigramTable::UnigramTable(std::map<std::string, double> probabilities) : p_(std::move(probabilities)) {
    double total = 0.0;
    for (const auto& [w, p] : p_) {
        if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("probability of '" + w + "' is outside [0, 1]");
        total += p;
    }
    if (total > 1.0 + 1e-12) throw ValidationError("unigram probabilities sum to more than 1");
}

double UnigramTable::probability(const std::string& word, std::span<const std::string>) const {
    auto it = p_.find(word);
    return it == p_.end() ? 0.0 : it->second;
}

std::vector<std::string> UnigramTable::vocabulary() const {
    std::vector<std::string> out;
    for (const auto& [w, _] : p_) out.push_back(w);
    return out;
}

namespace {

std::vector<double> token_probabilities(const LanguageModel& lm, std::string_view text) {
    auto tokens = text::tokenize(text);
    if (tokens.empty()) throw ValidationError("text has no tokens");
    std::vector<std::string> history(lm.order() - 1, kStartToken);
    std::vector<double> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) {
        auto w = lm.map_token(t);
        std::span<const std::string> ctx(history.data() + (history.size() - (lm.order() - 1)), lm.order() - 1);
        out.push_back(lm.probability(w, ctx));
        history.push_back(w);
    }
    return out;
}

}  // namespace

double cross_entropy(const LanguageModel& lm, std::string_view text) {
    auto probs = token_probabilities(lm, text);
    double sum = 0.0;
    for (double p : probs) sum += std::log(p);
    return -sum / static_cast<double>(probs.size());
}

double perplexity(const LanguageModel& lm, std::string_view text) {
    auto probs = token_probabilities(lm, text);
    double inv_n = 1.0 / static_cast<double>(probs.size());
    double pp = 1.0;
    for (double p : probs) pp *= std::pow(p, -inv_n);
    return pp;
}

// ---------------------------------------------------------------------------
// Lexical statistics and readability
// ---------------------------------------------------------------------------

LexicalStats ttr(std::string_view text) {
    auto tokens = text::tokenize(text);
    if (tokens.empty()) throw ValidationError("TTR of text without tokens");
    std::set<std::string> types(tokens.begin(), tokens.end());
    LexicalStats s;
    s.types = types.size();
    s.tokens = tokens.size();
    s.ttr = static_cast<double>(s.types) / static_cast<double>(s.tokens);
    return s;
}

std::size_t count_syllables(std::string_view word) {
    std::string w = text::to_lower(word);
    auto ends_with = [&w](std::string_view suffix) {
        return w.size() >= suffix.size() && w.compare(w.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    std::size_t extra = 0;
    if (ends_with("ing") && w.size() > 5) {
        w.resize(w.size() - 3);
        extra = 1;
    } else if ((ends_with("es") || ends_with("ed")) && w.size() > 4) w.resize(w.size() - 2);
    if (w.size() > 2 && w.back() == 'e') w.pop_back();
    std::size_t groups = 0;
    bool in_vowel = false;
    for (char ch : w) {
        bool v = std::string_view("aeiouy").find(ch) != std::string_view::npos;
        if (v && !in_vowel) ++groups;
        in_vowel = v;
    }
    return std::max<std::size_t>(groups, 1) + extra;
}

double gunning_fog(std::string_view text) {
    auto sentences = text::split_sentences(text);
    std::size_t words = 0, complex = 0;
    for (const auto& s : sentences) {
        for (const auto& t : text::tokenize(s)) {
            ++words;
            bool alpha = std::all_of(t.begin(), t.end(), [](unsigned char ch) { return std::isalpha(ch); });
            if (alpha && count_syllables(t) >= 3) ++complex;
        }
    }
    if (sentences.empty() || words == 0) throw ValidationError("Gunning Fog of text without words");
    double w = static_cast<double>(words);
    return 0.4 * (w / static_cast<double>(sentences.size()) + 100.0 * static_cast<double>(complex) / w);
}

// ---------------------------------------------------------------------------
// Similarity
// ---------------------------------------------------------------------------

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& x : a) inter += b.count(x);
    return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

double tfidf_cosine(std::string_view a, std::string_view b, const TfIdfIndex& index) {
    auto ta = text::tokenize(a), tb = text::tokenize(b);
    auto va = index.weigh(ta), vb = index.weigh(tb);
    if (va.empty() && vb.empty() && !ta.empty())
        return index.term_frequencies(ta) == index.term_frequencies(tb) ? 1.0 : 0.0;
    return std::clamp(cosine(va, vb), 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Lexicons
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == '\t') {
            out.push_back(text::trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(text::trim(cur));
    return out;
}

double parse_number(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError(what + ": '" + s + "' is not a number");
    }
}

}  // namespace

SentimentLexicon SentimentLexicon::from_lines(const std::vector<std::string>& lines) {
    SentimentLexicon lex;
    std::size_t n = 0;
    for (const auto& line : lines) {
        ++n;
        if (text::trim(line).empty() || text::trim(line)[0] == '#') continue;
        auto f = split_tabs(line);
        auto where = "sentiment lexicon line " + std::to_string(n);
        if (f.size() != 3) throw ParseError(where + ": expected word, polarity, subjectivity");
        double p = parse_number(f[1], where), s = parse_number(f[2], where);
        if (p < -1 || p > 1 || s < 0 || s > 1) throw ParseError(where + ": value out of range");
        lex.entries_[text::to_lower(f[0])] = {p, s};
    }
    return lex;
}

SentimentLexicon SentimentLexicon::load(const std::string& path) {
    try {
        return from_lines(text::read_lines(path));
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

SentimentVector SentimentLexicon::score(std::string_view t) const {
    SentimentVector v;
    for (const auto& tok : text::tokenize(t)) {
        auto it = entries_.find(tok);
        if (it == entries_.end()) continue;
        v.polarity += it->second.first;
        v.subjectivity += it->second.second;
        ++v.hits;
    }
    if (v.hits) {
        v.polarity /= static_cast<double>(v.hits);
        v.subjectivity /= static_cast<double>(v.hits);
    }
    return v;
}

EmotionLexicon EmotionLexicon::from_lines(const std::vector<std::string>& lines) {
    EmotionLexicon lex;
    std::size_t n = 0;
    for (const auto& line : lines) {
        ++n;
        if (text::trim(line).empty() || text::trim(line)[0] == '#') continue;
        auto f = split_tabs(line);
        auto where = "emotion lexicon line " + std::to_string(n);
        if (f.size() != 2) throw ParseError(where + ": expected word and emotions");
        std::vector<std::size_t> ids;
        std::stringstream ss(f[1]);
        std::string e;
        while (std::getline(ss, e, ',')) {
            e = text::to_lower(text::trim(e));
            auto it = std::find(kEmotions.begin(), kEmotions.end(), e);
            if (it == kEmotions.end()) throw ParseError(where + ": unknown emotion '" + e + "'");
            ids.push_back(static_cast<std::size_t>(it - kEmotions.begin()));
        }
        if (ids.empty()) throw ParseError(where + ": no emotions");
        lex.entries_[text::to_lower(f[0])] = ids;
    }
    return lex;
}

EmotionLexicon EmotionLexicon::load(const std::string& path) {
    try {
        return from_lines(text::read_lines(path));
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

EmotionProfile EmotionLexicon::profile(std::string_view t) const {
    EmotionProfile p;
    double total = 0.0;
    for (const auto& tok : text::tokenize(t)) {
        auto it = entries_.find(tok);
        if (it == entries_.end()) continue;
        for (auto id : it->second) {
            p.weights[id] += 1.0;
            total += 1.0;
        }
    }
    if (total == 0.0) return p;
    p.all_zero = false;
    std::size_t best = 0;
    for (std::size_t i = 0; i < p.weights.size(); ++i) {
        p.weights[i] /= total;
        if (p.weights[i] > p.weights[best]) best = i;
    }
    p.dominant = kEmotions[best];
    return p;
}

// ---------------------------------------------------------------------------
// Grammar
// ---------------------------------------------------------------------------

Grammar Grammar::parse(std::string_view src) {
    Grammar g;
    std::istringstream in{std::string(src)};
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        std::vector<std::string> f;
        for (std::string w; ls >> w;) f.push_back(w);
        if (f.empty()) continue;
        auto where = "grammar line " + std::to_string(n);
        if (f[0] == "@lex") {
            if (f.size() < 3) throw ParseError(where + ": @lex needs a tag and words");
            for (std::size_t i = 2; i < f.size(); ++i) {
                auto& tags = g.lexicon_[text::to_lower(f[i])];
                if (std::find(tags.begin(), tags.end(), f[1]) == tags.end()) tags.push_back(f[1]);
            }
        } else if (f[0] == "@start") {
            if (f.size() != 2) throw ParseError(where + ": @start needs one symbol");
            g.start_ = f[1];
        } else if (f.size() >= 3 && f[1] == "->") {
            if (f.size() == 3) g.unary_.push_back({f[0], f[2]});
            else if (f.size() == 4) g.binary_.push_back({f[0], f[2], f[3]});
            else throw ParseError(where + ": productions take one or two right-hand symbols");
        } else {
            throw ParseError(where + ": cannot read '" + text::trim(line) + "'");
        }
    }
    if (g.binary_.empty() && g.unary_.empty()) throw ParseError("grammar has no productions");
    return g;
}

Grammar Grammar::load(const std::string& path) {
    try {
        return parse(text::read_file(path));
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

std::vector<std::string> Grammar::tags_of(const std::string& word) const {
    if (auto it = lexicon_.find(word); it != lexicon_.end()) return it->second;
    auto ends_with = [&word](std::string_view s) {
        return word.size() > s.size() && word.compare(word.size() - s.size(), s.size(), s) == 0;
    };
    if (!word.empty() && std::all_of(word.begin(), word.end(), [](unsigned char c) { return std::isdigit(c); }))
        return {"CD"};
    if (ends_with("ly")) return {"RB"};
    if (ends_with("ing")) return {"VBG"};
    if (ends_with("ed")) return {"VBD"};
    if (ends_with("s") && !ends_with("ss")) return {"NNS"};
    return {"NN"};
}

std::vector<std::string> Grammar::tag(const std::vector<std::string>& words) const {
    std::vector<std::string> out;
    for (const auto& w : words) out.push_back(tags_of(w).front());
    return out;
}

std::optional<std::vector<std::string>> Grammar::parse_productions(const std::vector<std::string>& words) const {
    const std::size_t n = words.size();
    if (n == 0) return std::nullopt;
    struct Back {
        int kind = 0;  // 0 leaf, 1 unary, 2 binary
        std::size_t split = 0;
        std::string a, b;
    };
    using Cell = std::map<std::string, Back>;
    std::vector<std::vector<Cell>> chart(n + 1, std::vector<Cell>(n + 1));

    auto close_unary = [this](Cell& cell) {
        for (bool changed = true; changed;) {
            changed = false;
            for (const auto& u : unary_) {
                if (cell.count(u.rhs) && !cell.count(u.lhs)) {
                    cell.emplace(u.lhs, Back{1, 0, u.rhs, {}});
                    changed = true;
                }
            }
        }
    };
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& t : tags_of(words[i])) chart[i][i + 1].emplace(t, Back{});
        close_unary(chart[i][i + 1]);
    }
    for (std::size_t len = 2; len <= n; ++len) {
        for (std::size_t i = 0; i + len <= n; ++i) {
            std::size_t j = i + len;
            auto& cell = chart[i][j];
            for (std::size_t k = i + 1; k < j; ++k) {
                const auto& left = chart[i][k];
                const auto& right = chart[k][j];
                if (left.empty() || right.empty()) continue;
                for (const auto& r : binary_) {
                    if (!cell.count(r.lhs) && left.count(r.left) && right.count(r.right))
                        cell.emplace(r.lhs, Back{2, k, r.left, r.right});
                }
            }
            close_unary(cell);
        }
    }
    if (!chart[0][n].count(start_)) return std::nullopt;

    std::vector<std::string> prods;
    std::vector<std::tuple<std::size_t, std::size_t, std::string>> stack{{0, n, start_}};
    while (!stack.empty()) {
        auto [i, j, sym] = stack.back();
        stack.pop_back();
        const auto& bp = chart[i][j].at(sym);
        if (bp.kind == 1) {
            prods.push_back(sym + " -> " + bp.a);
            stack.emplace_back(i, j, bp.a);
        } else if (bp.kind == 2) {
            prods.push_back(sym + " -> " + bp.a + " " + bp.b);
            stack.emplace_back(bp.split, j, bp.b);
            stack.emplace_back(i, bp.split, bp.a);
        }
    }
    return prods;
}

double multiset_jaccard(const std::map<std::string, int>& a, const std::map<std::string, int>& b) {
    if (a.empty() && b.empty()) return 1.0;
    double lo = 0.0, hi = 0.0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() || ib != b.end()) {
        if (ib == b.end() || (ia != a.end() && ia->first < ib->first)) {
            hi += ia->second;
            ++ia;
        } else if (ia == a.end() || ib->first < ia->first) {
            hi += ib->second;
            ++ib;
        } else {
            lo += std::min(ia->second, ib->second);
            hi += std::max(ia->second, ib->second);
            ++ia;
            ++ib;
        }
    }
    return hi == 0.0 ? 1.0 : lo / hi;
}

namespace {

std::map<std::string, int> syntax_items(std::string_view t, const Grammar& g, bool& fallback) {
    std::map<std::string, int> items;
    for (const auto& sentence : text::split_sentences(t)) {
        auto words = text::tokenize(sentence);
        if (words.empty()) continue;
        if (auto prods = g.parse_productions(words)) {
            for (const auto& p : *prods) ++items[p];
            continue;
        }
        fallback = true;
        auto tags = g.tag(words);
        if (tags.size() == 1) ++items["pos: " + tags[0]];
        for (std::size_t i = 0; i + 1 < tags.size(); ++i) ++items["pos: " + tags[i] + " " + tags[i + 1]];
    }
    return items;
}

}  // namespace

SyntaxOverlap syntax_overlap(std::string_view a, std::string_view b, const Grammar& grammar) {
    SyntaxOverlap r;
    auto ia = syntax_items(a, grammar, r.fallback);
    auto ib = syntax_items(b, grammar, r.fallback);
    r.value = multiset_jaccard(ia, ib);
    return r;
}

// ---------------------------------------------------------------------------
// Equity scores
// ---------------------------------------------------------------------------

MarginResult margin_from_similarities(double sim_a, double sim_not_a) {
    MarginResult m{sim_a, sim_not_a, 0.0, false};
    if (sim_a + sim_not_a == 0.0) {
        m.degenerate = true;
        return m;
    }
    m.margin = (sim_a - sim_not_a) / (sim_a + sim_not_a);
    return m;
}

double sentiment_similarity(const SentimentVector& a, const SentimentVector& b) {
    SparseVector va{{"p", (a.polarity + 1.0) / 2.0}, {"s", a.subjectivity}};
    SparseVector vb{{"p", (b.polarity + 1.0) / 2.0}, {"s", b.subjectivity}};
    return std::clamp(cosine(va, vb), 0.0, 1.0);
}

double text_similarity(std::string_view a, std::string_view b, const TfIdfIndex& index, const SimilarityModels& models,
                       const SimilarityWeights& w) {
    if (!models.grammar || !models.sentiment) throw ValidationError("similarity needs a grammar and a sentiment lexicon");
    double total = w.syntax + w.lexical + w.sentiment;
    if (!(total > 0.0) || w.syntax < 0 || w.lexical < 0 || w.sentiment < 0)
        throw ValidationError("similarity weights must be non-negative with a positive sum");
    double s = 0.0;
    if (w.syntax > 0) s += w.syntax * syntax_overlap(a, b, *models.grammar).value;
    if (w.lexical > 0) s += w.lexical * tfidf_cosine(a, b, index);
    if (w.sentiment > 0)
        s += w.sentiment * sentiment_similarity(models.sentiment->score(a), models.sentiment->score(b));
    return s / total;
}

MarginResult margin_score(const std::vector<std::string>& outputs_a, const std::vector<std::string>& refs_a,
                          const std::vector<std::string>& refs_not_a, const SimilarityModels& models,
                          const SimilarityWeights& weights) {
    if (outputs_a.empty() || refs_a.empty() || refs_not_a.empty())
        throw ValidationError("margin score needs non-empty output and reference sets");
    std::vector<std::vector<std::string>> docs;
    for (const auto* set : {&outputs_a, &refs_a, &refs_not_a})
        for (const auto& t : *set) docs.push_back(text::tokenize(t));
    TfIdfIndex index(docs);
    auto mean_sim = [&](const std::vector<std::string>& refs) {
        double sum = 0.0;
        for (const auto& o : outputs_a)
            for (const auto& r : refs) sum += text_similarity(o, r, index, models, weights);
        return sum / static_cast<double>(outputs_a.size() * refs.size());
    };
    return margin_from_similarities(mean_sim(refs_a), mean_sim(refs_not_a));
}

CentroidTagPredictor::CentroidTagPredictor(const std::vector<AnnotatedCall>& corpus,
                                           const std::vector<std::string>& tags) {
    std::vector<std::vector<std::string>> docs;
    for (const auto& c : corpus) docs.push_back(text::content_tokens(c.caller_text()));
    index_ = TfIdfIndex(docs);
    std::vector<SparseVector> vecs;
    for (const auto& d : docs) {
        auto v = index_.weigh(d);
        normalize_in_place(v);
        vecs.push_back(std::move(v));
    }
    for (const auto& tag : tags) {
        SparseVector with, without;
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            auto& target = corpus[i].labels().count(tag) ? with : without;
            for (const auto& [t, w] : vecs[i]) target[t] += w;
        }
        if (normalize_in_place(with) && normalize_in_place(without)) centroids_[tag] = {with, without};
    }
}

bool CentroidTagPredictor::predict(std::string_view text_in, const std::string& tag) const {
    auto it = centroids_.find(tag);
    if (it == centroids_.end()) throw ValidationError("no predictor for tag '" + tag + "'");
    auto q = index_.weigh(text::content_tokens(text_in));
    return cosine(q, it->second.first) > cosine(q, it->second.second);
}

TagAccuracyResult tag_accuracy(const std::vector<TaggedText>& calls, const std::vector<std::string>& tags,
                               const TagPredictor& predictor) {
    if (calls.empty()) throw ValidationError("tag accuracy needs at least one call");
    if (tags.empty()) throw ValidationError("tag accuracy needs at least one tag");
    for (const auto& t : tags)
        if (!predictor.supports(t)) throw ValidationError("predictor has no model for tag '" + t + "'");
    TagAccuracyResult r;
    double sum = 0.0;
    for (const auto& call : calls) {
        std::vector<bool> row;
        std::size_t right = 0;
        for (const auto& t : tags) {
            bool c = predictor.predict(call.text, t);
            row.push_back(c);
            right += c == (call.truth.count(t) > 0) ? 1 : 0;
        }
        double acc = static_cast<double>(right) / static_cast<double>(tags.size());
        r.per_call.push_back(acc);
        r.predictions.push_back(std::move(row));
        sum += acc;
    }
    r.overall = sum / static_cast<double>(calls.size());
    return r;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

std::string format_metric_report(const std::vector<MetricRow>& rows) {
    std::string out = "metric\tvalue\tstddev\n";
    char buf[64];
    for (const auto& r : rows) {
        out += r.metric;
        std::snprintf(buf, sizeof buf, "\t%.6f\t", r.value);
        out += buf;
        if (r.stddev) {
            std::snprintf(buf, sizeof buf, "%.6f", *r.stddev);
            out += buf;
        }
        out += "\n";
    }
    return out;
}

MeanStd mean_std(const std::vector<double>& values) {
    MeanStd r;
    if (values.empty()) return r;
    for (double v : values) r.mean += v;
    r.mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - r.mean) * (v - r.mean);
    r.stddev = std::sqrt(var / static_cast<double>(values.size()));
    return r;
}

}  // namespace callsim
