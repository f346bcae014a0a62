#include "callsim/copilot.hpp"

#include "callsim/error.hpp"
#include "callsim/text.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace callsim {

using nlohmann::json;

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Content tokens without bare numbers; house numbers and times say nothing
// about the incident type.
std::vector<std::string> features(std::string_view text) {
    auto tokens = text::content_tokens(text);
    std::erase_if(tokens, [](const std::string& t) {
        return std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isdigit(c); });
    });
    return tokens;
}

}  // namespace

CentroidModel CentroidModel::train(const std::vector<AnnotatedCall>& corpus) {
    if (corpus.empty()) throw ValidationError("cannot train a classifier on an empty corpus");
    std::vector<std::vector<std::string>> docs;
    std::uint64_t fp = text::fnv1a("");
    for (const auto& call : corpus) {
        if (call.is.incident_type.empty()) throw ValidationError("call '" + call.id + "' has no incident type");
        docs.push_back(features(call.full_text()));
        fp = text::fnv1a(call.id, fp);
        fp = text::fnv1a(call.is.incident_type, fp);
        fp = text::fnv1a(call.full_text(), fp);
    }
    CentroidModel m;
    m.index_ = TfIdfIndex(docs);
    m.fingerprint_ = fp;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        auto v = m.index_.weigh(docs[i]);
        auto& centroid = m.centroids_[corpus[i].is.incident_type];
        if (!normalize_in_place(v)) continue;
        for (const auto& [t, w] : v) centroid[t] += w;
    }
    for (auto& [label, c] : m.centroids_) {
        if (!normalize_in_place(c))
            throw ValidationError("incident type '" + label + "' has no usable tokens in the training corpus");
    }
    return m;
}

std::map<std::string, double> CentroidModel::scores(std::string_view text) const {
    auto q = index_.weigh(features(text));
    std::map<std::string, double> out;
    for (const auto& [label, c] : centroids_) out[label] = cosine(q, c);
    return out;
}

Classification CentroidModel::classify_text(std::string_view text) const {
    Classification best;
    bool first = true;
    for (const auto& [label, score] : scores(text)) {
        if (first || score > best.confidence) {
            best = {label, score};
            first = false;
        }
    }
    best.confidence = std::clamp(best.confidence, 0.0, 1.0);
    return best;
}

Classification CentroidModel::classify(std::span<const Turn> turns) const {
    if (turns.empty()) throw ValidationError("classify: empty turn list");
    std::vector<std::string> parts;
    for (const auto& t : turns) parts.push_back(t.text);
    return classify_text(text::join(parts, " "));
}

std::string CentroidModel::serialize() const {
    std::ostringstream out;
    char fp[32];
    std::snprintf(fp, sizeof fp, "%016llx", static_cast<unsigned long long>(fingerprint_));
    out << "callsim-centroid-model 1\n";
    out << "fingerprint " << fp << "\n";
    out << "documents " << index_.document_count() << "\n";
    out << "vocabulary " << index_.vocabulary_size() << "\n";
    for (const auto& [term, df] : index_.document_frequencies()) out << term << '\t' << df << '\n';
    out << "centroids " << centroids_.size() << "\n";
    for (const auto& [label, c] : centroids_) {
        out << label << '\t';
        bool first = true;
        for (const auto& [term, w] : c) {
            if (!first) out << ' ';
            out << term << ':' << fmt_double(w);
            first = false;
        }
        out << '\n';
    }
    return out.str();
}

CentroidModel CentroidModel::parse(std::string_view serialized) {
    std::istringstream in{std::string(serialized)};
    std::string line;
    auto expect = [&](const std::string& key) -> std::string {
        if (!std::getline(in, line) || line.rfind(key + " ", 0) != 0)
            throw ParseError("centroid model: expected '" + key + "'");
        return line.substr(key.size() + 1);
    };
    if (expect("callsim-centroid-model") != "1") throw ParseError("centroid model: unsupported version");
    CentroidModel m;
    m.fingerprint_ = std::stoull(expect("fingerprint"), nullptr, 16);
    auto n_docs = std::stoull(expect("documents"));
    auto n_vocab = std::stoull(expect("vocabulary"));
    std::map<std::string, std::size_t> df;
    for (std::size_t i = 0; i < n_vocab; ++i) {
        if (!std::getline(in, line)) throw ParseError("centroid model: truncated vocabulary");
        auto tab = line.find('\t');
        if (tab == std::string::npos) throw ParseError("centroid model: bad vocabulary row");
        df[line.substr(0, tab)] = std::stoull(line.substr(tab + 1));
    }
    m.index_ = TfIdfIndex::from_table(n_docs, std::move(df));
    auto n_labels = std::stoull(expect("centroids"));
    for (std::size_t i = 0; i < n_labels; ++i) {
        if (!std::getline(in, line)) throw ParseError("centroid model: truncated centroids");
        auto tab = line.find('\t');
        if (tab == std::string::npos) throw ParseError("centroid model: bad centroid row");
        auto& c = m.centroids_[line.substr(0, tab)];
        std::istringstream row(line.substr(tab + 1));
        std::string cell;
        while (row >> cell) {
            auto colon = cell.rfind(':');
            if (colon == std::string::npos) throw ParseError("centroid model: bad centroid cell");
            c[cell.substr(0, colon)] = std::stod(cell.substr(colon + 1));
        }
    }
    return m;
}

CentroidModel CentroidModel::load(const std::string& path) { return parse(text::read_file(path)); }

void CentroidModel::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write model file: " + path);
    out << serialize();
}

// ---------------------------------------------------------------------------

namespace {

const char* kAddressPattern =
    R"(\b\d{1,6}[A-Za-z]?(?:\s+(?:[A-Z][A-Za-z'.-]*|\d+(?:st|nd|rd|th)))+)"
    R"((?:,?\s+(?:Apartment|Apt\.?|Unit|Suite|Ste\.?)\s*#?\s*[A-Za-z0-9-]+)?)";
const char* kPhonePattern = R"(\b\d{3}-\d{3}-\d{4}\b|\b\d{3}-\d{4}\b)";
const char* kNamePattern = R"((?:[Mm]y name is|I'm|I am|[Tt]his is)\s+([A-Z][a-z]+(?:[ -][A-Z][a-z]+)*))";

struct Span {
    std::size_t pos;
    std::size_t len;
};

Span trim_trailing_punct(const std::string& s, Span sp) {
    while (sp.len > 0) {
        char c = s[sp.pos + sp.len - 1];
        if (c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?' || c == '\'' || c == '-' || c == ' ')
            --sp.len;
        else
            break;
    }
    return sp;
}

}  // namespace

LexicalAnswerer::LexicalAnswerer() {
    register_question("address", {kAddressPattern});
    register_question("phone", {kPhonePattern});
    register_question("name", {kNamePattern});
}

void LexicalAnswerer::register_question(const std::string& id, const std::vector<std::string>& patterns) {
    std::vector<Pattern> compiled;
    for (const auto& p : patterns) {
        try {
            compiled.push_back({p, std::regex(p, std::regex::ECMAScript)});
        } catch (const std::regex_error& e) {
            throw ParseError("question '" + id + "': bad pattern '" + p + "': " + e.what());
        }
    }
    questions_[id] = std::move(compiled);
}

LexicalAnswerer LexicalAnswerer::from_json(const json& j) {
    LexicalAnswerer a;
    if (!j.is_object() || !j.contains("questions") || !j.at("questions").is_object())
        throw ParseError("question registry needs a 'questions' object");
    for (const auto& [id, patterns] : j.at("questions").items()) {
        a.register_question(id, patterns.get<std::vector<std::string>>());
    }
    return a;
}

LexicalAnswerer LexicalAnswerer::load(const std::string& path) {
    try {
        return from_json(json::parse(text::read_file(path)));
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

bool LexicalAnswerer::supports(const std::string& question_id) const { return questions_.count(question_id) != 0; }

ExtractedAnswer LexicalAnswerer::answer(const Turn& turn, const std::string& question_id) const {
    auto it = questions_.find(question_id);
    if (it == questions_.end()) throw ValidationError("unregistered question id '" + question_id + "'");
    const std::string& s = turn.text;

    std::vector<Span> matches;
    for (const auto& p : it->second) {
        for (auto m = std::sregex_iterator(s.begin(), s.end(), p.re); m != std::sregex_iterator(); ++m) {
            const auto& group = (m->size() > 1 && (*m)[1].matched) ? (*m)[1] : (*m)[0];
            Span sp{static_cast<std::size_t>(group.first - s.begin()), static_cast<std::size_t>(group.length())};
            sp = trim_trailing_punct(s, sp);
            if (sp.len > 0) matches.push_back(sp);
        }
    }
    if (matches.empty()) return {};

    auto longest = [](const std::vector<Span>& v) {
        Span best = v.front();
        for (const auto& sp : v)
            if (sp.len > best.len || (sp.len == best.len && sp.pos < best.pos)) best = sp;
        return best;
    };

    if (question_id == kAddressQuestion && gazetteer_) {
        std::vector<Span> resolving;
        for (const auto& sp : matches) {
            // Try the match and each shorter word-prefix of at least two words.
            Span cur = sp;
            while (cur.len > 0) {
                if (gazetteer_->lookup(s.substr(cur.pos, cur.len)).matched) {
                    resolving.push_back(cur);
                    break;
                }
                auto cut = s.find_last_of(" ,", cur.pos + cur.len - 1);
                if (cut == std::string::npos || cut <= cur.pos) break;
                cur = trim_trailing_punct(s, Span{cur.pos, cut - cur.pos});
                if (s.substr(cur.pos, cur.len).find(' ') == std::string::npos) break;
            }
        }
        if (!resolving.empty()) {
            auto best = longest(resolving);
            return {true, s.substr(best.pos, best.len)};
        }
    }
    auto best = longest(matches);
    return {true, s.substr(best.pos, best.len)};
}

}  // namespace callsim
