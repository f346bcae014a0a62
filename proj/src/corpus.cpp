#include "callsim/corpus.hpp"

#include "callsim/error.hpp"
#include "callsim/text.hpp"

#include <algorithm>
#include <sstream>

namespace callsim {

using nlohmann::json;

std::string_view to_string(Speaker s) {
    return s == Speaker::caller ? "caller" : "calltaker";
}

Speaker speaker_from_string(std::string_view s) {
    auto n = text::normalize_label(s);
    if (n == "caller") return Speaker::caller;
    if (n == "calltaker" || n == "call-taker" || n == "dispatcher" || n == "trainee") return Speaker::calltaker;
    throw ParseError("unknown speaker: " + std::string(s));
}

std::string_view to_string(LabelFamily f) {
    switch (f) {
        case LabelFamily::incident_type: return "incident_type";
        case LabelFamily::scenario_context: return "scenario_context";
        case LabelFamily::special_request: return "special_request";
        case LabelFamily::age: return "age";
        case LabelFamily::emotion: return "emotion";
        case LabelFamily::vulnerable: return "vulnerable";
    }
    return "unknown";
}

namespace {

std::vector<std::string> read_family(const json& parent, const char* key, const char* where) {
    if (!parent.is_object() || !parent.contains(key)) {
        throw ParseError(std::string("taxonomy is missing required family '") + where + "'");
    }
    const auto& arr = parent.at(key);
    if (!arr.is_array()) throw ParseError(std::string("taxonomy family '") + where + "' must be an array");
    std::vector<std::string> out;
    for (const auto& v : arr) {
        if (!v.is_string()) throw ParseError(std::string("non-string label in '") + where + "'");
        auto label = text::normalize_label(v.get<std::string>());
        if (label.empty()) throw ParseError(std::string("empty label in '") + where + "'");
        out.push_back(std::move(label));
    }
    return out;
}

}  // namespace

TagTaxonomy TagTaxonomy::from_json(const json& j) {
    if (!j.is_object()) throw ParseError("taxonomy must be a JSON object");
    TagTaxonomy t;
    t.incident_types_ = read_family(j, "incident_types", "incident_types");
    t.scenario_contexts_ = read_family(j, "scenario_contexts", "scenario_contexts");
    t.special_requests_ = read_family(j, "special_requests", "special_requests");
    if (!j.contains("ci_general")) throw ParseError("taxonomy is missing required family 'ci_general'");
    t.ages_ = read_family(j.at("ci_general"), "age", "ci_general.age");
    t.emotions_ = read_family(j.at("ci_general"), "emotion", "ci_general.emotion");
    t.vulnerable_ = read_family(j, "ci_vulnerable", "ci_vulnerable");

    if (t.incident_types_.empty()) throw ParseError("taxonomy needs at least one incident type");
    if (t.ages_.empty()) throw ParseError("taxonomy needs at least one age label");
    if (t.emotions_.empty()) throw ParseError("taxonomy needs at least one emotion label");

    auto register_family = [&t](const std::vector<std::string>& labels, LabelFamily fam) {
        for (const auto& l : labels) {
            auto [it, inserted] = t.family_.emplace(l, fam);
            if (!inserted) {
                throw TagError(l, "duplicate label '" + l + "' in " + std::string(to_string(it->second)) + " and " +
                                      std::string(to_string(fam)));
            }
        }
    };
    register_family(t.incident_types_, LabelFamily::incident_type);
    register_family(t.scenario_contexts_, LabelFamily::scenario_context);
    register_family(t.special_requests_, LabelFamily::special_request);
    register_family(t.ages_, LabelFamily::age);
    register_family(t.emotions_, LabelFamily::emotion);
    register_family(t.vulnerable_, LabelFamily::vulnerable);

    for (const auto& a : t.ages_) {
        if (std::find(canonical_ages().begin(), canonical_ages().end(), a) == canonical_ages().end())
            throw TagError(a, "age label '" + a + "' is not one of kid, teenager, adult, senior");
    }
    for (const auto& e : t.emotions_) {
        if (std::find(canonical_emotions().begin(), canonical_emotions().end(), e) == canonical_emotions().end())
            throw TagError(e, "emotion label '" + e + "' is not one of sad, calm, neutral, anxious, angry, irrational");
    }
    for (const auto& v : required_vulnerable_labels()) {
        if (std::find(t.vulnerable_.begin(), t.vulnerable_.end(), v) == t.vulnerable_.end())
            throw TagError(v, "taxonomy is missing required vulnerable-group label '" + v + "'");
    }
    return t;
}

TagTaxonomy TagTaxonomy::load(const std::string& path) {
    json j;
    try {
        j = json::parse(text::read_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError("taxonomy " + path + ": " + e.what());
    }
    return from_json(j);
}

json TagTaxonomy::to_json() const {
    return json{{"incident_types", incident_types_},
                {"scenario_contexts", scenario_contexts_},
                {"special_requests", special_requests_},
                {"ci_general", {{"age", ages_}, {"emotion", emotions_}}},
                {"ci_vulnerable", vulnerable_}};
}

std::optional<LabelFamily> TagTaxonomy::family_of(std::string_view label) const {
    auto it = family_.find(text::normalize_label(label));
    if (it == family_.end()) return std::nullopt;
    return it->second;
}

Sensitivity TagTaxonomy::sensitivity(std::string_view label) const {
    auto fam = family_of(label);
    if (!fam) throw TagError(std::string(label), "unknown tag label '" + std::string(label) + "'");
    return *fam == LabelFamily::vulnerable ? Sensitivity::sensitive : Sensitivity::general;
}

std::vector<std::string> TagTaxonomy::sensitive_labels() const { return vulnerable_; }

std::string TagTaxonomy::resolve(std::string_view raw, LabelFamily expected) const {
    auto label = text::normalize_label(raw);
    auto fam = family_of(label);
    if (!fam) throw TagError(label, "unknown tag label '" + label + "'");
    if (*fam != expected) {
        throw TagError(label, "label '" + label + "' is a " + std::string(to_string(*fam)) + ", expected " +
                                  std::string(to_string(expected)));
    }
    return label;
}

std::string TagTaxonomy::resolve_any(std::string_view raw) const {
    auto label = text::normalize_label(raw);
    if (!contains(label)) throw TagError(label, "unknown tag label '" + label + "'");
    return label;
}

LabelSet AnnotatedCall::incident_labels() const {
    LabelSet out{is.incident_type};
    out.insert(is.scenario_contexts.begin(), is.scenario_contexts.end());
    out.insert(is.special_requests.begin(), is.special_requests.end());
    return out;
}

LabelSet AnnotatedCall::caller_image_labels() const {
    LabelSet out{ci.age, ci.emotion};
    out.insert(ci.vulnerable.begin(), ci.vulnerable.end());
    return out;
}

LabelSet AnnotatedCall::labels() const {
    auto out = incident_labels();
    auto c = caller_image_labels();
    out.insert(c.begin(), c.end());
    return out;
}

std::string AnnotatedCall::caller_text() const {
    std::vector<std::string> parts;
    for (const auto& t : turns)
        if (t.speaker == Speaker::caller) parts.push_back(t.text);
    return text::join(parts, " ");
}

std::string AnnotatedCall::full_text() const {
    std::vector<std::string> parts;
    for (const auto& t : turns) parts.push_back(t.text);
    return text::join(parts, " ");
}

namespace {

LabelSet resolve_list(const json& j, const char* key, LabelFamily fam, const TagTaxonomy& taxonomy) {
    LabelSet out;
    if (!j.contains(key)) return out;
    const auto& arr = j.at(key);
    if (!arr.is_array()) throw ParseError(std::string("'") + key + "' must be an array");
    for (const auto& v : arr) {
        if (!v.is_string()) throw ParseError(std::string("'") + key + "' must hold strings");
        out.insert(taxonomy.resolve(v.get<std::string>(), fam));
    }
    return out;
}

std::string required_string(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key) || !j.at(key).is_string())
        throw ParseError(std::string("missing string field '") + key + "'");
    return j.at(key).get<std::string>();
}

}  // namespace

IncidentSpecification resolve_incident(const json& j, const TagTaxonomy& taxonomy) {
    if (!j.is_object()) throw ParseError("'is' must be an object");
    IncidentSpecification is;
    is.incident_type = taxonomy.resolve(required_string(j, "incident_type"), LabelFamily::incident_type);
    is.scenario_contexts = resolve_list(j, "scenario_contexts", LabelFamily::scenario_context, taxonomy);
    is.special_requests = resolve_list(j, "special_requests", LabelFamily::special_request, taxonomy);
    return is;
}

CallerImage resolve_caller_image(const json& j, const TagTaxonomy& taxonomy) {
    if (!j.is_object()) throw ParseError("'ci' must be an object");
    CallerImage ci;
    ci.age = taxonomy.resolve(required_string(j, "age"), LabelFamily::age);
    ci.emotion = taxonomy.resolve(required_string(j, "emotion"), LabelFamily::emotion);
    ci.vulnerable = resolve_list(j, "vulnerable", LabelFamily::vulnerable, taxonomy);
    return ci;
}

json to_json(const IncidentSpecification& is) {
    return json{{"incident_type", is.incident_type},
                {"scenario_contexts", is.scenario_contexts},
                {"special_requests", is.special_requests}};
}

json to_json(const CallerImage& ci) {
    return json{{"age", ci.age}, {"emotion", ci.emotion}, {"vulnerable", ci.vulnerable}};
}

json to_json(const Turn& t) {
    return json{{"speaker", to_string(t.speaker)}, {"text", t.text}};
}

json to_json(const AnnotatedCall& call) {
    json turns = json::array();
    for (const auto& t : call.turns) turns.push_back(to_json(t));
    return json{{"id", call.id}, {"turns", turns}, {"is", to_json(call.is)}, {"ci", to_json(call.ci)}};
}

AnnotatedCall parse_call(const json& record, const TagTaxonomy& taxonomy, std::size_t line_no) {
    std::string where = line_no ? " (line " + std::to_string(line_no) + ")" : "";
    if (!record.is_object()) throw ParseError("corpus record is not an object" + where);
    AnnotatedCall call;
    try {
        call.id = required_string(record, "id");
    } catch (const ParseError& e) {
        throw ParseError(std::string(e.what()) + where);
    }
    if (text::trim(call.id).empty()) throw ParseError("empty call id" + where);
    where = " in record '" + call.id + "'" + where;
    try {
        if (!record.contains("turns") || !record.at("turns").is_array())
            throw ParseError("missing 'turns' array");
        for (const auto& jt : record.at("turns")) {
            Turn t;
            t.speaker = speaker_from_string(required_string(jt, "speaker"));
            t.text = text::trim(required_string(jt, "text"));
            if (t.text.empty()) throw ParseError("turn " + std::to_string(call.turns.size()) + " has empty text");
            t.index = call.turns.size();
            call.turns.push_back(std::move(t));
        }
        if (call.turns.empty()) throw ParseError("empty turn list");
        if (std::none_of(call.turns.begin(), call.turns.end(), [](const Turn& t) { return t.speaker == Speaker::caller; }))
            throw ParseError("call has no caller turn");
        if (!record.contains("is")) throw ParseError("missing 'is'");
        if (!record.contains("ci")) throw ParseError("missing 'ci'");
        call.is = resolve_incident(record.at("is"), taxonomy);
        call.ci = resolve_caller_image(record.at("ci"), taxonomy);
    } catch (const TagError& e) {
        throw TagError(e.label(), std::string(e.what()) + where);
    } catch (const ParseError& e) {
        throw ParseError(std::string(e.what()) + where);
    }
    return call;
}

std::vector<AnnotatedCall> parse_corpus_text(std::string_view jsonl, const TagTaxonomy& taxonomy) {
    std::vector<AnnotatedCall> out;
    std::istringstream in{std::string(jsonl)};
    std::string line;
    std::size_t line_no = 0;
    std::set<std::string> ids;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError("malformed record (line " + std::to_string(line_no) + "): " + e.what());
        }
        auto call = parse_call(record, taxonomy, line_no);
        if (!ids.insert(call.id).second) throw ParseError("duplicate call id '" + call.id + "'");
        out.push_back(std::move(call));
    }
    return out;
}

std::vector<AnnotatedCall> parse_corpus(const std::string& path, const TagTaxonomy& taxonomy) {
    return parse_corpus_text(text::read_file(path), taxonomy);
}

std::string serialize_corpus(const std::vector<AnnotatedCall>& calls) {
    std::string out;
    for (const auto& c : calls) {
        out += to_json(c).dump();
        out += '\n';
    }
    return out;
}

LabelSet resolve_labels(const LabelSet& tags, const TagTaxonomy& taxonomy) {
    LabelSet out;
    for (const auto& t : tags) out.insert(taxonomy.resolve_any(t));
    return out;
}

std::vector<AnnotatedCall> filter_calls(const std::vector<AnnotatedCall>& corpus, const LabelSet& tags,
                                        const TagTaxonomy& taxonomy) {
    auto wanted = resolve_labels(tags, taxonomy);
    std::vector<AnnotatedCall> out;
    for (const auto& call : corpus) {
        auto labels = call.labels();
        if (std::includes(labels.begin(), labels.end(), wanted.begin(), wanted.end())) out.push_back(call);
    }
    return out;
}

}  // namespace callsim
