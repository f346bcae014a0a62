#include "callsim/generation.hpp"

#include "callsim/error.hpp"
#include "callsim/text.hpp"

#include <algorithm>
#include <random>
#include <sstream>

namespace callsim {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Instructions and ablations
// ---------------------------------------------------------------------------

LabelSet SimulationInstruction::incident_labels() const {
    LabelSet out{is.incident_type};
    out.insert(is.scenario_contexts.begin(), is.scenario_contexts.end());
    out.insert(is.special_requests.begin(), is.special_requests.end());
    return out;
}

LabelSet SimulationInstruction::caller_image_labels() const {
    LabelSet out{ci.age, ci.emotion};
    out.insert(ci.vulnerable.begin(), ci.vulnerable.end());
    return out;
}

LabelSet SimulationInstruction::labels() const {
    auto out = incident_labels();
    auto c = caller_image_labels();
    out.insert(c.begin(), c.end());
    return out;
}

SimulationInstruction parse_instruction(const json& j, const TagTaxonomy& taxonomy) {
    if (!j.is_object()) throw ParseError("instruction must be a JSON object");
    if (!j.contains("is")) throw ParseError("instruction lacks 'is'");
    if (!j.contains("ci")) throw ParseError("instruction lacks 'ci'");
    SimulationInstruction in;
    in.is = resolve_incident(j.at("is"), taxonomy);
    in.ci = resolve_caller_image(j.at("ci"), taxonomy);
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned() && !j.at("seed").is_number_integer())
            throw ParseError("instruction 'seed' must be a non-negative integer");
        in.seed = j.at("seed").get<std::uint64_t>();
    }
    if (j.contains("reference_id")) in.reference_id = j.at("reference_id").get<std::string>();
    return in;
}

json to_json(const SimulationInstruction& in) {
    json j{{"is", to_json(in.is)}, {"ci", to_json(in.ci)}, {"seed", in.seed}};
    if (!in.reference_id.empty()) j["reference_id"] = in.reference_id;
    return j;
}

void validate_instruction(const SimulationInstruction& in, const TagTaxonomy& taxonomy) {
    auto check = [&](const std::string& label, LabelFamily family) {
        if (taxonomy.resolve(label, family) != label)
            throw TagError(label, "label '" + label + "' is not in normalized form");
    };
    check(in.is.incident_type, LabelFamily::incident_type);
    for (const auto& l : in.is.scenario_contexts) check(l, LabelFamily::scenario_context);
    for (const auto& l : in.is.special_requests) check(l, LabelFamily::special_request);
    check(in.ci.age, LabelFamily::age);
    check(in.ci.emotion, LabelFamily::emotion);
    for (const auto& l : in.ci.vulnerable) check(l, LabelFamily::vulnerable);
}

AblationSet AblationSet::parse(const std::vector<std::string>& flags) {
    AblationSet a;
    for (const auto& raw : flags) {
        auto f = text::to_lower(text::trim(raw));
        for (std::string prefix : {"\xc2\xac", "!", "-", "no-", "no_"}) {
            if (f.rfind(prefix, 0) == 0) {
                f = f.substr(prefix.size());
                break;
            }
        }
        if (f == "kc") a.kc = true;
        else if (f == "cot") a.cot = true;
        else if (f == "fsp") a.fsp = true;
        else if (f == "rag") a.rag = true;
        else if (f == "vlc") a.vlc = true;
        else if (f == "all") a = all();
        else if (f == "full" || f == "none" || f.empty()) continue;
        else throw ValidationError("unknown ablation flag '" + raw + "'");
    }
    return a;
}

std::vector<std::string> AblationSet::flags() const {
    if (is_all()) return {"All"};
    std::vector<std::string> out;
    if (kc) out.push_back("KC");
    if (cot) out.push_back("CoT");
    if (fsp) out.push_back("FSP");
    if (rag) out.push_back("RAG");
    if (vlc) out.push_back("VLC");
    return out;
}

std::string AblationSet::name() const {
    auto f = flags();
    if (f.empty()) return "full";
    std::string out;
    for (const auto& x : f) {
        if (!out.empty()) out += "+";
        out += "\xc2\xac" + x;
    }
    return out;
}

std::vector<AblationSet> standard_ablations() {
    std::vector<AblationSet> rows{AblationSet::none()};
    for (std::string f : {"KC", "CoT", "FSP", "RAG", "VLC", "All"}) rows.push_back(AblationSet::parse({f}));
    return rows;
}

// ---------------------------------------------------------------------------
// Profiles
// ---------------------------------------------------------------------------

std::string BackendProfile::key() const { return is_default() ? "default" : age + "/" + emotion; }

namespace {

BackendProfile parse_profile(const json& j, bool keyed) {
    if (!j.is_object()) throw ParseError("profile must be an object");
    BackendProfile p;
    if (keyed) {
        if (!j.contains("age") || !j.contains("emotion")) throw ParseError("profile needs 'age' and 'emotion'");
        p.age = text::normalize_label(j.at("age").get<std::string>());
        p.emotion = text::normalize_label(j.at("emotion").get<std::string>());
        if (p.age.empty() || p.emotion.empty()) throw ParseError("profile age and emotion must be non-empty");
    }
    p.persona = j.value("persona", std::string());
    p.params.temperature = j.value("temperature", 0.0);
    p.params.max_tokens = j.value("max_tokens", 160);
    if (p.params.max_tokens < 1) throw ParseError("profile max_tokens must be positive");
    return p;
}

}  // namespace

ProfileSet ProfileSet::from_json(const json& j) {
    if (!j.is_object() || !j.contains("default")) throw ParseError("profile set needs a 'default' profile");
    ProfileSet s;
    s.default_ = parse_profile(j.at("default"), false);
    if (j.contains("profiles")) {
        for (const auto& pj : j.at("profiles")) {
            auto p = parse_profile(pj, true);
            auto key = std::make_pair(p.age, p.emotion);
            if (s.profiles_.count(key)) throw ParseError("duplicate profile for " + p.key());
            s.profiles_.emplace(key, std::move(p));
        }
    }
    return s;
}

ProfileSet ProfileSet::load(const std::string& path) {
    try {
        return from_json(json::parse(text::read_file(path)));
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

const BackendProfile* ProfileSet::find(const std::string& age, const std::string& emotion) const {
    auto it = profiles_.find({age, emotion});
    return it == profiles_.end() ? nullptr : &it->second;
}

const BackendProfile& select_backend(const CallerImage& ci, const ProfileSet& profiles) {
    if (const auto* p = profiles.find(ci.age, ci.emotion)) return *p;
    return profiles.default_profile();
}

// ---------------------------------------------------------------------------
// Paraphrases
// ---------------------------------------------------------------------------

ParaphraseTable ParaphraseTable::defaults() {
    ParaphraseTable t;
    t.entries_ = {
        {"unhoused", "has no fixed place to stay and tends to describe locations by nearby landmarks"},
        {"mental health", "is under heavy stress, may repeat themselves and lose track of questions"},
        {"non-native speaker", "speaks limited English, uses short sentences with occasional grammar slips"},
        {"low-income housing area", "lives in a crowded apartment building with shared hallways and entrances"},
    };
    return t;
}

ParaphraseTable ParaphraseTable::from_json(const json& j) {
    if (!j.is_object()) throw ParseError("paraphrase table must be a JSON object");
    ParaphraseTable t;
    for (const auto& [label, desc] : j.items()) {
        if (!label.empty() && label.front() == '_') continue;
        if (!desc.is_string()) throw ParseError("paraphrase for '" + label + "' must be a string");
        t.entries_[text::normalize_label(label)] = desc.get<std::string>();
    }
    return t;
}

ParaphraseTable ParaphraseTable::load(const std::string& path) {
    try {
        return from_json(json::parse(text::read_file(path)));
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

void ParaphraseTable::validate(const TagTaxonomy& taxonomy) const {
    auto sensitive = taxonomy.sensitive_labels();
    for (const auto& label : sensitive) {
        auto it = entries_.find(label);
        if (it == entries_.end() || text::trim(it->second).empty())
            throw ValidationError("no paraphrase for sensitive label '" + label + "'");
    }
    for (const auto& [label, desc] : entries_) {
        auto lowered = text::to_lower(desc);
        for (const auto& s : sensitive) {
            if (lowered.find(s) != std::string::npos)
                throw ValidationError("paraphrase for '" + label + "' contains the sensitive label '" + s + "'");
        }
    }
}

const std::string& ParaphraseTable::describe(const std::string& label) const {
    auto it = entries_.find(label);
    if (it == entries_.end()) throw NotFoundError("no paraphrase for '" + label + "'");
    return it->second;
}

// ---------------------------------------------------------------------------
// Prompt assembly
// ---------------------------------------------------------------------------

namespace {

std::string join_labels(const LabelSet& s) {
    return text::join(std::vector<std::string>(s.begin(), s.end()), ", ");
}

std::string article_for(const std::string& word) {
    if (word.empty()) return "a";
    return std::string("aeiou").find(word.front()) != std::string::npos ? "an" : "a";
}

std::vector<RetrievalHit> retrieve_for(const SimulationInstruction& in, const KnowledgeSet& k, std::size_t n) {
    auto tags = in.incident_labels();
    std::string query = join_labels(tags);
    auto hits = retrieve(k.retrievable, tags, query, n, k.taxonomy);
    if (hits.empty()) hits = retrieve(k.retrievable, LabelSet{in.is.incident_type}, query, n, k.taxonomy);
    return hits;
}

std::string render_fact_context(const SimulationInstruction& in, const KnowledgeSet& k, const PromptOptions& opt,
                                PromptBundle& b) {
    std::ostringstream out;
    auto hits = retrieve_for(in, k, std::max<std::size_t>(opt.retrieval_k, 1));
    out << "Excerpts from past calls of this kind:\n";
    if (hits.empty()) out << "- (none on file)\n";
    for (const auto& h : hits) {
        b.retrieved_call_ids.push_back(h.entry->call_id);
        const auto& ex = h.entry->excerpts;
        std::vector<std::string> parts(ex.begin(), ex.begin() + static_cast<long>(std::min<std::size_t>(2, ex.size())));
        out << "- [" << h.entry->call_id << "] " << text::join(parts, " ") << "\n";
    }

    if (k.protocols.has(in.is.incident_type)) {
        const auto& tree = k.protocols.tree(in.is.incident_type);
        out << "Questions the dispatcher is likely to ask:\n";
        for (const auto& id : tree.preorder()) {
            b.protocol_questions.push_back(tree.node(id).question);
            out << "- " << tree.node(id).question << "\n";
        }
    } else {
        out << "No dispatcher protocol is on file for " << in.is.incident_type << ".\n";
    }

    const auto& forms = k.gazetteer.display_forms();
    if (!forms.empty()) {
        std::size_t n = std::min(opt.address_count, forms.size());
        std::size_t start = static_cast<std::size_t>(in.seed % forms.size());
        for (std::size_t i = 0; i < n; ++i) b.valid_addresses.push_back(forms[(start + i) % forms.size()]);
        out << "When asked for the location, give exactly one of these verified addresses:\n";
        for (const auto& a : b.valid_addresses) out << "- " << a << "\n";
        for (const auto& a : b.valid_addresses) {
            if (!k.connectivity.has_node(a)) continue;
            auto near = k.connectivity.neighbors(a);
            if (near.empty()) continue;
            out << "Near " << a << ":";
            for (std::size_t i = 0; i < near.size(); ++i)
                out << (i ? "; " : " ") << near[i].node << (near[i].label.empty() ? "" : " (" + near[i].label + ")");
            out << "\n";
        }
    } else {
        out << "No verified address list is available.\n";
    }
    return out.str();
}

std::string render_task(const SimulationInstruction& in, const ParaphraseTable& para) {
    std::ostringstream out;
    out << "You are the caller in a 9-1-1 training call. Work through these steps before every reply.\n";
    int step = 1;
    out << "Step " << step++ << ". The emergency you are reporting is " << article_for(in.is.incident_type) << " "
        << in.is.incident_type << ".\n";
    if (!in.is.scenario_contexts.empty())
        out << "Step " << step++ << ". Circumstances to weave in: " << join_labels(in.is.scenario_contexts) << ".\n";
    if (!in.is.special_requests.empty())
        out << "Step " << step++ << ". What you need from the dispatcher: " << join_labels(in.is.special_requests)
            << ".\n";
    out << "Step " << step++ << ". You are " << article_for(in.ci.age) << " " << in.ci.age << " caller who feels "
        << in.ci.emotion << ".\n";
    for (const auto& v : in.ci.vulnerable) out << "Step " << step++ << ". The caller " << para.describe(v) << ".\n";
    out << "Step " << step++
        << ". Answer only the dispatcher's latest question with one short spoken utterance. Never write the "
           "dispatcher's lines or speaker names.\n";
    out << "Step " << step << ". Only state facts given above; do not invent addresses.\n";
    return out.str();
}

std::string render_few_shot(const SimulationInstruction& in, const KnowledgeSet& k, const PromptOptions& opt,
                            PromptBundle& b) {
    auto matching = filter_calls(k.corpus, in.caller_image_labels(), k.taxonomy);
    if (matching.empty()) return std::string(kNoExemplarsMarker) + "\n";
    std::size_t start = static_cast<std::size_t>(in.seed % matching.size());
    std::vector<std::vector<const Turn*>> caller_turns;
    for (std::size_t i = 0; i < matching.size(); ++i) {
        const auto& call = matching[(start + i) % matching.size()];
        std::vector<const Turn*> turns;
        for (const auto& t : call.turns)
            if (t.speaker == Speaker::caller) turns.push_back(&t);
        caller_turns.push_back(std::move(turns));
    }
    for (std::size_t round = 0; b.exemplars.size() < opt.exemplar_k; ++round) {
        bool any = false;
        for (std::size_t i = 0; i < matching.size() && b.exemplars.size() < opt.exemplar_k; ++i) {
            if (round >= caller_turns[i].size()) continue;
            any = true;
            b.exemplars.push_back({matching[(start + i) % matching.size()].id, caller_turns[i][round]->text});
        }
        if (!any) break;
    }
    std::ostringstream out;
    out << "Speak the way these callers with a similar profile spoke:\n";
    for (std::size_t i = 0; i < b.exemplars.size(); ++i) out << i + 1 << ". " << b.exemplars[i].text << "\n";
    return out.str();
}

}  // namespace

PromptBundle assemble_prompt(const SimulationInstruction& instruction, const KnowledgeSet& knowledge,
                             const AblationSet& ablation, const std::string& profile_key, const PromptOptions& options) {
    validate_instruction(instruction, knowledge.taxonomy);
    static const ParaphraseTable fallback = ParaphraseTable::defaults();
    const ParaphraseTable& para = options.paraphrases ? *options.paraphrases : fallback;

    PromptBundle b;
    b.instruction = instruction;
    b.profile_key = profile_key;
    b.ablation = ablation;
    if (ablation.fact_context_enabled()) b.fact_context = render_fact_context(instruction, knowledge, options, b);
    if (ablation.task_explanation_enabled()) b.task_explanation = render_task(instruction, para);
    if (ablation.few_shot_enabled()) b.few_shot_examples = render_few_shot(instruction, knowledge, options, b);
    return b;
}

std::string PromptBundle::serialize() const {
    std::string out = "=== profile ===\n" + profile_key + "\n";
    auto section = [&out](const char* name, const std::optional<std::string>& body) {
        if (!body) return;
        out += "=== ";
        out += name;
        out += " ===\n";
        out += *body;
        if (!body->empty() && body->back() != '\n') out += "\n";
    };
    section("fact_context", fact_context);
    section("task_explanation", task_explanation);
    section("few_shot_examples", few_shot_examples);
    out += "=== end ===\n";
    return out;
}

json PromptBundle::to_json() const {
    json ex = json::array();
    for (const auto& e : exemplars) ex.push_back({{"call_id", e.call_id}, {"text", e.text}});
    json j{{"instruction", callsim::to_json(instruction)},
           {"profile", profile_key},
           {"ablation", ablation.name()},
           {"retrieved_call_ids", retrieved_call_ids},
           {"valid_addresses", valid_addresses},
           {"exemplars", ex},
           {"prompt", serialize()}};
    return j;
}

// ---------------------------------------------------------------------------
// Mock client
// ---------------------------------------------------------------------------

namespace {

std::vector<std::vector<std::string>> parse_script_turns(const json& arr) {
    if (!arr.is_array()) throw ParseError("mock script turns must be an array");
    std::vector<std::vector<std::string>> turns;
    for (const auto& t : arr) {
        if (t.is_string()) {
            turns.push_back({t.get<std::string>()});
        } else if (t.is_array()) {
            std::vector<std::string> variants;
            for (const auto& v : t) {
                if (!v.is_string()) throw ParseError("mock script variants must be strings");
                variants.push_back(v.get<std::string>());
            }
            turns.push_back(std::move(variants));
        } else {
            throw ParseError("mock script turns must be strings or arrays of strings");
        }
    }
    return turns;
}

void check_script(const std::vector<std::vector<std::string>>& turns) {
    if (turns.empty()) throw ValidationError("mock script needs at least one turn");
    for (const auto& t : turns)
        if (t.empty()) throw ValidationError("mock script turn needs at least one variant");
}

}  // namespace

MockClient::MockClient(std::vector<std::vector<std::string>> turns) : turns_(std::move(turns)) {
    check_script(turns_);
}

MockClient MockClient::from_json(const json& j) {
    if (!j.is_object() || !j.contains("turns")) throw ParseError("mock script needs a 'turns' array");
    MockClient m(parse_script_turns(j.at("turns")));
    if (j.contains("by_incident")) {
        for (const auto& [incident, turns] : j.at("by_incident").items())
            m.set_incident_turns(text::normalize_label(incident), parse_script_turns(turns));
    }
    if (j.contains("fault")) {
        const auto& f = j.at("fault");
        m.set_fault(f.value("rate", 0.0), f.value("text", std::string("I'm at 742 Evergreen Terrace.")));
    }
    if (j.contains("fabricated_address")) m.fabricated_address_ = j.at("fabricated_address").get<std::string>();
    return m;
}

void MockClient::set_incident_turns(const std::string& incident_type, std::vector<std::vector<std::string>> turns) {
    check_script(turns);
    by_incident_[incident_type] = std::move(turns);
}

MockClient MockClient::load(const std::string& path) {
    try {
        return from_json(json::parse(text::read_file(path)));
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    } catch (const ValidationError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

void MockClient::set_fault(double rate, std::string text) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw ValidationError("fault rate must lie in [0, 1]");
    fault_rate_ = rate;
    fault_text_ = std::move(text);
}

bool MockClient::faults(std::uint64_t seed, std::size_t call_index, int attempt) const {
    if (fault_rate_ <= 0.0) return false;
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(call_index), static_cast<std::uint32_t>(attempt)};
    std::mt19937_64 rng(seq);
    double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return u < fault_rate_;
}

std::string MockClient::complete(const CompletionRequest& r) const {
    std::size_t call_index = 0;
    for (const auto& t : r.history)
        if (t.speaker == Speaker::caller) ++call_index;
    const auto& seed = r.bundle.instruction.seed;
    if (faults(seed, call_index, r.attempt)) return fault_text_;

    auto it = by_incident_.find(r.bundle.instruction.is.incident_type);
    const auto& script = it == by_incident_.end() ? turns_ : it->second;
    const auto& variants = script[std::min(call_index, script.size() - 1)];
    std::string out = variants[std::min<std::size_t>(static_cast<std::size_t>(std::max(r.attempt, 1)) - 1,
                                                     variants.size() - 1)];
    auto replace_all = [&out](const std::string& key, const std::string& value) {
        for (std::size_t pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos + value.size()))
            out.replace(pos, key.size(), value);
    };
    const auto& addrs = r.bundle.valid_addresses;
    replace_all("{address}", addrs.empty() ? fabricated_address_ : addrs[seed % addrs.size()]);
    replace_all("{incident}", r.bundle.instruction.is.incident_type);
    return out;
}

// ---------------------------------------------------------------------------
// Candidates
// ---------------------------------------------------------------------------

json to_json(const CandidateResponse& c) {
    return json{{"text", c.text}, {"attempt", c.attempt}, {"elapsed_ms", c.elapsed_ms}, {"tokens", c.token_count}};
}

CandidateResponse generate_candidate(const BackendClient& client, const PromptBundle& bundle,
                                     std::span<const Turn> history, const BackendProfile& profile, int attempt,
                                     const Clock& clock) {
    if (attempt < 1) throw ValidationError("attempt index must be at least 1");
    auto start = clock.now_ms();
    CandidateResponse c;
    c.text = client.complete({bundle, history, profile, attempt});
    c.attempt = attempt;
    c.elapsed_ms = clock.now_ms() - start;
    std::istringstream words(c.text);
    std::string w;
    while (words >> w) ++c.token_count;
    return c;
}

}  // namespace callsim
