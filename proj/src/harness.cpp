#include "callsim/harness.hpp"

#include "callsim/error.hpp"
#include "callsim/text.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace callsim {

using nlohmann::json;
namespace fs = std::filesystem;

std::vector<std::string> script_from_protocol(const ProtocolSet& protocols, const std::string& incident_type,
                                              const std::string& opener) {
    if (!protocols.has(incident_type))
        throw NotFoundError("no protocol tree for incident type '" + incident_type + "'");
    const auto& tree = protocols.tree(incident_type);
    std::vector<std::string> out{opener};
    for (const auto& id : tree.preorder()) out.push_back(tree.node(id).question);
    return out;
}

// ---------------------------------------------------------------------------
// Configs
// ---------------------------------------------------------------------------

void RuntimeConfig::check() const {
    if (trials < 1) throw ValidationError("runtime '" + name + "': trials must be at least 1");
    if (threshold < 1) throw ValidationError("runtime '" + name + "': threshold must be at least 1");
    if (name.empty()) throw ValidationError("runtime name must be non-empty");
}

RuntimeConfig RuntimeConfig::from_json(const json& j, const TagTaxonomy& taxonomy) {
    if (!j.is_object()) throw ParseError("runtime config must be an object");
    if (!j.contains("instruction")) throw ParseError("runtime config needs an 'instruction'");
    RuntimeConfig c;
    try {
        c.name = j.value("name", std::string("runtime"));
        c.instruction = parse_instruction(j.at("instruction"), taxonomy);
        if (j.contains("script")) c.script = j.at("script").get<std::vector<std::string>>();
        if (j.contains("ablation")) {
            const auto& a = j.at("ablation");
            c.ablation = a.is_string() ? AblationSet::parse({a.get<std::string>()})
                                       : AblationSet::parse(a.get<std::vector<std::string>>());
        }
        c.trials = j.value("trials", 1);
        c.seed = j.value("seed", c.instruction.seed);
        c.seed_stride = j.value("seed_stride", std::uint64_t{1});
        c.threshold = j.value("threshold", 3);
    } catch (const json::exception& e) {
        throw ParseError(std::string("runtime config: ") + e.what());
    }
    c.check();
    return c;
}

json RuntimeConfig::to_json() const {
    json j{{"name", name},        {"instruction", callsim::to_json(instruction)},
           {"ablation", ablation.flags()}, {"trials", trials},
           {"seed", seed},        {"seed_stride", seed_stride},
           {"threshold", threshold}};
    if (!script.empty()) j["script"] = script;
    return j;
}

std::vector<RuntimeConfig> expand_ablations(const RuntimeConfig& base, const std::vector<AblationSet>& ablations) {
    std::vector<RuntimeConfig> out;
    for (const auto& a : ablations) {
        auto c = base;
        c.ablation = a;
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<RuntimeConfig> parse_runtime_configs(const json& j, const TagTaxonomy& taxonomy) {
    std::vector<RuntimeConfig> base;
    if (j.is_object() && j.contains("runtimes")) {
        if (!j.at("runtimes").is_array() || j.at("runtimes").empty())
            throw ParseError("'runtimes' must be a non-empty array");
        for (const auto& r : j.at("runtimes")) base.push_back(RuntimeConfig::from_json(r, taxonomy));
    } else {
        base.push_back(RuntimeConfig::from_json(j, taxonomy));
    }
    if (!j.value("ablation_matrix", false)) return base;
    std::vector<RuntimeConfig> out;
    for (const auto& c : base)
        for (auto& e : expand_ablations(c)) out.push_back(std::move(e));
    return out;
}

std::vector<RuntimeConfig> load_runtime_configs(const std::string& path, const TagTaxonomy& taxonomy) {
    json j;
    try {
        j = json::parse(text::read_file(path));
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    try {
        return parse_runtime_configs(j, taxonomy);
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

namespace {

std::string flags_slug(const AblationSet& a) {
    auto f = a.flags();
    if (f.empty()) return "full";
    std::string out = "no";
    for (const auto& x : f) out += "-" + x;
    return out;
}

}  // namespace

json SessionLog::to_json() const {
    return json{{"config", config}, {"ablation", ablation.name()}, {"ablation_flags", ablation.flags()},
                {"trial", trial},   {"seed", seed},                {"backend", backend},
                {"session", session.to_json()}};
}

std::string SessionLog::file_name() const {
    return config + "__" + flags_slug(ablation) + "__trial" + std::to_string(trial) + ".json";
}

std::vector<SessionLog> replay(const RuntimeConfig& config, const ReplayDeps& deps) {
    config.check();
    if (!deps.client || !deps.knowledge || !deps.classifier || !deps.answerer || !deps.profiles)
        throw ValidationError("replay needs a backend, knowledge, classifier, answerer and profiles");
    auto script = config.script.empty()
                      ? script_from_protocol(deps.knowledge->protocols, config.instruction.is.incident_type)
                      : config.script;

    ValidationDeps vd;
    vd.client = deps.client;
    vd.knowledge = deps.knowledge;
    vd.classifier = deps.classifier;
    vd.answerer = deps.answerer;
    vd.profiles = deps.profiles;
    vd.clock = deps.clock;
    vd.ablation = config.ablation;
    vd.config.threshold = config.threshold;

    std::vector<SessionLog> logs;
    for (int trial = 0; trial < config.trials; ++trial) {
        SessionLog log;
        log.config = config.name;
        log.ablation = config.ablation;
        log.trial = trial;
        log.seed = config.trial_seed(trial);
        log.backend = deps.client->name();
        auto instruction = config.instruction;
        instruction.seed = log.seed;
        std::string id = config.name + "-" + flags_slug(config.ablation) + "-t" + std::to_string(trial);
        try {
            log.session = open_session(id, instruction, vd, deps.prompt);
            validated_generate(log.session, vd);
            for (const auto& line : script) {
                append_calltaker_turn(log.session, line);
                validated_generate(log.session, vd);
            }
        } catch (const TransportError& e) {
            throw TransportError("trial " + std::to_string(trial) + " of '" + config.name + "': " + e.what());
        }
        log.session.status = SessionStatus::completed;
        logs.push_back(std::move(log));
    }
    return logs;
}

std::vector<std::string> write_session_logs(const std::vector<SessionLog>& logs, const std::string& dir) {
    fs::create_directories(dir);
    std::vector<std::string> paths;
    for (const auto& log : logs) {
        auto path = (fs::path(dir) / log.file_name()).string();
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error("cannot write " + path);
        out << log.to_json().dump(2) << "\n";
        paths.push_back(path);
    }
    return paths;
}

// ---------------------------------------------------------------------------
// Sessions for evaluation
// ---------------------------------------------------------------------------

std::string EvalSession::caller_text() const {
    std::vector<std::string> parts;
    for (const auto& t : turns)
        if (t.speaker == Speaker::caller) parts.push_back(t.text);
    return text::join(parts, " ");
}

EvalSession eval_session(const SessionLog& log) {
    EvalSession s;
    s.row = log.ablation.name();
    s.config = log.config;
    s.instruction = log.session.instruction;
    s.turns = log.session.effective_history();
    return s;
}

EvalSession parse_session_log(const json& j, const TagTaxonomy& taxonomy) {
    try {
        EvalSession s;
        const json& session = j.contains("session") ? j.at("session") : j;
        s.row = j.value("ablation", std::string("full"));
        s.config = j.value("config", session.value("id", std::string("session")));
        s.instruction = parse_instruction(session.at("instruction"), taxonomy);
        for (const auto& t : session.at("turns")) {
            if (t.value("rejected", false)) continue;
            Turn turn;
            turn.speaker = speaker_from_string(t.at("speaker").get<std::string>());
            turn.text = t.at("text").get<std::string>();
            turn.index = t.value("index", s.turns.size());
            s.turns.push_back(std::move(turn));
        }
        return s;
    } catch (const json::exception& e) {
        throw ParseError(std::string("session log: ") + e.what());
    }
}

std::vector<EvalSession> load_session_logs(const std::string& dir, const TagTaxonomy& taxonomy) {
    if (!fs::is_directory(dir)) throw NotFoundError("no session directory " + dir);
    std::vector<fs::path> paths;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".json") paths.push_back(e.path());
    std::sort(paths.begin(), paths.end());
    std::vector<EvalSession> out;
    for (const auto& p : paths) {
        try {
            out.push_back(parse_session_log(json::parse(text::read_file(p.string())), taxonomy));
        } catch (const json::exception& e) {
            throw ParseError(p.string() + ": " + e.what());
        } catch (const ParseError& e) {
            throw ParseError(p.string() + ": " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

const EffectivenessRow* EffectivenessReport::find(const std::string& config) const {
    for (const auto& r : rows)
        if (r.config == config) return &r;
    return nullptr;
}

const std::vector<std::string>& emotion_family(const std::string& caller_emotion) {
    static const std::map<std::string, std::vector<std::string>> m{
        {"sad", {"sadness"}},
        {"anxious", {"fear", "anticipation"}},
        {"angry", {"anger", "disgust"}},
        {"calm", {"trust", "joy"}},
        {"neutral", {"trust", "anticipation"}},
        {"irrational", {"fear", "anger", "surprise"}},
    };
    auto it = m.find(caller_emotion);
    if (it == m.end()) throw NotFoundError("no emotion family for '" + caller_emotion + "'");
    return it->second;
}

std::optional<double> locating_success(const std::vector<Turn>& turns, const ExtractiveAnswerer& answerer,
                                       const AddressGazetteer& gazetteer) {
    std::size_t stated = 0, found = 0;
    for (const auto& t : turns) {
        if (t.speaker != Speaker::caller) continue;
        auto a = answerer.answer(t, kAddressQuestion);
        if (!a.present) continue;
        ++stated;
        if (gazetteer.lookup(*a.span).matched) ++found;
    }
    if (stated == 0) return std::nullopt;
    return 100.0 * static_cast<double>(found) / static_cast<double>(stated);
}

namespace {

double mean_of(const std::vector<double>& v) { return mean_std(v).mean; }

double fog_or_zero(const std::string& t) {
    try {
        return gunning_fog(t);
    } catch (const ValidationError&) {
        return 0.0;
    }
}

double mean_fog(const std::vector<std::string>& texts) {
    std::vector<double> v;
    for (const auto& t : texts) v.push_back(fog_or_zero(t));
    return mean_of(v);
}

struct FamilyTexts {
    std::vector<std::string> outputs, refs_with, refs_without;
};

FamilyTexts split_by_label(const std::vector<const EvalSession*>& sessions, const std::vector<AnnotatedCall>& refs,
                           const std::string& label) {
    FamilyTexts f;
    for (const auto* s : sessions)
        if (s->instruction.caller_image_labels().count(label)) f.outputs.push_back(s->caller_text());
    for (const auto& r : refs) (r.caller_image_labels().count(label) ? f.refs_with : f.refs_without).push_back(r.caller_text());
    return f;
}

std::vector<std::string> family_labels(const std::string& family, const TagTaxonomy& taxonomy) {
    if (family == "age") return taxonomy.ages();
    if (family == "emotion") return taxonomy.emotions();
    return {family};
}

EquityRow equity_row(const std::string& family, const std::vector<const EvalSession*>& sessions,
                     const std::vector<AnnotatedCall>& refs, const EvaluationDeps& deps) {
    EquityRow row;
    row.family = family;
    auto labels = family_labels(family, deps.knowledge->taxonomy);

    CentroidTagPredictor predictor(refs, labels);
    std::vector<std::string> supported;
    for (const auto& l : labels)
        if (predictor.supports(l)) supported.push_back(l);
    if (!supported.empty()) {
        std::vector<TaggedText> calls;
        for (const auto* s : sessions) calls.push_back({s->caller_text(), s->instruction.caller_image_labels()});
        row.tag_accuracy = tag_accuracy(calls, supported, predictor).overall;
    }

    SimilarityModels models{deps.grammar, deps.sentiment};
    std::vector<double> margins;
    std::optional<FamilyTexts> single;
    for (const auto& l : labels) {
        auto f = split_by_label(sessions, refs, l);
        if (f.outputs.empty() || f.refs_with.empty() || f.refs_without.empty()) continue;
        margins.push_back(margin_score(f.outputs, f.refs_with, f.refs_without, models).margin);
        if (labels.size() == 1) single = std::move(f);
    }
    if (!margins.empty()) row.margin = mean_of(margins);

    if (family == "emotion" && deps.emotion && !sessions.empty()) {
        std::size_t hit = 0;
        for (const auto* s : sessions) {
            auto p = deps.emotion->profile(s->caller_text());
            const auto& want = emotion_family(s->instruction.ci.emotion);
            bool ok = p.all_zero ? s->instruction.ci.emotion == "neutral"
                                 : std::find(want.begin(), want.end(), p.dominant) != want.end();
            hit += ok ? 1 : 0;
        }
        row.emotion_accuracy = static_cast<double>(hit) / static_cast<double>(sessions.size());
    }
    if (family == "non-native speaker" && single) {
        double out = mean_fog(single->outputs);
        double sim_with = 1.0 / (1.0 + std::fabs(out - mean_fog(single->refs_with)));
        double sim_without = 1.0 / (1.0 + std::fabs(out - mean_fog(single->refs_without)));
        row.fog_margin = margin_from_similarities(sim_with, sim_without).margin;
    }
    return row;
}

}  // namespace

EvaluationReport evaluate(const std::vector<EvalSession>& sessions, const std::vector<AnnotatedCall>& references,
                          const EvaluationDeps& deps) {
    if (sessions.empty()) throw ValidationError("evaluation needs at least one session");
    if (references.empty()) throw ValidationError("evaluation needs reference transcripts");
    if (!deps.knowledge || !deps.classifier || !deps.answerer || !deps.grammar || !deps.sentiment)
        throw ValidationError("evaluation needs knowledge, classifier, answerer, grammar and sentiment lexicon");
    for (const auto& s : sessions)
        if (s.caller_text().empty()) throw ValidationError("session '" + s.config + "' has no caller turns");

    std::vector<std::string> order;
    for (const auto& a : standard_ablations()) order.push_back(a.name());
    std::vector<std::string> rows;
    for (const auto& name : order)
        if (std::any_of(sessions.begin(), sessions.end(), [&](const EvalSession& s) { return s.row == name; }))
            rows.push_back(name);
    for (const auto& s : sessions)
        if (std::find(rows.begin(), rows.end(), s.row) == rows.end()) rows.push_back(s.row);

    std::map<std::string, NGramLM> lms;
    auto lm_for = [&](const std::string& type) -> const NGramLM& {
        if (auto it = lms.find(type); it != lms.end()) return it->second;
        std::vector<std::string> texts;
        for (const auto& r : references)
            if (r.is.incident_type == type) texts.push_back(r.caller_text());
        if (texts.empty())
            for (const auto& r : references) texts.push_back(r.caller_text());
        return lms.emplace(type, NGramLM::train(texts, deps.lm_order, deps.lm_alpha)).first->second;
    };
    std::map<std::string, const AnnotatedCall*> by_id;
    for (const auto& r : references) by_id[r.id] = &r;

    EvaluationReport report;
    for (const auto& name : rows) {
        EffectivenessRow row;
        row.config = name;
        std::vector<double> ppl, met, ttrs, gmap, sar;
        for (const auto& s : sessions) {
            if (s.row != name) continue;
            ++row.sessions;
            auto caller = s.caller_text();
            ppl.push_back(perplexity(lm_for(s.instruction.is.incident_type), caller));
            if (auto it = by_id.find(s.instruction.reference_id); it != by_id.end())
                met.push_back(meteor(caller, it->second->caller_text()).score);
            ttrs.push_back(ttr(caller).ttr);
            if (auto g = locating_success(s.turns, *deps.answerer, deps.knowledge->gazetteer)) gmap.push_back(*g);
            auto c = deps.classifier->classify(s.turns);
            sar.push_back(c.label == s.instruction.is.incident_type ? 100.0 : 0.0);
        }
        row.ppl = mean_std(ppl);
        row.meteor = mean_std(met);
        row.meteor_pairs = met.size();
        row.ttr = mean_std(ttrs);
        row.gmap = mean_std(gmap);
        row.address_sessions = gmap.size();
        row.sar = mean_std(sar);
        report.effectiveness.rows.push_back(row);
    }

    std::vector<const EvalSession*> equity_sessions;
    bool has_full = std::find(rows.begin(), rows.end(), "full") != rows.end();
    report.equity.config = has_full ? "full" : "all";
    for (const auto& s : sessions)
        if (!has_full || s.row == "full") equity_sessions.push_back(&s);
    for (const auto& family : equity_families())
        report.equity.rows.push_back(equity_row(family, equity_sessions, references, deps));
    return report;
}

// ---------------------------------------------------------------------------
// Report output
// ---------------------------------------------------------------------------

namespace {

json mean_std_json(const MeanStd& m) { return json{{"mean", m.mean}, {"stddev", m.stddev}}; }

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string pm(const MeanStd& m, int digits) { return fixed(m.mean, digits) + "\xc2\xb1" + fixed(m.stddev, digits); }

std::size_t display_width(const std::string& s) {
    std::size_t w = 0;
    for (unsigned char c : s)
        if ((c & 0xC0) != 0x80) ++w;
    return w;
}

std::string pad(const std::string& s, std::size_t width) {
    auto w = display_width(s);
    return w >= width ? s + " " : s + std::string(width - w, ' ');
}

std::string render_table(const std::vector<std::vector<std::string>>& cells) {
    std::vector<std::size_t> widths;
    for (const auto& row : cells)
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (widths.size() <= i) widths.push_back(0);
            widths[i] = std::max(widths[i], display_width(row[i]) + 2);
        }
    std::string out;
    for (const auto& row : cells) {
        std::string line;
        for (std::size_t i = 0; i < row.size(); ++i) line += i + 1 == row.size() ? row[i] : pad(row[i], widths[i]);
        out += line + "\n";
    }
    return out;
}

std::string opt_text(const std::optional<double>& v, int digits = 4) { return v ? fixed(*v, digits) : "n/a"; }

}  // namespace

json EvaluationReport::to_json() const {
    json eff = json::array();
    for (const auto& r : effectiveness.rows) {
        eff.push_back(json{{"config", r.config},
                           {"sessions", r.sessions},
                           {"ppl", mean_std_json(r.ppl)},
                           {"meteor", r.meteor_pairs ? mean_std_json(r.meteor) : json(nullptr)},
                           {"meteor_pairs", r.meteor_pairs},
                           {"ttr", mean_std_json(r.ttr)},
                           {"gmap_percent", r.address_sessions ? mean_std_json(r.gmap) : json(nullptr)},
                           {"address_sessions", r.address_sessions},
                           {"sar_percent", mean_std_json(r.sar)}});
    }
    json eq = json::array();
    for (const auto& r : equity.rows) {
        json row{{"family", r.family}, {"tag_accuracy", opt_json(r.tag_accuracy)}, {"margin", opt_json(r.margin)}};
        if (r.family == "emotion") row["emotion_accuracy"] = opt_json(r.emotion_accuracy);
        if (r.family == "non-native speaker") row["fog_margin"] = opt_json(r.fog_margin);
        eq.push_back(row);
    }
    return json{{"effectiveness", eff}, {"equity", {{"config", equity.config}, {"rows", eq}}}};
}

std::string EvaluationReport::to_tsv() const {
    std::string out = "table\trow\tmetric\tmean\tstddev\n";
    auto line = [&out](const std::string& table, const std::string& row, const std::string& metric,
                       const std::optional<MeanStd>& v) {
        out += table + "\t" + row + "\t" + metric + "\t";
        out += v ? fixed(v->mean, 6) + "\t" + fixed(v->stddev, 6) : std::string("NA\tNA");
        out += "\n";
    };
    for (const auto& r : effectiveness.rows) {
        line("effectiveness", r.config, "PPL", r.ppl);
        line("effectiveness", r.config, "METEOR", r.meteor_pairs ? std::optional(r.meteor) : std::nullopt);
        line("effectiveness", r.config, "TTR", r.ttr);
        line("effectiveness", r.config, "GMap", r.address_sessions ? std::optional(r.gmap) : std::nullopt);
        line("effectiveness", r.config, "SAR", r.sar);
    }
    auto single = [](const std::optional<double>& v) -> std::optional<MeanStd> {
        if (!v) return std::nullopt;
        return MeanStd{*v, 0.0};
    };
    for (const auto& r : equity.rows) {
        line("equity", r.family, "tag_accuracy", single(r.tag_accuracy));
        line("equity", r.family, "margin", single(r.margin));
        if (r.family == "emotion") line("equity", r.family, "emotion_accuracy", single(r.emotion_accuracy));
        if (r.family == "non-native speaker") line("equity", r.family, "fog_margin", single(r.fog_margin));
    }
    return out;
}

std::string EvaluationReport::render() const {
    std::vector<std::vector<std::string>> t1{{"config", "n", "PPL", "METEOR", "TTR", "GMap (%)", "SAR (%)"}};
    for (const auto& r : effectiveness.rows) {
        t1.push_back({r.config, std::to_string(r.sessions), pm(r.ppl, 2), r.meteor_pairs ? pm(r.meteor, 4) : "n/a",
                      pm(r.ttr, 4), r.address_sessions ? pm(r.gmap, 2) : "n/a", pm(r.sar, 2)});
    }
    std::vector<std::vector<std::string>> t2{{"family", "tag accuracy", "margin", "emotion accuracy", "fog margin"}};
    for (const auto& r : equity.rows) {
        t2.push_back({r.family, opt_text(r.tag_accuracy), opt_text(r.margin),
                      r.family == "emotion" ? opt_text(r.emotion_accuracy) : "",
                      r.family == "non-native speaker" ? opt_text(r.fog_margin) : ""});
    }
    return "Effectiveness\n" + render_table(t1) + "\nEquity (" + equity.config + ")\n" + render_table(t2);
}

}  // namespace callsim
