#pragma once

#include "callsim/metrics.hpp"
#include "callsim/validation.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace callsim {

// ---------------------------------------------------------------------------
// Runtime configurations
// ---------------------------------------------------------------------------

inline constexpr const char* kStandardOpener = "9-1-1, what is the address of the emergency?";

/// Opener followed by the protocol questions in depth-first order. Throws
/// NotFoundError naming the incident type when no tree exists.
std::vector<std::string> script_from_protocol(const ProtocolSet& protocols, const std::string& incident_type,
                                              const std::string& opener = kStandardOpener);

/// One pre-configured runtime.
///
/// File schema (JSON):
///   {"name": "storm-crash", "instruction": {...}, "script": ["...", ...],
///    "ablation": ["RAG"] | "full", "trials": 3, "seed": 7, "seed_stride": 1,
///    "threshold": 3}
/// Without "script" the call-taker lines come from the protocol tree. Trial
/// i runs with seed + i * seed_stride; "seed" defaults to the instruction's.
struct RuntimeConfig {
    std::string name = "runtime";
    SimulationInstruction instruction;
    std::vector<std::string> script;
    AblationSet ablation;
    int trials = 1;
    std::uint64_t seed = 0;
    std::uint64_t seed_stride = 1;
    int threshold = 3;

    /// Throws ValidationError for trials < 1 or threshold < 1.
    void check() const;
    std::uint64_t trial_seed(int trial) const { return seed + static_cast<std::uint64_t>(trial) * seed_stride; }

    static RuntimeConfig from_json(const nlohmann::json& j, const TagTaxonomy& taxonomy);
    nlohmann::json to_json() const;
};

/// A config file holds one runtime object or {"runtimes": [...]}. With
/// "ablation_matrix": true at the top level every runtime expands into the
/// seven standard ablation rows.
std::vector<RuntimeConfig> load_runtime_configs(const std::string& path, const TagTaxonomy& taxonomy);
std::vector<RuntimeConfig> parse_runtime_configs(const nlohmann::json& j, const TagTaxonomy& taxonomy);

/// Copies of `base`, one per ablation, in the given order.
std::vector<RuntimeConfig> expand_ablations(const RuntimeConfig& base,
                                            const std::vector<AblationSet>& ablations = standard_ablations());

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

struct SessionLog {
    std::string config;
    AblationSet ablation;
    int trial = 0;
    std::uint64_t seed = 0;
    std::string backend;
    SessionState session;

    nlohmann::json to_json() const;
    /// "<config>__<flags>__trial<k>.json"
    std::string file_name() const;
};

struct ReplayDeps {
    const BackendClient* client = nullptr;
    const KnowledgeSet* knowledge = nullptr;
    const IncidentClassifier* classifier = nullptr;
    const ExtractiveAnswerer* answerer = nullptr;
    const ProfileSet* profiles = nullptr;
    const Clock* clock = nullptr;
    PromptOptions prompt;
};

/// Runs every trial: the caller opens, then each script line gets a caller
/// reply. Backend failures are rethrown as TransportError naming the trial.
std::vector<SessionLog> replay(const RuntimeConfig& config, const ReplayDeps& deps);

/// Writes one pretty-printed JSON file per log; returns the paths.
std::vector<std::string> write_session_logs(const std::vector<SessionLog>& logs, const std::string& dir);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// What evaluation needs from a session: its row, instruction and the
/// effective transcript (rejected turns dropped).
struct EvalSession {
    std::string row;  // ablation row name
    std::string config;
    SimulationInstruction instruction;
    std::vector<Turn> turns;

    std::string caller_text() const;
};

EvalSession eval_session(const SessionLog& log);
EvalSession parse_session_log(const nlohmann::json& j, const TagTaxonomy& taxonomy);
/// Every *.json file in `dir`, in file-name order.
std::vector<EvalSession> load_session_logs(const std::string& dir, const TagTaxonomy& taxonomy);

struct EffectivenessRow {
    std::string config;
    std::size_t sessions = 0;
    MeanStd ppl;
    MeanStd meteor;
    MeanStd ttr;
    MeanStd gmap;  // percent of stated addresses found in the gazetteer
    MeanStd sar;   // percent of sessions classified as the instructed type
    std::size_t meteor_pairs = 0;
    std::size_t address_sessions = 0;
};

struct EffectivenessReport {
    std::vector<EffectivenessRow> rows;
    const EffectivenessRow* find(const std::string& config) const;
};

/// Families of the equity table.
inline const std::vector<std::string>& equity_families() {
    static const std::vector<std::string> f{"age",          "emotion",           "unhoused",
                                            "mental health", "non-native speaker", "low-income housing area"};
    return f;
}

struct EquityRow {
    std::string family;
    std::optional<double> tag_accuracy;
    std::optional<double> margin;
    std::optional<double> emotion_accuracy;  // emotion family only
    std::optional<double> fog_margin;        // non-native speaker family only
};

struct EquityReport {
    std::string config;  // row the equity table was computed on
    std::vector<EquityRow> rows;
};

/// NRC emotions that count as a match for a caller-image emotion. Neutral
/// also accepts texts without lexicon hits.
const std::vector<std::string>& emotion_family(const std::string& caller_emotion);

struct EvaluationDeps {
    const KnowledgeSet* knowledge = nullptr;
    const IncidentClassifier* classifier = nullptr;
    const ExtractiveAnswerer* answerer = nullptr;
    const Grammar* grammar = nullptr;
    const SentimentLexicon* sentiment = nullptr;
    const EmotionLexicon* emotion = nullptr;
    std::size_t lm_order = 2;
    double lm_alpha = 0.1;
};

struct EvaluationReport {
    EffectivenessReport effectiveness;
    EquityReport equity;

    nlohmann::json to_json() const;
    /// Tab-separated: table, row, metric, mean, stddev.
    std::string to_tsv() const;
    /// Plain-text rendering of both tables.
    std::string render() const;
};

/// Rows follow the standard ablation order, unknown rows after them in
/// first-seen order. The equity table uses the "full" row when present,
/// otherwise every session. Throws ValidationError on an empty session set
/// or a session without caller turns.
EvaluationReport evaluate(const std::vector<EvalSession>& sessions, const std::vector<AnnotatedCall>& references,
                          const EvaluationDeps& deps);

/// Percent of stated addresses that resolve; nullopt when none is stated.
std::optional<double> locating_success(const std::vector<Turn>& turns, const ExtractiveAnswerer& answerer,
                                       const AddressGazetteer& gazetteer);

}  // namespace callsim
