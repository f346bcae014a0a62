#pragma once

#include "callsim/clock.hpp"
#include "callsim/corpus.hpp"
#include "callsim/knowledge.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace callsim {

// ---------------------------------------------------------------------------
// Instructions and ablations
// ---------------------------------------------------------------------------

struct SimulationInstruction {
    IncidentSpecification is;
    CallerImage ci;
    std::uint64_t seed = 0;
    std::string reference_id;  // optional: id of the real call this replicates

    LabelSet labels() const;
    LabelSet caller_image_labels() const;
    LabelSet incident_labels() const;

    friend bool operator==(const SimulationInstruction&, const SimulationInstruction&) = default;
};

/// JSON: {"is": {...}, "ci": {...}, "seed": 7, "reference_id": "call-0001"}.
/// Labels are resolved against the taxonomy (TagError on unknown ones).
SimulationInstruction parse_instruction(const nlohmann::json& j, const TagTaxonomy& taxonomy);
nlohmann::json to_json(const SimulationInstruction& instruction);

/// Throws TagError when a label is unknown or sits in the wrong family.
void validate_instruction(const SimulationInstruction& instruction, const TagTaxonomy& taxonomy);

/// Disabled pipeline components. "All" implies every other flag.
struct AblationSet {
    bool kc = false;   // knowledge construction: no retrieved facts, no exemplars
    bool cot = false;  // no task explanation
    bool fsp = false;  // no few-shot exemplars
    bool rag = false;  // no fact context
    bool vlc = false;  // validation loop off: attempt 1 is accepted unchecked

    static AblationSet none() { return {}; }
    static AblationSet all() { return {true, true, true, true, true}; }

    bool is_all() const { return kc && cot && fsp && rag && vlc; }
    bool fact_context_enabled() const { return !kc && !rag; }
    bool task_explanation_enabled() const { return !cot; }
    bool few_shot_enabled() const { return !kc && !fsp; }
    bool validation_enabled() const { return !vlc; }

    /// Accepts "KC", "CoT", "FSP", "RAG", "VLC", "All", case-insensitive,
    /// optionally prefixed with "¬", "!", "-" or "no-". Throws ValidationError.
    static AblationSet parse(const std::vector<std::string>& flags);

    /// Row name: "full", "¬KC", ..., "¬All"; several flags join with "+".
    std::string name() const;
    std::vector<std::string> flags() const;

    friend bool operator==(const AblationSet&, const AblationSet&) = default;
};

/// The seven configurations of the ablation study, full pipeline first.
std::vector<AblationSet> standard_ablations();

// ---------------------------------------------------------------------------
// Backend profiles
// ---------------------------------------------------------------------------

struct GenerationParams {
    double temperature = 0.0;
    int max_tokens = 160;
};

struct BackendProfile {
    std::string age;      // empty for the default profile
    std::string emotion;  // empty for the default profile
    std::string persona;
    GenerationParams params;

    bool is_default() const { return age.empty() && emotion.empty(); }
    /// "<age>/<emotion>" or "default".
    std::string key() const;
};

/// Persona presets keyed by (age, emotion), plus a default.
///
/// File schema (JSON):
///   {"default": {"persona": "...", "temperature": 0.7, "max_tokens": 120},
///    "profiles": [{"age": "adult", "emotion": "anxious", "persona": "...", ...}]}
class ProfileSet {
public:
    /// Throws ParseError on a missing default or a repeated (age, emotion).
    static ProfileSet from_json(const nlohmann::json& j);
    static ProfileSet load(const std::string& path);

    const BackendProfile& default_profile() const { return default_; }
    const BackendProfile* find(const std::string& age, const std::string& emotion) const;
    std::size_t size() const { return profiles_.size(); }

private:
    BackendProfile default_;
    std::map<std::pair<std::string, std::string>, BackendProfile> profiles_;
};

/// Keyed on age and emotion only; vulnerable tags never influence the choice.
const BackendProfile& select_backend(const CallerImage& ci, const ProfileSet& profiles);

// ---------------------------------------------------------------------------
// Prompt assembly
// ---------------------------------------------------------------------------

/// Behavioral descriptions used in place of sensitive labels.
///
/// File schema (JSON): {"<sensitive label>": "<description>", ...}
class ParaphraseTable {
public:
    static ParaphraseTable defaults();
    static ParaphraseTable from_json(const nlohmann::json& j);
    static ParaphraseTable load(const std::string& path);

    /// Every sensitive label in the taxonomy needs an entry, and no entry may
    /// contain a sensitive label verbatim. Throws ValidationError.
    void validate(const TagTaxonomy& taxonomy) const;

    /// Throws NotFoundError for a label without an entry.
    const std::string& describe(const std::string& label) const;
    const std::map<std::string, std::string>& entries() const { return entries_; }

private:
    std::map<std::string, std::string> entries_;
};

struct Exemplar {
    std::string call_id;
    std::string text;
};

struct PromptOptions {
    std::size_t retrieval_k = 3;
    std::size_t exemplar_k = 3;
    std::size_t address_count = 5;
    const ParaphraseTable* paraphrases = nullptr;  // defaults() when null
};

/// Marker placed in the few-shot section when no corpus call matches the
/// caller image.
inline constexpr const char* kNoExemplarsMarker = "(no exemplars: no past call matches this caller profile)";

/// A three-section prompt. Disabled sections are absent (nullopt) and are
/// left out of serialize().
struct PromptBundle {
    SimulationInstruction instruction;  // echo; carries sensitive labels, never rendered
    std::string profile_key;
    AblationSet ablation;

    std::optional<std::string> fact_context;
    std::optional<std::string> task_explanation;
    std::optional<std::string> few_shot_examples;

    std::vector<std::string> retrieved_call_ids;
    std::vector<std::string> protocol_questions;
    std::vector<std::string> valid_addresses;  // offered in the fact context
    std::vector<Exemplar> exemplars;

    /// Sections in order with "=== <name> ===" delimiters, terminated by
    /// "=== end ===".
    std::string serialize() const;
    nlohmann::json to_json() const;
};

PromptBundle assemble_prompt(const SimulationInstruction& instruction, const KnowledgeSet& knowledge,
                             const AblationSet& ablation, const std::string& profile_key = "default",
                             const PromptOptions& options = {});

// ---------------------------------------------------------------------------
// Backend clients
// ---------------------------------------------------------------------------

struct CompletionRequest {
    const PromptBundle& bundle;
    std::span<const Turn> history;
    const BackendProfile& profile;
    int attempt = 1;
};

/// Text-generation backend. Implementations must be safe to call from
/// several threads. Transport problems are reported as TransportError.
class BackendClient {
public:
    virtual ~BackendClient() = default;
    virtual std::string complete(const CompletionRequest& request) const = 0;
    virtual std::string name() const = 0;
};

/// Scripted backend for tests and offline runs.
///
/// Script schema (JSON):
///   {"turns": ["text", ["attempt 1 text", "attempt 2 text"], ...],
///    "by_incident": {"crash report": ["...", ...]},
///    "fault": {"rate": 0.4, "text": "..."},
///    "fabricated_address": "742 Evergreen Terrace"}
///
/// "by_incident" replaces "turns" for instructions of that incident type.
/// Entry i answers the i-th caller turn (the last entry repeats); inside an
/// entry, variant j answers attempt j (the last variant repeats). With a
/// fault rate, each (seed, caller turn, attempt) independently yields the
/// fault text with that probability. "{address}" expands to one of the
/// bundle's valid addresses, or to the fabricated address when the bundle
/// offers none; "{incident}" expands to the incident type.
class MockClient final : public BackendClient {
public:
    static MockClient from_json(const nlohmann::json& j);
    static MockClient load(const std::string& path);
    explicit MockClient(std::vector<std::vector<std::string>> turns);

    void set_incident_turns(const std::string& incident_type, std::vector<std::vector<std::string>> turns);
    void set_fault(double rate, std::string text);
    std::string complete(const CompletionRequest& request) const override;
    std::string name() const override { return "mock"; }

    /// Whether the (seed, caller turn, attempt) draw hits the fault branch.
    bool faults(std::uint64_t seed, std::size_t call_index, int attempt) const;

private:
    std::vector<std::vector<std::string>> turns_;
    std::map<std::string, std::vector<std::vector<std::string>>> by_incident_;
    double fault_rate_ = 0.0;
    std::string fault_text_;
    std::string fabricated_address_ = "742 Evergreen Terrace";
};

struct HttpBackendConfig {
    std::string endpoint;  // e.g. https://api.example.com/v1/chat/completions
    std::string model;
    std::string api_key_env = "CALLSIM_API_KEY";  // name of the variable, not the key
    int timeout_seconds = 60;
    std::size_t history_cap = 0;  // 0 = send the whole history

    /// Reads CALLSIM_BACKEND_URL, CALLSIM_BACKEND_MODEL and
    /// CALLSIM_BACKEND_KEY_ENV over the defaults.
    static HttpBackendConfig from_env();
    static HttpBackendConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// Chat-completion client (OpenAI-style JSON over HTTP).
class HttpChatClient final : public BackendClient {
public:
    explicit HttpChatClient(HttpBackendConfig config);

    std::string complete(const CompletionRequest& request) const override;
    std::string name() const override { return "http:" + config_.model; }

    /// Request body: persona and serialized bundle as the system message,
    /// caller turns as "assistant", call-taker turns as "user".
    nlohmann::json build_request(const CompletionRequest& request) const;

private:
    HttpBackendConfig config_;
    std::string base_;  // scheme://host[:port]
    std::string path_;
};

// ---------------------------------------------------------------------------
// Candidates
// ---------------------------------------------------------------------------

struct CandidateResponse {
    std::string text;
    int attempt = 1;
    std::int64_t elapsed_ms = 0;
    std::size_t token_count = 0;
};

nlohmann::json to_json(const CandidateResponse& candidate);

/// Throws ValidationError for attempt < 1; TransportError from the client
/// propagates.
CandidateResponse generate_candidate(const BackendClient& client, const PromptBundle& bundle,
                                     std::span<const Turn> history, const BackendProfile& profile, int attempt,
                                     const Clock& clock = system_clock());

}  // namespace callsim
