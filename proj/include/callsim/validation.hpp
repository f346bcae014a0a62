#pragma once

#include "callsim/clock.hpp"
#include "callsim/copilot.hpp"
#include "callsim/generation.hpp"

#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace callsim {

enum class CheckKind { format, alignment, factual };
std::string_view to_string(CheckKind k);

struct CheckResult {
    CheckKind check = CheckKind::format;
    bool passed = false;
    std::string detail;                    // non-empty on failure
    std::optional<std::string> extracted;  // predicted incident type or address span
    bool errored = false;                  // the check itself failed to run

    nlohmann::json to_json() const;
    static CheckResult from_json(const nlohmann::json& j);
};

struct ValidationConfig {
    int threshold = 3;  // T: maximum attempts per turn
    std::size_t max_length = 600;
    double abstain_threshold = 0.2;
    int transport_retries = 2;  // extra tries per attempt on TransportError
};

CheckResult check_format(const CandidateResponse& candidate, std::size_t max_length = 600);

/// Classifies history plus the candidate. Passes when the prediction equals
/// the instructed incident type or its confidence is below `abstain`.
CheckResult check_alignment(const CandidateResponse& candidate, const SimulationInstruction& instruction,
                            const IncidentClassifier& classifier, std::span<const Turn> history,
                            double abstain = 0.2);

/// Vacuous pass when the candidate states no address; otherwise the address
/// must resolve in the gazetteer.
CheckResult check_factual(const CandidateResponse& candidate, const ExtractiveAnswerer& answerer,
                          const AddressGazetteer& gazetteer);

struct AttemptRecord {
    CandidateResponse candidate;
    std::vector<CheckResult> checks;  // empty when validation is disabled

    std::size_t passed_count() const;
    bool all_passed() const { return !checks.empty() && passed_count() == checks.size(); }
};

enum class FinalStatus { validated, best_available, unchecked };
std::string_view to_string(FinalStatus s);

struct ValidationReport {
    std::size_t turn_index = 0;  // caller turn the report belongs to
    int loop_threshold = 3;
    std::vector<AttemptRecord> attempts;
    int accepted_attempt = 1;  // 1-based index into attempts
    FinalStatus status = FinalStatus::validated;
    bool regeneration = false;  // produced after a human rejection

    const AttemptRecord& accepted() const { return attempts.at(static_cast<std::size_t>(accepted_attempt - 1)); }
    bool best_available() const { return status == FinalStatus::best_available; }

    nlohmann::json to_json() const;
    static ValidationReport from_json(const nlohmann::json& j);
};

struct FeedbackRecord {
    std::string session_id;
    std::size_t turn_index = 0;
    int rating = 0;  // 1..5
    std::optional<std::string> comment;
    bool rejected = false;
    std::int64_t timestamp_ms = 0;

    nlohmann::json to_json() const;
    static FeedbackRecord from_json(const nlohmann::json& j);
};

enum class SessionStatus { active, completed, aborted };
std::string_view to_string(SessionStatus s);
SessionStatus session_status_from_string(std::string_view s);

struct SessionState {
    std::string id;
    SimulationInstruction instruction;
    PromptBundle bundle;
    std::string profile_key;
    std::vector<Turn> history;       // every turn, rejected ones included
    std::set<std::size_t> rejected;  // indices of rejected caller turns
    std::vector<ValidationReport> reports;
    std::vector<FeedbackRecord> feedback;
    SessionStatus status = SessionStatus::active;

    /// History without rejected turns; what the backend and checks see.
    std::vector<Turn> effective_history() const;
    const ValidationReport* report_for(std::size_t turn_index) const;

    nlohmann::json to_json() const;
};

struct ValidationDeps {
    const BackendClient* client = nullptr;
    const KnowledgeSet* knowledge = nullptr;
    const IncidentClassifier* classifier = nullptr;
    const ExtractiveAnswerer* answerer = nullptr;
    const ProfileSet* profiles = nullptr;
    ValidationConfig config;
    AblationSet ablation;
    const Clock* clock = nullptr;  // system clock when null
};

/// Fresh session with its prompt bundle assembled. Does not generate.
SessionState open_session(std::string id, const SimulationInstruction& instruction, const ValidationDeps& deps,
                          const PromptOptions& prompt = {});

/// Generates the next caller turn through the bounded check loop and appends
/// it with its report. The session is untouched when the backend keeps
/// failing (TransportError) or a precondition fails (StateError).
std::pair<Turn, ValidationReport> validated_generate(SessionState& session, const ValidationDeps& deps);

/// Appends a call-taker turn. Throws StateError unless the session is active
/// and the last effective turn is a caller turn.
const Turn& append_calltaker_turn(SessionState& session, const std::string& text);

/// Throws ValidationError for a bad turn index, a non-caller turn, or a
/// rating outside 1..5. A rejection marks the turn; call validated_generate
/// afterwards to regenerate (allowed only when it was the last caller turn).
FeedbackRecord record_feedback(SessionState& session, std::size_t turn_index, int rating,
                               std::optional<std::string> comment, bool rejected,
                               const Clock& clock = system_clock());

}  // namespace callsim
