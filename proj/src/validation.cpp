#include "callsim/validation.hpp"

#include "callsim/error.hpp"
#include "callsim/text.hpp"

#include <regex>

namespace callsim {

using nlohmann::json;

std::string_view to_string(CheckKind k) {
    switch (k) {
        case CheckKind::format: return "format";
        case CheckKind::alignment: return "alignment";
        case CheckKind::factual: return "factual";
    }
    return "?";
}

static CheckKind check_kind_from_string(std::string_view s) {
    if (s == "format") return CheckKind::format;
    if (s == "alignment") return CheckKind::alignment;
    if (s == "factual") return CheckKind::factual;
    throw ParseError("unknown check '" + std::string(s) + "'");
}

std::string_view to_string(FinalStatus s) {
    switch (s) {
        case FinalStatus::validated: return "validated";
        case FinalStatus::best_available: return "best_available";
        case FinalStatus::unchecked: return "unchecked";
    }
    return "?";
}

static FinalStatus final_status_from_string(std::string_view s) {
    if (s == "validated") return FinalStatus::validated;
    if (s == "best_available") return FinalStatus::best_available;
    if (s == "unchecked") return FinalStatus::unchecked;
    throw ParseError("unknown final status '" + std::string(s) + "'");
}

std::string_view to_string(SessionStatus s) {
    switch (s) {
        case SessionStatus::active: return "active";
        case SessionStatus::completed: return "completed";
        case SessionStatus::aborted: return "aborted";
    }
    return "?";
}

SessionStatus session_status_from_string(std::string_view s) {
    if (s == "active") return SessionStatus::active;
    if (s == "completed") return SessionStatus::completed;
    if (s == "aborted") return SessionStatus::aborted;
    throw ParseError("unknown session status '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Checks
// ---------------------------------------------------------------------------

CheckResult check_format(const CandidateResponse& candidate, std::size_t max_length) {
    static const std::regex role_prefix(
        R"(^\s*[\[\*\(]*\s*(caller|call[- ]?taker|dispatcher|operator|trainee|assistant|user|system|9-?1-?1)\s*[\]\*\)]*\s*:)",
        std::regex::icase);
    CheckResult r{CheckKind::format, false, {}, std::nullopt, false};
    const auto& t = candidate.text;
    if (text::trim(t).empty()) {
        r.detail = "empty response";
        return r;
    }
    if (t.size() > max_length) {
        r.detail = "response is " + std::to_string(t.size()) + " characters, cap is " + std::to_string(max_length);
        return r;
    }
    std::size_t start = 0;
    while (start <= t.size()) {
        auto end = t.find('\n', start);
        auto line = t.substr(start, end == std::string::npos ? std::string::npos : end - start);
        std::smatch m;
        if (std::regex_search(line, m, role_prefix)) {
            r.detail = "speaker-role marker '" + text::trim(m.str(0)) + "'";
            return r;
        }
        if (end == std::string::npos) break;
        start = end + 1;
    }
    r.passed = true;
    return r;
}

CheckResult check_alignment(const CandidateResponse& candidate, const SimulationInstruction& instruction,
                            const IncidentClassifier& classifier, std::span<const Turn> history, double abstain) {
    CheckResult r{CheckKind::alignment, false, {}, std::nullopt, false};
    std::vector<Turn> turns(history.begin(), history.end());
    turns.push_back({Speaker::caller, candidate.text, turns.size()});
    Classification c;
    try {
        c = classifier.classify(turns);
    } catch (const std::exception& e) {
        r.errored = true;
        r.detail = std::string("classifier error: ") + e.what();
        return r;
    }
    r.extracted = c.label;
    if (c.confidence < abstain) {
        r.passed = true;
        r.detail = "abstained";
        return r;
    }
    if (c.label == instruction.is.incident_type) {
        r.passed = true;
        return r;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", c.confidence);
    r.detail = "classified as '" + c.label + "' (confidence " + buf + "), expected '" +
               instruction.is.incident_type + "'";
    return r;
}

CheckResult check_factual(const CandidateResponse& candidate, const ExtractiveAnswerer& answerer,
                          const AddressGazetteer& gazetteer) {
    CheckResult r{CheckKind::factual, false, {}, std::nullopt, false};
    auto a = answerer.answer(Turn{Speaker::caller, candidate.text, 0}, kAddressQuestion);
    if (!a.present) {
        r.passed = true;
        r.detail = "no address stated";
        return r;
    }
    r.extracted = a.span;
    if (gazetteer.lookup(*a.span).matched) {
        r.passed = true;
        return r;
    }
    r.detail = "address '" + *a.span + "' is not in the gazetteer";
    return r;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

json CheckResult::to_json() const {
    json j{{"check", to_string(check)}, {"passed", passed}, {"detail", detail}};
    if (extracted) j["extracted"] = *extracted;
    if (errored) j["errored"] = true;
    return j;
}

CheckResult CheckResult::from_json(const json& j) {
    CheckResult r;
    r.check = check_kind_from_string(j.at("check").get<std::string>());
    r.passed = j.at("passed").get<bool>();
    r.detail = j.value("detail", std::string());
    if (j.contains("extracted")) r.extracted = j.at("extracted").get<std::string>();
    r.errored = j.value("errored", false);
    return r;
}

std::size_t AttemptRecord::passed_count() const {
    std::size_t n = 0;
    for (const auto& c : checks) n += c.passed ? 1 : 0;
    return n;
}

json ValidationReport::to_json() const {
    json attempts_j = json::array();
    for (const auto& a : attempts) {
        json checks_j = json::array();
        for (const auto& c : a.checks) checks_j.push_back(c.to_json());
        attempts_j.push_back({{"candidate", callsim::to_json(a.candidate)}, {"checks", checks_j}});
    }
    return json{{"turn_index", turn_index},       {"loop_threshold", loop_threshold},
                {"attempts", attempts_j},         {"accepted_attempt", accepted_attempt},
                {"status", to_string(status)},    {"regeneration", regeneration}};
}

ValidationReport ValidationReport::from_json(const json& j) {
    ValidationReport r;
    r.turn_index = j.at("turn_index").get<std::size_t>();
    r.loop_threshold = j.at("loop_threshold").get<int>();
    for (const auto& aj : j.at("attempts")) {
        AttemptRecord a;
        const auto& cj = aj.at("candidate");
        a.candidate.text = cj.at("text").get<std::string>();
        a.candidate.attempt = cj.at("attempt").get<int>();
        a.candidate.elapsed_ms = cj.at("elapsed_ms").get<std::int64_t>();
        a.candidate.token_count = cj.at("tokens").get<std::size_t>();
        for (const auto& c : aj.at("checks")) a.checks.push_back(CheckResult::from_json(c));
        r.attempts.push_back(std::move(a));
    }
    r.accepted_attempt = j.at("accepted_attempt").get<int>();
    r.status = final_status_from_string(j.at("status").get<std::string>());
    r.regeneration = j.value("regeneration", false);
    return r;
}

json FeedbackRecord::to_json() const {
    json j{{"session_id", session_id},
           {"turn_index", turn_index},
           {"rating", rating},
           {"rejected", rejected},
           {"timestamp", format_utc(timestamp_ms)},
           {"timestamp_ms", timestamp_ms}};
    if (comment) j["comment"] = *comment;
    return j;
}

FeedbackRecord FeedbackRecord::from_json(const json& j) {
    FeedbackRecord f;
    f.session_id = j.at("session_id").get<std::string>();
    f.turn_index = j.at("turn_index").get<std::size_t>();
    f.rating = j.at("rating").get<int>();
    f.rejected = j.value("rejected", false);
    f.timestamp_ms = j.value("timestamp_ms", std::int64_t{0});
    if (j.contains("comment")) f.comment = j.at("comment").get<std::string>();
    return f;
}

std::vector<Turn> SessionState::effective_history() const {
    std::vector<Turn> out;
    for (const auto& t : history)
        if (!rejected.count(t.index)) out.push_back(t);
    return out;
}

const ValidationReport* SessionState::report_for(std::size_t turn_index) const {
    for (const auto& r : reports)
        if (r.turn_index == turn_index) return &r;
    return nullptr;
}

json SessionState::to_json() const {
    json turns = json::array();
    for (const auto& t : history) {
        json tj{{"index", t.index}, {"speaker", callsim::to_string(t.speaker)}, {"text", t.text}};
        if (rejected.count(t.index)) tj["rejected"] = true;
        turns.push_back(tj);
    }
    json reports_j = json::array();
    for (const auto& r : reports) reports_j.push_back(r.to_json());
    json feedback_j = json::array();
    for (const auto& f : feedback) feedback_j.push_back(f.to_json());
    return json{{"id", id},
                {"instruction", callsim::to_json(instruction)},
                {"profile", profile_key},
                {"bundle", bundle.to_json()},
                {"turns", turns},
                {"reports", reports_j},
                {"feedback", feedback_j},
                {"status", callsim::to_string(status)}};
}

// ---------------------------------------------------------------------------
// Loop
// ---------------------------------------------------------------------------

SessionState open_session(std::string id, const SimulationInstruction& instruction, const ValidationDeps& deps,
                          const PromptOptions& prompt) {
    if (!deps.knowledge || !deps.profiles) throw StateError("validation deps need knowledge and profiles");
    validate_instruction(instruction, deps.knowledge->taxonomy);
    SessionState s;
    s.id = std::move(id);
    s.instruction = instruction;
    s.profile_key = select_backend(instruction.ci, *deps.profiles).key();
    s.bundle = assemble_prompt(instruction, *deps.knowledge, deps.ablation, s.profile_key, prompt);
    return s;
}

namespace {

CandidateResponse generate_with_retries(const ValidationDeps& deps, const SessionState& s,
                                        std::span<const Turn> history, const BackendProfile& profile, int attempt) {
    const Clock& clock = deps.clock ? *deps.clock : system_clock();
    for (int tries = 0;; ++tries) {
        try {
            return generate_candidate(*deps.client, s.bundle, history, profile, attempt, clock);
        } catch (const TransportError& e) {
            if (tries >= deps.config.transport_retries)
                throw TransportError("backend failed after " + std::to_string(tries + 1) + " tries: " + e.what());
        }
    }
}

}  // namespace

std::pair<Turn, ValidationReport> validated_generate(SessionState& s, const ValidationDeps& deps) {
    if (s.status != SessionStatus::active) throw StateError("session " + s.id + " is not active");
    if (!deps.client || !deps.knowledge || !deps.profiles) throw StateError("validation deps are incomplete");
    const bool checking = deps.ablation.validation_enabled();
    if (checking && (!deps.classifier || !deps.answerer)) throw StateError("validation needs a classifier and an answerer");
    if (deps.config.threshold < 1) throw ValidationError("loop threshold must be at least 1");

    auto history = s.effective_history();
    if (!history.empty() && history.back().speaker != Speaker::calltaker)
        throw StateError("session " + s.id + " is waiting for the call-taker");

    const BackendProfile& profile = select_backend(s.instruction.ci, *deps.profiles);
    ValidationReport report;
    report.turn_index = s.history.size();
    report.loop_threshold = deps.config.threshold;
    report.regeneration = !s.history.empty() && s.rejected.count(s.history.back().index) > 0;

    if (!checking) {
        report.attempts.push_back({generate_with_retries(deps, s, history, profile, 1), {}});
        report.accepted_attempt = 1;
        report.status = FinalStatus::unchecked;
    } else {
        bool accepted = false;
        for (int attempt = 1; attempt <= deps.config.threshold && !accepted; ++attempt) {
            AttemptRecord rec;
            rec.candidate = generate_with_retries(deps, s, history, profile, attempt);
            rec.checks.push_back(check_format(rec.candidate, deps.config.max_length));
            rec.checks.push_back(check_alignment(rec.candidate, s.instruction, *deps.classifier, history,
                                                 deps.config.abstain_threshold));
            rec.checks.push_back(check_factual(rec.candidate, *deps.answerer, deps.knowledge->gazetteer));
            accepted = rec.all_passed();
            report.attempts.push_back(std::move(rec));
        }
        if (accepted) {
            report.accepted_attempt = static_cast<int>(report.attempts.size());
            report.status = FinalStatus::validated;
        } else {
            std::size_t best = 0;
            for (std::size_t i = 1; i < report.attempts.size(); ++i)
                if (report.attempts[i].passed_count() > report.attempts[best].passed_count()) best = i;
            report.accepted_attempt = static_cast<int>(best + 1);
            report.status = FinalStatus::best_available;
        }
    }

    Turn turn{Speaker::caller, report.accepted().candidate.text, s.history.size()};
    s.history.push_back(turn);
    s.reports.push_back(report);
    return {turn, report};
}

const Turn& append_calltaker_turn(SessionState& s, const std::string& text) {
    if (s.status != SessionStatus::active) throw StateError("session " + s.id + " is not active");
    if (text::trim(text).empty()) throw ValidationError("call-taker text is empty");
    auto history = s.effective_history();
    if (history.empty() || history.back().speaker != Speaker::caller)
        throw StateError("session " + s.id + " is waiting for the caller");
    s.history.push_back({Speaker::calltaker, text, s.history.size()});
    return s.history.back();
}

FeedbackRecord record_feedback(SessionState& s, std::size_t turn_index, int rating, std::optional<std::string> comment,
                               bool rejected, const Clock& clock) {
    if (turn_index >= s.history.size())
        throw ValidationError("turn " + std::to_string(turn_index) + " does not exist in session " + s.id);
    if (s.history[turn_index].speaker != Speaker::caller)
        throw ValidationError("turn " + std::to_string(turn_index) + " is not a caller turn");
    if (rating < 1 || rating > 5) throw ValidationError("rating must be between 1 and 5, got " + std::to_string(rating));
    if (rejected) {
        if (s.status != SessionStatus::active) throw StateError("session " + s.id + " is not active");
        if (turn_index + 1 != s.history.size()) throw ValidationError("only the latest caller turn can be rejected");
        if (s.rejected.count(turn_index)) throw ValidationError("turn " + std::to_string(turn_index) + " is already rejected");
    }
    FeedbackRecord f{s.id, turn_index, rating, std::move(comment), rejected, clock.now_ms()};
    if (rejected) s.rejected.insert(turn_index);
    s.feedback.push_back(f);
    return f;
}

}  // namespace callsim
