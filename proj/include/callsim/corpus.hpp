#pragma once

#include "json.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace callsim {

using LabelSet = std::set<std::string>;

enum class Speaker { caller, calltaker };

std::string_view to_string(Speaker s);
Speaker speaker_from_string(std::string_view s);

enum class Sensitivity { general, sensitive };

enum class LabelFamily { incident_type, scenario_context, special_request, age, emotion, vulnerable };

std::string_view to_string(LabelFamily f);

/// Ages and emotions a caller image may use.
inline const std::vector<std::string>& canonical_ages() {
    static const std::vector<std::string> v{"kid", "teenager", "adult", "senior"};
    return v;
}
inline const std::vector<std::string>& canonical_emotions() {
    static const std::vector<std::string> v{"sad", "calm", "neutral", "anxious", "angry", "irrational"};
    return v;
}
/// Vulnerable-group labels every taxonomy must carry.
inline const std::vector<std::string>& required_vulnerable_labels() {
    static const std::vector<std::string> v{"low-income housing area", "mental health", "non-native speaker", "unhoused"};
    return v;
}

/// The five label families. Labels are stored normalized (trimmed,
/// lower-cased, single-spaced) and are pairwise disjoint across families.
/// Vulnerable-group labels are sensitive, everything else is general.
class TagTaxonomy {
public:
    static TagTaxonomy from_json(const nlohmann::json& j);
    static TagTaxonomy load(const std::string& path);

    nlohmann::json to_json() const;

    const std::vector<std::string>& incident_types() const noexcept { return incident_types_; }
    const std::vector<std::string>& scenario_contexts() const noexcept { return scenario_contexts_; }
    const std::vector<std::string>& special_requests() const noexcept { return special_requests_; }
    const std::vector<std::string>& ages() const noexcept { return ages_; }
    const std::vector<std::string>& emotions() const noexcept { return emotions_; }
    const std::vector<std::string>& vulnerable() const noexcept { return vulnerable_; }

    std::optional<LabelFamily> family_of(std::string_view label) const;
    bool contains(std::string_view label) const { return family_of(label).has_value(); }
    Sensitivity sensitivity(std::string_view label) const;
    std::vector<std::string> sensitive_labels() const;

    /// Number of caller-image labels (ages + emotions + vulnerable).
    std::size_t caller_image_label_count() const noexcept {
        return ages_.size() + emotions_.size() + vulnerable_.size();
    }

    /// Normalizes `raw` and checks that it belongs to `expected`. Throws
    /// TagError naming the label otherwise.
    std::string resolve(std::string_view raw, LabelFamily expected) const;

    /// Normalizes `raw` and checks it belongs to any family.
    std::string resolve_any(std::string_view raw) const;

    friend bool operator==(const TagTaxonomy&, const TagTaxonomy&) = default;

private:
    std::vector<std::string> incident_types_;
    std::vector<std::string> scenario_contexts_;
    std::vector<std::string> special_requests_;
    std::vector<std::string> ages_;
    std::vector<std::string> emotions_;
    std::vector<std::string> vulnerable_;
    std::map<std::string, LabelFamily> family_;
};

struct IncidentSpecification {
    std::string incident_type;
    LabelSet scenario_contexts;
    LabelSet special_requests;

    friend bool operator==(const IncidentSpecification&, const IncidentSpecification&) = default;
};

struct CallerImage {
    std::string age;
    std::string emotion;
    LabelSet vulnerable;

    friend bool operator==(const CallerImage&, const CallerImage&) = default;
};

struct Turn {
    Speaker speaker = Speaker::caller;
    std::string text;
    std::size_t index = 0;

    friend bool operator==(const Turn&, const Turn&) = default;
};

struct AnnotatedCall {
    std::string id;
    std::vector<Turn> turns;
    IncidentSpecification is;
    CallerImage ci;

    /// Every IS and CI label on the call.
    LabelSet labels() const;
    LabelSet caller_image_labels() const;
    LabelSet incident_labels() const;

    /// Caller utterances joined by a single space.
    std::string caller_text() const;
    /// All utterances joined by a single space.
    std::string full_text() const;

    friend bool operator==(const AnnotatedCall&, const AnnotatedCall&) = default;
};

/// Resolves and validates an IS / CI pair against the taxonomy.
IncidentSpecification resolve_incident(const nlohmann::json& j, const TagTaxonomy& taxonomy);
CallerImage resolve_caller_image(const nlohmann::json& j, const TagTaxonomy& taxonomy);

nlohmann::json to_json(const IncidentSpecification& is);
nlohmann::json to_json(const CallerImage& ci);
nlohmann::json to_json(const Turn& t);
nlohmann::json to_json(const AnnotatedCall& call);

/// Parses one corpus record. `line_no` only feeds diagnostics.
AnnotatedCall parse_call(const nlohmann::json& record, const TagTaxonomy& taxonomy, std::size_t line_no = 0);

/// Reads a line-delimited JSON corpus. Records come back in file order.
std::vector<AnnotatedCall> parse_corpus(const std::string& path, const TagTaxonomy& taxonomy);
std::vector<AnnotatedCall> parse_corpus_text(std::string_view jsonl, const TagTaxonomy& taxonomy);

/// One compact JSON record per line, same schema parse_corpus reads.
std::string serialize_corpus(const std::vector<AnnotatedCall>& calls);

/// Calls whose combined label set is a superset of `tags`, order preserved.
std::vector<AnnotatedCall> filter_calls(const std::vector<AnnotatedCall>& corpus, const LabelSet& tags,
                                        const TagTaxonomy& taxonomy);

/// Normalizes and resolves every label in `tags`.
LabelSet resolve_labels(const LabelSet& tags, const TagTaxonomy& taxonomy);

}  // namespace callsim
