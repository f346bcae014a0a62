#pragma once

#include "callsim/corpus.hpp"
#include "callsim/tfidf.hpp"

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace callsim {

// ---------------------------------------------------------------------------
// Address gazetteer
// ---------------------------------------------------------------------------

/// Version of the address normalization rules below. Bump when the
/// abbreviation table or tokenization changes.
inline constexpr int kAddressRulesVersion = 1;

/// Lower-case, punctuation stripped, whitespace collapsed, abbreviations
/// expanded (st -> street, ave -> avenue, ...). "pike" and "pk" are left as is.
std::string normalize_address(std::string_view raw);

struct AddressRecord {
    std::string street_number;
    std::string street_name;
    std::string unit;      // empty when absent, e.g. "apartment 302"
    std::string locality;  // empty when absent

    /// "<number> <street>[ <unit>]", the lookup key.
    std::string key() const;
    /// key() plus ", <locality>" when a locality is set.
    std::string canonical() const;

    friend bool operator==(const AddressRecord&, const AddressRecord&) = default;
};

/// Parses a raw address. Commas separate the street segment from unit and
/// locality segments. Returns nullopt when there is no leading street number
/// or no street name.
std::optional<AddressRecord> parse_address(std::string_view raw);

struct AddressMatch {
    bool matched = false;
    std::optional<AddressRecord> entry;
};

class AddressGazetteer {
public:
    AddressGazetteer() = default;

    /// One address per element. Throws ParseError on an unparseable or
    /// duplicate line.
    static AddressGazetteer from_lines(const std::vector<std::string>& lines);
    static AddressGazetteer load(const std::string& path);

    std::size_t size() const noexcept { return entries_.size(); }
    const std::vector<AddressRecord>& entries() const noexcept { return entries_; }
    /// Entries as written in the source, parallel to entries().
    const std::vector<std::string>& display_forms() const noexcept { return display_; }
    int rules_version() const noexcept { return kAddressRulesVersion; }

    AddressMatch lookup(std::string_view raw) const;

private:
    std::vector<AddressRecord> entries_;
    std::vector<std::string> display_;
    std::multimap<std::string, std::size_t> by_key_;
};

inline AddressMatch lookup_address(const AddressGazetteer& gazetteer, std::string_view raw) {
    return gazetteer.lookup(raw);
}

// ---------------------------------------------------------------------------
// Connectivity map
// ---------------------------------------------------------------------------

struct Adjacency {
    std::string node;
    std::string label;
};

/// Undirected location graph.
///
/// File schema (JSON):
///   {"nodes": ["322 Broadway", ...],
///    "edges": [{"from": "322 Broadway", "to": "3rd Avenue South", "label": "cross street"}]}
class ConnectivityMap {
public:
    static ConnectivityMap from_json(const nlohmann::json& j);
    static ConnectivityMap load(const std::string& path);

    const std::vector<std::string>& nodes() const noexcept { return nodes_; }
    bool has_node(std::string_view name) const;
    bool has_edge(std::string_view a, std::string_view b) const;
    std::vector<Adjacency> neighbors(std::string_view node) const;
    std::size_t edge_count() const noexcept { return edge_count_; }

private:
    std::vector<std::string> nodes_;
    std::map<std::string, std::vector<Adjacency>> adjacency_;  // keyed by normalize_label(node)
    std::size_t edge_count_ = 0;
};

// ---------------------------------------------------------------------------
// Protocol trees
// ---------------------------------------------------------------------------

struct ProtocolBranch {
    std::string answer;
    std::string next;
};

struct ProtocolNode {
    std::string id;
    std::string question;
    std::vector<ProtocolBranch> children;
    bool terminal = false;
};

class ProtocolTree {
public:
    const std::string& incident_type() const noexcept { return incident_type_; }
    const std::string& root() const noexcept { return root_; }
    const ProtocolNode& node(const std::string& id) const;
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Node ids in depth-first pre-order, children in file order.
    std::vector<std::string> preorder() const;

    /// Questions the dispatcher may ask next given the answered node ids.
    /// Walks from the root through answered nodes; an answered terminal node
    /// ends the protocol and yields an empty list.
    std::vector<std::string> frontier(const std::set<std::string>& answered) const;

private:
    friend class ProtocolSet;
    std::string incident_type_;
    std::string root_;
    std::map<std::string, ProtocolNode> nodes_;
};

/// One tree per incident type.
///
/// File schema (JSON):
///   {"protocols": [{"incident_type": "crash report", "root": "q1",
///                   "nodes": [{"id": "q1", "question": "...",
///                              "children": [{"answer": "yes", "next": "q2"}]},
///                             {"id": "q2", "question": "...", "terminal": true}]}]}
class ProtocolSet {
public:
    /// Validates acyclicity, single parenthood, reachability and the
    /// terminal/children rule. When `taxonomy` is given every incident type
    /// must resolve against it.
    static ProtocolSet from_json(const nlohmann::json& j, const TagTaxonomy* taxonomy = nullptr);
    static ProtocolSet load(const std::string& path, const TagTaxonomy* taxonomy = nullptr);

    bool has(std::string_view incident_type) const;
    const ProtocolTree& tree(std::string_view incident_type) const;
    std::size_t size() const noexcept { return trees_.size(); }

private:
    std::map<std::string, ProtocolTree> trees_;
};

/// Throws NotFoundError for an incident type without a tree.
std::vector<std::string> next_questions(const ProtocolSet& protocols, std::string_view incident_type,
                                        const std::set<std::string>& answered);

// ---------------------------------------------------------------------------
// Retrievable base
// ---------------------------------------------------------------------------

struct RetrievalEntry {
    std::string call_id;
    std::vector<std::string> excerpts;  // caller utterances
    LabelSet labels;
    SparseVector term_frequencies;
    SparseVector weights;  // tf-idf
    bool degenerate = false;  // zero tf-idf vector (e.g. only stop-words)
};

struct RetrievalHit {
    const RetrievalEntry* entry = nullptr;
    double score = 0.0;
};

/// Tag-indexed excerpts of past calls with TF-iDF vectors over the corpus
/// vocabulary. Stop-words are dropped before weighting.
class RetrievableBase {
public:
    RetrievableBase() = default;
    explicit RetrievableBase(const std::vector<AnnotatedCall>& corpus);

    const std::vector<RetrievalEntry>& entries() const noexcept { return entries_; }
    const TfIdfIndex& index() const noexcept { return index_; }

    /// Query vector in the base's weighting.
    SparseVector vectorize(std::string_view query) const;

private:
    std::vector<RetrievalEntry> entries_;
    TfIdfIndex index_;
};

/// Entries whose labels include every tag, by descending cosine to `query`,
/// ties by ascending call id, at most k. Tags must resolve against the
/// taxonomy; k must be at least 1.
std::vector<RetrievalHit> retrieve(const RetrievableBase& base, const LabelSet& tags, std::string_view query,
                                   std::size_t k, const TagTaxonomy& taxonomy);

// ---------------------------------------------------------------------------
// Knowledge set
// ---------------------------------------------------------------------------

struct KnowledgeSet {
    TagTaxonomy taxonomy;
    std::vector<AnnotatedCall> corpus;
    AddressGazetteer gazetteer;
    ConnectivityMap connectivity;
    ProtocolSet protocols;
    RetrievableBase retrievable;
};

struct KnowledgePaths {
    std::string gazetteer;
    std::string connectivity;
    std::string protocols;
};

/// Throws ValidationError on an empty corpus; factual-file errors propagate.
std::shared_ptr<const KnowledgeSet> build_knowledge(TagTaxonomy taxonomy, std::vector<AnnotatedCall> corpus,
                                                    const KnowledgePaths& paths);

std::shared_ptr<const KnowledgeSet> build_knowledge(TagTaxonomy taxonomy, std::vector<AnnotatedCall> corpus,
                                                    AddressGazetteer gazetteer, ConnectivityMap connectivity,
                                                    ProtocolSet protocols);

}  // namespace callsim
