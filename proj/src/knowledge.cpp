#include "callsim/knowledge.hpp"

#include "callsim/error.hpp"
#include "callsim/text.hpp"

#include <algorithm>
#include <functional>

namespace callsim {

using nlohmann::json;

namespace {

const std::map<std::string, std::string>& abbreviations() {
    static const std::map<std::string, std::string> table{
        {"st", "street"},    {"str", "street"},   {"ave", "avenue"},  {"av", "avenue"},
        {"rd", "road"},      {"blvd", "boulevard"}, {"dr", "drive"},  {"ln", "lane"},
        {"ct", "court"},     {"pl", "place"},     {"hwy", "highway"}, {"pkwy", "parkway"},
        {"ter", "terrace"},  {"cir", "circle"},   {"apt", "apartment"}, {"ste", "suite"},
        {"bldg", "building"}, {"fl", "floor"},
    };
    return table;
}

bool is_unit_keyword(std::string_view t) {
    return t == "apartment" || t == "suite" || t == "unit" || t == "building" || t == "floor";
}

std::vector<std::string> split_words(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ' ') {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

}  // namespace

std::string normalize_address(std::string_view raw) {
    std::string cleaned;
    cleaned.reserve(raw.size());
    for (unsigned char c : raw) {
        if (std::isalnum(c) || c >= 0x80) {
            cleaned.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
        } else {
            cleaned.push_back(' ');
        }
    }
    std::vector<std::string> words;
    for (auto& w : split_words(cleaned)) {
        auto it = abbreviations().find(w);
        words.push_back(it == abbreviations().end() ? w : it->second);
    }
    return text::join(words, " ");
}

std::string AddressRecord::key() const {
    std::string k = street_number + " " + street_name;
    if (!unit.empty()) k += " " + unit;
    return k;
}

std::string AddressRecord::canonical() const {
    return locality.empty() ? key() : key() + ", " + locality;
}

std::optional<AddressRecord> parse_address(std::string_view raw) {
    std::vector<std::string> segments;
    std::string cur;
    for (char c : raw) {
        if (c == ',') {
            segments.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    segments.push_back(cur);

    auto words = split_words(normalize_address(segments.front()));
    if (words.size() < 2) return std::nullopt;
    if (!std::isdigit(static_cast<unsigned char>(words.front().front()))) return std::nullopt;

    AddressRecord rec;
    rec.street_number = words.front();
    std::size_t i = 1;
    std::vector<std::string> street;
    while (i < words.size() && !is_unit_keyword(words[i])) street.push_back(words[i++]);
    if (street.empty()) return std::nullopt;
    rec.street_name = text::join(street, " ");
    if (i < words.size()) rec.unit = text::join(std::vector<std::string>(words.begin() + static_cast<long>(i), words.end()), " ");

    for (std::size_t s = 1; s < segments.size(); ++s) {
        auto seg = split_words(normalize_address(segments[s]));
        if (seg.empty()) continue;
        if (is_unit_keyword(seg.front()) && rec.unit.empty()) {
            rec.unit = text::join(seg, " ");
            continue;
        }
        if (seg.front() == "in" && seg.size() > 1) seg.erase(seg.begin());
        if (rec.locality.empty()) rec.locality = text::join(seg, " ");
    }
    return rec;
}

AddressGazetteer AddressGazetteer::from_lines(const std::vector<std::string>& lines) {
    AddressGazetteer g;
    std::size_t line_no = 0;
    for (const auto& line : lines) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        auto rec = parse_address(line);
        if (!rec) throw ParseError("gazetteer line " + std::to_string(line_no) + ": not an address: '" + line + "'");
        auto canonical = rec->canonical();
        auto range = g.by_key_.equal_range(rec->key());
        for (auto it = range.first; it != range.second; ++it) {
            if (g.entries_[it->second].canonical() == canonical)
                throw ParseError("gazetteer line " + std::to_string(line_no) + ": duplicate address '" + canonical + "'");
        }
        g.by_key_.emplace(rec->key(), g.entries_.size());
        g.entries_.push_back(std::move(*rec));
        g.display_.emplace_back(text::trim(line));
    }
    return g;
}

AddressGazetteer AddressGazetteer::load(const std::string& path) {
    try {
        return from_lines(text::read_lines(path));
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

AddressMatch AddressGazetteer::lookup(std::string_view raw) const {
    auto rec = parse_address(raw);
    if (!rec) return {};
    auto range = by_key_.equal_range(rec->key());
    for (auto it = range.first; it != range.second; ++it) {
        const auto& entry = entries_[it->second];
        if (rec->locality.empty() || entry.locality.empty() || rec->locality == entry.locality) {
            return {true, entry};
        }
    }
    return {};
}

// ---------------------------------------------------------------------------

ConnectivityMap ConnectivityMap::from_json(const json& j) {
    if (!j.is_object() || !j.contains("nodes") || !j.at("nodes").is_array())
        throw ParseError("connectivity map needs a 'nodes' array");
    ConnectivityMap m;
    for (const auto& n : j.at("nodes")) {
        if (!n.is_string()) throw ParseError("connectivity node must be a string");
        auto name = text::trim(n.get<std::string>());
        auto key = text::normalize_label(name);
        if (name.empty()) throw ParseError("empty connectivity node");
        if (m.adjacency_.count(key)) throw ParseError("duplicate connectivity node '" + name + "'");
        m.adjacency_[key];
        m.nodes_.push_back(name);
    }
    if (j.contains("edges")) {
        if (!j.at("edges").is_array()) throw ParseError("'edges' must be an array");
        for (const auto& e : j.at("edges")) {
            if (!e.is_object() || !e.contains("from") || !e.contains("to"))
                throw ParseError("edge needs 'from' and 'to'");
            auto a = text::trim(e.at("from").get<std::string>());
            auto b = text::trim(e.at("to").get<std::string>());
            auto label = e.contains("label") ? e.at("label").get<std::string>() : std::string();
            auto ka = text::normalize_label(a), kb = text::normalize_label(b);
            if (!m.adjacency_.count(ka)) throw ParseError("edge endpoint '" + a + "' is not a node");
            if (!m.adjacency_.count(kb)) throw ParseError("edge endpoint '" + b + "' is not a node");
            auto display = [&m](const std::string& key) {
                for (const auto& n : m.nodes_)
                    if (text::normalize_label(n) == key) return n;
                return key;
            };
            m.adjacency_[ka].push_back({display(kb), label});
            if (ka != kb) m.adjacency_[kb].push_back({display(ka), label});
            ++m.edge_count_;
        }
    }
    return m;
}

ConnectivityMap ConnectivityMap::load(const std::string& path) {
    try {
        return from_json(json::parse(text::read_file(path)));
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

bool ConnectivityMap::has_node(std::string_view name) const {
    return adjacency_.count(text::normalize_label(name)) != 0;
}

bool ConnectivityMap::has_edge(std::string_view a, std::string_view b) const {
    auto it = adjacency_.find(text::normalize_label(a));
    if (it == adjacency_.end()) return false;
    auto kb = text::normalize_label(b);
    return std::any_of(it->second.begin(), it->second.end(),
                       [&kb](const Adjacency& adj) { return text::normalize_label(adj.node) == kb; });
}

std::vector<Adjacency> ConnectivityMap::neighbors(std::string_view node) const {
    auto it = adjacency_.find(text::normalize_label(node));
    return it == adjacency_.end() ? std::vector<Adjacency>{} : it->second;
}

// ---------------------------------------------------------------------------

const ProtocolNode& ProtocolTree::node(const std::string& id) const {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw NotFoundError("protocol node '" + id + "' not found");
    return it->second;
}

std::vector<std::string> ProtocolTree::preorder() const {
    std::vector<std::string> out;
    std::function<void(const std::string&)> walk = [&](const std::string& id) {
        out.push_back(id);
        for (const auto& c : node(id).children) walk(c.next);
    };
    walk(root_);
    return out;
}

std::vector<std::string> ProtocolTree::frontier(const std::set<std::string>& answered) const {
    std::vector<std::string> out;
    bool finished = false;
    std::function<void(const std::string&)> walk = [&](const std::string& id) {
        const auto& n = node(id);
        if (!answered.count(id)) {
            out.push_back(n.question);
            return;
        }
        if (n.terminal) {
            finished = true;
            return;
        }
        for (const auto& c : n.children) walk(c.next);
    };
    walk(root_);
    if (finished) return {};
    return out;
}

ProtocolSet ProtocolSet::from_json(const json& j, const TagTaxonomy* taxonomy) {
    if (!j.is_object() || !j.contains("protocols") || !j.at("protocols").is_array())
        throw ParseError("protocol file needs a 'protocols' array");
    ProtocolSet set;
    for (const auto& jp : j.at("protocols")) {
        ProtocolTree tree;
        if (!jp.contains("incident_type") || !jp.contains("root") || !jp.contains("nodes"))
            throw ParseError("protocol needs 'incident_type', 'root' and 'nodes'");
        tree.incident_type_ = taxonomy ? taxonomy->resolve(jp.at("incident_type").get<std::string>(), LabelFamily::incident_type)
                                       : text::normalize_label(jp.at("incident_type").get<std::string>());
        const auto& type = tree.incident_type_;
        tree.root_ = jp.at("root").get<std::string>();
        for (const auto& jn : jp.at("nodes")) {
            ProtocolNode n;
            n.id = jn.at("id").get<std::string>();
            n.question = text::trim(jn.at("question").get<std::string>());
            if (n.question.empty()) throw ParseError("protocol '" + type + "' node '" + n.id + "' has no question");
            if (jn.contains("children")) {
                for (const auto& jc : jn.at("children")) {
                    n.children.push_back({jc.value("answer", std::string()), jc.at("next").get<std::string>()});
                }
            }
            n.terminal = jn.value("terminal", n.children.empty());
            if (!tree.nodes_.emplace(n.id, n).second)
                throw ParseError("protocol '" + type + "' has duplicate node id '" + n.id + "'");
        }
        if (!tree.nodes_.count(tree.root_)) throw InvariantError("protocol '" + type + "' root '" + tree.root_ + "' is not a node");

        std::map<std::string, int> parents;
        for (const auto& [id, n] : tree.nodes_) {
            if (n.terminal && !n.children.empty())
                throw InvariantError("protocol '" + type + "' terminal node '" + id + "' has children");
            if (!n.terminal && n.children.empty())
                throw InvariantError("protocol '" + type + "' non-terminal node '" + id + "' has no children");
            for (const auto& c : n.children) {
                if (!tree.nodes_.count(c.next))
                    throw InvariantError("protocol '" + type + "' node '" + id + "' points at unknown node '" + c.next + "'");
            }
        }

        // Cycle check before anything recursive touches the tree.
        std::map<std::string, int> color;  // 0 unseen, 1 on stack, 2 done
        std::function<void(const std::string&)> dfs = [&](const std::string& id) {
            color[id] = 1;
            for (const auto& c : tree.nodes_.at(id).children) {
                if (color[c.next] == 1)
                    throw InvariantError("protocol '" + type + "' is cyclic: node '" + c.next + "' is its own ancestor");
                if (color[c.next] == 0) dfs(c.next);
            }
            color[id] = 2;
        };
        for (const auto& [id, _] : tree.nodes_)
            if (color[id] == 0) dfs(id);

        for (const auto& [id, n] : tree.nodes_)
            for (const auto& c : n.children) ++parents[c.next];
        for (const auto& [id, count] : parents) {
            if (count > 1) throw InvariantError("protocol '" + type + "' node '" + id + "' has more than one parent");
            if (id == tree.root_) throw InvariantError("protocol '" + type + "' root has a parent");
        }
        if (tree.preorder().size() != tree.nodes_.size())
            throw InvariantError("protocol '" + type + "' has nodes unreachable from the root");

        if (set.trees_.count(type)) throw InvariantError("more than one protocol tree for '" + type + "'");
        set.trees_.emplace(type, std::move(tree));
    }
    return set;
}

ProtocolSet ProtocolSet::load(const std::string& path, const TagTaxonomy* taxonomy) {
    json j;
    try {
        j = json::parse(text::read_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
    try {
        return from_json(j, taxonomy);
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

bool ProtocolSet::has(std::string_view incident_type) const {
    return trees_.count(text::normalize_label(incident_type)) != 0;
}

const ProtocolTree& ProtocolSet::tree(std::string_view incident_type) const {
    auto it = trees_.find(text::normalize_label(incident_type));
    if (it == trees_.end()) throw NotFoundError("no protocol tree for incident type '" + std::string(incident_type) + "'");
    return it->second;
}

std::vector<std::string> next_questions(const ProtocolSet& protocols, std::string_view incident_type,
                                        const std::set<std::string>& answered) {
    return protocols.tree(incident_type).frontier(answered);
}

// ---------------------------------------------------------------------------

RetrievableBase::RetrievableBase(const std::vector<AnnotatedCall>& corpus) {
    std::vector<std::vector<std::string>> docs;
    docs.reserve(corpus.size());
    for (const auto& call : corpus) docs.push_back(text::content_tokens(call.caller_text()));
    index_ = TfIdfIndex(docs);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        RetrievalEntry e;
        e.call_id = corpus[i].id;
        for (const auto& t : corpus[i].turns)
            if (t.speaker == Speaker::caller) e.excerpts.push_back(t.text);
        e.labels = corpus[i].labels();
        e.term_frequencies = index_.term_frequencies(docs[i]);
        e.weights = index_.weigh(docs[i]);
        e.degenerate = norm(e.weights) == 0.0;
        entries_.push_back(std::move(e));
    }
}

SparseVector RetrievableBase::vectorize(std::string_view query) const {
    return index_.weigh(text::content_tokens(query));
}

std::vector<RetrievalHit> retrieve(const RetrievableBase& base, const LabelSet& tags, std::string_view query,
                                   std::size_t k, const TagTaxonomy& taxonomy) {
    if (k == 0) throw ValidationError("retrieve: k must be at least 1");
    auto wanted = resolve_labels(tags, taxonomy);
    auto q = base.vectorize(query);
    std::vector<RetrievalHit> hits;
    for (const auto& e : base.entries()) {
        if (!std::includes(e.labels.begin(), e.labels.end(), wanted.begin(), wanted.end())) continue;
        hits.push_back({&e, e.degenerate ? 0.0 : cosine(q, e.weights)});
    }
    std::sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.entry->call_id < b.entry->call_id;
    });
    if (hits.size() > k) hits.resize(k);
    return hits;
}

// ---------------------------------------------------------------------------

std::shared_ptr<const KnowledgeSet> build_knowledge(TagTaxonomy taxonomy, std::vector<AnnotatedCall> corpus,
                                                    AddressGazetteer gazetteer, ConnectivityMap connectivity,
                                                    ProtocolSet protocols) {
    if (corpus.empty()) throw ValidationError("build_knowledge: corpus is empty");
    for (const auto& call : corpus) {
        for (const auto& l : call.labels()) taxonomy.resolve_any(l);
    }
    auto ks = std::make_shared<KnowledgeSet>();
    ks->taxonomy = std::move(taxonomy);
    ks->retrievable = RetrievableBase(corpus);
    ks->corpus = std::move(corpus);
    ks->gazetteer = std::move(gazetteer);
    ks->connectivity = std::move(connectivity);
    ks->protocols = std::move(protocols);
    return ks;
}

std::shared_ptr<const KnowledgeSet> build_knowledge(TagTaxonomy taxonomy, std::vector<AnnotatedCall> corpus,
                                                    const KnowledgePaths& paths) {
    if (corpus.empty()) throw ValidationError("build_knowledge: corpus is empty");
    auto gazetteer = AddressGazetteer::load(paths.gazetteer);
    auto connectivity = paths.connectivity.empty() ? ConnectivityMap{} : ConnectivityMap::load(paths.connectivity);
    auto protocols = ProtocolSet::load(paths.protocols, &taxonomy);
    return build_knowledge(std::move(taxonomy), std::move(corpus), std::move(gazetteer), std::move(connectivity),
                           std::move(protocols));
}

}  // namespace callsim
