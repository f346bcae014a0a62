#include "callsim/tfidf.hpp"

#include <cmath>
#include <set>

namespace callsim {

double dot(const SparseVector& a, const SparseVector& b) {
    const SparseVector& small = a.size() <= b.size() ? a : b;
    const SparseVector& large = a.size() <= b.size() ? b : a;
    double s = 0.0;
    for (const auto& [term, w] : small) {
        auto it = large.find(term);
        if (it != large.end()) s += w * it->second;
    }
    return s;
}

double norm(const SparseVector& v) {
    double s = 0.0;
    for (const auto& [_, w] : v) s += w * w;
    return std::sqrt(s);
}

double cosine(const SparseVector& a, const SparseVector& b) {
    double na = norm(a), nb = norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    double c = dot(a, b) / (na * nb);
    if (c > 1.0) c = 1.0;
    if (c < -1.0) c = -1.0;
    return c;
}

bool normalize_in_place(SparseVector& v) {
    double n = norm(v);
    if (n == 0.0) return false;
    for (auto& [_, w] : v) w /= n;
    return true;
}

TfIdfIndex::TfIdfIndex(const std::vector<std::vector<std::string>>& documents) : n_docs_(documents.size()) {
    for (const auto& doc : documents) {
        std::set<std::string> seen(doc.begin(), doc.end());
        for (const auto& t : seen) ++df_[t];
    }
}

std::size_t TfIdfIndex::df(const std::string& term) const {
    auto it = df_.find(term);
    return it == df_.end() ? 0 : it->second;
}

double TfIdfIndex::idf(const std::string& term) const {
    auto d = df(term);
    if (d == 0) return 0.0;
    return std::log(static_cast<double>(n_docs_) / static_cast<double>(d));
}

SparseVector TfIdfIndex::term_frequencies(const std::vector<std::string>& tokens) const {
    SparseVector tf;
    if (tokens.empty()) return tf;
    for (const auto& t : tokens) tf[t] += 1.0;
    for (auto& [_, f] : tf) f /= static_cast<double>(tokens.size());
    return tf;
}

SparseVector TfIdfIndex::weigh(const std::vector<std::string>& tokens) const {
    SparseVector out;
    for (const auto& [t, f] : term_frequencies(tokens)) {
        double w = f * idf(t);
        if (w != 0.0) out.emplace(t, w);
    }
    return out;
}

TfIdfIndex TfIdfIndex::from_table(std::size_t n_docs, std::map<std::string, std::size_t> df) {
    TfIdfIndex idx;
    idx.n_docs_ = n_docs;
    idx.df_ = std::move(df);
    return idx;
}

}  // namespace callsim
