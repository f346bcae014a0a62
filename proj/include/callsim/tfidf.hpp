#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace callsim {

using SparseVector = std::map<std::string, double>;

double dot(const SparseVector& a, const SparseVector& b);
double norm(const SparseVector& v);

/// Cosine similarity; 0 when either vector is zero.
double cosine(const SparseVector& a, const SparseVector& b);

/// Scales `v` to unit length in place. Returns false (and leaves `v`
/// untouched) for the zero vector.
bool normalize_in_place(SparseVector& v);

/// Document-frequency table over a fixed document collection.
///
/// tf(t, d) = f(t, d) / |d| and idf(t) = log(N / df(t)). Terms outside the
/// vocabulary get weight 0.
class TfIdfIndex {
public:
    TfIdfIndex() = default;
    explicit TfIdfIndex(const std::vector<std::vector<std::string>>& documents);

    std::size_t document_count() const noexcept { return n_docs_; }
    std::size_t vocabulary_size() const noexcept { return df_.size(); }
    const std::map<std::string, std::size_t>& document_frequencies() const noexcept { return df_; }

    bool contains(const std::string& term) const { return df_.count(term) != 0; }
    std::size_t df(const std::string& term) const;
    double idf(const std::string& term) const;

    SparseVector term_frequencies(const std::vector<std::string>& tokens) const;
    SparseVector weigh(const std::vector<std::string>& tokens) const;

    /// Rebuilds an index from a serialized df table.
    static TfIdfIndex from_table(std::size_t n_docs, std::map<std::string, std::size_t> df);

private:
    std::size_t n_docs_ = 0;
    std::map<std::string, std::size_t> df_;
};

}  // namespace callsim
