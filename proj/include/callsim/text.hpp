#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace callsim::text {

// Shared tokenizer: every metric and index goes through this so counts agree.
// Splits on ASCII non-alphanumerics, lower-cases ASCII letters and keeps
// multi-byte UTF-8 sequences intact inside tokens.
std::vector<std::string> tokenize(std::string_view s);

// tokenize() minus stop-words.
std::vector<std::string> content_tokens(std::string_view s);

bool is_stop_word(std::string_view token);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

// Lower-case, trim and collapse internal whitespace runs to one space.
std::string normalize_label(std::string_view s);

// Suffix-stripping stemmer used by METEOR's second matching stage.
std::string stem(std::string_view token);

// Sentence split on runs of '.', '!' or '?'. Segments without any token are
// dropped.
std::vector<std::string> split_sentences(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed = 14695981039346656037ull);

std::string read_file(const std::string& path);

// Lines without trailing '\r'; blank lines and '#' comments dropped when
// skip_comments is set.
std::vector<std::string> read_lines(const std::string& path, bool skip_comments = true);

}  // namespace callsim::text
