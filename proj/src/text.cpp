#include "callsim/text.hpp"

#include "callsim/error.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

namespace callsim::text {
namespace {

bool is_word_byte(unsigned char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

constexpr std::array<std::string_view, 96> kStopWords = {
    "a",     "about", "after",  "again", "all",   "am",    "an",    "and",   "any",   "are",
    "as",    "at",    "be",     "been",  "being", "but",   "by",    "can",   "could", "d",
    "did",   "do",    "does",   "doing", "for",   "from",  "had",   "has",   "have",  "having",
    "he",    "her",   "here",   "hers",  "him",   "his",   "how",   "i",     "if",    "in",
    "into",  "is",    "it",     "its",   "just",  "ll",    "m",     "me",    "my",    "myself",
    "no",    "nor",   "not",    "now",   "of",    "off",   "on",    "once",  "only",  "or",
    "other", "our",   "ours",   "out",   "over",  "re",    "s",     "she",   "should", "so",
    "some",  "such",  "t",      "than",  "that",  "the",   "their", "them",  "then",  "there",
    "these", "they",  "this",   "those", "to",    "too",   "up",    "ve",    "very",  "was",
    "we",    "were",  "what",   "when",  "you",   "your",
};

}  // namespace

std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : s) {
        if (is_word_byte(c)) {
            cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

bool is_stop_word(std::string_view token) {
    return std::find(kStopWords.begin(), kStopWords.end(), token) != kStopWords.end();
}

std::vector<std::string> content_tokens(std::string_view s) {
    auto toks = tokenize(s);
    std::erase_if(toks, [](const std::string& t) { return is_stop_word(t); });
    return toks;
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) {
        auto u = static_cast<unsigned char>(c);
        if (u < 0x80) c = static_cast<char>(std::tolower(u));
    }
    return out;
}

std::string trim(std::string_view s) {
    auto is_ws = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
    std::size_t b = 0, e = s.size();
    while (b < e && is_ws(s[b])) ++b;
    while (e > b && is_ws(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

std::string normalize_label(std::string_view s) {
    std::string lowered = to_lower(trim(s));
    std::string out;
    bool in_ws = false;
    for (char c : lowered) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            in_ws = true;
            continue;
        }
        if (in_ws && !out.empty()) out.push_back(' ');
        in_ws = false;
        out.push_back(c);
    }
    return out;
}

std::string stem(std::string_view token) {
    std::string w(token);
    auto strip = [&w](std::string_view suffix, std::size_t min_left) {
        if (w.size() >= suffix.size() + min_left && w.ends_with(suffix)) {
            w.resize(w.size() - suffix.size());
            return true;
        }
        return false;
    };
    // Longest suffix first; each rule keeps a stem of at least three bytes.
    if (strip("ies", 3)) {
        w += 'y';
        return w;
    }
    for (std::string_view suffix : {"ingly", "edly", "ing", "ed", "ly", "es", "s"}) {
        if (suffix == "s" && w.ends_with("ss")) break;
        if (strip(suffix, 3)) break;
    }
    return w;
}

std::vector<std::string> split_sentences(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!tokenize(cur).empty()) out.push_back(trim(cur));
        cur.clear();
    };
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        cur.push_back(c);
        if (c == '.' || c == '!' || c == '?') {
            while (i + 1 < s.size() && (s[i + 1] == '.' || s[i + 1] == '!' || s[i + 1] == '?')) cur.push_back(s[++i]);
            flush();
        }
    }
    flush();
    return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> read_lines(const std::string& path, bool skip_comments) {
    std::istringstream in(read_file(path));
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (skip_comments) {
            auto t = trim(line);
            if (t.empty() || t.front() == '#') continue;
        }
        out.push_back(line);
    }
    return out;
}

}  // namespace callsim::text
