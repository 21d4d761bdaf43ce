#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace survlda {

using WordId = std::uint32_t;

struct SurvivalOutcome {
    double time = 1.0;  // > 0
    bool event = false; // true: death observed, false: censored
};

// Ordered set of unique, case-sensitive word strings.
class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> terms);

    // Returns the id of `word`, appending it when new.
    WordId add(std::string_view word);
    std::optional<WordId> find(std::string_view word) const;
    const std::string& term(WordId v) const { return terms_.at(v); }
    const std::vector<std::string>& terms() const noexcept { return terms_; }
    std::size_t size() const noexcept { return terms_.size(); }

    bool operator==(const Vocabulary& other) const { return terms_ == other.terms_; }

private:
    std::vector<std::string> terms_;
    std::unordered_map<std::string, WordId> index_;
};

struct Document {
    std::string id;
    std::vector<WordId> tokens;
    std::optional<SurvivalOutcome> outcome;

    std::size_t size() const noexcept { return tokens.size(); }
};

bool operator==(const SurvivalOutcome& a, const SurvivalOutcome& b);
bool operator==(const Document& a, const Document& b);

struct Corpus {
    Vocabulary vocabulary;
    std::vector<Document> documents;

    std::size_t total_tokens() const;
    bool all_have_outcomes() const;
    // Throws ValidationError on a broken invariant (token range, unique ids,
    // positive finite times).
    void validate() const;

    bool operator==(const Corpus& other) const = default;
};

void validate_outcome(const SurvivalOutcome& outcome, std::string_view doc_id);

// Corpus file: JSON lines. An optional first record {"vocabulary": [...]}
// fixes the vocabulary; otherwise it is the union of document words in order
// of first appearance. Every other line is one document:
//   {"id":"p1","words":["platinum","taxane"],"time":2.5,"event":true}
// "time" and "event" are optional but must appear together.
Corpus read_corpus(std::istream& in);
void write_corpus(const Corpus& corpus, std::ostream& out);

Corpus load_corpus(const std::filesystem::path& path);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

} // namespace survlda
