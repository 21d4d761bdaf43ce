#include "survlda/corpus.hpp"

#include "survlda/error.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_set>

namespace survlda {

using json = nlohmann::ordered_json;

Vocabulary::Vocabulary(std::vector<std::string> terms) {
    for (auto& t : terms) {
        if (t.empty()) throw ValidationError("vocabulary contains an empty word");
        if (find(t)) throw ValidationError("duplicate vocabulary word '" + t + "'");
        add(t);
    }
}

WordId Vocabulary::add(std::string_view word) {
    if (word.empty()) throw ValidationError("empty word");
    auto it = index_.find(std::string(word));
    if (it != index_.end()) return it->second;
    const auto id = static_cast<WordId>(terms_.size());
    terms_.emplace_back(word);
    index_.emplace(terms_.back(), id);
    return id;
}

std::optional<WordId> Vocabulary::find(std::string_view word) const {
    auto it = index_.find(std::string(word));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

bool operator==(const SurvivalOutcome& a, const SurvivalOutcome& b) {
    return a.time == b.time && a.event == b.event;
}

bool operator==(const Document& a, const Document& b) {
    return a.id == b.id && a.tokens == b.tokens && a.outcome == b.outcome;
}

std::size_t Corpus::total_tokens() const {
    std::size_t n = 0;
    for (const auto& d : documents) n += d.size();
    return n;
}

bool Corpus::all_have_outcomes() const {
    for (const auto& d : documents)
        if (!d.outcome) return false;
    return true;
}

void validate_outcome(const SurvivalOutcome& outcome, std::string_view doc_id) {
    if (!std::isfinite(outcome.time) || !(outcome.time > 0.0))
        throw ValidationError("document '" + std::string(doc_id) +
                              "': survival time must be positive and finite");
}

void Corpus::validate() const {
    std::unordered_set<std::string> ids;
    for (const auto& d : documents) {
        if (!ids.insert(d.id).second) throw ValidationError("duplicate document id '" + d.id + "'");
        for (WordId w : d.tokens)
            if (w >= vocabulary.size())
                throw ValidationError("document '" + d.id + "' has token index out of range");
        if (d.outcome) validate_outcome(*d.outcome, d.id);
    }
}

namespace {

struct RawDoc {
    std::string id;
    std::vector<std::string> words;
    std::optional<SurvivalOutcome> outcome;
    std::size_t line;
};

RawDoc parse_document(const json& rec, std::size_t line) {
    if (!rec.is_object()) throw ParseError("record is not a JSON object", line);
    RawDoc doc;
    doc.line = line;
    if (!rec.contains("id") || !rec["id"].is_string()) throw ParseError("missing string field 'id'", line);
    doc.id = rec["id"].get<std::string>();
    if (!rec.contains("words") || !rec["words"].is_array())
        throw ParseError("missing array field 'words'", line);
    for (const auto& w : rec["words"]) {
        if (!w.is_string()) throw ParseError("non-string word", line);
        doc.words.push_back(w.get<std::string>());
    }
    const bool has_time = rec.contains("time");
    const bool has_event = rec.contains("event");
    if (has_time != has_event) throw ParseError("'time' and 'event' must appear together", line);
    if (has_time) {
        if (!rec["time"].is_number()) throw ParseError("'time' is not a number", line);
        if (!rec["event"].is_boolean()) throw ParseError("'event' is not a boolean", line);
        doc.outcome = SurvivalOutcome{rec["time"].get<double>(), rec["event"].get<bool>()};
    }
    for (const auto& [key, _] : rec.items())
        if (key != "id" && key != "words" && key != "time" && key != "event")
            throw ParseError("unknown field '" + key + "'", line);
    return doc;
}

} // namespace

Corpus read_corpus(std::istream& in) {
    std::optional<Vocabulary> explicit_vocab;
    std::vector<RawDoc> raw;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("malformed JSON: ") + e.what(), lineno);
        }
        if (rec.is_object() && rec.contains("vocabulary")) {
            if (explicit_vocab || !raw.empty())
                throw ParseError("vocabulary record must be the first record", lineno);
            if (!rec["vocabulary"].is_array()) throw ParseError("'vocabulary' is not an array", lineno);
            std::vector<std::string> terms;
            for (const auto& w : rec["vocabulary"]) {
                if (!w.is_string()) throw ParseError("non-string vocabulary word", lineno);
                terms.push_back(w.get<std::string>());
            }
            try {
                explicit_vocab = Vocabulary(std::move(terms));
            } catch (const ValidationError& e) {
                throw ParseError(e.what(), lineno);
            }
            continue;
        }
        raw.push_back(parse_document(rec, lineno));
    }

    Corpus corpus;
    if (explicit_vocab) corpus.vocabulary = *explicit_vocab;
    for (auto& r : raw) {
        Document d;
        d.id = r.id;
        d.outcome = r.outcome;
        d.tokens.reserve(r.words.size());
        for (const auto& w : r.words) {
            if (explicit_vocab) {
                auto v = corpus.vocabulary.find(w);
                if (!v)
                    throw ValidationError("line " + std::to_string(r.line) + ": token '" + w +
                                          "' is not in the vocabulary");
                d.tokens.push_back(*v);
            } else {
                if (w.empty()) throw ParseError("empty word", r.line);
                d.tokens.push_back(corpus.vocabulary.add(w));
            }
        }
        corpus.documents.push_back(std::move(d));
    }
    corpus.validate();
    return corpus;
}

void write_corpus(const Corpus& corpus, std::ostream& out) {
    json header;
    header["vocabulary"] = corpus.vocabulary.terms();
    out << header.dump() << '\n';
    for (const auto& d : corpus.documents) {
        json rec;
        rec["id"] = d.id;
        json words = json::array();
        for (WordId w : d.tokens) words.push_back(corpus.vocabulary.term(w));
        rec["words"] = std::move(words);
        if (d.outcome) {
            rec["time"] = d.outcome->time;
            rec["event"] = d.outcome->event;
        }
        out << rec.dump() << '\n';
    }
}

Corpus load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open corpus file '" + path.string() + "'");
    return read_corpus(in);
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    corpus.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write corpus file '" + path.string() + "'");
    write_corpus(corpus, out);
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

} // namespace survlda
