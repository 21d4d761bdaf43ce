#include "survlda/docbuild.hpp"

#include "survlda/error.hpp"
#include "survlda/parallel.hpp"
#include "survlda/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace survlda {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    return out;
}

void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

bool skip_line(const std::string& line) {
    return line.find_first_not_of(" \t") == std::string::npos || line[0] == '#';
}

double parse_real(const std::string& s, std::size_t line_no) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v))
        throw ParseError("not a finite number: '" + s + "'", line_no);
    return v;
}

template <typename Reader>
auto open_and_read(const std::filesystem::path& path, Reader&& reader) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return reader(in);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.line());
    }
}

} // namespace

const char* to_string(FeatureKind kind) {
    return kind == FeatureKind::expression ? "expression" : "methylation";
}

void FeatureMatrix::validate() const {
    const std::size_t cells = features() * patients();
    if (values.size() != cells || missing.size() != cells)
        throw ValidationError(std::string(to_string(kind)) + " matrix shape does not match its id lists");
    std::set<std::string> seen(patient_ids.begin(), patient_ids.end());
    if (seen.size() != patient_ids.size())
        throw ValidationError(std::string(to_string(kind)) + " matrix has duplicate patient ids");
}

void BuildConfig::validate() const {
    if (!(extreme_posterior_threshold > 0.0 && extreme_posterior_threshold < 1.0))
        throw ConfigError("extreme_posterior_threshold must lie in (0, 1)");
    if (!(drug_prevalence_min >= 0.0 && drug_prevalence_min <= 1.0))
        throw ConfigError("drug_prevalence_min must lie in [0, 1]");
    if (!(missingness_max >= 0.0 && missingness_max <= 1.0))
        throw ConfigError("missingness_max must lie in [0, 1]");
    if (n_survival_groups < 2) throw ConfigError("n_survival_groups must be at least 2");
    if (threads < 1) throw ConfigError("threads must be at least 1");
}

std::vector<std::size_t> survival_group_sizes(std::size_t n, std::size_t groups) {
    if (groups == 0) throw ConfigError("need at least one survival group");
    if (n < groups)
        throw ConfigError("only " + std::to_string(n) + " uncensored patients for " + std::to_string(groups) +
                          " survival groups");
    std::vector<std::size_t> sizes(groups, n / groups);
    for (std::size_t g = 0; g < n % groups; ++g) ++sizes[g];
    return sizes;
}

std::set<std::string> filter_by_survival_groups(const std::map<std::string, std::vector<std::size_t>>& counts,
                                                std::span<const std::string> patient_ids,
                                                std::span<const SurvivalOutcome> outcomes, std::size_t groups,
                                                std::size_t min_difference) {
    if (patient_ids.size() != outcomes.size())
        throw ValidationError("patient ids and outcomes differ in length");
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < outcomes.size(); ++i)
        if (outcomes[i].event) order.push_back(i);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (outcomes[a].time != outcomes[b].time) return outcomes[a].time < outcomes[b].time;
        return patient_ids[a] < patient_ids[b];
    });
    const auto sizes = survival_group_sizes(order.size(), groups);
    std::vector<std::size_t> group_of(outcomes.size(), groups);
    std::size_t pos = 0;
    for (std::size_t g = 0; g < groups; ++g)
        for (std::size_t k = 0; k < sizes[g]; ++k) group_of[order[pos++]] = g;

    std::set<std::string> kept;
    for (const auto& [word, per_patient] : counts) {
        if (per_patient.size() != outcomes.size())
            throw ValidationError("counts for '" + word + "' do not cover every patient");
        std::vector<std::size_t> totals(groups, 0);
        for (std::size_t i = 0; i < per_patient.size(); ++i)
            if (group_of[i] < groups) totals[group_of[i]] += per_patient[i];
        const auto [lo, hi] = std::minmax_element(totals.begin(), totals.end());
        if (*hi - *lo >= min_difference) kept.insert(word);
    }
    return kept;
}

std::set<std::string> filter_by_survival_groups(const std::map<std::string, std::vector<std::size_t>>& counts,
                                                std::span<const std::string> patient_ids,
                                                std::span<const SurvivalOutcome> outcomes, FeatureKind kind,
                                                const BuildConfig& config) {
    const std::size_t threshold =
        kind == FeatureKind::expression ? config.expr_group_diff_min : config.meth_group_diff_min;
    return filter_by_survival_groups(counts, patient_ids, outcomes, config.n_survival_groups, threshold);
}

namespace {

double missing_fraction(const FeatureMatrix& m, std::size_t p) {
    if (m.features() == 0) return 0.0;
    std::size_t miss = 0;
    for (std::size_t f = 0; f < m.features(); ++f) miss += m.is_missing(f, p);
    return static_cast<double>(miss) / static_cast<double>(m.features());
}

// extreme[f][i] for the included patients; an empty row means the feature was
// skipped or unimodal.
struct FeatureCalls {
    std::vector<std::vector<std::uint8_t>> extreme;
    std::size_t skipped = 0;
    std::size_t multimodal = 0;
};

FeatureCalls call_extremes(const FeatureMatrix& m, std::span<const std::size_t> columns, const BuildConfig& config) {
    FeatureCalls calls;
    calls.extreme.resize(m.features());
    std::vector<std::uint8_t> skipped(m.features(), 0);
    parallel_for(m.features(), config.threads, [&](std::size_t f) {
        std::vector<double> x;
        x.reserve(columns.size());
        for (std::size_t c : columns)
            if (!m.is_missing(f, c)) x.push_back(m.at(f, c));
        const std::uint64_t seed =
            mix64(config.seed ^ hash_string(std::string(to_string(m.kind)) + ":" + m.feature_ids[f]));
        MixtureFit fit;
        try {
            fit = fit_two_component_mixture(x, seed);
        } catch (const InsufficientDataError&) {
            skipped[f] = 1;
            return;
        } catch (const DegenerateDataError&) {
            skipped[f] = 1;
            return;
        }
        if (!is_multimodal(fit)) return;
        auto& row = calls.extreme[f];
        row.assign(columns.size(), 0);
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (m.is_missing(f, columns[i])) continue;
            row[i] = assign_extreme(fit, m.at(f, columns[i]), config.extreme_posterior_threshold) ? 1 : 0;
        }
    });
    for (std::size_t f = 0; f < m.features(); ++f) {
        calls.skipped += skipped[f];
        calls.multimodal += !calls.extreme[f].empty();
    }
    return calls;
}

} // namespace

BuildResult build_documents(std::span<const Administration> clinical, const FeatureMatrix& expression,
                            const FeatureMatrix& methylation, const NameMap& site_to_gene,
                            const NameMap& synonyms, const std::map<std::string, SurvivalOutcome>& outcomes,
                            const BuildConfig& config) {
    config.validate();
    expression.validate();
    methylation.validate();
    {
        std::set<std::string> a(expression.patient_ids.begin(), expression.patient_ids.end());
        std::set<std::string> b(methylation.patient_ids.begin(), methylation.patient_ids.end());
        if (a != b) throw ValidationError("expression and methylation matrices cover different patients");
    }
    for (const auto& site : methylation.feature_ids)
        if (!site_to_gene.count(site)) throw ValidationError("methylation site '" + site + "' has no gene mapping");
    for (const auto& p : expression.patient_ids) {
        auto it = outcomes.find(p);
        if (it == outcomes.end()) throw ValidationError("patient '" + p + "' has no survival outcome");
        validate_outcome(it->second, p);
    }

    BuildResult result;
    auto& report = result.report;

    std::unordered_map<std::string, std::size_t> meth_col;
    for (std::size_t c = 0; c < methylation.patients(); ++c) meth_col[methylation.patient_ids[c]] = c;

    std::vector<std::string> patients;
    std::vector<std::size_t> expr_cols, meth_cols;
    for (std::size_t c = 0; c < expression.patients(); ++c) {
        const auto& id = expression.patient_ids[c];
        const std::size_t mc = meth_col.at(id);
        if (missing_fraction(expression, c) > config.missingness_max ||
            missing_fraction(methylation, mc) > config.missingness_max) {
            report.excluded_patients.push_back(id);
            continue;
        }
        patients.push_back(id);
        expr_cols.push_back(c);
        meth_cols.push_back(mc);
    }
    if (patients.empty()) throw ValidationError("every patient was excluded for missing data");
    const std::size_t n = patients.size();
    std::unordered_map<std::string, std::size_t> patient_index;
    for (std::size_t i = 0; i < n; ++i) patient_index[patients[i]] = i;

    // Drug words.
    std::vector<std::vector<std::string>> drugs(n);
    std::map<std::string, std::set<std::size_t>> drug_patients;
    for (const auto& a : clinical) {
        auto it = patient_index.find(a.patient_id);
        if (it == patient_index.end()) continue;
        auto syn = synonyms.find(a.drug);
        const std::string& word = syn == synonyms.end() ? a.drug : syn->second;
        drugs[it->second].push_back(word);
        drug_patients[word].insert(it->second);
    }
    std::set<std::string> kept_drugs;
    for (const auto& [word, who] : drug_patients) {
        if (static_cast<double>(who.size()) >= config.drug_prevalence_min * static_cast<double>(n))
            kept_drugs.insert(word);
        else
            report.dropped_drugs.push_back(word);
    }

    // Gene words.
    const auto expr_calls = call_extremes(expression, expr_cols, config);
    const auto meth_calls = call_extremes(methylation, meth_cols, config);
    report.skipped_features = expr_calls.skipped + meth_calls.skipped;
    report.multimodal_expression = expr_calls.multimodal;
    report.multimodal_methylation = meth_calls.multimodal;

    auto accumulate = [&](const FeatureMatrix& m, const FeatureCalls& calls, bool map_sites) {
        std::map<std::string, std::vector<std::size_t>> counts;
        for (std::size_t f = 0; f < m.features(); ++f) {
            if (calls.extreme[f].empty()) continue;
            const std::string& gene = map_sites ? site_to_gene.at(m.feature_ids[f]) : m.feature_ids[f];
            auto& c = counts[gene];
            c.resize(n, 0);
            for (std::size_t i = 0; i < n; ++i) c[i] += calls.extreme[f][i];
        }
        return counts;
    };
    const auto expr_counts = accumulate(expression, expr_calls, false);
    const auto meth_counts = accumulate(methylation, meth_calls, true);

    std::vector<SurvivalOutcome> patient_outcomes;
    for (const auto& p : patients) patient_outcomes.push_back(outcomes.at(p));
    report.expression_words =
        filter_by_survival_groups(expr_counts, patients, patient_outcomes, FeatureKind::expression, config);
    report.methylation_words =
        filter_by_survival_groups(meth_counts, patients, patient_outcomes, FeatureKind::methylation, config);

    std::set<std::string> words = kept_drugs;
    words.insert(report.expression_words.begin(), report.expression_words.end());
    words.insert(report.methylation_words.begin(), report.methylation_words.end());
    Vocabulary vocab(std::vector<std::string>(words.begin(), words.end()));

    std::vector<std::size_t> gene_copies(vocab.size());
    for (std::size_t i = 0; i < n; ++i) {
        Document doc;
        doc.id = patients[i];
        doc.outcome = patient_outcomes[i];
        for (const auto& d : drugs[i])
            if (kept_drugs.count(d)) doc.tokens.push_back(*vocab.find(d));
        std::fill(gene_copies.begin(), gene_copies.end(), 0);
        for (const auto& w : report.expression_words) gene_copies[*vocab.find(w)] += expr_counts.at(w)[i];
        for (const auto& w : report.methylation_words) gene_copies[*vocab.find(w)] += meth_counts.at(w)[i];
        for (std::size_t v = 0; v < vocab.size(); ++v)
            for (std::size_t c = 0; c < gene_copies[v]; ++c) doc.tokens.push_back(static_cast<WordId>(v));
        result.corpus.documents.push_back(std::move(doc));
    }
    result.corpus.vocabulary = std::move(vocab);
    return result;
}

FeatureMatrix read_feature_matrix(std::istream& in, FeatureKind kind, const std::string& missing_sentinel) {
    FeatureMatrix m;
    m.kind = kind;
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    bool have_header = false;
    bool corner = false;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        auto fields = split_tabs(line);
        if (!have_header) {
            header = std::move(fields);
            have_header = true;
            continue;
        }
        if (m.feature_ids.empty() && m.patient_ids.empty()) {
            // The header may or may not carry a corner label above the feature ids.
            if (fields.size() == header.size()) {
                corner = true;
            } else if (fields.size() != header.size() + 1) {
                throw ParseError("row has " + std::to_string(fields.size()) + " fields, header has " +
                                     std::to_string(header.size()),
                                 line_no);
            }
            m.patient_ids.assign(header.begin() + (corner ? 1 : 0), header.end());
        }
        if (fields.size() != m.patients() + 1)
            throw ParseError("expected " + std::to_string(m.patients() + 1) + " fields", line_no);
        m.feature_ids.push_back(fields[0]);
        for (std::size_t p = 0; p < m.patients(); ++p) {
            const auto& cell = fields[p + 1];
            if (cell == missing_sentinel || cell.empty()) {
                m.values.push_back(std::numeric_limits<double>::quiet_NaN());
                m.missing.push_back(1);
            } else {
                m.values.push_back(parse_real(cell, line_no));
                m.missing.push_back(0);
            }
        }
    }
    if (!have_header) throw ParseError("empty matrix file", line_no);
    if (m.feature_ids.empty()) m.patient_ids = header; // header only: no features
    m.validate();
    return m;
}

FeatureMatrix load_feature_matrix(const std::filesystem::path& path, FeatureKind kind,
                                  const std::string& missing_sentinel) {
    return open_and_read(path, [&](std::istream& in) { return read_feature_matrix(in, kind, missing_sentinel); });
}

std::vector<Administration> read_clinical(std::istream& in) {
    std::vector<Administration> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (skip_line(line)) continue;
        auto fields = split_tabs(line);
        if (fields.size() != 2 || fields[0].empty() || fields[1].empty())
            throw ParseError("expected 'patient<TAB>drug'", line_no);
        out.push_back({fields[0], fields[1]});
    }
    return out;
}

std::vector<Administration> load_clinical(const std::filesystem::path& path) {
    return open_and_read(path, [](std::istream& in) { return read_clinical(in); });
}

NameMap read_name_map(std::istream& in) {
    NameMap out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (skip_line(line)) continue;
        auto fields = split_tabs(line);
        if (fields.size() != 2 || fields[0].empty() || fields[1].empty())
            throw ParseError("expected two tab-separated columns", line_no);
        auto [it, inserted] = out.emplace(fields[0], fields[1]);
        if (!inserted && it->second != fields[1])
            throw ParseError("conflicting entries for '" + fields[0] + "'", line_no);
    }
    return out;
}

NameMap load_name_map(const std::filesystem::path& path) {
    return open_and_read(path, [](std::istream& in) { return read_name_map(in); });
}

std::map<std::string, SurvivalOutcome> read_outcomes(std::istream& in) {
    std::map<std::string, SurvivalOutcome> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (skip_line(line)) continue;
        auto fields = split_tabs(line);
        if (fields.size() != 3) throw ParseError("expected 'patient<TAB>time<TAB>event'", line_no);
        SurvivalOutcome o;
        o.time = parse_real(fields[1], line_no);
        if (fields[2] == "1")
            o.event = true;
        else if (fields[2] == "0")
            o.event = false;
        else
            throw ParseError("event must be 0 or 1", line_no);
        if (!(o.time > 0.0)) throw ParseError("survival time must be positive", line_no);
        if (!out.emplace(fields[0], o).second) throw ParseError("duplicate patient '" + fields[0] + "'", line_no);
    }
    return out;
}

std::map<std::string, SurvivalOutcome> load_outcomes(const std::filesystem::path& path) {
    return open_and_read(path, [](std::istream& in) { return read_outcomes(in); });
}

BuildConfig read_build_config(std::istream& in) {
    using nlohmann::json;
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("build config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("build config must be a JSON object");
    BuildConfig c;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "extreme_posterior_threshold")
                c.extreme_posterior_threshold = value.get<double>();
            else if (key == "drug_prevalence_min")
                c.drug_prevalence_min = value.get<double>();
            else if (key == "expr_group_diff_min")
                c.expr_group_diff_min = value.get<std::size_t>();
            else if (key == "meth_group_diff_min")
                c.meth_group_diff_min = value.get<std::size_t>();
            else if (key == "n_survival_groups")
                c.n_survival_groups = value.get<std::size_t>();
            else if (key == "missingness_max")
                c.missingness_max = value.get<double>();
            else if (key == "seed")
                c.seed = value.get<std::uint64_t>();
            else if (key == "threads")
                c.threads = value.get<unsigned>();
            else
                throw ConfigError("unknown build config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad build config value: ") + e.what());
    }
    c.validate();
    return c;
}

BuildConfig load_build_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return read_build_config(in);
}

} // namespace survlda
