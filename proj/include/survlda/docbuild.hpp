#pragma once

#include "survlda/corpus.hpp"
#include "survlda/mixture.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace survlda {

enum class FeatureKind { expression, methylation };

const char* to_string(FeatureKind kind);

// Features as rows, patients as columns.
struct FeatureMatrix {
    FeatureKind kind = FeatureKind::expression;
    std::vector<std::string> feature_ids;
    std::vector<std::string> patient_ids;
    std::vector<double> values;        // row-major, feature_ids.size() x patient_ids.size()
    std::vector<std::uint8_t> missing; // same shape; 1 = missing

    std::size_t features() const noexcept { return feature_ids.size(); }
    std::size_t patients() const noexcept { return patient_ids.size(); }
    double at(std::size_t f, std::size_t p) const { return values[f * patients() + p]; }
    bool is_missing(std::size_t f, std::size_t p) const { return missing[f * patients() + p] != 0; }
    void validate() const;
};

struct BuildConfig {
    double extreme_posterior_threshold = 0.95;
    double drug_prevalence_min = 0.10;
    std::size_t expr_group_diff_min = 10;
    std::size_t meth_group_diff_min = 15;
    std::size_t n_survival_groups = 3;
    double missingness_max = 0.5;
    std::uint64_t seed = 0;
    unsigned threads = 1;

    void validate() const;
};

struct Administration {
    std::string patient_id;
    std::string drug;
};

using NameMap = std::map<std::string, std::string>;

// Near-equal split of n patients into `groups`; the remainder goes to the
// earliest groups.
std::vector<std::size_t> survival_group_sizes(std::size_t n, std::size_t groups);

// counts[word][i] is the number of copies of `word` in patient i's document;
// outcomes[i] and patient_ids[i] describe the same patient. Uncensored
// patients are sorted by (time, patient id) and split into groups; a word is
// kept iff its largest group total minus its smallest is >= `min_difference`.
std::set<std::string> filter_by_survival_groups(const std::map<std::string, std::vector<std::size_t>>& counts,
                                                std::span<const std::string> patient_ids,
                                                std::span<const SurvivalOutcome> outcomes, std::size_t groups,
                                                std::size_t min_difference);

std::set<std::string> filter_by_survival_groups(const std::map<std::string, std::vector<std::size_t>>& counts,
                                                std::span<const std::string> patient_ids,
                                                std::span<const SurvivalOutcome> outcomes, FeatureKind kind,
                                                const BuildConfig& config);

struct BuildReport {
    std::vector<std::string> excluded_patients;
    std::vector<std::string> dropped_drugs;
    std::size_t skipped_features = 0; // too few values or constant
    std::size_t multimodal_expression = 0;
    std::size_t multimodal_methylation = 0;
    std::set<std::string> expression_words; // gene words kept from expression
    std::set<std::string> methylation_words; // gene words kept from methylation
};

struct BuildResult {
    Corpus corpus;
    BuildReport report;
};

// Document for each retained patient, in expression-matrix column order.
// Tokens: drug words in administration order, then gene words in vocabulary
// order. The vocabulary is sorted.
BuildResult build_documents(std::span<const Administration> clinical, const FeatureMatrix& expression,
                            const FeatureMatrix& methylation, const NameMap& site_to_gene,
                            const NameMap& synonyms, const std::map<std::string, SurvivalOutcome>& outcomes,
                            const BuildConfig& config);

// Readers. Blank lines and lines starting with '#' are skipped in the
// headerless tables.
FeatureMatrix read_feature_matrix(std::istream& in, FeatureKind kind, const std::string& missing_sentinel = "NA");
FeatureMatrix load_feature_matrix(const std::filesystem::path& path, FeatureKind kind,
                                  const std::string& missing_sentinel = "NA");
std::vector<Administration> read_clinical(std::istream& in);
std::vector<Administration> load_clinical(const std::filesystem::path& path);
NameMap read_name_map(std::istream& in);
NameMap load_name_map(const std::filesystem::path& path);
// "patient\ttime\tevent" with event 0/1.
std::map<std::string, SurvivalOutcome> read_outcomes(std::istream& in);
std::map<std::string, SurvivalOutcome> load_outcomes(const std::filesystem::path& path);
// JSON object with any subset of the BuildConfig field names.
BuildConfig read_build_config(std::istream& in);
BuildConfig load_build_config(const std::filesystem::path& path);

} // namespace survlda
