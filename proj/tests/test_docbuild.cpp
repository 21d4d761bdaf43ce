#include <doctest.h>

#include "survlda/docbuild.hpp"
#include "survlda/error.hpp"
#include "survlda/rng.hpp"

#include <cmath>
#include <limits>
#include <sstream>

using namespace survlda;

namespace {

const double NA = std::numeric_limits<double>::quiet_NaN();

double normal_quantile(double p) {
    double lo = -10.0, hi = 10.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

std::string pid(int i) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "p%02d", i);
    return buf;
}

FeatureMatrix make_matrix(FeatureKind kind, std::vector<std::string> features, std::vector<std::string> patients,
                          const std::vector<std::vector<double>>& rows) {
    FeatureMatrix m;
    m.kind = kind;
    m.feature_ids = std::move(features);
    m.patient_ids = std::move(patients);
    for (const auto& r : rows)
        for (double v : r) {
            m.values.push_back(v);
            m.missing.push_back(std::isnan(v) ? 1 : 0);
        }
    return m;
}

// 90 uncensored patients p00..p89 dying at time i + 1, plus "phalf" (censored,
// half its expression missing) and "pmiss" (three quarters missing).
struct Fixture {
    std::vector<std::string> patients;
    FeatureMatrix expression, methylation;
    NameMap site_to_gene{{"cg1", "geneX"}, {"cg2", "geneX"}, {"cg3", "geneZ"}, {"cg4", "geneX"}};
    NameMap synonyms{{"cisplatin", "platinum"}, {"carboplatin", "platinum"}, {"paclitaxel", "taxane"}};
    std::vector<Administration> clinical;
    std::map<std::string, SurvivalOutcome> outcomes;

    Fixture() {
        for (int i = 0; i < 90; ++i) patients.push_back(pid(i));
        patients.push_back("phalf");
        patients.push_back("pmiss");
        CounterRng rng(1, 0);
        auto noise = [&] { return 0.5 * rng.normal(); };
        auto bimodal = [&](auto extreme) {
            std::vector<double> row;
            for (int i = 0; i < 92; ++i) row.push_back((i < 90 && extreme(i) ? 10.0 : 0.0) + noise());
            return row;
        };
        // Exact normal quantiles in a scrambled order: unimodal by construction.
        auto flat = [&] {
            std::vector<double> row(92);
            for (int i = 0; i < 92; ++i) row[(i * 37) % 92] = 0.5 * normal_quantile((i + 0.5) / 92.0);
            return row;
        };
        auto early = [](int i) { return i < 30; };
        auto spread = [](int i) { return i % 3 == 0; };
        std::vector<std::vector<double>> expr{bimodal(early), bimodal(spread), flat(), flat()};
        // phalf misses geneW and geneV; pmiss misses everything but geneX.
        expr[2][90] = NA;
        expr[3][90] = NA;
        expr[1][91] = NA;
        expr[2][91] = NA;
        expr[3][91] = NA;
        expression = make_matrix(FeatureKind::expression, {"geneX", "geneY", "geneW", "geneV"}, patients, expr);
        methylation = make_matrix(FeatureKind::methylation, {"cg1", "cg2", "cg3", "cg4"}, patients,
                                  {bimodal(early), bimodal(early), bimodal(early), flat()});

        for (int i = 0; i < 90; ++i) outcomes[pid(i)] = {static_cast<double>(i + 1), true};
        outcomes["phalf"] = {1000.0, false};
        outcomes["pmiss"] = {2.5, true};

        clinical.push_back({"p00", "cisplatin"});
        clinical.push_back({"p00", "carboplatin"});
        clinical.push_back({"p00", "paclitaxel"});
        for (int i = 1; i < 20; ++i) clinical.push_back({pid(i), "cisplatin"});
        for (int i = 1; i < 10; ++i) clinical.push_back({pid(i), "paclitaxel"});
        for (int i = 50; i < 59; ++i) clinical.push_back({pid(i), "rareDrug"});
        clinical.push_back({"pmiss", "rareDrug"});
        clinical.push_back({"p40", "carboplatin"});
        clinical.push_back({"stranger", "cisplatin"}); // not in the matrices: ignored
    }

    BuildResult build(BuildConfig cfg = {}) const {
        return build_documents(clinical, expression, methylation, site_to_gene, synonyms, outcomes, cfg);
    }
};

std::vector<std::string> words_of(const Corpus& c, const std::string& id) {
    for (const auto& d : c.documents)
        if (d.id == id) {
            std::vector<std::string> out;
            for (WordId w : d.tokens) out.push_back(c.vocabulary.term(w));
            return out;
        }
    FAIL("no document " << id);
    return {};
}

} // namespace

TEST_CASE("survival group sizes") {
    CHECK(survival_group_sizes(234, 3) == std::vector<std::size_t>{78, 78, 78});
    CHECK(survival_group_sizes(10, 3) == std::vector<std::size_t>{4, 3, 3});
    CHECK(survival_group_sizes(11, 3) == std::vector<std::size_t>{4, 4, 3});
    for (std::size_t n = 3; n < 50; ++n) {
        const auto s = survival_group_sizes(n, 3);
        CHECK(*std::max_element(s.begin(), s.end()) - *std::min_element(s.begin(), s.end()) <= 1);
        CHECK(s[0] + s[1] + s[2] == n);
    }
    CHECK_THROWS_AS(survival_group_sizes(2, 3), ConfigError);
}

TEST_CASE("survival group filter thresholds") {
    // Six uncensored patients in three groups of two, plus two censored ones
    // whose counts must not matter.
    std::vector<std::string> ids{"a", "b", "c", "d", "e", "f", "g", "h"};
    std::vector<SurvivalOutcome> out{{1, true}, {2, true}, {3, true}, {4, true},
                                     {5, true}, {6, true}, {0.5, false}, {7, false}};
    std::map<std::string, std::vector<std::size_t>> counts{
        {"expr_keep", {15, 15, 5, 5, 2, 3, 0, 0}},   // totals (30, 10, 5)
        {"meth_drop", {10, 10, 6, 6, 5, 5, 0, 0}},   // totals (20, 12, 10)
        {"censored_only", {0, 0, 0, 0, 0, 0, 99, 99}},
    };
    BuildConfig cfg;
    // Expression needs a spread of 10, methylation 15.
    const auto expr = filter_by_survival_groups(counts, ids, out, FeatureKind::expression, cfg);
    CHECK(expr.count("expr_keep") == 1);
    CHECK(expr.count("censored_only") == 0);
    const auto meth = filter_by_survival_groups(counts, ids, out, FeatureKind::methylation, cfg);
    CHECK(meth.count("meth_drop") == 0);
    CHECK(meth.count("expr_keep") == 1);
    // (20, 12, 10) clears a 10-word bar but not an 11-word one.
    CHECK(expr.count("meth_drop") == 1);
    CHECK(filter_by_survival_groups(counts, ids, out, 3, 11).count("meth_drop") == 0);
}

TEST_CASE("survival group ties are broken by patient id") {
    // Same time for everyone: groups are {a, b}, {c, d}, {e, f} by id.
    std::vector<std::string> ids{"f", "e", "d", "c", "b", "a"};
    std::vector<SurvivalOutcome> out(6, SurvivalOutcome{1.0, true});
    std::map<std::string, std::vector<std::size_t>> counts{{"w", {0, 0, 0, 0, 5, 5}}};
    CHECK(filter_by_survival_groups(counts, ids, out, 3, 10).count("w") == 1);
    counts["w"] = {0, 5, 0, 5, 0, 0}; // one in {e, f}, one in {c, d}
    CHECK(filter_by_survival_groups(counts, ids, out, 3, 10).empty());
    std::vector<SurvivalOutcome> too_few(6, SurvivalOutcome{1.0, false});
    too_few[0].event = true;
    CHECK_THROWS_AS(filter_by_survival_groups(counts, ids, too_few, 3, 10), ConfigError);
}

TEST_CASE("documents from the fixture") {
    Fixture fx;
    const auto result = fx.build();
    const auto& c = result.corpus;
    CHECK(c.vocabulary.terms() == std::vector<std::string>{"geneX", "geneZ", "platinum", "taxane"});
    CHECK(result.report.excluded_patients == std::vector<std::string>{"pmiss"});
    CHECK(result.report.dropped_drugs == std::vector<std::string>{"rareDrug"});
    CHECK(result.report.expression_words == std::set<std::string>{"geneX"});
    CHECK(result.report.methylation_words == std::set<std::string>{"geneX", "geneZ"});
    CHECK(result.report.multimodal_expression == 2);
    CHECK(result.report.multimodal_methylation == 3);
    REQUIRE(c.documents.size() == 91);

    // Two platinums and a taxane, then one expression and two methylation
    // copies of geneX and one of geneZ.
    CHECK(words_of(c, "p00") ==
          std::vector<std::string>{"platinum", "platinum", "taxane", "geneX", "geneX", "geneX", "geneZ"});
    // No extreme features: drug words only.
    CHECK(words_of(c, "p40") == std::vector<std::string>{"platinum"});
    CHECK(words_of(c, "p89").empty());
    // Exactly half missing is kept.
    CHECK(words_of(c, "phalf").empty());
    for (const auto& d : c.documents) CHECK(d.outcome == fx.outcomes.at(d.id));
    c.validate();
}

TEST_CASE("copy counts reconstruct the extreme calls") {
    Fixture fx;
    const auto c = fx.build().corpus;
    const WordId gx = *c.vocabulary.find("geneX");
    for (const auto& d : c.documents) {
        const auto n = std::count(d.tokens.begin(), d.tokens.end(), gx);
        const int i = d.id == "phalf" ? 90 : std::stoi(d.id.substr(1));
        // expression call + two extreme sites (cg4 is unimodal)
        CHECK(n == (i < 30 ? 3 : 0));
    }
}

TEST_CASE("drug prevalence threshold is inclusive") {
    Fixture fx;
    // taxane: p00..p09 = 10 of 91 patients (11%), kept. Push rareDrug to 10 of 91.
    fx.clinical.push_back({"p59", "rareDrug"});
    const auto r = fx.build();
    CHECK(r.corpus.vocabulary.find("rareDrug"));
    BuildConfig strict;
    strict.drug_prevalence_min = 0.2;
    const auto s = fx.build(strict);
    CHECK(s.corpus.vocabulary.find("platinum"));
    CHECK_FALSE(s.corpus.vocabulary.find("taxane"));
}

TEST_CASE("builds are deterministic and thread independent") {
    Fixture fx;
    const auto a = fx.build();
    const auto b = fx.build();
    BuildConfig threaded;
    threaded.threads = 3;
    const auto c = fx.build(threaded);
    CHECK(a.corpus == b.corpus);
    CHECK(a.corpus == c.corpus);
    // Rebuilding from the same inputs with the retained vocabulary already
    // applied changes nothing.
    CHECK(a.corpus.vocabulary == c.corpus.vocabulary);
}

TEST_CASE("build input errors") {
    {
        Fixture fx;
        fx.site_to_gene.erase("cg3");
        CHECK_THROWS_AS(fx.build(), ValidationError);
    }
    {
        Fixture fx;
        fx.outcomes.erase("p10");
        CHECK_THROWS_AS(fx.build(), ValidationError);
    }
    {
        Fixture fx;
        fx.methylation.patient_ids[0] = "other";
        CHECK_THROWS_AS(fx.build(), ValidationError);
    }
    {
        Fixture fx;
        fx.expression.values.pop_back();
        CHECK_THROWS_AS(fx.build(), ValidationError);
    }
    {
        Fixture fx;
        BuildConfig bad;
        bad.n_survival_groups = 1;
        CHECK_THROWS_AS(fx.build(bad), ConfigError);
    }
}

TEST_CASE("matrix reader handles corner labels and missing values") {
    std::istringstream with_corner("gene\tp1\tp2\tp3\ng1\t1.5\tNA\t-2\ng2\t0\t1e3\t+4\n");
    const auto m = read_feature_matrix(with_corner, FeatureKind::expression);
    CHECK(m.patient_ids == std::vector<std::string>{"p1", "p2", "p3"});
    CHECK(m.feature_ids == std::vector<std::string>{"g1", "g2"});
    CHECK(m.is_missing(0, 1));
    CHECK(m.at(1, 1) == 1000.0);
    CHECK(m.at(1, 2) == 4.0);

    std::istringstream bare("p1\tp2\ng1\t1\t.\n", std::ios::in);
    const auto b = read_feature_matrix(bare, FeatureKind::methylation, ".");
    CHECK(b.patient_ids == std::vector<std::string>{"p1", "p2"});
    CHECK(b.is_missing(0, 1));

    std::istringstream ragged("p1\tp2\ng1\t1\t2\ng2\t1\n");
    CHECK_THROWS_AS(read_feature_matrix(ragged, FeatureKind::expression), ParseError);
    std::istringstream junk("p1\ng1\tabc\n");
    CHECK_THROWS_AS(read_feature_matrix(junk, FeatureKind::expression), ParseError);
}

TEST_CASE("table readers") {
    std::istringstream clin("# patient drug\np1\tcisplatin\n\np1\tpaclitaxel\np2\tcisplatin\n");
    const auto c = read_clinical(clin);
    REQUIRE(c.size() == 3);
    CHECK(c[1].drug == "paclitaxel");
    std::istringstream bad_clin("p1 cisplatin\n");
    CHECK_THROWS_AS(read_clinical(bad_clin), ParseError);

    std::istringstream syn("cisplatin\tplatinum\ncarboplatin\tplatinum\n");
    CHECK(read_name_map(syn).at("carboplatin") == "platinum");
    std::istringstream conflict("a\tb\na\tc\n");
    CHECK_THROWS_AS(read_name_map(conflict), ParseError);

    std::istringstream out("p1\t3.5\t1\np2\t10\t0\n");
    const auto o = read_outcomes(out);
    CHECK(o.at("p1").event);
    CHECK(o.at("p2").time == 10.0);
    std::istringstream bad_event("p1\t3\tyes\n");
    CHECK_THROWS_AS(read_outcomes(bad_event), ParseError);

    std::istringstream cfg(R"({"extreme_posterior_threshold":0.9,"meth_group_diff_min":20,"seed":5})");
    const auto bc = read_build_config(cfg);
    CHECK(bc.extreme_posterior_threshold == 0.9);
    CHECK(bc.meth_group_diff_min == 20);
    CHECK(bc.expr_group_diff_min == 10);
    CHECK(bc.seed == 5);
    std::istringstream unknown(R"({"threshold":0.9})");
    CHECK_THROWS_AS(read_build_config(unknown), ConfigError);
    std::istringstream out_of_range(R"({"extreme_posterior_threshold":1.5})");
    CHECK_THROWS_AS(read_build_config(out_of_range), ConfigError);
}
