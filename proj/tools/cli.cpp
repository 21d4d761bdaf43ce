#include "cli.hpp"

#include "survlda/docbuild.hpp"
#include "survlda/error.hpp"
#include "survlda/model_io.hpp"
#include "survlda/predict.hpp"
#include "survlda/rng.hpp"
#include "survlda/simgen.hpp"
#include "survlda/trainer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

namespace survlda::cli {

namespace {

std::string fmt_real(double x) {
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

double parse_number(const std::string& s, const std::string& what) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
        throw ValidationError(what + ": not a number: '" + s + "'");
    return v;
}

std::vector<double> parse_list(const std::string& s, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number(item, what));
    return out;
}

// Writes to `path` or, for "-", to `fallback`.
template <typename Fn>
void with_output(const std::string& path, std::ostream& fallback, Fn&& fn) {
    if (path == "-") {
        fn(fallback);
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    fn(f);
    if (!f) throw IoError("write failed for " + path);
}

// "word<TAB>weight" per line.
BackgroundSpec load_background(const std::string& path, double epsilon) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    BackgroundSpec spec;
    spec.epsilon = epsilon;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw ParseError(path + ": expected 'word<TAB>weight'", line_no);
        const std::string word = line.substr(0, tab);
        try {
            spec.word_weights[word] = parse_number(line.substr(tab + 1), "background weight");
        } catch (const ValidationError& e) {
            throw ParseError(path + ": " + e.what(), line_no);
        }
    }
    spec.validate();
    return spec;
}

struct Options {
    unsigned threads = 1;
    std::optional<std::uint64_t> seed;

    // build-docs
    std::string expression, methylation, site_map, clinical, synonyms, outcomes, build_config, missing = "NA";
    // shared paths
    std::string corpus, model, out = "-", out_corpus, out_truth, out_model;
    // train
    std::string mode = "lda", hazard = "exponential", background;
    std::size_t k = 2;
    double alpha0 = 1.0, em_tol = 1e-5, epsilon = 0.001, estep_tol = 1e-6;
    int max_iters = 100, restarts = 3, estep_max_iters = 200;
    std::optional<std::size_t> reference_topic;
    // predict / km
    double threshold_hi = 0.8, threshold_lo = 0.2;
    std::size_t topic = 0;
    bool by_topic = false, by_group = false;
    // simulate
    std::size_t v = 50, d = 100;
    double n = 100.0, lambda = 0.1, rho = 1.0, tau_concentration = 0.1;
    std::string beta, censor = "none";
    bool fixed_length = false;
    // top-words
    std::size_t top = 10;
};

std::uint64_t seed_or_zero(const Options& o) {
    return o.seed.value_or(0);
}

int cmd_build_docs(const Options& o, std::ostream& err) {
    BuildConfig config = o.build_config.empty() ? BuildConfig{} : load_build_config(o.build_config);
    if (o.seed) config.seed = *o.seed;
    config.threads = o.threads;
    const auto expression = load_feature_matrix(o.expression, FeatureKind::expression, o.missing);
    const auto methylation = load_feature_matrix(o.methylation, FeatureKind::methylation, o.missing);
    const auto site_map = load_name_map(o.site_map);
    const auto clinical = load_clinical(o.clinical);
    const NameMap synonyms = o.synonyms.empty() ? NameMap{} : load_name_map(o.synonyms);
    const auto outcomes = load_outcomes(o.outcomes);
    auto result = build_documents(clinical, expression, methylation, site_map, synonyms, outcomes, config);
    const auto& r = result.report;
    err << "documents: " << result.corpus.documents.size() << " (excluded " << r.excluded_patients.size() << ")\n"
        << "vocabulary: " << result.corpus.vocabulary.size() << "\n"
        << "multimodal features: expression " << r.multimodal_expression << ", methylation "
        << r.multimodal_methylation << " (skipped " << r.skipped_features << ")\n"
        << "gene words kept: expression " << r.expression_words.size() << ", methylation "
        << r.methylation_words.size() << "\n";
    for (const auto& d : r.dropped_drugs) err << "dropped drug word: " << d << "\n";
    save_corpus(result.corpus, o.out_corpus);
    return 0;
}

int cmd_train(const Options& o, std::ostream& err) {
    const auto corpus = load_corpus(o.corpus);
    TrainConfig config;
    config.topics = o.k;
    config.alpha0 = o.alpha0;
    config.mode = parse_mode(o.mode);
    config.hazard_family = parse_hazard_family(o.hazard);
    if (!o.background.empty()) config.background = load_background(o.background, o.epsilon);
    config.reference_topic = o.reference_topic;
    config.em_tol = o.em_tol;
    config.em_max_iters = o.max_iters;
    config.estep.tol = o.estep_tol;
    config.estep.max_iters = o.estep_max_iters;
    config.seed = seed_or_zero(o);
    config.restarts = o.restarts;
    config.threads = o.threads;
    config.log = [&err](const std::string& line) { err << line << '\n'; };
    const auto model = fit(corpus, config);
    save_model(model, o.out_model);
    return 0;
}

std::vector<Prediction> predict_corpus(const FittedModel& model, const Corpus& corpus) {
    std::vector<Prediction> preds;
    preds.reserve(corpus.documents.size());
    for (const auto& doc : corpus.documents) {
        std::size_t dropped = 0;
        const auto mapped = map_to_model_vocabulary(doc, corpus.vocabulary, model.vocabulary, &dropped);
        auto p = predict_document(mapped, model, model.config.estep);
        p.oov_dropped = dropped;
        preds.push_back(std::move(p));
    }
    return preds;
}

void check_topic(const FittedModel& model, std::size_t topic) {
    if (topic >= model.params.topics())
        throw ValidationError("--topic " + std::to_string(topic) + " out of range for a " +
                              std::to_string(model.params.topics()) + "-topic model");
}

int cmd_predict(const Options& o, std::ostream& out, std::ostream& err) {
    const auto model = load_model(o.model);
    check_topic(model, o.topic);
    const auto corpus = load_corpus(o.corpus);
    const auto preds = predict_corpus(model, corpus);
    const auto partition = topic_membership_report(preds, o.threshold_hi, o.threshold_lo, o.topic);
    std::size_t oov = 0;
    for (const auto& p : preds) oov += p.oov_dropped;
    if (oov) err << "dropped " << oov << " out-of-vocabulary tokens\n";
    with_output(o.out, out, [&](std::ostream& s) {
        s << "id\tgroup\tlinear_predictor\tmedian_lifetime";
        for (std::size_t k = 0; k < model.params.topics(); ++k) s << "\ttheta_" << k;
        s << '\n';
        for (std::size_t i = 0; i < preds.size(); ++i) {
            const auto& p = preds[i];
            s << p.id << '\t' << to_string(partition.group_of(i)) << '\t' << fmt_real(p.linear_predictor) << '\t';
            if (p.median_lifetime)
                s << fmt_real(*p.median_lifetime);
            else
                s << "NA";
            for (double t : p.theta_hat) s << '\t' << fmt_real(t);
            s << '\n';
        }
    });
    return 0;
}

int cmd_km(const Options& o, std::ostream& out) {
    const auto model = load_model(o.model);
    const auto corpus = load_corpus(o.corpus);
    if (!corpus.all_have_outcomes()) throw ValidationError("km needs a survival outcome on every document");
    std::vector<KMCurve> curves;
    std::vector<std::string> labels;
    if (o.by_topic) {
        curves = topic_survival_curves(model, corpus);
        for (std::size_t k = 0; k < curves.size(); ++k) labels.push_back("topic " + std::to_string(k));
    } else {
        check_topic(model, o.topic);
        const auto preds = predict_corpus(model, corpus);
        const auto partition = topic_membership_report(preds, o.threshold_hi, o.threshold_lo, o.topic);
        std::vector<SurvivalOutcome> outcomes;
        for (const auto& d : corpus.documents) outcomes.push_back(*d.outcome);
        for (auto [name, members] : {std::pair{"high", &partition.high}, std::pair{"middle", &partition.middle},
                                     std::pair{"low", &partition.low}}) {
            std::vector<double> w(outcomes.size(), 0.0);
            for (std::size_t i : *members) w[i] = 1.0;
            if (members->empty()) {
                KMCurve c;
                c.empty = true;
                curves.push_back(c);
            } else {
                curves.push_back(weighted_km(outcomes, w));
            }
            labels.push_back(std::string("topic ") + std::to_string(o.topic) + " " + name);
        }
    }
    with_output(o.out, out, [&](std::ostream& s) { write_km_curves(curves, labels, s); });
    return 0;
}

int cmd_simulate(const Options& o) {
    if (o.k < 1 || o.v < 1 || o.d < 1) throw ValidationError("--k, --v and --d must be positive");
    if (!(o.tau_concentration > 0.0)) throw ValidationError("--tau-concentration must be positive");
    const std::uint64_t seed = seed_or_zero(o);
    std::vector<double> beta = o.beta.empty() ? std::vector<double>(o.k, 0.0) : parse_list(o.beta, "--beta");
    if (beta.size() != o.k) throw ValidationError("--beta needs exactly --k values");

    // Topics come from a stream disjoint from the per-document streams.
    std::vector<double> tau;
    tau.reserve(o.k * o.v);
    for (std::size_t k = 0; k < o.k; ++k) {
        CounterRng rng(seed, ~std::uint64_t{0} - k);
        const auto row = rng.dirichlet(std::vector<double>(o.v, o.tau_concentration));
        tau.insert(tau.end(), row.begin(), row.end());
    }
    const auto family = parse_hazard_family(o.hazard);
    BaselineHazard hazard;
    if (family == HazardFamily::exponential)
        hazard = BaselineHazard::exponential(o.lambda);
    else if (family == HazardFamily::weibull)
        hazard = BaselineHazard::weibull(o.lambda, o.rho);
    else
        throw ValidationError("simulate supports exponential and weibull hazards only");
    const auto params =
        make_params(std::vector<double>(o.k, o.alpha0 / static_cast<double>(o.k)), o.v, tau, beta, hazard);

    CensoringSpec censoring;
    if (o.censor != "none") {
        const auto colon = o.censor.find(':');
        const std::string kind = o.censor.substr(0, colon);
        if (colon == std::string::npos) throw ValidationError("--censor must be none, exp:RATE or admin:TIME");
        censoring.value = parse_number(o.censor.substr(colon + 1), "--censor");
        if (kind == "exp")
            censoring.kind = CensoringSpec::Kind::exponential;
        else if (kind == "admin")
            censoring.kind = CensoringSpec::Kind::administrative;
        else
            throw ValidationError("--censor must be none, exp:RATE or admin:TIME");
    }
    DocLengthSpec length;
    length.mean = o.n;
    length.poisson = !o.fixed_length;
    auto [corpus, truth] = generate_corpus(params, o.d, length, censoring, seed);
    save_corpus(corpus, o.out_corpus);
    if (!o.out_truth.empty()) save_truth(truth, o.out_truth);
    return 0;
}

int cmd_top_words(const Options& o, std::ostream& out) {
    const auto model = load_model(o.model);
    const std::size_t K = model.params.topics();
    const std::size_t V = model.params.vocab_size;
    const std::size_t n = std::min(o.top, V);
    with_output(o.out, out, [&](std::ostream& s) {
        s << "topic\trank\tword\tweight\n";
        for (std::size_t k = 0; k < K; ++k) {
            const auto row = model.params.tau_row(k);
            std::vector<std::size_t> order(V);
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
            for (std::size_t r = 0; r < n; ++r)
                s << k << '\t' << r + 1 << '\t' << model.vocabulary.term(static_cast<WordId>(order[r])) << '\t'
                  << fmt_real(row[order[r]]) << '\n';
        }
    });
    return 0;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"survLDA: topic models with survival supervision", "survlda-cli"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--seed", o.seed, "Random seed");
    };

    auto* build = app.add_subcommand("build-docs", "Build patient documents from clinical and genomic tables");
    build->add_option("--expression", o.expression, "Expression matrix TSV")->required();
    build->add_option("--methylation", o.methylation, "Methylation matrix TSV")->required();
    build->add_option("--site-map", o.site_map, "Methylation site to gene TSV")->required();
    build->add_option("--clinical", o.clinical, "Drug administrations TSV")->required();
    build->add_option("--synonyms", o.synonyms, "Drug name to drug word TSV");
    build->add_option("--outcomes", o.outcomes, "Survival outcomes TSV")->required();
    build->add_option("--config", o.build_config, "Build config JSON");
    build->add_option("--missing", o.missing, "Missing-value sentinel")->capture_default_str();
    build->add_option("--out-corpus", o.out_corpus, "Output corpus")->required();
    add_common(build);

    auto* train = app.add_subcommand("train", "Fit an LDA or survLDA model");
    train->add_option("--corpus", o.corpus, "Training corpus")->required();
    train->add_option("--mode", o.mode, "lda or survlda")->check(CLI::IsMember({"lda", "survlda"}))->capture_default_str();
    train->add_option("--k", o.k, "Number of topics")->capture_default_str();
    train->add_option("--alpha0", o.alpha0, "Total Dirichlet concentration")->capture_default_str();
    train->add_option("--hazard", o.hazard, "Baseline hazard family")
        ->check(CLI::IsMember({"exponential", "weibull", "breslow"}))
        ->capture_default_str();
    train->add_option("--background", o.background, "Background topic weights TSV (word, weight)");
    train->add_option("--epsilon", o.epsilon, "Background filler weight")->capture_default_str();
    train->add_option("--reference-topic", o.reference_topic, "Topic whose coefficient is pinned to 0");
    train->add_option("--em-tol", o.em_tol, "Relative ELBO tolerance for EM")->capture_default_str();
    train->add_option("--max-iters", o.max_iters, "Maximum EM iterations")->capture_default_str();
    train->add_option("--estep-tol", o.estep_tol, "Relative ELBO tolerance per document")->capture_default_str();
    train->add_option("--estep-max-iters", o.estep_max_iters, "Maximum E-step sweeps")->capture_default_str();
    train->add_option("--restarts", o.restarts, "Random restarts")->capture_default_str();
    train->add_option("--out-model", o.out_model, "Output model file")->required();
    add_common(train);

    auto* predict = app.add_subcommand("predict", "Infer topic membership and survival for documents");
    predict->add_option("--model", o.model, "Model file")->required();
    predict->add_option("--corpus", o.corpus, "Documents to score")->required();
    predict->add_option("--out", o.out, "Output TSV ('-' for stdout)")->capture_default_str();
    predict->add_option("--threshold-hi", o.threshold_hi, "High-membership threshold")->capture_default_str();
    predict->add_option("--threshold-lo", o.threshold_lo, "Low-membership threshold")->capture_default_str();
    predict->add_option("--topic", o.topic, "Topic used for grouping (0-based)")->capture_default_str();
    add_common(predict);

    auto* km = app.add_subcommand("km", "Kaplan-Meier curves by topic weight or membership group");
    km->add_option("--model", o.model, "Model file")->required();
    km->add_option("--corpus", o.corpus, "Corpus with outcomes")->required();
    auto* by_topic = km->add_flag("--by-topic", o.by_topic, "One theta-weighted curve per topic");
    auto* by_group = km->add_flag("--by-group", o.by_group, "Curves for high/middle/low membership in --topic");
    by_topic->excludes(by_group);
    km->add_option("--topic", o.topic, "Topic used by --by-group (0-based)")->capture_default_str();
    km->add_option("--threshold-hi", o.threshold_hi, "High-membership threshold")->capture_default_str();
    km->add_option("--threshold-lo", o.threshold_lo, "Low-membership threshold")->capture_default_str();
    km->add_option("--out", o.out, "Output file ('-' for stdout)")->capture_default_str();
    add_common(km);

    auto* sim = app.add_subcommand("simulate", "Generate a synthetic corpus from the survLDA model");
    sim->add_option("--k", o.k, "Topics")->capture_default_str();
    sim->add_option("--v", o.v, "Vocabulary size")->capture_default_str();
    sim->add_option("--d", o.d, "Documents")->capture_default_str();
    sim->add_option("--n", o.n, "Mean document length")->capture_default_str();
    sim->add_flag("--fixed-length", o.fixed_length, "Every document has exactly --n words");
    sim->add_option("--alpha0", o.alpha0, "Total Dirichlet concentration")->capture_default_str();
    sim->add_option("--tau-concentration", o.tau_concentration, "Dirichlet concentration of each topic")
        ->capture_default_str();
    sim->add_option("--beta", o.beta, "Comma-separated coefficients, one per topic");
    sim->add_option("--hazard", o.hazard, "exponential or weibull")
        ->check(CLI::IsMember({"exponential", "weibull"}))
        ->capture_default_str();
    sim->add_option("--lambda", o.lambda, "Baseline hazard scale")->capture_default_str();
    sim->add_option("--rho", o.rho, "Weibull shape")->capture_default_str();
    sim->add_option("--censor", o.censor, "none, exp:RATE or admin:TIME")->capture_default_str();
    sim->add_option("--out-corpus", o.out_corpus, "Output corpus")->required();
    sim->add_option("--out-truth", o.out_truth, "Output truth JSON");
    add_common(sim);

    auto* top = app.add_subcommand("top-words", "List the highest-weight words of each topic");
    top->add_option("--model", o.model, "Model file")->required();
    top->add_option("--n", o.top, "Words per topic")->capture_default_str();
    top->add_option("--out", o.out, "Output TSV ('-' for stdout)")->capture_default_str();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return 1;
    }

    try {
        if (build->parsed()) return cmd_build_docs(o, err);
        if (train->parsed()) return cmd_train(o, err);
        if (predict->parsed()) return cmd_predict(o, out, err);
        if (km->parsed()) {
            if (o.by_topic == o.by_group) {
                err << "km: give exactly one of --by-topic or --by-group\n";
                return 1;
            }
            return cmd_km(o, out);
        }
        if (sim->parsed()) return cmd_simulate(o);
        if (top->parsed()) return cmd_top_words(o, out);
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

} // namespace survlda::cli
