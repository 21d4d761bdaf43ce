#include "survlda/trainer.hpp"

#include "survlda/error.hpp"
#include "survlda/parallel.hpp"
#include "survlda/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace survlda {

void BackgroundSpec::validate() const {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ConfigError("background epsilon must be positive");
    bool positive = false;
    for (const auto& [word, w] : word_weights) {
        if (!(w >= 0.0) || !std::isfinite(w))
            throw ConfigError("background weight for '" + word + "' must be finite and nonnegative");
        positive = positive || w > 0.0;
    }
    if (!positive) throw ConfigError("background needs at least one positive word weight");
}

std::vector<double> background_row(const BackgroundSpec& spec, const Vocabulary& vocabulary) {
    spec.validate();
    std::vector<double> row(vocabulary.size(), spec.epsilon);
    for (const auto& [word, w] : spec.word_weights) {
        auto v = vocabulary.find(word);
        if (!v) throw ValidationError("background word '" + word + "' is not in the vocabulary");
        row[*v] = w > 0.0 ? w : spec.epsilon;
    }
    const double total = std::accumulate(row.begin(), row.end(), 0.0);
    for (double& x : row) x /= total;
    return row;
}

void TrainConfig::validate() const {
    if (topics < 1) throw ConfigError("need at least one topic");
    if (!(alpha0 > 0.0) || !std::isfinite(alpha0)) throw ConfigError("alpha0 must be positive");
    if (background) {
        if (topics < 2) throw ConfigError("a background topic needs K >= 2");
        background->validate();
    }
    if (reference_topic && *reference_topic >= topics) throw ConfigError("reference topic out of range");
    if (background && reference_topic && *reference_topic != topics - 1)
        throw ConfigError("with a background topic the reference topic is the background (last) topic");
    if (mode == Mode::survlda && topics >= 2 && !background && !reference_topic)
        throw ConfigError("survlda with K >= 2 needs a background topic or a reference topic");
    if (!(em_tol >= 0.0)) throw ConfigError("em_tol must be nonnegative");
    if (em_max_iters < 1) throw ConfigError("em_max_iters must be >= 1");
    if (!(estep.tol >= 0.0) || estep.max_iters < 1) throw ConfigError("invalid E-step settings");
    if (!(tau_smoothing > 0.0)) throw ConfigError("tau smoothing must be positive");
    if (restarts < 1) throw ConfigError("restarts must be >= 1");
}

std::optional<std::size_t> TrainConfig::background_topic() const {
    if (background) return topics - 1;
    return std::nullopt;
}

std::vector<std::size_t> TrainConfig::pinned() const {
    if (background) return {topics - 1};
    if (reference_topic) return {*reference_topic};
    if (topics == 1) return {0};
    return {};
}

std::vector<double> mstep_tau(std::span<const VariationalState> states, const Corpus& corpus, std::size_t topics,
                              std::size_t vocab_size, double smoothing, const std::vector<double>* fixed_row) {
    if (states.size() != corpus.documents.size()) throw ValidationError("one variational state per document required");
    const std::size_t K = topics;
    const std::size_t V = vocab_size;
    std::vector<double> tau(K * V, smoothing);
    for (std::size_t i = 0; i < states.size(); ++i) {
        const auto& doc = corpus.documents[i];
        const auto& phi = states[i].phi;
        for (std::size_t j = 0; j < doc.size(); ++j) {
            const WordId w = doc.tokens[j];
            for (std::size_t k = 0; k < K; ++k) tau[k * V + w] += phi[j * K + k];
        }
    }
    for (std::size_t k = 0; k < K; ++k) {
        if (fixed_row && k + 1 == K) {
            std::copy(fixed_row->begin(), fixed_row->end(), tau.begin() + static_cast<std::ptrdiff_t>(k * V));
            continue;
        }
        double total = 0.0;
        for (std::size_t v = 0; v < V; ++v) total += tau[k * V + v];
        for (std::size_t v = 0; v < V; ++v) tau[k * V + v] /= total;
    }
    return tau;
}

namespace {

void log_line(const TrainConfig& config, const std::string& line) {
    if (config.log) config.log(line);
}

SurvivalDesign make_design(const Corpus& corpus, std::span<const VariationalState> states, std::size_t K) {
    SurvivalDesign design(K);
    for (std::size_t i = 0; i < corpus.documents.size(); ++i)
        design.add(*corpus.documents[i].outcome, states[i].phi);
    return design;
}

SurvivalDesign empty_design(const Corpus& corpus, std::size_t K) {
    SurvivalDesign design(K);
    for (const auto& d : corpus.documents) design.add(*d.outcome, {});
    return design;
}

// Baseline hazard fitted with beta = 0.
BaselineHazard marginal_hazard(const Corpus& corpus, const TrainConfig& config) {
    const std::size_t K = config.topics;
    const auto design = empty_design(corpus, K);
    std::vector<double> zero(K, 0.0);
    std::vector<std::size_t> all(K);
    std::iota(all.begin(), all.end(), std::size_t{0});
    if (config.hazard_family == HazardFamily::breslow) return breslow_update(zero, design);
    double events = 0.0, exposure = 0.0;
    for (const auto& d : corpus.documents) {
        events += d.outcome->event ? 1.0 : 0.0;
        exposure += d.outcome->time;
    }
    if (events == 0.0) throw NumericalError("no observed events: survival model cannot be fitted");
    const double lambda = events / exposure;
    if (config.hazard_family == HazardFamily::exponential) return BaselineHazard::exponential(lambda);
    SurvivalFitOptions opt;
    opt.pinned = all;
    opt.seed = config.seed;
    try {
        return optimize_parametric(design, HazardFamily::weibull, zero, BaselineHazard::weibull(lambda, 1.0), opt)
            .hazard;
    } catch (const OptimizationError& e) {
        return e.best().hazard;
    }
}

struct RunResult {
    FittedModel model;
    std::vector<VariationalState> states;
};

RunResult fit_once(const Corpus& corpus, const TrainConfig& config, int restart) {
    const std::size_t K = config.topics;
    const std::size_t V = corpus.vocabulary.size();
    const std::size_t D = corpus.documents.size();
    const auto bg_topic = config.background_topic();
    std::vector<double> bg;
    if (config.background) bg = background_row(*config.background, corpus.vocabulary);

    // tau init: smoothed corpus word distribution mixed 95/5 with Dirichlet(1) noise.
    CounterRng rng(config.seed, static_cast<std::uint64_t>(restart));
    std::vector<double> empirical(V, config.tau_smoothing);
    for (const auto& d : corpus.documents)
        for (WordId w : d.tokens) empirical[w] += 1.0;
    const double total = std::accumulate(empirical.begin(), empirical.end(), 0.0);
    for (double& x : empirical) x /= total;
    const std::vector<double> ones(V, 1.0);
    std::vector<double> tau(K * V);
    for (std::size_t k = 0; k < K; ++k) {
        if (bg_topic && k == *bg_topic) {
            std::copy(bg.begin(), bg.end(), tau.begin() + static_cast<std::ptrdiff_t>(k * V));
            continue;
        }
        const auto noise = rng.dirichlet(ones);
        for (std::size_t v = 0; v < V; ++v) tau[k * V + v] = 0.95 * empirical[v] + 0.05 * noise[v];
    }

    std::optional<BaselineHazard> hazard;
    if (config.mode == Mode::survlda) hazard = marginal_hazard(corpus, config);
    ModelParams params = make_params(std::vector<double>(K, config.alpha0 / static_cast<double>(K)), V,
                                     std::move(tau), std::vector<double>(K, 0.0), hazard);

    RunResult run;
    auto& model = run.model;
    auto& states = run.states;
    states.resize(D);
    std::vector<double> elbos(D);
    const auto pinned = config.pinned();
    bool first = true;

    for (int it = 1; it <= config.em_max_iters; ++it) {
        // E-step, warm-started from the previous iteration's posteriors.
        parallel_for(D, config.threads, [&](std::size_t i) {
            const auto* warm = first ? nullptr : &states[i];
            states[i] = e_step(corpus.documents[i], params, config.mode, config.estep, warm);
        });
        first = false;

        // M-step: topics.
        params.set_tau(mstep_tau(states, corpus, K, V, config.tau_smoothing, bg_topic ? &bg : nullptr));

        // M-step: survival coefficients and baseline hazard.
        if (config.mode == Mode::survlda) {
            const auto design = make_design(corpus, states, K);
            SurvivalFitOptions opt;
            opt.pinned = pinned;
            opt.seed = config.seed + static_cast<std::uint64_t>(it);
            SurvivalFit sfit;
            try {
                sfit = config.hazard_family == HazardFamily::breslow
                           ? optimize_breslow(design, params.beta, opt)
                           : optimize_parametric(design, config.hazard_family, params.beta, *params.hazard, opt);
            } catch (const OptimizationError& e) {
                sfit = e.best();
                model.warnings.push_back("iteration " + std::to_string(it) + ": " + e.what());
            }
            for (const auto& w : sfit.warnings)
                if (std::find(model.warnings.begin(), model.warnings.end(), w) == model.warnings.end())
                    model.warnings.push_back(w);
            params.beta = sfit.beta;
            for (auto p : pinned) params.beta[p] = 0.0;
            params.hazard = sfit.hazard;
        }

        parallel_for(D, config.threads,
                     [&](std::size_t i) { elbos[i] = compute_elbo(states[i], params, corpus.documents[i], config.mode); });
        double elbo = 0.0;
        for (double e : elbos) elbo += e;
        if (!std::isfinite(elbo)) throw NumericalError("corpus ELBO is not finite at iteration " + std::to_string(it));

        std::ostringstream line;
        line.precision(12);
        line << "restart " << restart << " iteration " << it << " elbo " << elbo;
        log_line(config, line.str());

        const bool stop = !model.elbo_trace.empty() &&
                          std::abs(elbo - model.elbo_trace.back()) <= config.em_tol * std::abs(model.elbo_trace.back());
        model.elbo_trace.push_back(elbo);
        if (stop) {
            model.converged = true;
            break;
        }
    }

    model.config = config;
    model.vocabulary = corpus.vocabulary;
    model.params = std::move(params);
    model.documents.reserve(D);
    for (std::size_t i = 0; i < D; ++i) {
        DocumentFit df;
        df.id = corpus.documents[i].id;
        df.gamma = states[i].gamma;
        df.phi_bar = states[i].phi_bar;
        const double g = std::accumulate(df.gamma.begin(), df.gamma.end(), 0.0);
        df.theta.resize(K);
        for (std::size_t k = 0; k < K; ++k) df.theta[k] = df.gamma[k] / g;
        model.documents.push_back(std::move(df));
    }
    return run;
}

} // namespace

FittedModel fit(const Corpus& corpus, const TrainConfig& config) {
    config.validate();
    corpus.validate();
    if (corpus.vocabulary.size() == 0) throw ValidationError("corpus vocabulary is empty");
    if (config.mode == Mode::survlda) {
        for (const auto& d : corpus.documents)
            if (!d.outcome) throw ValidationError("document '" + d.id + "' has no survival outcome (survlda mode)");
    }
    std::vector<std::string> warnings;
    for (const auto& d : corpus.documents)
        if (d.size() == 0) warnings.push_back("document '" + d.id + "' has no words");
    for (const auto& w : warnings) log_line(config, "warning: " + w);

    std::optional<FittedModel> best;
    std::vector<double> restart_elbos;
    for (int r = 0; r < config.restarts; ++r) {
        auto run = fit_once(corpus, config, r);
        restart_elbos.push_back(run.model.final_elbo());
        if (!best || run.model.final_elbo() > best->final_elbo()) best = std::move(run.model);
    }
    best->restart_elbos = std::move(restart_elbos);
    best->warnings.insert(best->warnings.begin(), warnings.begin(), warnings.end());
    for (const auto& w : best->warnings)
        if (std::find(warnings.begin(), warnings.end(), w) == warnings.end()) log_line(config, "warning: " + w);
    return std::move(*best);
}

std::vector<KMCurve> topic_survival_curves(const FittedModel& model, const Corpus& corpus) {
    const std::size_t K = model.params.topics();
    std::unordered_map<std::string, const DocumentFit*> by_id;
    for (const auto& d : model.documents) by_id.emplace(d.id, &d);
    std::vector<SurvivalOutcome> outcomes;
    std::vector<const DocumentFit*> fits;
    for (const auto& d : corpus.documents) {
        if (!d.outcome) throw ValidationError("document '" + d.id + "' has no survival outcome");
        auto it = by_id.find(d.id);
        if (it == by_id.end()) throw ValidationError("document '" + d.id + "' is not part of the fitted model");
        outcomes.push_back(*d.outcome);
        fits.push_back(it->second);
    }
    std::vector<KMCurve> curves;
    curves.reserve(K);
    for (std::size_t k = 0; k < K; ++k) {
        std::vector<double> weights;
        weights.reserve(fits.size());
        double total = 0.0;
        for (const auto* f : fits) {
            weights.push_back(f->theta[k]);
            total += f->theta[k];
        }
        if (!(total > 0.0)) {
            KMCurve empty;
            empty.empty = true;
            curves.push_back(std::move(empty));
            continue;
        }
        curves.push_back(weighted_km(outcomes, weights));
    }
    return curves;
}

} // namespace survlda
