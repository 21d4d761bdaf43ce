#pragma once

#include "survlda/corpus.hpp"
#include "survlda/survival.hpp"
#include "survlda/vem.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace survlda {

// Fixed background topic: count weights on the listed words, `epsilon` on
// every other word, normalized. Always occupies the last topic slot.
struct BackgroundSpec {
    std::map<std::string, double> word_weights;
    double epsilon = 0.001;

    void validate() const;
};

std::vector<double> background_row(const BackgroundSpec& spec, const Vocabulary& vocabulary);

struct TrainConfig {
    std::size_t topics = 2;
    double alpha0 = 1.0; // alpha = (alpha0 / K, ..., alpha0 / K)
    Mode mode = Mode::lda;
    HazardFamily hazard_family = HazardFamily::exponential;
    std::optional<BackgroundSpec> background;
    // Topic whose coefficient is pinned to zero when no background is given.
    std::optional<std::size_t> reference_topic;
    double em_tol = 1e-5;
    int em_max_iters = 100;
    EStepOptions estep;
    double tau_smoothing = 1e-8;
    std::uint64_t seed = 0;
    int restarts = 3;
    unsigned threads = 1;
    // Receives progress lines (ELBO trace, warnings). Not serialized.
    std::function<void(const std::string&)> log;

    void validate() const;
    std::optional<std::size_t> background_topic() const;
    // Coefficients held at zero in the survival M-step.
    std::vector<std::size_t> pinned() const;
};

struct DocumentFit {
    std::string id;
    std::vector<double> gamma;
    std::vector<double> phi_bar;
    std::vector<double> theta; // gamma / sum(gamma)
};

struct FittedModel {
    TrainConfig config;
    Vocabulary vocabulary;
    ModelParams params;
    std::vector<DocumentFit> documents;
    std::vector<double> elbo_trace;
    bool converged = false;
    std::vector<double> restart_elbos;
    std::vector<std::string> warnings;

    double final_elbo() const { return elbo_trace.empty() ? 0.0 : elbo_trace.back(); }
};

// tau_kv proportional to smoothing + sum_i sum_j I(W_ij = v) phi_ijk for
// every topic except the background, whose row is copied from `fixed_row`.
std::vector<double> mstep_tau(std::span<const VariationalState> states, const Corpus& corpus, std::size_t topics,
                              std::size_t vocab_size, double smoothing,
                              const std::vector<double>* fixed_row = nullptr);

// Corpus-level variational EM. Runs `restarts` fits that differ only in the
// tau initialization stream and returns the one with the highest final ELBO.
FittedModel fit(const Corpus& corpus, const TrainConfig& config);

// One weighted Kaplan-Meier curve per topic, weights = theta_hat[:, k].
// Corpus documents are matched to fitted documents by id.
std::vector<KMCurve> topic_survival_curves(const FittedModel& model, const Corpus& corpus);

} // namespace survlda
