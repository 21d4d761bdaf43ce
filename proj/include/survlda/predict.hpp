#pragma once

#include "survlda/trainer.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace survlda {

struct Prediction {
    std::string id;
    std::vector<double> gamma_new;
    std::vector<double> z_bar_new;   // phi_bar of the converged held-out state
    std::vector<double> theta_hat;   // gamma / sum(gamma)
    double linear_predictor = 0.0;   // beta' z_bar_new
    std::optional<double> median_lifetime;
    bool median_never_reached = false; // Breslow curve never crosses 1/2
    std::size_t oov_dropped = 0;
    bool empty = false;               // no in-vocabulary words
    bool converged = false;
};

// Maps a document's words onto the model vocabulary, dropping (and
// counting) words the model has never seen.
Document map_to_model_vocabulary(const Document& doc, const Vocabulary& source, const Vocabulary& model_vocab,
                                 std::size_t* dropped = nullptr);

// Held-out inference: LDA-mode coordinate ascent with tau and alpha fixed;
// beta and the hazard never enter. `doc` must already use model word ids.
Prediction infer_new_document(const Document& doc, const FittedModel& model, const EStepOptions& options = {});

// Solves exp(-H0(t) exp(lp)) = 1/2. Exponential and Weibull use the closed
// form; Breslow returns the first step time whose survival is <= 1/2, or
// +infinity when the curve never gets there.
double predicted_median_lifetime(const Prediction& pred, const FittedModel& model);

// Runs infer_new_document and fills the median for survlda models.
Prediction predict_document(const Document& doc, const FittedModel& model, const EStepOptions& options = {});

enum class MembershipGroup { high, middle, low };

std::string_view to_string(MembershipGroup g);

struct MembershipPartition {
    std::vector<std::size_t> high;   // theta_hat[topic] > threshold_hi
    std::vector<std::size_t> low;    // theta_hat[topic] < threshold_lo
    std::vector<std::size_t> middle;

    MembershipGroup group_of(std::size_t index) const;
};

MembershipPartition topic_membership_report(std::span<const Prediction> preds, double threshold_hi,
                                            double threshold_lo, std::size_t topic);

} // namespace survlda
