#include "survlda/predict.hpp"

#include "survlda/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace survlda {

Document map_to_model_vocabulary(const Document& doc, const Vocabulary& source, const Vocabulary& model_vocab,
                                 std::size_t* dropped) {
    Document out;
    out.id = doc.id;
    out.outcome = doc.outcome;
    std::size_t oov = 0;
    for (WordId w : doc.tokens) {
        if (auto v = model_vocab.find(source.term(w)))
            out.tokens.push_back(*v);
        else
            ++oov;
    }
    if (dropped) *dropped = oov;
    return out;
}

Prediction infer_new_document(const Document& doc, const FittedModel& model, const EStepOptions& options) {
    const auto& params = model.params;
    const std::size_t K = params.topics();
    Document clean;
    clean.id = doc.id;
    std::size_t oov = 0;
    for (WordId w : doc.tokens) {
        if (w < params.vocab_size)
            clean.tokens.push_back(w);
        else
            ++oov;
    }

    const auto state = e_step(clean, params, Mode::lda, options);
    Prediction pred;
    pred.id = doc.id;
    pred.oov_dropped = oov;
    pred.empty = clean.tokens.empty();
    pred.converged = state.converged;
    pred.gamma_new = state.gamma;
    const double g = std::accumulate(state.gamma.begin(), state.gamma.end(), 0.0);
    pred.theta_hat.resize(K);
    for (std::size_t k = 0; k < K; ++k) pred.theta_hat[k] = state.gamma[k] / g;
    // With no words the posterior mean of Zbar falls back to E[theta].
    pred.z_bar_new = pred.empty ? pred.theta_hat : state.phi_bar;
    for (std::size_t k = 0; k < K && k < params.beta.size(); ++k)
        pred.linear_predictor += params.beta[k] * pred.z_bar_new[k];
    return pred;
}

double predicted_median_lifetime(const Prediction& pred, const FittedModel& model) {
    if (model.config.mode != Mode::survlda || !model.params.hazard)
        throw ValidationError("median lifetime needs a survlda model with a baseline hazard");
    const auto& h = *model.params.hazard;
    // Target cumulative baseline hazard at the median.
    const double target = std::numbers::ln2 / std::exp(pred.linear_predictor);
    switch (h.family) {
    case HazardFamily::exponential: return target / h.lambda;
    case HazardFamily::weibull: return std::pow(target / h.lambda, 1.0 / h.rho);
    case HazardFamily::breslow:
        for (const auto& s : h.steps)
            if (s.cumulative >= target) return s.time;
        return std::numeric_limits<double>::infinity();
    }
    return std::numeric_limits<double>::quiet_NaN();
}

Prediction predict_document(const Document& doc, const FittedModel& model, const EStepOptions& options) {
    auto pred = infer_new_document(doc, model, options);
    if (model.config.mode == Mode::survlda && model.params.hazard) {
        const double t = predicted_median_lifetime(pred, model);
        pred.median_lifetime = t;
        pred.median_never_reached = std::isinf(t);
    }
    return pred;
}

std::string_view to_string(MembershipGroup g) {
    switch (g) {
    case MembershipGroup::high: return "high";
    case MembershipGroup::middle: return "middle";
    case MembershipGroup::low: return "low";
    }
    return "?";
}

MembershipGroup MembershipPartition::group_of(std::size_t index) const {
    if (std::binary_search(high.begin(), high.end(), index)) return MembershipGroup::high;
    if (std::binary_search(low.begin(), low.end(), index)) return MembershipGroup::low;
    return MembershipGroup::middle;
}

MembershipPartition topic_membership_report(std::span<const Prediction> preds, double threshold_hi,
                                            double threshold_lo, std::size_t topic) {
    if (!(threshold_lo > 0.0 && threshold_hi < 1.0 && threshold_hi > threshold_lo))
        throw ValidationError("thresholds must satisfy 0 < lo < hi < 1");
    MembershipPartition part;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (topic >= preds[i].theta_hat.size()) throw ValidationError("topic index out of range");
        const double t = preds[i].theta_hat[topic];
        if (t > threshold_hi)
            part.high.push_back(i);
        else if (t < threshold_lo)
            part.low.push_back(i);
        else
            part.middle.push_back(i);
    }
    return part;
}

} // namespace survlda
