#pragma once

#include "survlda/error.hpp"

#include <cstdint>
#include <span>

namespace survlda {

class InsufficientDataError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class DegenerateDataError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// One- and two-component univariate Gaussian mixture fits. The two-component
// fit has unequal variances; its components are labelled by mixing weight
// (minor = smaller weight, ties broken by distance from the overall mean).
struct MixtureFit {
    double minor_mean = 0.0;
    double minor_sd = 1.0;
    double major_mean = 0.0;
    double major_sd = 1.0;
    double minor_weight = 0.5; // in (0, 0.5]
    double mean_1comp = 0.0;
    double sd_1comp = 1.0;
    double loglik_1comp = 0.0;
    double loglik_2comp = 0.0;
    double bic_1comp = 0.0; // -2 loglik + 2 ln n
    double bic_2comp = 0.0; // -2 loglik + 5 ln n
    std::size_t n = 0;
};

inline constexpr std::size_t kMinMixtureSamples = 10;

// Non-finite entries are treated as missing and skipped. The two-component
// EM starts once from a median split and four more times from random
// quantile splits drawn from `seed`; the highest likelihood wins.
MixtureFit fit_two_component_mixture(std::span<const double> values, std::uint64_t seed = 0);

// Lower BIC wins; a tie keeps the single component.
bool is_multimodal(const MixtureFit& fit);

// Posterior probability that `value` was drawn from the minor component.
double minor_posterior(const MixtureFit& fit, double value);

// True iff the minor-component posterior exceeds `threshold`. Requires a
// multimodal fit.
bool assign_extreme(const MixtureFit& fit, double value, double threshold);

} // namespace survlda
