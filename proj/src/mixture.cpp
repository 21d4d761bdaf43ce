#include "survlda/mixture.hpp"

#include "survlda/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

namespace survlda {

namespace {

double log_normal_pdf(double x, double mean, double sd) {
    const double z = (x - mean) / sd;
    return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

struct TwoComponent {
    double w[2], mu[2], sd[2];
    double loglik = -INFINITY;
    bool singular = false;
};

double mixture_loglik(std::span<const double> x, const TwoComponent& c) {
    double ll = 0.0;
    for (double v : x) {
        const double a = std::log(c.w[0]) + log_normal_pdf(v, c.mu[0], c.sd[0]);
        const double b = std::log(c.w[1]) + log_normal_pdf(v, c.mu[1], c.sd[1]);
        const double m = std::max(a, b);
        ll += m + std::log(std::exp(a - m) + std::exp(b - m));
    }
    return ll;
}

TwoComponent init_from_split(std::span<const double> sorted, std::size_t split, double sd_floor) {
    TwoComponent c;
    const std::size_t n = sorted.size();
    const std::size_t sizes[2] = {split, n - split};
    const std::size_t begin[2] = {0, split};
    for (int g = 0; g < 2; ++g) {
        double mean = 0.0;
        for (std::size_t i = 0; i < sizes[g]; ++i) mean += sorted[begin[g] + i];
        mean /= static_cast<double>(sizes[g]);
        double var = 0.0;
        for (std::size_t i = 0; i < sizes[g]; ++i) var += (sorted[begin[g] + i] - mean) * (sorted[begin[g] + i] - mean);
        var /= static_cast<double>(sizes[g]);
        c.w[g] = static_cast<double>(sizes[g]) / static_cast<double>(n);
        c.mu[g] = mean;
        c.sd[g] = std::max(std::sqrt(var), sd_floor);
    }
    return c;
}

TwoComponent run_em(std::span<const double> x, TwoComponent c, double sd_floor) {
    const std::size_t n = x.size();
    std::vector<double> r(n);
    double prev = mixture_loglik(x, c);
    for (int it = 0; it < 5000; ++it) {
        // E-step: responsibility of component 1.
        for (std::size_t i = 0; i < n; ++i) {
            const double a = std::log(c.w[0]) + log_normal_pdf(x[i], c.mu[0], c.sd[0]);
            const double b = std::log(c.w[1]) + log_normal_pdf(x[i], c.mu[1], c.sd[1]);
            r[i] = 1.0 / (1.0 + std::exp(a - b));
        }
        // M-step.
        double n1 = 0.0, s1 = 0.0, s0 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            n1 += r[i];
            s1 += r[i] * x[i];
            s0 += (1.0 - r[i]) * x[i];
        }
        const double n0 = static_cast<double>(n) - n1;
        if (n0 < 2.0 || n1 < 2.0) {
            // A component holding fewer than two points drives the likelihood
            // to a singularity; such runs are discarded.
            c.singular = true;
            return c;
        }
        c.w[0] = n0 / static_cast<double>(n);
        c.w[1] = n1 / static_cast<double>(n);
        c.mu[0] = s0 / n0;
        c.mu[1] = s1 / n1;
        double v0 = 0.0, v1 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            v0 += (1.0 - r[i]) * (x[i] - c.mu[0]) * (x[i] - c.mu[0]);
            v1 += r[i] * (x[i] - c.mu[1]) * (x[i] - c.mu[1]);
        }
        c.sd[0] = std::sqrt(v0 / n0);
        c.sd[1] = std::sqrt(v1 / n1);
        if (c.sd[0] <= sd_floor || c.sd[1] <= sd_floor) {
            c.singular = true;
            return c;
        }
        const double ll = mixture_loglik(x, c);
        if (std::abs(ll - prev) <= 1e-11 * std::abs(prev)) {
            prev = ll;
            break;
        }
        prev = ll;
    }
    c.loglik = prev;
    return c;
}

} // namespace

MixtureFit fit_two_component_mixture(std::span<const double> values, std::uint64_t seed) {
    std::vector<double> x;
    x.reserve(values.size());
    for (double v : values)
        if (std::isfinite(v)) x.push_back(v);
    if (x.size() < kMinMixtureSamples)
        throw InsufficientDataError("mixture fit needs at least " + std::to_string(kMinMixtureSamples) +
                                    " non-missing values, got " + std::to_string(x.size()));
    std::sort(x.begin(), x.end());
    if (x.front() == x.back()) throw DegenerateDataError("all values are identical");

    const std::size_t n = x.size();
    const double dn = static_cast<double>(n);
    MixtureFit fit;
    fit.n = n;
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= dn;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= dn;
    fit.mean_1comp = mean;
    fit.sd_1comp = std::sqrt(var);
    fit.loglik_1comp = 0.0;
    for (double v : x) fit.loglik_1comp += log_normal_pdf(v, mean, fit.sd_1comp);
    fit.bic_1comp = -2.0 * fit.loglik_1comp + 2.0 * std::log(dn);

    const double sd_floor = 1e-3 * fit.sd_1comp;
    std::optional<TwoComponent> best;
    auto consider = [&](const TwoComponent& c) {
        if (!c.singular && std::isfinite(c.loglik) && (!best || c.loglik > best->loglik)) best = c;
    };
    consider(run_em(x, init_from_split(x, n / 2, sd_floor), sd_floor));
    CounterRng rng(seed, 0x6d6978);
    for (int restart = 1; restart < 5; ++restart) {
        const double q = 0.05 + 0.9 * rng.uniform();
        const auto split = std::clamp<std::size_t>(static_cast<std::size_t>(q * dn), 2, n - 2);
        consider(run_em(x, init_from_split(x, split, sd_floor), sd_floor));
    }
    if (!best) {
        // Every run collapsed: report two copies of the single Gaussian, which
        // BIC never prefers.
        TwoComponent same;
        same.w[0] = same.w[1] = 0.5;
        same.mu[0] = same.mu[1] = mean;
        same.sd[0] = same.sd[1] = fit.sd_1comp;
        same.loglik = fit.loglik_1comp;
        best = same;
    }

    const auto& b = *best;
    int minor = b.w[0] < b.w[1] ? 0 : 1;
    if (b.w[0] == b.w[1]) minor = std::abs(b.mu[0] - mean) >= std::abs(b.mu[1] - mean) ? 0 : 1;
    const int major = 1 - minor;
    fit.minor_mean = b.mu[minor];
    fit.minor_sd = b.sd[minor];
    fit.minor_weight = b.w[minor];
    fit.major_mean = b.mu[major];
    fit.major_sd = b.sd[major];
    fit.loglik_2comp = b.loglik;
    fit.bic_2comp = -2.0 * fit.loglik_2comp + 5.0 * std::log(dn);
    return fit;
}

bool is_multimodal(const MixtureFit& fit) {
    return fit.bic_2comp < fit.bic_1comp;
}

double minor_posterior(const MixtureFit& fit, double value) {
    const double a = std::log(fit.minor_weight) + log_normal_pdf(value, fit.minor_mean, fit.minor_sd);
    const double b = std::log1p(-fit.minor_weight) + log_normal_pdf(value, fit.major_mean, fit.major_sd);
    return 1.0 / (1.0 + std::exp(b - a));
}

bool assign_extreme(const MixtureFit& fit, double value, double threshold) {
    if (!is_multimodal(fit)) throw ValidationError("assign_extreme called on a unimodal fit");
    return minor_posterior(fit, value) > threshold;
}

} // namespace survlda
