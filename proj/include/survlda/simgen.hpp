#pragma once

#include "survlda/corpus.hpp"
#include "survlda/vem.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace survlda {

struct CensoringSpec {
    enum class Kind { none, exponential, administrative } kind = Kind::none;
    double value = 0.0; // exponential rate or administrative cutoff time
};

struct DocLengthSpec {
    double mean = 100.0;
    bool poisson = true; // false: every document has exactly round(mean) words
};

struct SimTruth {
    ModelParams params;
    std::vector<double> theta;               // D x K
    std::vector<std::vector<std::size_t>> z; // topic per word
    std::vector<double> z_bar;               // D x K
    std::vector<double> event_times;         // latent, before censoring
    std::vector<double> censor_times;        // +inf without censoring
};

double exponential_inverse_sample(double u, double rate);
// H0(t) = lambda t^rho with effective scale lambda: t = (-ln u / lambda)^(1/rho).
double weibull_inverse_sample(double u, double lambda, double rho);

// Draws theta ~ Dir(alpha), Z_j ~ Mult(theta), W_j ~ Mult(tau_{Z_j}), an
// event time from the Cox model h0(t) exp(beta' Zbar) and an independent
// censoring time; T = min, delta = event <= censor. Document i uses RNG
// stream i of `seed`.
std::pair<Corpus, SimTruth> generate_corpus(const ModelParams& params, std::size_t documents,
                                            const DocLengthSpec& length, const CensoringSpec& censoring,
                                            std::uint64_t seed);

// Words are named w0 .. w{V-1}; documents d0 .. d{D-1}.
Vocabulary synthetic_vocabulary(std::size_t V);

// JSON with alpha, tau, beta, hazard, theta, z_bar, event and censoring times.
void save_truth(const SimTruth& truth, const std::filesystem::path& path);

} // namespace survlda
