#include "survlda/simgen.hpp"

#include "survlda/error.hpp"
#include "survlda/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>

namespace survlda {

double exponential_inverse_sample(double u, double rate) {
    if (!(u > 0.0 && u < 1.0)) throw ValidationError("inverse sampling needs u in (0, 1)");
    if (!(rate > 0.0)) throw ValidationError("rate must be positive");
    return -std::log(u) / rate;
}

double weibull_inverse_sample(double u, double lambda, double rho) {
    if (!(rho > 0.0)) throw ValidationError("shape must be positive");
    return std::pow(exponential_inverse_sample(u, lambda), 1.0 / rho);
}

Vocabulary synthetic_vocabulary(std::size_t V) {
    Vocabulary vocab;
    for (std::size_t v = 0; v < V; ++v) vocab.add("w" + std::to_string(v));
    return vocab;
}

std::pair<Corpus, SimTruth> generate_corpus(const ModelParams& params, std::size_t documents,
                                            const DocLengthSpec& length, const CensoringSpec& censoring,
                                            std::uint64_t seed) {
    params.validate();
    const std::size_t K = params.topics();
    const std::size_t V = params.vocab_size;
    const bool survival = params.hazard.has_value();
    if (survival && !params.hazard->parametric())
        throw ValidationError("corpus generation needs a parametric (exponential or Weibull) hazard");
    if (!(length.mean >= 0.0)) throw ValidationError("document length must be nonnegative");
    if (censoring.kind != CensoringSpec::Kind::none && !(censoring.value > 0.0))
        throw ValidationError("censoring parameter must be positive");

    Corpus corpus;
    corpus.vocabulary = synthetic_vocabulary(V);
    SimTruth truth;
    truth.params = params;
    truth.theta.resize(documents * K);
    truth.z_bar.assign(documents * K, 0.0);
    truth.z.resize(documents);
    if (survival) {
        truth.event_times.resize(documents);
        truth.censor_times.resize(documents);
    }

    for (std::size_t i = 0; i < documents; ++i) {
        CounterRng rng(seed, i);
        const auto theta = rng.dirichlet(params.alpha);
        std::copy(theta.begin(), theta.end(), truth.theta.begin() + static_cast<std::ptrdiff_t>(i * K));
        const std::size_t N = length.poisson ? static_cast<std::size_t>(rng.poisson(length.mean))
                                             : static_cast<std::size_t>(std::llround(length.mean));
        Document doc;
        doc.id = "d" + std::to_string(i);
        doc.tokens.reserve(N);
        auto& z = truth.z[i];
        z.reserve(N);
        for (std::size_t j = 0; j < N; ++j) {
            const std::size_t topic = rng.categorical(theta);
            z.push_back(topic);
            doc.tokens.push_back(static_cast<WordId>(rng.categorical(params.tau_row(topic))));
            truth.z_bar[i * K + topic] += 1.0;
        }
        if (N > 0)
            for (std::size_t k = 0; k < K; ++k) truth.z_bar[i * K + k] /= static_cast<double>(N);

        if (survival) {
            double lp = 0.0;
            for (std::size_t k = 0; k < K; ++k) lp += params.beta[k] * truth.z_bar[i * K + k];
            const auto& h = *params.hazard;
            const double scale = h.lambda * std::exp(lp);
            const double event = h.family == HazardFamily::exponential
                                     ? exponential_inverse_sample(rng.uniform(), scale)
                                     : weibull_inverse_sample(rng.uniform(), scale, h.rho);
            double censor = std::numeric_limits<double>::infinity();
            if (censoring.kind == CensoringSpec::Kind::exponential)
                censor = exponential_inverse_sample(rng.uniform(), censoring.value);
            else if (censoring.kind == CensoringSpec::Kind::administrative)
                censor = censoring.value;
            truth.event_times[i] = event;
            truth.censor_times[i] = censor;
            doc.outcome = SurvivalOutcome{std::min(event, censor), event <= censor};
        }
        corpus.documents.push_back(std::move(doc));
    }
    return {std::move(corpus), std::move(truth)};
}

void save_truth(const SimTruth& truth, const std::filesystem::path& path) {
    using json = nlohmann::ordered_json;
    const std::size_t K = truth.params.topics();
    json j;
    j["alpha"] = truth.params.alpha;
    json tau = json::array();
    for (std::size_t k = 0; k < K; ++k) {
        const auto row = truth.params.tau_row(k);
        tau.push_back(std::vector<double>(row.begin(), row.end()));
    }
    j["tau"] = std::move(tau);
    j["beta"] = truth.params.beta;
    if (truth.params.hazard) {
        j["hazard"] = {{"family", std::string(to_string(truth.params.hazard->family))},
                       {"lambda", truth.params.hazard->lambda},
                       {"rho", truth.params.hazard->rho}};
    }
    const std::size_t D = K == 0 ? 0 : truth.theta.size() / K;
    json theta = json::array(), zbar = json::array();
    for (std::size_t i = 0; i < D; ++i) {
        theta.push_back(std::vector<double>(truth.theta.begin() + static_cast<std::ptrdiff_t>(i * K),
                                            truth.theta.begin() + static_cast<std::ptrdiff_t>((i + 1) * K)));
        zbar.push_back(std::vector<double>(truth.z_bar.begin() + static_cast<std::ptrdiff_t>(i * K),
                                           truth.z_bar.begin() + static_cast<std::ptrdiff_t>((i + 1) * K)));
    }
    j["theta"] = std::move(theta);
    j["z_bar"] = std::move(zbar);
    if (!truth.event_times.empty()) {
        j["event_times"] = truth.event_times;
        json censor = json::array();
        for (double c : truth.censor_times) {
            if (std::isinf(c))
                censor.push_back(nullptr);
            else
                censor.push_back(c);
        }
        j["censor_times"] = std::move(censor);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write truth file '" + path.string() + "'");
    out << j.dump(1) << '\n';
}

} // namespace survlda
