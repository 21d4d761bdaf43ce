#include <doctest.h>

#include "oracles.hpp"
#include "survlda/error.hpp"
#include "survlda/simgen.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

using namespace survlda;

namespace {

ModelParams sim_params(std::optional<BaselineHazard> hazard = BaselineHazard::exponential(0.1)) {
    std::vector<double> tau(3 * 6, 0.0);
    for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t v = 0; v < 6; ++v) tau[k * 6 + v] = (v / 2 == k) ? 0.45 : 0.025;
    return make_params({0.3, 0.3, 0.3}, 6, tau, {1.0, -1.0, 0.0}, hazard);
}

std::string corpus_text(const Corpus& c) {
    std::ostringstream out;
    write_corpus(c, out);
    return out.str();
}

} // namespace

TEST_CASE("generation is reproducible per seed") {
    const auto p = sim_params();
    CensoringSpec cens{CensoringSpec::Kind::exponential, 0.05};
    const auto a = generate_corpus(p, 50, {20.0, true}, cens, 7);
    const auto b = generate_corpus(p, 50, {20.0, true}, cens, 7);
    const auto c = generate_corpus(p, 50, {20.0, true}, cens, 8);
    CHECK(corpus_text(a.first) == corpus_text(b.first));
    CHECK(corpus_text(a.first) != corpus_text(c.first));
    // Document i only depends on its own stream: a longer corpus shares its prefix.
    const auto longer = generate_corpus(p, 60, {20.0, true}, cens, 7);
    for (std::size_t i = 0; i < 50; ++i) CHECK(longer.first.documents[i] == a.first.documents[i]);
}

TEST_CASE("truth is consistent with the generated corpus") {
    const auto p = sim_params();
    const auto [corpus, truth] = generate_corpus(p, 40, {15.0, false}, {CensoringSpec::Kind::administrative, 8.0}, 1);
    CHECK(corpus.vocabulary == synthetic_vocabulary(6));
    for (std::size_t i = 0; i < 40; ++i) {
        const auto& d = corpus.documents[i];
        CHECK(d.id == "d" + std::to_string(i));
        CHECK(d.size() == 15);
        REQUIRE(truth.z[i].size() == d.size());
        std::vector<double> bar(3, 0.0);
        for (std::size_t j = 0; j < d.size(); ++j) bar[truth.z[i][j]] += 1.0 / 15.0;
        for (std::size_t k = 0; k < 3; ++k) CHECK(truth.z_bar[i * 3 + k] == doctest::Approx(bar[k]).epsilon(1e-14));
        double th = 0.0;
        for (std::size_t k = 0; k < 3; ++k) th += truth.theta[i * 3 + k];
        CHECK(th == doctest::Approx(1.0).epsilon(1e-12));
        const double t = std::min(truth.event_times[i], truth.censor_times[i]);
        CHECK(d.outcome->time == t);
        CHECK(d.outcome->event == (truth.event_times[i] <= truth.censor_times[i]));
        CHECK(truth.censor_times[i] == 8.0);
    }
}

TEST_CASE("event times follow the proportional hazards model") {
    // One topic, so every document has z_bar = 1 and rate lambda e^beta.
    auto p = make_params({1.0}, 2, {0.5, 0.5}, {0.7}, BaselineHazard::weibull(0.3, 1.4));
    const auto [corpus, truth] = generate_corpus(p, 3000, {3.0, true}, {}, 5);
    const double rate = 0.3 * std::exp(0.7);
    CHECK(oracle::ks_pvalue(truth.event_times, [&](double t) { return 1.0 - std::exp(-rate * std::pow(t, 1.4)); }) >
          0.001);
    for (const auto& d : corpus.documents) CHECK(d.outcome->event);
}

TEST_CASE("exponential censoring rate matches its expectation") {
    auto p = make_params({1.0}, 2, {0.5, 0.5}, {0.0}, BaselineHazard::exponential(0.1));
    const auto [corpus, truth] = generate_corpus(p, 4000, {3.0, true}, {CensoringSpec::Kind::exponential, 0.1}, 9);
    double censored = 0.0;
    for (const auto& d : corpus.documents) censored += d.outcome->event ? 0.0 : 1.0;
    // P(C < T) = c / (c + lambda) = 0.5
    CHECK(censored / 4000.0 == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("generator input errors") {
    std::vector<double> t{1.0}, h{0.5};
    CHECK_THROWS_AS(generate_corpus(sim_params(BaselineHazard::breslow(t, h)), 5, {}, {}, 1), ValidationError);
    CHECK_THROWS_AS(generate_corpus(sim_params(), 5, {}, {CensoringSpec::Kind::exponential, 0.0}, 1), ValidationError);
    // Without a hazard the corpus is a plain LDA corpus.
    const auto lda = generate_corpus(sim_params(std::nullopt), 5, {}, {}, 1).first;
    CHECK_FALSE(lda.all_have_outcomes());
    CHECK_FALSE(lda.documents[0].outcome);
}

TEST_CASE("truth file is JSON with the generating parameters") {
    const auto [corpus, truth] = generate_corpus(sim_params(), 5, {4.0, true}, {}, 2);
    const auto path = std::filesystem::temp_directory_path() / "survlda_truth_test.json";
    save_truth(truth, path);
    std::ifstream in(path);
    const auto j = nlohmann::json::parse(in);
    CHECK(j.at("beta").get<std::vector<double>>() == std::vector<double>{1.0, -1.0, 0.0});
    CHECK(j.at("theta").size() == 5);
    CHECK(j.at("tau").size() == 3);
    std::filesystem::remove(path);
}
