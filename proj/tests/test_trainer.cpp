#include <doctest.h>

#include "survlda/error.hpp"
#include "survlda/model_io.hpp"
#include "survlda/rng.hpp"
#include "survlda/simgen.hpp"
#include "survlda/trainer.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

using namespace survlda;

namespace {

Corpus sim_corpus(std::size_t K, std::size_t V, std::size_t D, double mean_len, std::uint64_t seed) {
    CounterRng rng(seed, 999);
    std::vector<double> tau;
    for (std::size_t k = 0; k < K; ++k) {
        auto row = rng.dirichlet(std::vector<double>(V, 0.3));
        for (auto& x : row) x = std::max(x, 1e-6);
        const double s = std::accumulate(row.begin(), row.end(), 0.0);
        for (auto& x : row) tau.push_back(x / s);
    }
    std::vector<double> beta(K, 0.0);
    for (std::size_t k = 0; k + 1 < K; ++k) beta[k] = rng.normal();
    auto params = make_params(std::vector<double>(K, 1.0 / static_cast<double>(K)), V, tau, beta,
                              BaselineHazard::exponential(0.2));
    CensoringSpec cens{CensoringSpec::Kind::exponential, 0.1};
    return generate_corpus(params, D, {mean_len, true}, cens, seed).first;
}

TrainConfig base_config(Mode mode, std::size_t K) {
    TrainConfig c;
    c.topics = K;
    c.mode = mode;
    c.restarts = 1;
    c.em_max_iters = 15;
    c.em_tol = 0.0;
    if (mode == Mode::survlda && K > 1) c.reference_topic = K - 1;
    return c;
}

std::string serialize(const FittedModel& m) {
    std::ostringstream out;
    write_model(m, out);
    return out.str();
}

} // namespace

TEST_CASE("background row normalizes weights with a filler") {
    Vocabulary v({"a", "b", "c", "d"});
    BackgroundSpec spec;
    spec.word_weights = {{"a", 2.0}, {"c", 0.0}};
    const auto row = background_row(spec, v);
    const double total = 2.0 + 3 * 0.001;
    CHECK(row[0] == doctest::Approx(2.0 / total).epsilon(1e-15));
    CHECK(row[1] == doctest::Approx(0.001 / total).epsilon(1e-15));
    CHECK(row[2] == row[1]);
    CHECK(std::accumulate(row.begin(), row.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-15));
    spec.word_weights = {{"zzz", 1.0}};
    CHECK_THROWS_AS(background_row(spec, v), ValidationError);
    spec.word_weights = {{"a", -1.0}};
    CHECK_THROWS_AS(background_row(spec, v), ConfigError);
}

TEST_CASE("train config validation") {
    TrainConfig c;
    c.topics = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = TrainConfig{};
    c.mode = Mode::survlda;
    c.topics = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError); // no reference or background
    c.reference_topic = 5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.reference_topic = 1;
    CHECK_NOTHROW(c.validate());
    CHECK(c.pinned() == std::vector<std::size_t>{1});
    c.reference_topic.reset();
    c.background = BackgroundSpec{{{"a", 1.0}}, 0.001};
    CHECK(c.pinned() == std::vector<std::size_t>{2});
    CHECK(c.background_topic() == std::optional<std::size_t>(2));
    TrainConfig one;
    one.mode = Mode::survlda;
    one.topics = 1;
    CHECK(one.pinned() == std::vector<std::size_t>{0});
}

TEST_CASE("em corpus elbo is nondecreasing in every mode and hazard family") {
    const auto corpus = sim_corpus(3, 25, 60, 30, 11);
    {
        const auto m = fit(corpus, base_config(Mode::lda, 3));
        for (std::size_t i = 1; i < m.elbo_trace.size(); ++i)
            CHECK(m.elbo_trace[i] >= m.elbo_trace[i - 1] - 1e-6 * std::abs(m.elbo_trace[i - 1]));
    }
    for (auto fam : {HazardFamily::exponential, HazardFamily::weibull, HazardFamily::breslow}) {
        CAPTURE(to_string(fam));
        auto cfg = base_config(Mode::survlda, 3);
        cfg.hazard_family = fam;
        const auto m = fit(corpus, cfg);
        CHECK(m.params.beta[2] == 0.0);
        CHECK(m.params.hazard->family == fam);
        for (std::size_t i = 1; i < m.elbo_trace.size(); ++i)
            CHECK(m.elbo_trace[i] >= m.elbo_trace[i - 1] - 1e-6 * std::abs(m.elbo_trace[i - 1]));
    }
}

TEST_CASE("background topic stays fixed and its coefficient stays zero") {
    const auto corpus = sim_corpus(3, 20, 40, 25, 12);
    auto cfg = base_config(Mode::survlda, 3);
    cfg.reference_topic.reset();
    cfg.background = BackgroundSpec{{{"w0", 5.0}, {"w1", 1.0}, {"w7", 2.0}}, 0.001};
    cfg.em_max_iters = 20;
    const auto m = fit(corpus, cfg);
    const auto expect = background_row(*cfg.background, corpus.vocabulary);
    const auto row = m.params.tau_row(2);
    CHECK(std::equal(row.begin(), row.end(), expect.begin()));
    CHECK(m.params.beta[2] == 0.0);
    CHECK(std::signbit(m.params.beta[2]) == false);
}

TEST_CASE("single-topic survlda reduces to the constant-hazard MLE") {
    const auto corpus = sim_corpus(2, 15, 50, 10, 13);
    auto cfg = base_config(Mode::survlda, 1);
    cfg.em_max_iters = 3;
    const auto m = fit(corpus, cfg);
    double events = 0.0, exposure = 0.0;
    for (const auto& d : corpus.documents) {
        events += d.outcome->event;
        exposure += d.outcome->time;
    }
    CHECK(m.params.beta[0] == 0.0);
    CHECK(m.params.hazard->lambda == doctest::Approx(events / exposure).epsilon(1e-9));
    for (const auto& d : m.documents) CHECK(d.theta[0] == 1.0);
}

TEST_CASE("training is deterministic and independent of the thread count") {
    const auto corpus = sim_corpus(3, 20, 30, 20, 14);
    auto cfg = base_config(Mode::survlda, 3);
    cfg.restarts = 2;
    cfg.em_max_iters = 6;
    cfg.seed = 99;
    const auto a = serialize(fit(corpus, cfg));
    const auto b = serialize(fit(corpus, cfg));
    cfg.threads = 3;
    const auto c = serialize(fit(corpus, cfg));
    CHECK(a == b);
    CHECK(a == c);
    cfg.seed = 100;
    CHECK(serialize(fit(corpus, cfg)) != a);
}

TEST_CASE("best restart is kept and the log sees every iteration") {
    const auto corpus = sim_corpus(3, 20, 30, 20, 15);
    auto cfg = base_config(Mode::lda, 3);
    cfg.restarts = 3;
    cfg.em_max_iters = 4;
    std::vector<std::string> lines;
    cfg.log = [&](const std::string& s) { lines.push_back(s); };
    const auto m = fit(corpus, cfg);
    REQUIRE(m.restart_elbos.size() == 3);
    CHECK(m.final_elbo() == *std::max_element(m.restart_elbos.begin(), m.restart_elbos.end()));
    CHECK(lines.size() == 12);
    CHECK(lines.front().find("elbo") != std::string::npos);
}

TEST_CASE("input errors") {
    auto corpus = sim_corpus(2, 10, 10, 5, 16);
    auto cfg = base_config(Mode::survlda, 2);
    auto no_outcome = corpus;
    no_outcome.documents[3].outcome.reset();
    CHECK_THROWS_AS(fit(no_outcome, cfg), ValidationError);
    auto censored = corpus;
    for (auto& d : censored.documents) d.outcome->event = false;
    CHECK_THROWS_AS(fit(censored, cfg), NumericalError);
    auto with_empty = corpus;
    with_empty.documents[0].tokens.clear();
    const auto m = fit(with_empty, base_config(Mode::lda, 2));
    CHECK(m.warnings.front().find("no words") != std::string::npos);
}

TEST_CASE("topic survival curves weight patients by topic share") {
    const auto corpus = sim_corpus(3, 20, 40, 20, 17);
    const auto m = fit(corpus, base_config(Mode::survlda, 3));
    const auto curves = topic_survival_curves(m, corpus);
    REQUIRE(curves.size() == 3);
    std::vector<SurvivalOutcome> outcomes;
    std::vector<double> w;
    for (std::size_t i = 0; i < corpus.documents.size(); ++i) {
        outcomes.push_back(*corpus.documents[i].outcome);
        w.push_back(m.documents[i].theta[1]);
    }
    const auto expect = weighted_km(outcomes, w);
    REQUIRE(curves[1].steps.size() == expect.steps.size());
    for (std::size_t s = 0; s < expect.steps.size(); ++s) CHECK(curves[1].steps[s].survival == expect.steps[s].survival);

    auto stranger = corpus;
    stranger.documents[0].id = "unknown";
    CHECK_THROWS_AS(topic_survival_curves(m, stranger), ValidationError);
}
