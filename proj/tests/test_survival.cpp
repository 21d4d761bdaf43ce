#include <doctest.h>

#include "oracles.hpp"
#include "survlda/rng.hpp"
#include "survlda/survival.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

using namespace survlda;

namespace {

// Random design with K topics and soft phi rows.
SurvivalDesign random_design(CounterRng& rng, std::size_t K, std::size_t D, bool one_hot = false) {
    SurvivalDesign design(K);
    for (std::size_t i = 0; i < D; ++i) {
        const std::size_t N = one_hot ? 1 : 1 + rng.uniform_index(6);
        std::vector<double> phi;
        for (std::size_t j = 0; j < N; ++j) {
            if (one_hot) {
                std::vector<double> row(K, 0.0);
                row[rng.uniform_index(K)] = 1.0;
                phi.insert(phi.end(), row.begin(), row.end());
            } else {
                auto row = rng.dirichlet(std::vector<double>(K, 1.0));
                phi.insert(phi.end(), row.begin(), row.end());
            }
        }
        // Coarse times so that ties occur.
        const double t = std::round((0.1 + 4.0 * rng.uniform()) * 10.0) / 10.0;
        design.add({t, rng.uniform() < 0.7}, phi);
    }
    return design;
}

std::vector<double> random_beta(CounterRng& rng, std::size_t K) {
    std::vector<double> b(K);
    for (auto& x : b) x = rng.normal();
    return b;
}

void check_gradient(const SurvivalDesign& design, const BaselineHazard& hazard, const std::vector<double>& beta) {
    const auto g = survival_mstep_gradient(beta, hazard, design);
    auto f = [&](const std::vector<double>& b) { return survival_mstep_objective(b, hazard, design); };
    for (std::size_t k = 0; k < beta.size(); ++k) {
        const double fd = oracle::central_difference(f, beta, k, 1e-5);
        CHECK(std::abs(g[k] - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
}

} // namespace

TEST_CASE("hazard families evaluate h0 and H0") {
    const auto e = BaselineHazard::exponential(0.3);
    CHECK(e.hazard_at(5.0) == 0.3);
    CHECK(e.cumulative_at(2.0) == doctest::Approx(0.6));
    const auto w = BaselineHazard::weibull(0.5, 2.0);
    CHECK(w.hazard_at(3.0) == doctest::Approx(3.0));
    CHECK(w.cumulative_at(3.0) == doctest::Approx(4.5));
    std::vector<double> t{1.0, 2.0, 4.0}, h{0.5, 0.25, 1.0};
    const auto b = BaselineHazard::breslow(t, h);
    CHECK(b.hazard_at(0.5) == 0.5);
    CHECK(b.hazard_at(1.0) == 0.5);
    CHECK(b.hazard_at(1.5) == 0.25);
    CHECK(b.hazard_at(4.0) == 1.0);
    CHECK(b.hazard_at(4.5) == 0.0);
    CHECK(b.cumulative_at(0.99) == 0.0);
    CHECK(b.cumulative_at(1.0) == 0.5);
    CHECK(b.cumulative_at(3.9) == 0.75);
    CHECK(b.cumulative_at(100.0) == 2.75);
    CHECK_THROWS_AS(BaselineHazard::exponential(-1.0).validate(), ValidationError);
    CHECK(parse_hazard_family("weibull") == HazardFamily::weibull);
    CHECK_THROWS_AS(parse_hazard_family("cox"), ValidationError);
}

TEST_CASE("log risk is the log of the expected exponentiated linear predictor") {
    SurvivalDesign d(2);
    std::vector<double> phi{0.25, 0.75, 1.0, 0.0};
    d.add({1.0, true}, phi);
    std::vector<double> beta{0.4, -1.2};
    // Enumerate the four assignments of the two words.
    double expect = 0.0;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            const double p = phi[a] * phi[2 + b];
            expect += p * std::exp((beta[a] + beta[b]) / 2.0);
        }
    CHECK(d.log_risk(0, beta) == doctest::Approx(std::log(expect)).epsilon(1e-14));
    CHECK(d.phi_bar(0)[0] == 0.625);

    SurvivalDesign empty(2);
    empty.add({1.0, false}, std::vector<double>{});
    CHECK(empty.log_risk(0, beta) == 0.0);
}

TEST_CASE("beta gradient matches finite differences") {
    CounterRng rng(1, 0);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t K = 2 + rep % 3;
        const auto design = random_design(rng, K, 40);
        const auto beta = random_beta(rng, K);
        check_gradient(design, BaselineHazard::exponential(0.2 + rng.uniform()), beta);
        check_gradient(design, BaselineHazard::weibull(0.2 + rng.uniform(), 0.5 + rng.uniform()), beta);
        check_gradient(design, breslow_update(random_beta(rng, K), design), beta);
    }
}

TEST_CASE("exponential MLE with beta pinned is events over exposure") {
    CounterRng rng(2, 0);
    SurvivalDesign d(1);
    double events = 0.0, exposure = 0.0;
    for (int i = 0; i < 50; ++i) {
        SurvivalOutcome o{0.1 + 5.0 * rng.uniform(), rng.uniform() < 0.6};
        events += o.event;
        exposure += o.time;
        d.add(o, std::vector<double>{1.0, 1.0});
    }
    std::vector<double> beta{0.0};
    SurvivalFitOptions opt;
    opt.pinned = {0};
    const auto fit = optimize_parametric(d, HazardFamily::exponential, beta, BaselineHazard::exponential(1.0), opt);
    CHECK(std::abs(fit.hazard.lambda - events / exposure) < 1e-8);
    CHECK(fit.beta[0] == 0.0);
    CHECK(fit.objective >= fit.initial_objective);
}

TEST_CASE("breslow at beta zero on three events") {
    SurvivalDesign d(1);
    for (double t : {1.0, 2.0, 3.0}) d.add({t, true}, std::vector<double>{1.0});
    std::vector<double> beta{0.0};
    const auto h = breslow_update(beta, d);
    REQUIRE(h.steps.size() == 3);
    CHECK(h.steps[0].hazard == 1.0 / 3.0);
    CHECK(h.steps[1].hazard == 1.0 / 2.0);
    CHECK(h.steps[2].hazard == 1.0);
}

TEST_CASE("breslow update matches the textbook estimator for one-hot designs") {
    CounterRng rng(3, 0);
    for (int rep = 0; rep < 10; ++rep) {
        const std::size_t K = 3;
        const auto design = random_design(rng, K, 60, true);
        const auto beta = random_beta(rng, K);
        std::vector<double> times, risk;
        std::vector<bool> events;
        for (std::size_t i = 0; i < design.size(); ++i) {
            times.push_back(design.outcome(i).time);
            events.push_back(design.outcome(i).event);
            double lin = 0.0;
            for (std::size_t k = 0; k < K; ++k) lin += beta[k] * design.phi_bar(i)[k];
            risk.push_back(std::exp(lin));
        }
        const auto expect = oracle::breslow(times, events, risk);
        const auto h = breslow_update(beta, design);
        REQUIRE(h.steps.size() == expect.size());
        for (std::size_t r = 0; r < expect.size(); ++r) {
            CHECK(h.steps[r].time == doctest::Approx(expect[r].first).epsilon(1e-12));
            CHECK(h.steps[r].hazard == doctest::Approx(expect[r].second).epsilon(1e-10));
        }
    }
}

TEST_CASE("breslow update maximizes the objective over the hazard") {
    CounterRng rng(4, 0);
    const auto design = random_design(rng, 3, 50);
    const auto beta = random_beta(rng, 3);
    const auto h = breslow_update(beta, design);
    const double best = survival_mstep_objective(beta, h, design);
    for (std::size_t r = 0; r < h.steps.size(); ++r) {
        for (double scale : {0.9, 1.1}) {
            std::vector<double> times, hz;
            for (const auto& s : h.steps) {
                times.push_back(s.time);
                hz.push_back(s.hazard);
            }
            hz[r] *= scale;
            CHECK(survival_mstep_objective(beta, BaselineHazard::breslow(times, hz), design) < best);
        }
    }
}

TEST_CASE("parametric fits recover a simulated coefficient") {
    CounterRng rng(5, 0);
    const double true_beta = 0.8, lambda = 0.3, rho = 1.5;
    SurvivalDesign d(2);
    for (int i = 0; i < 3000; ++i) {
        const bool in_topic = rng.uniform() < 0.5;
        const double lp = in_topic ? true_beta : 0.0;
        // T = (-log U / (lambda e^lp))^(1/rho), censored at 4.
        const double t = std::pow(-std::log(rng.uniform()) / (lambda * std::exp(lp)), 1.0 / rho);
        std::vector<double> phi = in_topic ? std::vector<double>{1.0, 0.0} : std::vector<double>{0.0, 1.0};
        d.add({std::min(t, 4.0), t < 4.0}, phi);
    }
    SurvivalFitOptions opt;
    opt.pinned = {1};
    std::vector<double> beta0{0.0, 0.0};
    const auto w = optimize_parametric(d, HazardFamily::weibull, beta0, BaselineHazard::weibull(1.0, 1.0), opt);
    CHECK(w.beta[0] == doctest::Approx(true_beta).epsilon(0.1));
    CHECK(w.hazard.rho == doctest::Approx(rho).epsilon(0.06));
    CHECK(w.beta[1] == 0.0);
    const auto b = optimize_breslow(d, beta0, opt);
    CHECK(b.beta[0] == doctest::Approx(true_beta).epsilon(0.1));
    for (std::size_t i = 1; i < b.trace.size(); ++i) CHECK(b.trace[i] >= b.trace[i - 1] - 1e-9 * std::abs(b.trace[i - 1]));
}

TEST_CASE("no events is a numerical error") {
    SurvivalDesign d(1);
    d.add({1.0, false}, std::vector<double>{1.0});
    std::vector<double> beta{0.0};
    SurvivalFitOptions opt;
    opt.pinned = {0};
    CHECK_THROWS_AS(optimize_parametric(d, HazardFamily::exponential, beta, BaselineHazard::exponential(1.0), opt),
                    NumericalError);
    CHECK_THROWS_AS(optimize_breslow(d, beta, opt), NumericalError);
}

TEST_CASE("collinear free coefficients are flagged") {
    SurvivalDesign d(3);
    for (int i = 0; i < 10; ++i) {
        // phi_bar_0 + phi_bar_1 = 1 on every row, so with topic 2 pinned the
        // free columns are collinear once centered.
        const double a = 0.1 * i;
        d.add({1.0 + i, true}, std::vector<double>{a, 1.0 - a, 0.0});
    }
    std::vector<std::size_t> pinned{2};
    CHECK(free_coefficients_collinear(d, pinned));
    std::vector<std::size_t> pin0{0};
    SurvivalDesign e(2);
    for (int i = 0; i < 10; ++i) e.add({1.0 + i, true}, std::vector<double>{0.1 * i, 1.0 - 0.1 * i});
    CHECK_FALSE(free_coefficients_collinear(e, pin0));
}

TEST_CASE("weighted KM with unit weights matches the classical estimator") {
    CounterRng rng(6, 0);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t n = 5 + rng.uniform_index(60);
        std::vector<SurvivalOutcome> outcomes;
        std::vector<double> times;
        std::vector<bool> events;
        for (std::size_t i = 0; i < n; ++i) {
            const double t = std::round(rng.uniform() * 20.0) / 4.0 + 0.25;
            const bool e = rng.uniform() < 0.6;
            outcomes.push_back({t, e});
            times.push_back(t);
            events.push_back(e);
        }
        std::vector<double> w(n, 1.0);
        const auto curve = weighted_km(outcomes, w);
        const auto expect = oracle::kaplan_meier(times, events);
        REQUIRE(curve.steps.size() == expect.size());
        for (std::size_t s = 0; s < expect.size(); ++s) {
            CHECK(curve.steps[s].time == expect[s].time);
            CHECK(std::abs(curve.steps[s].survival - expect[s].survival) < 1e-10);
        }
        for (double t : {0.0, 1.3, 2.5, 6.0}) CHECK(std::abs(curve.survival_at(t) - oracle::km_at(expect, t)) < 1e-10);

        // Rescaling every weight leaves the curve unchanged, bit for bit.
        std::vector<double> frac(n);
        for (auto& x : frac) x = rng.uniform();
        auto scaled = frac;
        for (auto& x : scaled) x *= 2.0;
        const auto a = weighted_km(outcomes, frac);
        const auto b = weighted_km(outcomes, scaled);
        REQUIRE(a.steps.size() == b.steps.size());
        for (std::size_t s = 0; s < a.steps.size(); ++s) CHECK(a.steps[s].survival == b.steps[s].survival);
    }
}

TEST_CASE("weighted KM edge cases") {
    std::vector<SurvivalOutcome> o{{1.0, true}, {2.0, false}};
    std::vector<double> zero{0.0, 0.0};
    CHECK_THROWS_AS(weighted_km(o, zero), ValidationError);
    std::vector<double> neg{-1.0, 1.0};
    CHECK_THROWS_AS(weighted_km(o, neg), ValidationError);
    std::vector<double> w{0.0, 1.0};
    const auto c = weighted_km(o, w);
    CHECK(c.steps.empty());
    CHECK(c.survival_at(10.0) == 1.0);
}

TEST_CASE("km curves serialize as tab-separated blocks") {
    std::vector<SurvivalOutcome> o{{1.0, true}, {2.0, true}};
    std::vector<double> w{1.0, 1.0};
    std::vector<KMCurve> curves{weighted_km(o, w), KMCurve{}};
    curves[1].empty = true;
    std::vector<std::string> labels{"a", "b"};
    std::ostringstream out;
    write_km_curves(curves, labels, out);
    CHECK(out.str() == "# a\n0\t1\n1\t0.5\n2\t0\n\n# b\n# empty\n");
}
