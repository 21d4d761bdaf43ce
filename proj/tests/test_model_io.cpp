#include <doctest.h>

#include "survlda/error.hpp"
#include "survlda/model_io.hpp"
#include "survlda/simgen.hpp"
#include "survlda/trainer.hpp"

#include <filesystem>
#include <sstream>

using namespace survlda;

namespace {

FittedModel small_model(HazardFamily fam, bool background) {
    std::vector<double> tau{0.5, 0.3, 0.2, 0.1, 0.1, 0.8};
    auto params = make_params({0.5, 0.5}, 3, tau, {0.7, 0.0}, BaselineHazard::exponential(0.3));
    auto corpus = generate_corpus(params, 25, {8.0, true}, {CensoringSpec::Kind::exponential, 0.1}, 3).first;
    TrainConfig cfg;
    cfg.topics = 2;
    cfg.mode = Mode::survlda;
    cfg.hazard_family = fam;
    cfg.restarts = 1;
    cfg.em_max_iters = 4;
    if (background)
        cfg.background = BackgroundSpec{{{"w2", 1.0}}, 0.001};
    else
        cfg.reference_topic = 1;
    return fit(corpus, cfg);
}

std::string text(const FittedModel& m) {
    std::ostringstream out;
    write_model(m, out);
    return out.str();
}

} // namespace

TEST_CASE("model files round trip exactly") {
    for (auto fam : {HazardFamily::exponential, HazardFamily::weibull, HazardFamily::breslow}) {
        for (bool bg : {false, true}) {
            const auto m = small_model(fam, bg);
            const auto s = text(m);
            std::istringstream in(s);
            const auto back = read_model(in);
            CHECK(text(back) == s);
            CHECK(back.params.tau == m.params.tau);
            CHECK(back.params.beta == m.params.beta);
            CHECK(back.params.hazard->family == fam);
            CHECK(back.params.hazard->lambda == m.params.hazard->lambda);
            CHECK(back.vocabulary == m.vocabulary);
            CHECK(back.documents.size() == m.documents.size());
            CHECK(back.documents[3].theta == m.documents[3].theta);
            CHECK(back.elbo_trace == m.elbo_trace);
            CHECK(back.config.background.has_value() == bg);
        }
    }
}

TEST_CASE("model files on disk") {
    const auto m = small_model(HazardFamily::weibull, false);
    const auto path = std::filesystem::temp_directory_path() / "survlda_model_io_test.txt";
    save_model(m, path);
    CHECK(text(load_model(path)) == text(m));
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_model("/nonexistent/model.txt"), IoError);
}

TEST_CASE("corrupt model files are rejected") {
    const auto s = text(small_model(HazardFamily::exponential, false));
    {
        auto bad = s;
        bad.replace(0, std::string("survlda-model 1").size(), "survlda-model 9");
        std::istringstream in(bad);
        CHECK_THROWS_AS(read_model(in), ValidationError);
    }
    {
        std::istringstream in(s.substr(0, s.size() / 2));
        CHECK_THROWS_AS(read_model(in), ParseError);
    }
    {
        auto bad = s;
        const auto pos = bad.find("\nbeta ");
        bad.replace(pos, 6, "\nbeta x");
        std::istringstream in(bad);
        CHECK_THROWS_AS(read_model(in), Error);
    }
    {
        std::istringstream in("not a model\n");
        CHECK_THROWS_AS(read_model(in), Error);
    }
}
