#include "survlda/model_io.hpp"

#include "survlda/error.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace survlda {

namespace {

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void write_row(std::ostream& out, std::span<const double> xs) {
    for (std::size_t i = 0; i < xs.size(); ++i) out << (i ? " " : "") << fmt(xs[i]);
    out << '\n';
}

void check_line_safe(const std::string& s, const char* what) {
    if (s.find('\n') != std::string::npos || s.find('\r') != std::string::npos)
        throw ValidationError(std::string(what) + " contains a line break and cannot be stored in a model file");
}

class LineReader {
public:
    explicit LineReader(std::istream& in) : in_(in) {}

    std::string line() {
        std::string s;
        if (!std::getline(in_, s)) throw ParseError("unexpected end of model file", lineno_ + 1);
        ++lineno_;
        if (!s.empty() && s.back() == '\r') s.pop_back();
        return s;
    }

    // Reads "key rest..." and returns the whitespace-separated rest.
    std::vector<std::string> keyed(std::string_view key) {
        const auto s = line();
        std::istringstream ss(s);
        std::string k;
        ss >> k;
        if (k != key) fail("expected '" + std::string(key) + "', found '" + k + "'");
        std::vector<std::string> rest;
        for (std::string t; ss >> t;) rest.push_back(t);
        return rest;
    }

    std::string single(std::string_view key) {
        auto rest = keyed(key);
        if (rest.size() != 1) fail("'" + std::string(key) + "' takes exactly one value");
        return rest[0];
    }

    double real(const std::string& tok) {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || ptr != tok.data() + tok.size()) fail("bad number '" + tok + "'");
        return v;
    }

    long long integer(const std::string& tok) {
        long long v = 0;
        auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || ptr != tok.data() + tok.size()) fail("bad integer '" + tok + "'");
        return v;
    }

    std::size_t count(const std::string& tok) {
        const auto v = integer(tok);
        if (v < 0) fail("negative count");
        return static_cast<std::size_t>(v);
    }

    std::vector<double> reals(std::size_t expected) {
        const auto s = line();
        std::istringstream ss(s);
        std::vector<double> out;
        for (std::string t; ss >> t;) out.push_back(real(t));
        if (out.size() != expected)
            fail("expected " + std::to_string(expected) + " values, found " + std::to_string(out.size()));
        return out;
    }

    std::vector<double> keyed_reals(std::string_view key, std::size_t expected) {
        const auto rest = keyed(key);
        if (rest.size() != expected)
            fail("'" + std::string(key) + "' expects " + std::to_string(expected) + " values");
        std::vector<double> out;
        for (const auto& t : rest) out.push_back(real(t));
        return out;
    }

    [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, lineno_); }

private:
    std::istream& in_;
    std::size_t lineno_ = 0;
};

} // namespace

void write_model(const FittedModel& model, std::ostream& out) {
    const auto& c = model.config;
    const auto& p = model.params;
    const std::size_t K = p.topics();
    const std::size_t V = p.vocab_size;
    if (model.vocabulary.size() != V) throw ValidationError("model vocabulary does not match tau width");

    out << "survlda-model " << kModelFormatVersion << '\n';
    out << "mode " << to_string(c.mode) << '\n';
    out << "topics " << K << '\n';
    out << "alpha0 " << fmt(c.alpha0) << '\n';
    out << "hazard_family " << to_string(c.hazard_family) << '\n';
    out << "reference_topic " << (c.reference_topic ? std::to_string(*c.reference_topic) : "none") << '\n';
    out << "em_tol " << fmt(c.em_tol) << '\n';
    out << "em_max_iters " << c.em_max_iters << '\n';
    out << "estep_tol " << fmt(c.estep.tol) << '\n';
    out << "estep_max_iters " << c.estep.max_iters << '\n';
    out << "tau_smoothing " << fmt(c.tau_smoothing) << '\n';
    out << "seed " << c.seed << '\n';
    out << "restarts " << c.restarts << '\n';
    if (c.background) {
        out << "background " << fmt(c.background->epsilon) << ' ' << c.background->word_weights.size() << '\n';
        for (const auto& [word, w] : c.background->word_weights) {
            check_line_safe(word, "background word");
            out << fmt(w) << '\t' << word << '\n';
        }
    } else {
        out << "background none\n";
    }
    out << "converged " << (model.converged ? 1 : 0) << '\n';

    out << "vocabulary " << V << '\n';
    for (const auto& t : model.vocabulary.terms()) {
        check_line_safe(t, "vocabulary word");
        out << t << '\n';
    }
    out << "alpha ";
    write_row(out, p.alpha);
    out << "tau " << K << ' ' << V << '\n';
    for (std::size_t k = 0; k < K; ++k) write_row(out, p.tau_row(k));
    out << "beta ";
    write_row(out, p.beta);
    if (p.hazard) {
        const auto& h = *p.hazard;
        out << "hazard " << to_string(h.family) << ' ' << fmt(h.lambda) << ' ' << fmt(h.rho) << ' '
            << h.steps.size() << '\n';
        for (const auto& s : h.steps)
            out << fmt(s.time) << ' ' << fmt(s.hazard) << ' ' << fmt(s.interval) << ' ' << fmt(s.cumulative)
                << '\n';
    } else {
        out << "hazard none\n";
    }

    out << "documents " << model.documents.size() << '\n';
    for (const auto& d : model.documents) {
        check_line_safe(d.id, "document id");
        out << d.id << '\n';
        std::vector<double> row;
        row.insert(row.end(), d.gamma.begin(), d.gamma.end());
        row.insert(row.end(), d.phi_bar.begin(), d.phi_bar.end());
        row.insert(row.end(), d.theta.begin(), d.theta.end());
        write_row(out, row);
    }
    out << "elbo_trace " << model.elbo_trace.size() << '\n';
    write_row(out, model.elbo_trace);
    out << "restart_elbos " << model.restart_elbos.size() << '\n';
    write_row(out, model.restart_elbos);
    out << "warnings " << model.warnings.size() << '\n';
    for (const auto& w : model.warnings) {
        check_line_safe(w, "warning");
        out << w << '\n';
    }
    out << "end\n";
}

FittedModel read_model(std::istream& in) {
    LineReader r(in);
    FittedModel m;
    auto& c = m.config;

    const auto version = r.single("survlda-model");
    if (version != std::to_string(kModelFormatVersion))
        throw ValidationError("unsupported model format version " + version + " (expected " +
                              std::to_string(kModelFormatVersion) + ")");
    try {
        c.mode = parse_mode(r.single("mode"));
    } catch (const ValidationError& e) {
        r.fail(e.what());
    }
    c.topics = r.count(r.single("topics"));
    const std::size_t K = c.topics;
    c.alpha0 = r.real(r.single("alpha0"));
    try {
        c.hazard_family = parse_hazard_family(r.single("hazard_family"));
    } catch (const ValidationError& e) {
        r.fail(e.what());
    }
    const auto ref = r.single("reference_topic");
    if (ref != "none") c.reference_topic = r.count(ref);
    c.em_tol = r.real(r.single("em_tol"));
    c.em_max_iters = static_cast<int>(r.integer(r.single("em_max_iters")));
    c.estep.tol = r.real(r.single("estep_tol"));
    c.estep.max_iters = static_cast<int>(r.integer(r.single("estep_max_iters")));
    c.tau_smoothing = r.real(r.single("tau_smoothing"));
    {
        const auto tok = r.single("seed");
        auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), c.seed);
        if (ec != std::errc() || ptr != tok.data() + tok.size()) r.fail("bad seed '" + tok + "'");
    }
    c.restarts = static_cast<int>(r.integer(r.single("restarts")));
    {
        const auto bg = r.keyed("background");
        if (bg.size() == 1 && bg[0] == "none") {
        } else if (bg.size() == 2) {
            BackgroundSpec spec;
            spec.epsilon = r.real(bg[0]);
            const auto n = r.count(bg[1]);
            for (std::size_t i = 0; i < n; ++i) {
                const auto s = r.line();
                const auto tab = s.find('\t');
                if (tab == std::string::npos) r.fail("background entry needs 'weight<TAB>word'");
                spec.word_weights[s.substr(tab + 1)] = r.real(s.substr(0, tab));
            }
            c.background = std::move(spec);
        } else {
            r.fail("malformed background line");
        }
    }
    m.converged = r.single("converged") == "1";

    const auto V = r.count(r.single("vocabulary"));
    std::vector<std::string> terms;
    terms.reserve(V);
    for (std::size_t v = 0; v < V; ++v) terms.push_back(r.line());
    try {
        m.vocabulary = Vocabulary(std::move(terms));
    } catch (const ValidationError& e) {
        r.fail(e.what());
    }

    auto& p = m.params;
    p.alpha = r.keyed_reals("alpha", K);
    p.vocab_size = V;
    {
        const auto shape = r.keyed("tau");
        if (shape.size() != 2) r.fail("'tau' needs K and V");
        if (r.count(shape[0]) != K || r.count(shape[1]) != V)
            throw ValidationError("tau shape " + shape[0] + "x" + shape[1] + " does not match K=" +
                                  std::to_string(K) + ", V=" + std::to_string(V));
        std::vector<double> tau;
        tau.reserve(K * V);
        for (std::size_t k = 0; k < K; ++k) {
            const auto row = r.reals(V);
            tau.insert(tau.end(), row.begin(), row.end());
        }
        p.set_tau(std::move(tau));
    }
    p.beta = r.keyed_reals("beta", K);
    {
        const auto h = r.keyed("hazard");
        if (h.size() == 1 && h[0] == "none") {
        } else if (h.size() == 4) {
            BaselineHazard hz;
            try {
                hz.family = parse_hazard_family(h[0]);
            } catch (const ValidationError& e) {
                r.fail(e.what());
            }
            hz.lambda = r.real(h[1]);
            hz.rho = r.real(h[2]);
            const auto n = r.count(h[3]);
            for (std::size_t i = 0; i < n; ++i) {
                const auto row = r.reals(4);
                hz.steps.push_back({row[0], row[1], row[2], row[3]});
            }
            p.hazard = std::move(hz);
        } else {
            r.fail("malformed hazard line");
        }
    }

    const auto D = r.count(r.single("documents"));
    m.documents.reserve(D);
    for (std::size_t i = 0; i < D; ++i) {
        DocumentFit d;
        d.id = r.line();
        const auto row = r.reals(3 * K);
        d.gamma.assign(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(K));
        d.phi_bar.assign(row.begin() + static_cast<std::ptrdiff_t>(K), row.begin() + static_cast<std::ptrdiff_t>(2 * K));
        d.theta.assign(row.begin() + static_cast<std::ptrdiff_t>(2 * K), row.end());
        m.documents.push_back(std::move(d));
    }
    m.elbo_trace = r.reals(r.count(r.single("elbo_trace")));
    m.restart_elbos = r.reals(r.count(r.single("restart_elbos")));
    const auto nw = r.count(r.single("warnings"));
    for (std::size_t i = 0; i < nw; ++i) m.warnings.push_back(r.line());
    if (r.line() != "end") r.fail("expected 'end'");

    p.validate();
    if (c.mode == Mode::survlda && !p.hazard) throw ValidationError("survlda model without a baseline hazard");
    return m;
}

void save_model(const FittedModel& model, const std::filesystem::path& path) {
    std::ostringstream buf;
    write_model(model, buf);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write model file '" + path.string() + "'");
    out << buf.str();
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

FittedModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model file '" + path.string() + "'");
    return read_model(in);
}

} // namespace survlda
