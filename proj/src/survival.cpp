#include "survlda/survival.hpp"

#include "survlda/optimize.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

namespace survlda {

std::string_view to_string(HazardFamily family) {
    switch (family) {
    case HazardFamily::exponential: return "exponential";
    case HazardFamily::weibull: return "weibull";
    case HazardFamily::breslow: return "breslow";
    }
    return "?";
}

HazardFamily parse_hazard_family(std::string_view name) {
    if (name == "exponential") return HazardFamily::exponential;
    if (name == "weibull") return HazardFamily::weibull;
    if (name == "breslow") return HazardFamily::breslow;
    throw ValidationError("unknown hazard family '" + std::string(name) + "'");
}

double canonical_time(double t) {
    return std::round(t * 1e9) / 1e9;
}

BaselineHazard BaselineHazard::exponential(double lambda) {
    BaselineHazard h;
    h.family = HazardFamily::exponential;
    h.lambda = lambda;
    h.rho = 1.0;
    return h;
}

BaselineHazard BaselineHazard::weibull(double lambda, double rho) {
    BaselineHazard h;
    h.family = HazardFamily::weibull;
    h.lambda = lambda;
    h.rho = rho;
    return h;
}

BaselineHazard BaselineHazard::breslow(std::span<const double> times, std::span<const double> hazards) {
    if (times.size() != hazards.size()) throw ValidationError("breslow times/hazards length mismatch");
    BaselineHazard h;
    h.family = HazardFamily::breslow;
    double prev = 0.0;
    double cum = 0.0;
    for (std::size_t r = 0; r < times.size(); ++r) {
        BreslowStep s;
        s.time = canonical_time(times[r]);
        s.hazard = hazards[r];
        s.interval = s.time - prev;
        cum += s.hazard * s.interval;
        s.cumulative = cum;
        prev = s.time;
        h.steps.push_back(s);
    }
    h.validate();
    return h;
}

void BaselineHazard::validate() const {
    if (family == HazardFamily::breslow) {
        double prev = 0.0;
        for (const auto& s : steps) {
            if (!(s.time > prev)) throw ValidationError("breslow step times must be strictly increasing and positive");
            if (!(s.hazard >= 0.0) || !std::isfinite(s.hazard))
                throw ValidationError("breslow hazards must be finite and nonnegative");
            prev = s.time;
        }
        return;
    }
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ValidationError("hazard lambda must be positive");
    if (!(rho > 0.0) || !std::isfinite(rho)) throw ValidationError("hazard rho must be positive");
    if (family == HazardFamily::exponential && rho != 1.0)
        throw ValidationError("exponential hazard requires rho = 1");
}

double BaselineHazard::hazard_at(double t) const {
    switch (family) {
    case HazardFamily::exponential: return lambda;
    case HazardFamily::weibull: return lambda * rho * std::pow(t, rho - 1.0);
    case HazardFamily::breslow: {
        const double c = canonical_time(t);
        auto it = std::lower_bound(steps.begin(), steps.end(), c,
                                   [](const BreslowStep& s, double v) { return s.time < v; });
        return it == steps.end() ? 0.0 : it->hazard;
    }
    }
    return 0.0;
}

double BaselineHazard::cumulative_at(double t) const {
    switch (family) {
    case HazardFamily::exponential: return lambda * t;
    case HazardFamily::weibull: return lambda * std::pow(t, rho);
    case HazardFamily::breslow: {
        const double c = canonical_time(t);
        auto it = std::upper_bound(steps.begin(), steps.end(), c,
                                   [](double v, const BreslowStep& s) { return v < s.time; });
        return it == steps.begin() ? 0.0 : std::prev(it)->cumulative;
    }
    }
    return 0.0;
}

void SurvivalDesign::add(const SurvivalOutcome& outcome, std::span<const double> phi) {
    if (phi.size() % topics_ != 0) throw ValidationError("phi size is not a multiple of K");
    validate_outcome(outcome, "design row " + std::to_string(outcomes_.size()));
    const std::size_t n = phi.size() / topics_;
    std::vector<double> bar(topics_, 0.0);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < topics_; ++k) bar[k] += phi[j * topics_ + k];
    if (n > 0)
        for (double& b : bar) b /= static_cast<double>(n);
    outcomes_.push_back(outcome);
    phi_bars_.insert(phi_bars_.end(), bar.begin(), bar.end());
    phis_.emplace_back(phi.begin(), phi.end());
}

std::size_t SurvivalDesign::events() const {
    return static_cast<std::size_t>(
        std::count_if(outcomes_.begin(), outcomes_.end(), [](const auto& o) { return o.event; }));
}

double SurvivalDesign::log_risk(std::size_t i, std::span<const double> beta) const {
    const auto& phi = phis_[i];
    const std::size_t n = phi.size() / topics_;
    if (n == 0) return 0.0;
    std::vector<double> e(topics_);
    for (std::size_t k = 0; k < topics_; ++k) e[k] = std::exp(beta[k] / static_cast<double>(n));
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < topics_; ++k) s += phi[j * topics_ + k] * e[k];
        acc += std::log(s);
    }
    return acc;
}

double SurvivalDesign::log_risk(std::size_t i, std::span<const double> beta, std::span<double> dlog) const {
    std::fill(dlog.begin(), dlog.end(), 0.0);
    const auto& phi = phis_[i];
    const std::size_t n = phi.size() / topics_;
    if (n == 0) return 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<double> e(topics_);
    for (std::size_t k = 0; k < topics_; ++k) e[k] = std::exp(beta[k] * inv_n);
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double* row = phi.data() + j * topics_;
        double s = 0.0;
        for (std::size_t k = 0; k < topics_; ++k) s += row[k] * e[k];
        acc += std::log(s);
        const double w = inv_n / s;
        for (std::size_t k = 0; k < topics_; ++k) dlog[k] += row[k] * e[k] * w;
    }
    return acc;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

void check_beta(std::span<const double> beta, const SurvivalDesign& design) {
    if (beta.size() != design.topics()) throw ValidationError("beta length does not match topic count");
}

} // namespace

double survival_mstep_objective(std::span<const double> beta, const BaselineHazard& hazard,
                                const SurvivalDesign& design) {
    check_beta(beta, design);
    double total = 0.0;
    for (std::size_t i = 0; i < design.size(); ++i) {
        const auto& o = design.outcome(i);
        if (o.event) {
            const double h = hazard.hazard_at(o.time);
            if (!(h > 0.0))
                throw NumericalError("baseline hazard is zero at event time " + std::to_string(o.time) +
                                     " (objective is -inf)");
            total += std::log(h) + dot(beta, design.phi_bar(i));
        }
        total -= hazard.cumulative_at(o.time) * std::exp(design.log_risk(i, beta));
    }
    return total;
}

std::vector<double> survival_mstep_gradient(std::span<const double> beta, const BaselineHazard& hazard,
                                            const SurvivalDesign& design) {
    check_beta(beta, design);
    const std::size_t K = design.topics();
    std::vector<double> grad(K, 0.0), dlog(K);
    for (std::size_t i = 0; i < design.size(); ++i) {
        const auto& o = design.outcome(i);
        if (o.event) {
            const auto bar = design.phi_bar(i);
            for (std::size_t k = 0; k < K; ++k) grad[k] += bar[k];
        }
        const double lr = design.log_risk(i, beta, dlog);
        const double w = hazard.cumulative_at(o.time) * std::exp(lr);
        for (std::size_t k = 0; k < K; ++k) grad[k] -= w * dlog[k];
    }
    return grad;
}

namespace {

std::vector<std::size_t> free_indices(std::size_t K, std::span<const std::size_t> pinned) {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < K; ++k)
        if (std::find(pinned.begin(), pinned.end(), k) == pinned.end()) out.push_back(k);
    return out;
}

void check_pinned(std::size_t K, std::span<const std::size_t> pinned) {
    for (auto p : pinned)
        if (p >= K) throw ValidationError("pinned coefficient index out of range");
}

// Parametric objective over x = (free beta, log lambda[, log rho]).
struct ParametricProblem {
    const SurvivalDesign& design;
    HazardFamily family;
    std::vector<std::size_t> free;
    bool fit_shape;
    double fixed_rho;

    std::size_t size() const { return free.size() + 1 + (fit_shape ? 1 : 0); }

    std::vector<double> beta_of(const Eigen::VectorXd& x) const {
        std::vector<double> beta(design.topics(), 0.0);
        for (std::size_t f = 0; f < free.size(); ++f) beta[free[f]] = x[static_cast<Eigen::Index>(f)];
        return beta;
    }

    BaselineHazard hazard_of(const Eigen::VectorXd& x) const {
        const double lambda = std::exp(x[static_cast<Eigen::Index>(free.size())]);
        if (family == HazardFamily::exponential) return BaselineHazard::exponential(lambda);
        const double rho = fit_shape ? std::exp(x[static_cast<Eigen::Index>(free.size() + 1)]) : fixed_rho;
        return BaselineHazard::weibull(lambda, rho);
    }

    double operator()(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
        const std::size_t K = design.topics();
        const auto beta = beta_of(x);
        const auto nfree = static_cast<Eigen::Index>(free.size());
        const double log_lambda = x[nfree];
        const double rho = family == HazardFamily::exponential ? 1.0
                           : fit_shape                         ? std::exp(x[nfree + 1])
                                                               : fixed_rho;
        const double log_rho = std::log(rho);

        grad = Eigen::VectorXd::Zero(x.size());
        std::vector<double> gbeta(K, 0.0), dlog(K);
        double f = 0.0, g_lambda = 0.0, g_rho = 0.0;
        for (std::size_t i = 0; i < design.size(); ++i) {
            const auto& o = design.outcome(i);
            const double log_t = std::log(o.time);
            if (o.event) {
                const auto bar = design.phi_bar(i);
                f += log_lambda + dot(beta, bar);
                if (family == HazardFamily::weibull) {
                    f += log_rho + (rho - 1.0) * log_t;
                    g_rho += 1.0 + rho * log_t;
                }
                g_lambda += 1.0;
                for (std::size_t k = 0; k < K; ++k) gbeta[k] += bar[k];
            }
            const double lr = design.log_risk(i, beta, dlog);
            const double w = std::exp(log_lambda + rho * log_t + lr); // H0(T) E[exp(beta'Z)]
            f -= w;
            g_lambda -= w;
            g_rho -= w * rho * log_t;
            for (std::size_t k = 0; k < K; ++k) gbeta[k] -= w * dlog[k];
        }
        for (Eigen::Index fi = 0; fi < nfree; ++fi) grad[fi] = gbeta[free[static_cast<std::size_t>(fi)]];
        grad[nfree] = g_lambda;
        if (fit_shape) grad[nfree + 1] = g_rho;
        return f;
    }
};

} // namespace

bool free_coefficients_collinear(const SurvivalDesign& design, std::span<const std::size_t> pinned) {
    const auto free = free_indices(design.topics(), pinned);
    if (free.empty() || design.size() == 0) return false;
    const auto D = static_cast<Eigen::Index>(design.size());
    const auto F = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd X(D, F);
    for (Eigen::Index i = 0; i < D; ++i) {
        const auto bar = design.phi_bar(static_cast<std::size_t>(i));
        for (Eigen::Index f = 0; f < F; ++f) X(i, f) = bar[free[static_cast<std::size_t>(f)]];
    }
    X.rowwise() -= X.colwise().mean();
    const Eigen::MatrixXd gram = X.transpose() * X / static_cast<double>(D);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
    const auto& ev = solver.eigenvalues();
    const double hi = ev.maxCoeff();
    if (!(hi > 1e-14)) return true;
    return ev.minCoeff() / hi < 1e-10;
}

SurvivalFit optimize_parametric(const SurvivalDesign& design, HazardFamily family,
                                std::span<const double> beta_init, const BaselineHazard& hazard_init,
                                const SurvivalFitOptions& options) {
    if (family == HazardFamily::breslow) throw ValidationError("optimize_parametric needs a parametric family");
    check_beta(beta_init, design);
    check_pinned(design.topics(), options.pinned);
    if (design.events() == 0)
        throw NumericalError("no observed events: the hazard maximum is at the boundary lambda -> 0");

    ParametricProblem problem{design, family, free_indices(design.topics(), options.pinned),
                              family == HazardFamily::weibull && !options.fix_shape,
                              family == HazardFamily::weibull ? hazard_init.rho : 1.0};
    if (!(hazard_init.lambda > 0.0) || !(problem.fixed_rho > 0.0))
        throw ValidationError("initial hazard parameters must be positive");

    Eigen::VectorXd x0(static_cast<Eigen::Index>(problem.size()));
    for (std::size_t f = 0; f < problem.free.size(); ++f)
        x0[static_cast<Eigen::Index>(f)] = beta_init[problem.free[f]];
    x0[static_cast<Eigen::Index>(problem.free.size())] = std::log(hazard_init.lambda);
    if (problem.fit_shape) x0[static_cast<Eigen::Index>(problem.free.size() + 1)] = std::log(hazard_init.rho);

    AscentOptions opt;
    opt.restarts = options.restarts;
    opt.seed = options.seed;
    const auto result = maximize_bfgs(problem, x0, opt);

    SurvivalFit fit;
    fit.initial_objective = survival_mstep_objective(problem.beta_of(x0), problem.hazard_of(x0), design);
    fit.beta = problem.beta_of(result.x);
    fit.hazard = problem.hazard_of(result.x);
    fit.objective = survival_mstep_objective(fit.beta, fit.hazard, design);
    fit.converged = result.converged;
    fit.iterations = result.iterations;
    fit.trace = {fit.initial_objective, fit.objective};
    if (free_coefficients_collinear(design, options.pinned))
        fit.warnings.push_back("free topic coefficients are collinear with the baseline; beta is not identifiable");
    if (!fit.converged) throw OptimizationError("survival optimizer did not converge after restarts", fit);
    return fit;
}

BaselineHazard breslow_update(std::span<const double> beta, const SurvivalDesign& design) {
    check_beta(beta, design);
    const std::size_t D = design.size();
    std::vector<std::size_t> order(D);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> ctime(D), risk(D);
    for (std::size_t i = 0; i < D; ++i) {
        ctime[i] = canonical_time(design.outcome(i).time);
        risk[i] = std::exp(design.log_risk(i, beta));
    }
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return ctime[a] < ctime[b]; });

    // suffix[p] = total risk of documents at sorted positions >= p
    std::vector<double> suffix(D + 1, 0.0);
    for (std::size_t p = D; p-- > 0;) suffix[p] = suffix[p + 1] + risk[order[p]];

    std::vector<double> times, hazards;
    double prev = 0.0;
    for (std::size_t p = 0; p < D;) {
        std::size_t q = p;
        double deaths = 0.0;
        while (q < D && ctime[order[q]] == ctime[order[p]]) {
            if (design.outcome(order[q]).event) deaths += 1.0;
            ++q;
        }
        if (deaths > 0.0) {
            const double t = ctime[order[p]];
            const double interval = t - prev;
            if (!(interval > 0.0)) throw ValidationError("event time rounds to zero");
            if (!(suffix[p] > 0.0) || !std::isfinite(suffix[p]))
                throw ValidationError("empty risk set at event time " + std::to_string(t));
            times.push_back(t);
            hazards.push_back(deaths / (interval * suffix[p]));
            prev = t;
        }
        p = q;
    }
    return BaselineHazard::breslow(times, hazards);
}

SurvivalFit optimize_breslow(const SurvivalDesign& design, std::span<const double> beta_init,
                             const SurvivalFitOptions& options) {
    check_beta(beta_init, design);
    check_pinned(design.topics(), options.pinned);
    if (design.events() == 0) throw NumericalError("no observed events: Breslow hazard is identically zero");

    const auto free = free_indices(design.topics(), options.pinned);
    SurvivalFit fit;
    fit.beta.assign(beta_init.begin(), beta_init.end());
    for (auto p : options.pinned) fit.beta[p] = 0.0;
    fit.hazard = breslow_update(fit.beta, design);
    fit.objective = survival_mstep_objective(fit.beta, fit.hazard, design);
    fit.initial_objective = fit.objective;
    fit.trace.push_back(fit.objective);
    fit.iterations = 1;
    if (free.empty()) {
        fit.converged = true;
        return fit;
    }

    bool all_converged = true;
    for (int round = 1; round <= options.max_rounds; ++round) {
        const BaselineHazard fixed = fit.hazard;
        auto objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
            std::vector<double> beta(design.topics(), 0.0);
            for (std::size_t f = 0; f < free.size(); ++f) beta[free[f]] = x[static_cast<Eigen::Index>(f)];
            const auto g = survival_mstep_gradient(beta, fixed, design);
            grad.resize(x.size());
            for (std::size_t f = 0; f < free.size(); ++f) grad[static_cast<Eigen::Index>(f)] = g[free[f]];
            return survival_mstep_objective(beta, fixed, design);
        };
        Eigen::VectorXd x0(static_cast<Eigen::Index>(free.size()));
        for (std::size_t f = 0; f < free.size(); ++f) x0[static_cast<Eigen::Index>(f)] = fit.beta[free[f]];
        AscentOptions opt;
        opt.restarts = options.restarts;
        opt.seed = options.seed + static_cast<std::uint64_t>(round);
        const auto result = maximize_bfgs(objective, x0, opt);
        all_converged = all_converged && result.converged;

        for (std::size_t f = 0; f < free.size(); ++f) fit.beta[free[f]] = result.x[static_cast<Eigen::Index>(f)];
        fit.hazard = breslow_update(fit.beta, design);
        const double next = survival_mstep_objective(fit.beta, fit.hazard, design);
        fit.trace.push_back(next);
        fit.iterations = round + 1;
        const double change = std::abs(next - fit.objective);
        fit.objective = next;
        if (change <= options.round_tol * std::max(1.0, std::abs(next))) {
            fit.converged = true;
            break;
        }
    }
    if (free_coefficients_collinear(design, options.pinned))
        fit.warnings.push_back("free topic coefficients are collinear with the baseline; beta is not identifiable");
    if (!fit.converged || !all_converged) {
        if (!fit.converged) throw OptimizationError("Breslow alternation did not converge", fit);
        fit.warnings.push_back("inner beta ascent stopped before reaching the gradient tolerance");
    }
    return fit;
}

double KMCurve::survival_at(double t) const {
    double s = 1.0;
    for (const auto& step : steps) {
        if (step.time > t) break;
        s = step.survival;
    }
    return s;
}

KMCurve weighted_km(std::span<const SurvivalOutcome> outcomes, std::span<const double> weights) {
    if (outcomes.size() != weights.size()) throw ValidationError("weights length does not match outcomes");
    double total = 0.0;
    for (double w : weights) {
        if (!std::isfinite(w) || w < 0.0) throw ValidationError("weights must be finite and nonnegative");
        total += w;
    }
    if (!(total > 0.0)) throw ValidationError("weights sum to zero: Kaplan-Meier curve is empty");

    const std::size_t n = outcomes.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](auto a, auto b) { return outcomes[a].time < outcomes[b].time; });

    KMCurve curve;
    curve.weights_used = total;
    double at_risk = total;
    double survival = 1.0;
    for (std::size_t p = 0; p < n;) {
        std::size_t q = p;
        double deaths = 0.0, leaving = 0.0;
        while (q < n && outcomes[order[q]].time == outcomes[order[p]].time) {
            const double w = weights[order[q]];
            if (outcomes[order[q]].event) deaths += w;
            leaving += w;
            ++q;
        }
        if (deaths > 0.0) {
            survival *= 1.0 - deaths / at_risk;
            if (survival < 0.0) survival = 0.0;
            curve.steps.push_back({outcomes[order[p]].time, survival, at_risk, deaths});
        }
        at_risk -= leaving;
        p = q;
    }
    return curve;
}

void write_km_curve(const KMCurve& curve, std::ostream& out) {
    std::ostringstream buf;
    buf << std::setprecision(17);
    buf << 0 << '\t' << 1 << '\n';
    for (const auto& s : curve.steps) buf << s.time << '\t' << s.survival << '\n';
    out << buf.str();
}

void write_km_curves(std::span<const KMCurve> curves, std::span<const std::string> labels, std::ostream& out) {
    if (curves.size() != labels.size()) throw ValidationError("one label per curve required");
    for (std::size_t c = 0; c < curves.size(); ++c) {
        if (c > 0) out << '\n';
        out << "# " << labels[c] << '\n';
        if (curves[c].empty) {
            out << "# empty\n";
            continue;
        }
        write_km_curve(curves[c], out);
    }
}

} // namespace survlda
