#pragma once

#include "survlda/corpus.hpp"
#include "survlda/error.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace survlda {

enum class HazardFamily { exponential, weibull, breslow };

std::string_view to_string(HazardFamily family);
HazardFamily parse_hazard_family(std::string_view name);

// Times are compared after rounding to 1e-9 so that ties survive text
// round trips.
double canonical_time(double t);

struct BreslowStep {
    double time = 0.0;       // t_r, a distinct event time
    double hazard = 0.0;     // h_r, constant on (t_{r-1}, t_r]
    double interval = 0.0;   // t_r - t_{r-1}, with t_0 = 0
    double cumulative = 0.0; // H0(t_r)
};

// Baseline hazard h0 and its integral H0.
//   exponential: h0(t) = lambda,                 H0(t) = lambda t
//   weibull:     h0(t) = lambda rho t^(rho - 1), H0(t) = lambda t^rho
//   breslow:     h0 piecewise constant between event times; H0 accumulates
//                h_r * interval_r at t_r and stays flat after the last step.
struct BaselineHazard {
    HazardFamily family = HazardFamily::exponential;
    double lambda = 1.0;
    double rho = 1.0;
    std::vector<BreslowStep> steps;

    static BaselineHazard exponential(double lambda);
    static BaselineHazard weibull(double lambda, double rho);
    // Fills intervals and cumulative values from (time, hazard) pairs.
    static BaselineHazard breslow(std::span<const double> times, std::span<const double> hazards);

    double hazard_at(double t) const;
    double cumulative_at(double t) const;
    bool parametric() const noexcept { return family != HazardFamily::breslow; }
    void validate() const;
};

// Sufficient statistics of the variational posterior for the survival
// M-step: per-document word-level phi rows (N_i x K) with their mean.
class SurvivalDesign {
public:
    explicit SurvivalDesign(std::size_t topics) : topics_(topics) {}

    // `phi` is row-major N x K. Empty documents have phi_bar = 0 and a unit
    // risk product.
    void add(const SurvivalOutcome& outcome, std::span<const double> phi);

    std::size_t topics() const noexcept { return topics_; }
    std::size_t size() const noexcept { return outcomes_.size(); }
    const SurvivalOutcome& outcome(std::size_t i) const { return outcomes_[i]; }
    std::span<const double> phi_bar(std::size_t i) const {
        return {phi_bars_.data() + i * topics_, topics_};
    }
    std::span<const double> phi(std::size_t i) const { return phis_[i]; }
    std::size_t words(std::size_t i) const { return phis_[i].size() / topics_; }
    std::size_t events() const;

    // log prod_j sum_k phi_jk exp(beta_k / N_i), i.e. log E_q[exp(beta' Zbar_i)].
    double log_risk(std::size_t i, std::span<const double> beta) const;
    // Same, also writing d/dbeta of the log risk into `dlog` (size K).
    double log_risk(std::size_t i, std::span<const double> beta, std::span<double> dlog) const;

private:
    std::size_t topics_;
    std::vector<SurvivalOutcome> outcomes_;
    std::vector<double> phi_bars_;
    std::vector<std::vector<double>> phis_;
};

// sum_i [ d_i log h0(T_i) + d_i beta' phibar_i - H0(T_i) E_q exp(beta' Zbar_i) ]
double survival_mstep_objective(std::span<const double> beta, const BaselineHazard& hazard,
                                const SurvivalDesign& design);
// Gradient of the objective in beta at fixed hazard.
std::vector<double> survival_mstep_gradient(std::span<const double> beta, const BaselineHazard& hazard,
                                            const SurvivalDesign& design);

struct SurvivalFitOptions {
    // Coefficients held at exactly zero (background or reference topic).
    std::vector<std::size_t> pinned;
    // Weibull only: keep rho at its initial value.
    bool fix_shape = false;
    int restarts = 3;
    std::uint64_t seed = 0;
    int max_rounds = 100;        // Breslow alternation
    double round_tol = 1e-8;     // Breslow relative objective change
};

struct SurvivalFit {
    std::vector<double> beta;
    BaselineHazard hazard;
    double objective = 0.0;
    double initial_objective = 0.0;
    bool converged = false;
    int iterations = 0;
    std::vector<double> trace;
    std::vector<std::string> warnings;
};

// Raised when the optimizer cannot converge even after restarts; carries the
// best iterate found, which is never worse than the initial point.
class OptimizationError : public NumericalError {
public:
    OptimizationError(const std::string& what, SurvivalFit best)
        : NumericalError(what), best_(std::move(best)) {}
    const SurvivalFit& best() const noexcept { return best_; }

private:
    SurvivalFit best_;
};

SurvivalFit optimize_parametric(const SurvivalDesign& design, HazardFamily family,
                                std::span<const double> beta_init, const BaselineHazard& hazard_init,
                                const SurvivalFitOptions& options = {});

// Breslow maximizer of the objective given beta:
//   h_r = m_r / ((t_r - t_{r-1}) * sum_{j in R_r} E_q exp(beta' Zbar_j)).
BaselineHazard breslow_update(std::span<const double> beta, const SurvivalDesign& design);

SurvivalFit optimize_breslow(const SurvivalDesign& design, std::span<const double> beta_init,
                             const SurvivalFitOptions& options = {});

// True when the free phi_bar columns (after centering) are rank deficient,
// i.e. the free coefficients are not identifiable against the baseline.
bool free_coefficients_collinear(const SurvivalDesign& design, std::span<const std::size_t> pinned);

struct KMStep {
    double time = 0.0;
    double survival = 1.0;
    double at_risk = 0.0; // weighted
    double deaths = 0.0;  // weighted
};

struct KMCurve {
    std::vector<KMStep> steps;
    double weights_used = 0.0;
    bool empty = false;

    // Right-continuous step function, 1 before the first step.
    double survival_at(double t) const;
};

// Product-limit estimator with fractional counts. Throws ValidationError when
// the weights sum to zero.
KMCurve weighted_km(std::span<const SurvivalOutcome> outcomes, std::span<const double> weights);

// Two-column "time<TAB>survival" rows starting at (0, 1).
void write_km_curve(const KMCurve& curve, std::ostream& out);
// Several curves as blocks, each introduced by "# <label>" and separated by a
// blank line. Empty curves are written as a header with "# empty".
void write_km_curves(std::span<const KMCurve> curves, std::span<const std::string> labels, std::ostream& out);

} // namespace survlda
