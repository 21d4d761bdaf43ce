#pragma once

#include "survlda/corpus.hpp"
#include "survlda/survival.hpp"

#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace survlda {

enum class Mode { lda, survlda };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view name);

// System-wide parameters: Dirichlet alpha, topics tau (K x V, row-major, with
// cached logs), Cox coefficients beta and the baseline hazard (survlda only).
struct ModelParams {
    std::vector<double> alpha;
    std::size_t vocab_size = 0;
    std::vector<double> tau;
    std::vector<double> log_tau;
    std::vector<double> beta;
    std::optional<BaselineHazard> hazard;

    std::size_t topics() const noexcept { return alpha.size(); }
    std::span<const double> tau_row(std::size_t k) const { return {tau.data() + k * vocab_size, vocab_size}; }
    double log_tau_at(std::size_t k, WordId v) const { return log_tau[k * vocab_size + v]; }

    // Replaces tau and refreshes log_tau.
    void set_tau(std::vector<double> rows);
    void set_tau_row(std::size_t k, std::span<const double> row);
    void validate() const;
};

ModelParams make_params(std::vector<double> alpha, std::size_t vocab_size, std::vector<double> tau,
                        std::vector<double> beta = {}, std::optional<BaselineHazard> hazard = std::nullopt);

// Mean-field state for one document: q(theta) = Dir(gamma), q(Z_j) = phi_j.
struct VariationalState {
    std::size_t topics = 0;
    std::vector<double> gamma;
    std::vector<double> psi;       // digamma(gamma_k) - digamma(sum gamma)
    std::vector<double> phi;       // N x K, row-major
    std::vector<double> xi;        // N x K, log tau_{k, W_j}
    std::vector<double> phi_bar;   // K
    std::vector<double> exp_beta;  // exp(beta_k / N)
    double hazard_product = 1.0;   // prod_j exp(beta / N)' phi_j
    std::size_t updates_since_refresh = 0;

    bool converged = false;
    int iterations = 0;
    // Documents without words carry no survival information in phi.
    bool empty_document = false;
    std::vector<double> elbo_trace;

    std::size_t words() const noexcept { return topics == 0 ? 0 : phi.size() / topics; }
    std::span<const double> phi_row(std::size_t j) const { return {phi.data() + j * topics, topics}; }
    std::span<double> phi_row(std::size_t j) { return {phi.data() + j * topics, topics}; }
};

// Uniform phi, gamma = alpha + N/K, caches filled.
VariationalState init_state(const Document& doc, const ModelParams& params);
// Recomputes psi, xi, phi_bar, exp_beta and hazard_product from gamma/phi.
void refresh_caches(VariationalState& state, const Document& doc, const ModelParams& params);
// Recomputes only the running risk product and phi_bar.
void refresh_hazard_product(VariationalState& state);

// gamma = alpha + sum_j phi_j; refreshes psi.
std::span<const double> update_gamma(VariationalState& state, std::span<const double> alpha);

// phi_j proportional to exp(psi_k + xi_jk); applied to the state and returned.
std::vector<double> update_phi_lda(VariationalState& state, const ModelParams& params, std::size_t j);

// phi_j proportional to
//   exp(psi_k + xi_jk + delta beta_k / N - H0(T) * prod_{m != j}(exp(beta/N)' phi_m) * exp(beta_k / N)).
// The leave-one-out product comes from the cached running product; it is
// rebuilt from scratch every 64 updates.
std::vector<double> update_phi_survlda(VariationalState& state, const ModelParams& params, std::size_t j,
                                       const SurvivalOutcome& outcome, double H0_at_T);

// Evidence lower bound of one document. Recomputes everything it needs from
// gamma and phi, so it does not trust the caches.
double compute_elbo(const VariationalState& state, const ModelParams& params, const Document& doc, Mode mode);

struct EStepOptions {
    double tol = 1e-6;
    int max_iters = 200;
};

// Coordinate ascent: a phi sweep in document order followed by a gamma
// update, repeated until the relative ELBO change falls below tol. `warm`
// supplies starting gamma/phi (used across EM iterations).
VariationalState e_step(const Document& doc, const ModelParams& params, Mode mode,
                        const EStepOptions& options = {}, const VariationalState* warm = nullptr);

} // namespace survlda
