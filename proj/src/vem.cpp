#include "survlda/vem.hpp"

#include "survlda/error.hpp"
#include "survlda/special.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace survlda {

std::string_view to_string(Mode mode) {
    return mode == Mode::lda ? "lda" : "survlda";
}

Mode parse_mode(std::string_view name) {
    if (name == "lda") return Mode::lda;
    if (name == "survlda") return Mode::survlda;
    throw ValidationError("unknown mode '" + std::string(name) + "'");
}

void ModelParams::set_tau(std::vector<double> rows) {
    if (rows.size() != topics() * vocab_size) throw ValidationError("tau has wrong shape");
    tau = std::move(rows);
    log_tau.resize(tau.size());
    std::transform(tau.begin(), tau.end(), log_tau.begin(), [](double t) { return std::log(t); });
}

void ModelParams::set_tau_row(std::size_t k, std::span<const double> row) {
    if (row.size() != vocab_size || k >= topics()) throw ValidationError("tau row has wrong shape");
    std::copy(row.begin(), row.end(), tau.begin() + static_cast<std::ptrdiff_t>(k * vocab_size));
    for (std::size_t v = 0; v < vocab_size; ++v) log_tau[k * vocab_size + v] = std::log(row[v]);
}

void ModelParams::validate() const {
    const std::size_t K = topics();
    if (K == 0) throw ValidationError("model needs at least one topic");
    for (double a : alpha)
        if (!(a > 0.0) || !std::isfinite(a)) throw ValidationError("alpha must be positive");
    if (tau.size() != K * vocab_size || log_tau.size() != tau.size())
        throw ValidationError("tau has wrong shape");
    for (std::size_t k = 0; k < K; ++k) {
        double s = 0.0;
        for (std::size_t v = 0; v < vocab_size; ++v) {
            if (!std::isfinite(log_tau[k * vocab_size + v]))
                throw ValidationError("tau row " + std::to_string(k) + " has a zero or invalid entry");
            s += tau[k * vocab_size + v];
        }
        if (vocab_size > 0 && std::abs(s - 1.0) > 1e-10)
            throw ValidationError("tau row " + std::to_string(k) + " does not sum to one");
    }
    if (!beta.empty() && beta.size() != K) throw ValidationError("beta length does not match topic count");
    if (hazard) hazard->validate();
}

ModelParams make_params(std::vector<double> alpha, std::size_t vocab_size, std::vector<double> tau,
                        std::vector<double> beta, std::optional<BaselineHazard> hazard) {
    ModelParams p;
    p.alpha = std::move(alpha);
    p.vocab_size = vocab_size;
    p.set_tau(std::move(tau));
    p.beta = beta.empty() ? std::vector<double>(p.topics(), 0.0) : std::move(beta);
    p.hazard = std::move(hazard);
    p.validate();
    return p;
}

namespace {

double beta_at(const ModelParams& params, std::size_t k) {
    return params.beta.empty() ? 0.0 : params.beta[k];
}

bool beta_is_zero(const ModelParams& params) {
    return std::all_of(params.beta.begin(), params.beta.end(), [](double b) { return b == 0.0; });
}

void refresh_psi(VariationalState& state) {
    const double total = std::accumulate(state.gamma.begin(), state.gamma.end(), 0.0);
    const double dg_total = digamma(total);
    state.psi.resize(state.topics);
    for (std::size_t k = 0; k < state.topics; ++k) state.psi[k] = digamma(state.gamma[k]) - dg_total;
}

// Writes the normalized softmax of `logits` into `row`.
void softmax_into(std::span<const double> logits, std::span<double> row) {
    const double lse = log_sum_exp(logits);
    for (std::size_t k = 0; k < row.size(); ++k) row[k] = std::exp(logits[k] - lse);
}

} // namespace

void refresh_hazard_product(VariationalState& state) {
    const std::size_t K = state.topics;
    const std::size_t N = state.words();
    state.phi_bar.assign(K, 0.0);
    double product = 1.0;
    for (std::size_t j = 0; j < N; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            const double p = state.phi[j * K + k];
            state.phi_bar[k] += p;
            s += p * state.exp_beta[k];
        }
        product *= s;
    }
    if (N > 0)
        for (double& b : state.phi_bar) b /= static_cast<double>(N);
    state.hazard_product = product;
    state.updates_since_refresh = 0;
}

void refresh_caches(VariationalState& state, const Document& doc, const ModelParams& params) {
    const std::size_t K = params.topics();
    const std::size_t N = doc.size();
    state.topics = K;
    if (state.phi.size() != N * K) throw ValidationError("variational state does not match document '" + doc.id + "'");
    state.xi.resize(N * K);
    for (std::size_t j = 0; j < N; ++j) {
        if (doc.tokens[j] >= params.vocab_size)
            throw ValidationError("document '" + doc.id + "' has a token outside the model vocabulary");
        for (std::size_t k = 0; k < K; ++k) state.xi[j * K + k] = params.log_tau_at(k, doc.tokens[j]);
    }
    state.exp_beta.resize(K);
    for (std::size_t k = 0; k < K; ++k)
        state.exp_beta[k] = N == 0 ? 1.0 : std::exp(beta_at(params, k) / static_cast<double>(N));
    refresh_psi(state);
    refresh_hazard_product(state);
}

VariationalState init_state(const Document& doc, const ModelParams& params) {
    const std::size_t K = params.topics();
    const std::size_t N = doc.size();
    VariationalState s;
    s.topics = K;
    s.phi.assign(N * K, 1.0 / static_cast<double>(K));
    s.gamma.resize(K);
    for (std::size_t k = 0; k < K; ++k)
        s.gamma[k] = params.alpha[k] + static_cast<double>(N) / static_cast<double>(K);
    s.empty_document = N == 0;
    refresh_caches(s, doc, params);
    return s;
}

std::span<const double> update_gamma(VariationalState& state, std::span<const double> alpha) {
    const std::size_t K = state.topics;
    const std::size_t N = state.words();
    state.gamma.assign(alpha.begin(), alpha.end());
    for (std::size_t j = 0; j < N; ++j)
        for (std::size_t k = 0; k < K; ++k) state.gamma[k] += state.phi[j * K + k];
    refresh_psi(state);
    return state.gamma;
}

namespace {

void apply_phi(VariationalState& state, std::size_t j, std::span<const double> fresh) {
    const std::size_t K = state.topics;
    const double n = static_cast<double>(state.words());
    auto row = state.phi_row(j);
    double s_old = 0.0, s_new = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        s_old += row[k] * state.exp_beta[k];
        s_new += fresh[k] * state.exp_beta[k];
        state.phi_bar[k] += (fresh[k] - row[k]) / n;
        row[k] = fresh[k];
    }
    state.hazard_product = state.hazard_product / s_old * s_new;
    if (++state.updates_since_refresh >= 64) refresh_hazard_product(state);
}

void check_row(std::span<const double> row, std::size_t j) {
    for (double p : row)
        if (!std::isfinite(p)) throw NumericalError("non-finite phi update at word " + std::to_string(j));
}

} // namespace

std::vector<double> update_phi_lda(VariationalState& state, const ModelParams&, std::size_t j) {
    const std::size_t K = state.topics;
    if (j >= state.words()) throw ValidationError("word index out of range");
    std::vector<double> logits(K), fresh(K);
    for (std::size_t k = 0; k < K; ++k) logits[k] = state.psi[k] + state.xi[j * K + k];
    softmax_into(logits, fresh);
    check_row(fresh, j);
    apply_phi(state, j, fresh);
    return fresh;
}

std::vector<double> update_phi_survlda(VariationalState& state, const ModelParams& params, std::size_t j,
                                       const SurvivalOutcome& outcome, double H0_at_T) {
    const std::size_t K = state.topics;
    const std::size_t N = state.words();
    if (j >= N) throw ValidationError("word index out of range");
    std::vector<double> logits(K), fresh(K);
    for (std::size_t k = 0; k < K; ++k) logits[k] = state.psi[k] + state.xi[j * K + k];
    // With beta = 0 the survival terms are constant in k and cancel.
    if (!beta_is_zero(params)) {
        const auto row = state.phi_row(j);
        double s_old = 0.0;
        for (std::size_t k = 0; k < K; ++k) s_old += row[k] * state.exp_beta[k];
        const double leave_one_out = state.hazard_product / s_old;
        const double delta = outcome.event ? 1.0 : 0.0;
        const double n = static_cast<double>(N);
        for (std::size_t k = 0; k < K; ++k)
            logits[k] += delta * beta_at(params, k) / n - H0_at_T * leave_one_out * state.exp_beta[k];
    }
    for (double a : logits)
        if (std::isnan(a) || a == std::numeric_limits<double>::infinity())
            throw NumericalError("non-finite phi exponent at word " + std::to_string(j));
    softmax_into(logits, fresh);
    check_row(fresh, j);
    apply_phi(state, j, fresh);
    return fresh;
}

double compute_elbo(const VariationalState& state, const ModelParams& params, const Document& doc, Mode mode) {
    const std::size_t K = params.topics();
    const std::size_t N = doc.size();
    if (state.gamma.size() != K || state.phi.size() != N * K)
        throw ValidationError("variational state does not match document '" + doc.id + "'");

    const double alpha_sum = std::accumulate(params.alpha.begin(), params.alpha.end(), 0.0);
    const double gamma_sum = std::accumulate(state.gamma.begin(), state.gamma.end(), 0.0);
    const double dg_sum = digamma(gamma_sum);
    std::vector<double> dg(K);
    for (std::size_t k = 0; k < K; ++k) dg[k] = digamma(state.gamma[k]) - dg_sum;

    // E log p(theta | alpha) + entropy of q(theta)
    double elbo = std::lgamma(alpha_sum) - std::lgamma(gamma_sum);
    for (std::size_t k = 0; k < K; ++k) {
        elbo += std::lgamma(state.gamma[k]) - std::lgamma(params.alpha[k]);
        elbo += (params.alpha[k] - state.gamma[k]) * dg[k];
    }
    // E log p(Z | theta) + E log p(W | Z, tau) + entropy of q(Z)
    for (std::size_t j = 0; j < N; ++j) {
        const WordId w = doc.tokens[j];
        for (std::size_t k = 0; k < K; ++k) {
            const double p = state.phi[j * K + k];
            if (p > 0.0) elbo += p * (dg[k] + params.log_tau_at(k, w) - std::log(p));
        }
    }

    if (mode == Mode::survlda) {
        if (!doc.outcome) throw ValidationError("document '" + doc.id + "' has no survival outcome");
        if (!params.hazard) throw ValidationError("survlda mode requires a baseline hazard");
        const auto& o = *doc.outcome;
        if (o.event) {
            const double h = params.hazard->hazard_at(o.time);
            if (!(h > 0.0)) throw NumericalError("baseline hazard is zero at an event time of '" + doc.id + "'");
            elbo += std::log(h);
        }
        double product = 1.0;
        if (N > 0) {
            const double n = static_cast<double>(N);
            std::vector<double> e(K), bar(K, 0.0);
            for (std::size_t k = 0; k < K; ++k) e[k] = std::exp(beta_at(params, k) / n);
            for (std::size_t j = 0; j < N; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < K; ++k) {
                    s += state.phi[j * K + k] * e[k];
                    bar[k] += state.phi[j * K + k];
                }
                product *= s;
            }
            if (o.event)
                for (std::size_t k = 0; k < K; ++k) elbo += beta_at(params, k) * bar[k] / n;
        }
        elbo -= params.hazard->cumulative_at(o.time) * product;
    }
    return elbo;
}

VariationalState e_step(const Document& doc, const ModelParams& params, Mode mode, const EStepOptions& options,
                        const VariationalState* warm) {
    VariationalState state;
    if (warm) {
        state = *warm;
        state.topics = params.topics();
        state.elbo_trace.clear();
        state.converged = false;
        state.iterations = 0;
        refresh_caches(state, doc, params);
    } else {
        state = init_state(doc, params);
    }
    const std::size_t N = doc.size();
    state.empty_document = N == 0;

    double H0 = 0.0;
    if (mode == Mode::survlda) {
        if (!doc.outcome) throw ValidationError("document '" + doc.id + "' has no survival outcome");
        if (!params.hazard) throw ValidationError("survlda mode requires a baseline hazard");
        H0 = params.hazard->cumulative_at(doc.outcome->time);
    }

    double prev = compute_elbo(state, params, doc, mode);
    state.elbo_trace.push_back(prev);
    for (int it = 1; it <= options.max_iters; ++it) {
        try {
            for (std::size_t j = 0; j < N; ++j) {
                if (mode == Mode::survlda)
                    update_phi_survlda(state, params, j, *doc.outcome, H0);
                else
                    update_phi_lda(state, params, j);
            }
        } catch (const NumericalError& e) {
            throw NumericalError("document '" + doc.id + "': " + e.what());
        }
        refresh_hazard_product(state);
        update_gamma(state, params.alpha);
        const double elbo = compute_elbo(state, params, doc, mode);
        state.elbo_trace.push_back(elbo);
        state.iterations = it;
        if (!std::isfinite(elbo)) throw NumericalError("document '" + doc.id + "': non-finite ELBO");
        if (std::abs(elbo - prev) <= options.tol * std::abs(prev)) {
            state.converged = true;
            break;
        }
        prev = elbo;
    }
    return state;
}

} // namespace survlda
