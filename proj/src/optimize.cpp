#include "survlda/optimize.hpp"

#include "survlda/rng.hpp"

#include <cmath>
#include <limits>

namespace survlda {

namespace {

bool small_gradient(const Eigen::VectorXd& g, double f, double tol) {
    return g.size() == 0 || g.lpNorm<Eigen::Infinity>() <= tol * std::max(1.0, std::abs(f));
}

AscentResult bfgs_run(const SmoothObjective& f, const Eigen::VectorXd& x0, const AscentOptions& opt) {
    const auto n = x0.size();
    AscentResult r;
    r.x = x0;
    r.grad = Eigen::VectorXd::Zero(n);
    r.value = f(r.x, r.grad);
    if (!std::isfinite(r.value) || !r.grad.allFinite()) return r;
    if (n == 0 || small_gradient(r.grad, r.value, opt.grad_tol)) {
        r.converged = true;
        return r;
    }

    // Inverse Hessian of -f.
    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
    bool scaled = false;
    Eigen::VectorXd g_new(n);
    int stalls = 0;

    for (r.iterations = 1; r.iterations <= opt.max_iters; ++r.iterations) {
        Eigen::VectorXd p = h * r.grad;
        double slope = r.grad.dot(p);
        if (!(slope > 0.0)) {
            h.setIdentity();
            p = r.grad;
            slope = r.grad.dot(p);
        }
        double t = 1.0;
        const double pmax = p.lpNorm<Eigen::Infinity>();
        if (pmax * t > opt.max_step) t = opt.max_step / pmax;

        bool accepted = false;
        Eigen::VectorXd x_new(n);
        double f_new = 0.0;
        for (int k = 0; k < 80; ++k) {
            x_new = r.x + t * p;
            f_new = f(x_new, g_new);
            if (std::isfinite(f_new) && g_new.allFinite() && f_new >= r.value + 1e-4 * t * slope) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            // No ascent possible at working precision.
            r.converged = small_gradient(r.grad, r.value, std::max(opt.grad_tol, 1e-6));
            return r;
        }

        const Eigen::VectorXd s = x_new - r.x;
        const Eigen::VectorXd y = r.grad - g_new; // gradient change of -f
        const double improvement = f_new - r.value;
        r.x = x_new;
        r.value = f_new;
        r.grad = g_new;
        if (small_gradient(r.grad, r.value, opt.grad_tol)) {
            r.converged = true;
            return r;
        }
        stalls = improvement <= 1e-15 * std::max(1.0, std::abs(r.value)) ? stalls + 1 : 0;
        if (stalls >= 5) {
            r.converged = small_gradient(r.grad, r.value, std::max(opt.grad_tol, 1e-6));
            return r;
        }

        const double sy = s.dot(y);
        if (sy > 1e-14 * s.norm() * y.norm()) {
            if (!scaled) {
                h *= sy / y.squaredNorm();
                scaled = true;
            }
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
            h = (id - rho * s * y.transpose()) * h * (id - rho * y * s.transpose()) +
                rho * s * s.transpose();
        }
    }
    r.iterations = opt.max_iters;
    return r;
}

} // namespace

AscentResult maximize_bfgs(const SmoothObjective& f, const Eigen::VectorXd& x0, const AscentOptions& options) {
    AscentResult best = bfgs_run(f, x0, options);
    const AscentResult start = [&] {
        AscentResult s;
        s.x = x0;
        s.grad = Eigen::VectorXd::Zero(x0.size());
        s.value = f(s.x, s.grad);
        return s;
    }();

    CounterRng rng(options.seed, 0x6f7074);
    for (int attempt = 0; attempt < options.restarts && !best.converged; ++attempt) {
        Eigen::VectorXd x = best.x;
        if (!std::isfinite(best.value)) x = x0;
        for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += 0.1 * rng.normal();
        AscentResult trial = bfgs_run(f, x, options);
        if (std::isfinite(trial.value) && (!std::isfinite(best.value) || trial.value > best.value)) {
            trial.iterations += best.iterations;
            best = std::move(trial);
        }
    }
    if (std::isfinite(start.value) && !(best.value >= start.value)) {
        const bool converged = best.converged;
        best.x = start.x;
        best.value = start.value;
        best.grad = start.grad;
        best.converged = converged && small_gradient(start.grad, start.value, 1e-6);
    }
    return best;
}

} // namespace survlda
