#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>

namespace survlda {

// Objective returning f(x) and writing its gradient into `grad`.
using SmoothObjective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

struct AscentOptions {
    int max_iters = 1000;
    // Stop when max|grad| <= grad_tol * max(1, |f|).
    double grad_tol = 1e-11;
    // Largest coordinate move per line search trial.
    double max_step = 5.0;
    int restarts = 3;
    std::uint64_t seed = 0;
};

struct AscentResult {
    Eigen::VectorXd x;
    double value = 0.0;
    Eigen::VectorXd grad;
    int iterations = 0;
    bool converged = false;
};

// BFGS ascent with Armijo backtracking. When a run fails to converge it is
// retried from jittered copies of the start point (up to `restarts` times);
// the best iterate is returned and is never worse than x0.
AscentResult maximize_bfgs(const SmoothObjective& f, const Eigen::VectorXd& x0,
                           const AscentOptions& options = {});

} // namespace survlda
