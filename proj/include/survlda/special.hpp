#pragma once

#include <span>

namespace survlda {

// Digamma function for x > 0. Shifts the argument up to >= 12 with the
// recurrence psi(x) = psi(x + 1) - 1/x, then applies the asymptotic series.
// Absolute error is around 1e-13 over the positive axis.
double digamma(double x);

// Trigamma, same scheme. Only used by tests and diagnostics.
double trigamma(double x);

// log(sum(exp(v))) without overflow. Returns -inf for an empty span.
double log_sum_exp(std::span<const double> v);

} // namespace survlda
