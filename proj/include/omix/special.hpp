#pragma once

namespace omix {

/// Digamma function for x > 0. Upward recurrence until x >= 10, then the
/// asymptotic expansion; relative error near 1e-15 on (0, inf).
/// Throws UsageError for x <= 0 or non-finite x.
[[nodiscard]] double digamma(double x);

/// Trigamma (derivative of digamma) for x > 0, same scheme as digamma.
[[nodiscard]] double trigamma(double x);

}  // namespace omix
