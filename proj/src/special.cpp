#include "omix/special.hpp"

#include <cmath>
#include <string>

#include "omix/errors.hpp"

namespace omix {

namespace {

constexpr double kAsymptoticThreshold = 10.0;

void check_domain(double x, const char* name) {
    if (!(x > 0.0) || !std::isfinite(x)) {
        throw UsageError(std::string(name) + ": argument must be positive and finite, got " +
                         std::to_string(x));
    }
}

}  // namespace

double digamma(double x) {
    check_domain(x, "digamma");
    double shift = 0.0;
    while (x < kAsymptoticThreshold) {
        shift -= 1.0 / x;
        x += 1.0;
    }
    // Bernoulli terms B_2k / (2k x^2k), k = 1..8.
    const double inv2 = 1.0 / (x * x);
    const double series =
        inv2 * (1.0 / 12.0 -
                 inv2 * (1.0 / 120.0 -
                         inv2 * (1.0 / 252.0 -
                                 inv2 * (1.0 / 240.0 -
                                         inv2 * (1.0 / 132.0 -
                                                 inv2 * (691.0 / 32760.0 -
                                                         inv2 * (1.0 / 12.0 -
                                                                 inv2 * 3617.0 / 8160.0)))))));
    return shift + std::log(x) - 0.5 / x - series;
}

double trigamma(double x) {
    check_domain(x, "trigamma");
    double shift = 0.0;
    while (x < kAsymptoticThreshold) {
        shift += 1.0 / (x * x);
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    // 1/x + 1/(2x^2) + sum B_2k / x^(2k+1)
    const double series =
        inv * inv2 *
        (1.0 / 6.0 -
         inv2 * (1.0 / 30.0 -
                 inv2 * (1.0 / 42.0 -
                         inv2 * (1.0 / 30.0 -
                                 inv2 * (5.0 / 66.0 -
                                         inv2 * (691.0 / 2730.0 - inv2 * (7.0 / 6.0)))))));
    return shift + inv + 0.5 * inv2 + series;
}

}  // namespace omix
