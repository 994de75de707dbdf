// Independent oracles used by the tests: finite differences, direct
// probability computations, enumeration. These deliberately avoid the
// library's own code paths wherever the library result is under test.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

namespace oracles {

// Central finite difference d(f)/d(x) around the current value of x.
inline double central_diff(std::function<double()> f, double& x, double h = 1e-5) {
    const double orig = x;
    x = orig + h;
    const double fp = f();
    x = orig - h;
    const double fm = f();
    x = orig;
    return (fp - fm) / (2.0 * h);
}

inline double rel_err(double got, double want) {
    const double denom = std::max({std::abs(got), std::abs(want), 1e-8});
    return std::abs(got - want) / denom;
}

// Mean cross-entropy computed from explicit probabilities in long double.
inline double direct_ce(const std::vector<double>& logits, const std::vector<std::int32_t>& targets,
                        std::size_t rows, std::size_t vocab) {
    long double total = 0.0L;
    for (std::size_t r = 0; r < rows; ++r) {
        long double denom = 0.0L;
        for (std::size_t j = 0; j < vocab; ++j) denom += std::exp(static_cast<long double>(logits[r * vocab + j]));
        const long double p = std::exp(static_cast<long double>(logits[r * vocab + targets[r]])) / denom;
        total += -std::log(p);
    }
    return static_cast<double>(total / static_cast<long double>(rows));
}

// Kolmogorov-Smirnov p-value (asymptotic) for a sample against a Uniform(lo,hi) CDF.
inline double ks_uniform_p(std::vector<double> sample, double lo, double hi) {
    std::sort(sample.begin(), sample.end());
    const auto n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double cdf = (sample[i] - lo) / (hi - lo);
        d = std::max(d, std::abs(cdf - static_cast<double>(i) / n));
        d = std::max(d, std::abs(cdf - static_cast<double>(i + 1) / n));
    }
    const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
    double p = 0.0;
    for (int k = 1; k <= 100; ++k) {
        p += 2.0 * (k % 2 == 1 ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
    }
    return std::min(1.0, std::max(0.0, p));
}

}  // namespace oracles
