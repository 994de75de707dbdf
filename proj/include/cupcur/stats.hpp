#pragma once

#include <span>
#include <string>

namespace cupcur {

enum class Alternative { TwoSided, Less, Greater };
enum class TestMethod { Auto, Exact, NormalApprox };

Alternative parse_alternative(const std::string& s);

struct ComparisonResult {
    double u_statistic = 0.0;  // U of the first sample (half-integral under ties)
    double p_value = 1.0;
    std::string method;  // "exact" or "normal-approx"
    double alpha = 0.01;
    bool significant = false;  // p_value < alpha
};

// Wilcoxon-Mann-Whitney rank-sum test.
//
// Ranks are midranks (tied values share the average of the ranks they
// occupy), so U can be half-integral. U1 = R1 - n1(n1+1)/2 where R1 is the
// rank sum of xs; U1 + U2 = n1*n2 always.
//
// With both sample sizes <= 12 the p-value is exact: all C(n1+n2, n1)
// assignments of the pooled midranks to the first sample are enumerated and
// the tail probability is a ratio of integer counts, which also makes it
// valid under ties. Larger samples use the normal approximation with the
// usual tie-corrected variance and a 0.5 continuity correction.
//
// alternative=Less tests whether xs is stochastically smaller than ys
// (small U); Greater the reverse; TwoSided doubles the smaller tail and
// caps at 1.
ComparisonResult wmw_test(std::span<const double> xs, std::span<const double> ys,
                          Alternative alternative = Alternative::TwoSided, double alpha = 0.01,
                          TestMethod method = TestMethod::Auto);

// 100 * (baseline - candidate) / baseline; positive when the candidate
// improves on the baseline (losses: lower is better).
double relative_performance(double candidate_loss, double baseline_loss);

}  // namespace cupcur
