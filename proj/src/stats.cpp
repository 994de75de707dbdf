#include "cupcur/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "cupcur/error.hpp"

namespace cupcur {

namespace {

using i64 = std::int64_t;

// Midranks of the pooled samples, doubled so ties stay integral.
// Returns (doubled ranks in pool order, sum of t^3 - t over tie groups).
std::pair<std::vector<i64>, double> doubled_midranks(const std::vector<double>& pool) {
    const std::size_t n = pool.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return pool[a] < pool[b]; });
    std::vector<i64> ranks2(n);
    double tie_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && pool[order[j]] == pool[order[i]]) ++j;
        // positions i..j-1 share midrank (i+1 + j)/2; doubled: (i+1) + j
        const i64 r2 = static_cast<i64>(i + 1) + static_cast<i64>(j);
        for (std::size_t k = i; k < j; ++k) ranks2[order[k]] = r2;
        const double t = static_cast<double>(j - i);
        tie_sum += t * t * t - t;
        i = j;
    }
    return {std::move(ranks2), tie_sum};
}

double normal_sf(double z) { return 0.5 * std::erfc(z * 0.7071067811865475244); }

}  // namespace

Alternative parse_alternative(const std::string& s) {
    if (s == "two-sided") return Alternative::TwoSided;
    if (s == "less") return Alternative::Less;
    if (s == "greater") return Alternative::Greater;
    throw ConfigError("unknown alternative: " + s + " (want two-sided|less|greater)");
}

ComparisonResult wmw_test(std::span<const double> xs, std::span<const double> ys,
                          Alternative alternative, double alpha, TestMethod method) {
    if (xs.empty() || ys.empty()) throw InputError("wmw_test needs non-empty samples");
    const auto n1 = static_cast<i64>(xs.size());
    const auto n2 = static_cast<i64>(ys.size());
    const i64 total = n1 + n2;

    std::vector<double> pool(xs.begin(), xs.end());
    pool.insert(pool.end(), ys.begin(), ys.end());
    const auto [ranks2, tie_sum] = doubled_midranks(pool);

    i64 r1_doubled = 0;
    for (i64 i = 0; i < n1; ++i) r1_doubled += ranks2[static_cast<std::size_t>(i)];
    const i64 u_doubled = r1_doubled - n1 * (n1 + 1);  // 2 * U1
    const double u1 = 0.5 * static_cast<double>(u_doubled);

    ComparisonResult res;
    res.u_statistic = u1;
    res.alpha = alpha;

    const bool exact = method == TestMethod::Exact ||
                       (method == TestMethod::Auto && n1 <= 12 && n2 <= 12);
    if (exact) {
        // Enumerate every way to label n1 of the pooled ranks as the first
        // sample; tail probabilities are exact integer ratios.
        i64 count_le = 0, count_ge = 0, count_total = 0;
        std::vector<i64> comb(static_cast<std::size_t>(n1));
        std::iota(comb.begin(), comb.end(), i64{0});
        for (;;) {
            i64 rsum2 = 0;
            for (const auto c : comb) rsum2 += ranks2[static_cast<std::size_t>(c)];
            const i64 u2 = rsum2 - n1 * (n1 + 1);
            ++count_total;
            if (u2 <= u_doubled) ++count_le;
            if (u2 >= u_doubled) ++count_ge;

            i64 i = n1 - 1;
            while (i >= 0 && comb[static_cast<std::size_t>(i)] == total - n1 + i) --i;
            if (i < 0) break;
            ++comb[static_cast<std::size_t>(i)];
            for (i64 j = i + 1; j < n1; ++j) {
                comb[static_cast<std::size_t>(j)] = comb[static_cast<std::size_t>(j - 1)] + 1;
            }
        }
        const double p_less = static_cast<double>(count_le) / static_cast<double>(count_total);
        const double p_greater = static_cast<double>(count_ge) / static_cast<double>(count_total);
        switch (alternative) {
            case Alternative::Less: res.p_value = p_less; break;
            case Alternative::Greater: res.p_value = p_greater; break;
            case Alternative::TwoSided:
                res.p_value = std::min(1.0, 2.0 * std::min(p_less, p_greater));
                break;
        }
        res.method = "exact";
    } else {
        const double nn = static_cast<double>(n1) * static_cast<double>(n2);
        const double mu = 0.5 * nn;
        const double nt = static_cast<double>(total);
        const double var = nn / 12.0 * ((nt + 1.0) - tie_sum / (nt * (nt - 1.0)));
        if (var <= 0.0) {
            res.p_value = 1.0;  // every pooled value tied
        } else {
            const double sigma = std::sqrt(var);
            const double p_greater = normal_sf((u1 - mu - 0.5) / sigma);
            const double p_less = 1.0 - normal_sf((u1 - mu + 0.5) / sigma);
            switch (alternative) {
                case Alternative::Less: res.p_value = p_less; break;
                case Alternative::Greater: res.p_value = p_greater; break;
                case Alternative::TwoSided:
                    res.p_value = std::min(1.0, 2.0 * std::min(p_less, p_greater));
                    break;
            }
        }
        res.method = "normal-approx";
    }
    res.significant = res.p_value < alpha;
    return res;
}

double relative_performance(double candidate_loss, double baseline_loss) {
    if (baseline_loss <= 0.0) throw InputError("relative_performance needs a positive baseline");
    return 100.0 * (baseline_loss - candidate_loss) / baseline_loss;
}

}  // namespace cupcur
