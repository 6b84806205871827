#include "dispatchrl/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dispatchrl {

double mean(const std::vector<double>& values) {
    if (values.empty())
        return 0.0;
    double sum = 0.0;
    for (double v : values)
        sum += v;
    return sum / static_cast<double>(values.size());
}

double quantile(std::vector<double> values, double q) {
    if (values.empty())
        throw std::invalid_argument("quantile of empty sample");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * q;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = h - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

BoxStats box_stats(const std::vector<double>& values) {
    BoxStats stats;
    stats.min = quantile(values, 0.0);
    stats.q1 = quantile(values, 0.25);
    stats.median = quantile(values, 0.5);
    stats.q3 = quantile(values, 0.75);
    stats.max = quantile(values, 1.0);
    return stats;
}

namespace {

double normal_cdf(double z) {
    return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

/// P(U <= u_obs) from the exact permutation distribution of the rank sum
/// (valid only without ties). Counts are exact in long double for n+m <= 60.
double exact_p_less(int n, int m, double u_obs) {
    const int total = n + m;
    const int max_w = total * (total + 1) / 2;
    std::vector<std::vector<long double>> count(
        n + 1, std::vector<long double>(max_w + 1, 0.0L));
    count[0][0] = 1.0L;
    for (int rank = 1; rank <= total; ++rank)
        for (int k = std::min(rank, n); k >= 1; --k)
            for (int w = max_w; w >= rank; --w)
                if (count[k - 1][w - rank] != 0.0L)
                    count[k][w] += count[k - 1][w - rank];
    long double total_count = 0.0L;
    long double le_count = 0.0L;
    const double w_obs = u_obs + n * (n + 1) / 2.0;
    for (int w = 0; w <= max_w; ++w) {
        total_count += count[n][w];
        if (static_cast<double>(w) <= w_obs + 1e-9)
            le_count += count[n][w];
    }
    return static_cast<double>(le_count / total_count);
}

} // namespace

RankSumResult rank_sum_test(const std::vector<double>& first,
                            const std::vector<double>& second) {
    const int n = static_cast<int>(first.size());
    const int m = static_cast<int>(second.size());
    if (n == 0 || m == 0)
        throw std::invalid_argument("rank-sum test requires non-empty samples");

    // Midranks over the pooled sample.
    struct Entry {
        double value;
        bool is_first;
    };
    std::vector<Entry> pooled;
    pooled.reserve(n + m);
    for (double v : first)
        pooled.push_back({v, true});
    for (double v : second)
        pooled.push_back({v, false});
    std::stable_sort(pooled.begin(), pooled.end(),
                     [](const Entry& a, const Entry& b) { return a.value < b.value; });

    bool has_ties = false;
    double rank_sum_first = 0.0;
    double tie_term = 0.0; // sum of t^3 - t over tie groups
    std::size_t i = 0;
    while (i < pooled.size()) {
        std::size_t j = i;
        while (j < pooled.size() && pooled[j].value == pooled[i].value)
            ++j;
        const std::size_t t = j - i;
        if (t > 1) {
            has_ties = true;
            tie_term += static_cast<double>(t) * t * t - static_cast<double>(t);
        }
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k)
            if (pooled[k].is_first)
                rank_sum_first += midrank;
        i = j;
    }

    RankSumResult result;
    result.u = rank_sum_first - n * (n + 1) / 2.0;

    if (!has_ties && n + m <= 60) {
        result.exact = true;
        result.p_less = exact_p_less(n, m, result.u);
        return result;
    }

    const double nm = static_cast<double>(n) * m;
    const double total = n + m;
    const double mu = nm / 2.0;
    double variance = nm * (total + 1.0) / 12.0;
    variance -= nm * tie_term / (12.0 * total * (total - 1.0));
    if (variance <= 1e-12) {
        result.p_less = result.u < mu ? 0.5 : 1.0;
        return result;
    }
    const double z = (result.u + 0.5 - mu) / std::sqrt(variance);
    result.p_less = normal_cdf(z);
    return result;
}

} // namespace dispatchrl
