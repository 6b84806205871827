#pragma once

#include <vector>

namespace dispatchrl {

struct BoxStats {
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
};

double mean(const std::vector<double>& values);

/// Linear-interpolation quantile (the numpy/R type-7 definition), q in [0,1].
double quantile(std::vector<double> values, double q);

BoxStats box_stats(const std::vector<double>& values);

struct RankSumResult {
    double u = 0.0;       // Mann-Whitney U for the first sample (ties count 0.5)
    double p_less = 0.0;  // one-sided p for "first sample is stochastically smaller"
    bool exact = false;   // exact permutation distribution vs normal approximation
};

/// One-sided Mann-Whitney rank-sum test. Uses the exact permutation
/// distribution when there are no ties and the samples are small, otherwise
/// a tie-corrected normal approximation with continuity correction.
RankSumResult rank_sum_test(const std::vector<double>& first,
                            const std::vector<double>& second);

} // namespace dispatchrl
