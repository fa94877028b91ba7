#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace reebflow {

/// Streaming mean / standard error accumulator.
struct RunningStat {
    long long n = 0;
    double sum = 0.0, sumsq = 0.0;

    void add(double x) {
        ++n;
        sum += x;
        sumsq += x * x;
    }
    double mean() const { return n ? sum / n : 0.0; }
    double variance() const {
        if (n < 2) return 0.0;
        double m = mean();
        double v = (sumsq - n * m * m) / (n - 1);
        return v > 0.0 ? v : 0.0;
    }
    double stderr_mean() const { return n ? std::sqrt(variance() / n) : 0.0; }
};

struct Interval {
    double lo, hi;
    bool contains(double x) const { return x >= lo && x <= hi; }
    double halfwidth() const { return 0.5 * (hi - lo); }
};

/// Wilson score interval for a binomial proportion. z = 2.5758... is the 99%
/// two-sided quantile used by the exit-statistics checks.
inline Interval wilson_interval(long long successes, long long n, double z = 2.5758293035489004) {
    if (n <= 0) return {0.0, 1.0};
    double p = static_cast<double>(successes) / n;
    double z2 = z * z;
    double denom = 1.0 + z2 / n;
    double center = (p + z2 / (2.0 * n)) / denom;
    double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    return {center - half, center + half};
}

/// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        double fa = static_cast<double>(i) / a.size();
        double fb = static_cast<double>(j) / b.size();
        d = std::max(d, std::fabs(fa - fb));
    }
    return d;
}

/// Asymptotic p-value for the two-sample KS statistic.
inline double ks_pvalue(double d, std::size_t n1, std::size_t n2) {
    double ne = static_cast<double>(n1) * n2 / (n1 + n2);
    double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        double term = 2.0 * ((k % 2 == 1) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
        sum += term;
        if (std::fabs(term) < 1e-12) break;
    }
    return std::clamp(sum, 0.0, 1.0);
}

}  // namespace reebflow
