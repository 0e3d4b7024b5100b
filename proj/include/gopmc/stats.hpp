#pragma once

// Small statistics toolbox shared by the estimators, the validation command,
// and the test suite: batch-means standard errors and Kolmogorov-Smirnov
// distances with the asymptotic p-value.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "gopmc/base.hpp"
#include "gopmc/rng.hpp"

namespace gopmc {

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

// Mean with a batch-means standard error: samples are split by index into
// n_batches contiguous blocks, and the spread of block means estimates the
// error of the grand mean.  Index order is part of the estimator contract,
// so deterministic path layouts give deterministic error bars.
inline MeanSe batch_means(const std::vector<double>& x, int n_batches = 100) {
    const std::size_t n = x.size();
    if (n == 0) throw ConfigError("batch_means: empty sample");
    const int b = std::max(1, std::min<int>(n_batches, static_cast<int>(n)));
    std::vector<double> bm(b, 0.0);
    std::vector<std::size_t> cnt(b, 0);
    // contiguous blocks, sizes differing by at most one
    for (std::size_t i = 0; i < n; ++i) {
        const int k = static_cast<int>(i * static_cast<std::size_t>(b) / n);
        bm[k] += x[i];
        ++cnt[k];
    }
    double total = 0.0;
    for (double v : bm) total += v;
    const double mean = total / static_cast<double>(n);
    if (b == 1) return {mean, 0.0};
    double ss = 0.0;
    for (int k = 0; k < b; ++k) {
        const double mk = bm[k] / static_cast<double>(cnt[k]);
        ss += (mk - mean) * (mk - mean);
    }
    const double var_of_mean = ss / (static_cast<double>(b) * (b - 1.0));
    return {mean, std::sqrt(var_of_mean)};
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

// Asymptotic Kolmogorov distribution tail Q(lambda) with the standard
// finite-n effective argument.
inline double ks_pvalue(double d, double n_eff) {
    const double rn = std::sqrt(n_eff);
    const double lam = (rn + 0.12 + 0.11 / rn) * d;
    double sum = 0.0;
    double sign = 1.0;
    for (int k = 1; k <= 100; ++k) {
        const double t = std::exp(-2.0 * k * k * lam * lam);
        sum += sign * t;
        if (t < 1e-12 * std::max(sum, 1e-300)) break;
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
    double statistic = 0.0;
    double p_value = 0.0;
};

// One-sample KS against a continuous CDF.
inline KsResult ks_test(std::vector<double> sample, const std::function<double(double)>& cdf) {
    if (sample.empty()) throw ConfigError("ks_test: empty sample");
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double f = cdf(sample[i]);
        d = std::max(d, std::fabs(f - static_cast<double>(i) / n));
        d = std::max(d, std::fabs(static_cast<double>(i + 1) / n - f));
    }
    return {d, ks_pvalue(d, n)};
}

// Two-sample KS.
inline KsResult ks_test_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw ConfigError("ks_test_two_sample: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double va = a[i], vb = b[j];
        if (va <= vb) ++i;
        if (vb <= va) ++j;
        d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return {d, ks_pvalue(d, na * nb / (na + nb))};
}

}  // namespace gopmc
