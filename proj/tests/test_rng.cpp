#include "catch_amalgamated.hpp"

#include <cmath>
#include <set>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "gopmc/quadrature.hpp"
#include "gopmc/rng.hpp"
#include "gopmc/stats.hpp"

using namespace gopmc;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("streams are reproducible and distinct") {
    RngStream a(123, 7), b(123, 7), c(123, 8), d(124, 7);
    bool same_ab = true, same_ac = true, same_ad = true;
    std::vector<std::uint64_t> seq;
    for (int i = 0; i < 1000; ++i) {
        const auto va = a.next_u64();
        seq.push_back(va);
        same_ab &= (va == b.next_u64());
        same_ac &= (va == c.next_u64());
        same_ad &= (va == d.next_u64());
    }
    CHECK(same_ab);
    CHECK_FALSE(same_ac);
    CHECK_FALSE(same_ad);
    // a fresh stream with the same key replays the same sequence
    RngStream e(123, 7);
    bool replay = true;
    for (auto v : seq) replay &= (e.next_u64() == v);
    CHECK(replay);
}

TEST_CASE("uniform stays inside the open interval with the right moments") {
    RngStream g(2024, 0);
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    double mn = 1.0, mx = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = g.uniform();
        s += u;
        s2 += u * u;
        mn = std::min(mn, u);
        mx = std::max(mx, u);
    }
    CHECK(mn > 0.0);
    CHECK(mx < 1.0);
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    CHECK_THAT(mean, WithinAbs(0.5, 4.0 * std::sqrt(1.0 / 12.0 / n)));
    CHECK_THAT(var, WithinAbs(1.0 / 12.0, 0.002));
}

TEST_CASE("normal_quantile round-trips through the normal CDF") {
    for (double p : {1e-12, 1e-6, 0.001, 0.025, 0.3, 0.5, 0.71, 0.975, 0.999, 1.0 - 1e-9}) {
        const double x = normal_quantile(p);
        CHECK_THAT(normal_cdf(x), WithinAbs(p, 1e-13 * (1.0 + p / std::min(p, 1.0 - p))));
    }
    // antithetic symmetry, checked where 1-p still resolves p to full
    // precision (beyond that the double spacing at 1.0 dominates)
    for (double p : {1e-6, 0.001, 0.025, 0.3, 0.49}) {
        const double x = normal_quantile(p);
        CHECK_THAT(normal_quantile(1.0 - p), WithinAbs(-x, 1e-9 * (1.0 + std::fabs(x))));
    }
    CHECK(normal_quantile(0.5) == 0.0);
    CHECK_THROWS_AS(normal_quantile(0.0), ConfigError);
    CHECK_THROWS_AS(normal_quantile(1.0), ConfigError);
}

TEST_CASE("sample_normal passes KS against the erfc-based CDF") {
    RngStream g(7, 1);
    std::vector<double> x(100000);
    for (auto& v : x) v = sample_normal(g);
    const auto ks = ks_test(x, [](double t) { return normal_cdf(t); });
    CHECK(ks.p_value > 0.01);
}

TEST_CASE("sample_gamma moments and KS against the incomplete gamma") {
    RngStream g(11, 3);
    const double shape = 2.6, scale = 0.8;
    const int n = 100000;
    std::vector<double> x(n);
    double s = 0.0, s2 = 0.0;
    for (auto& v : x) {
        v = sample_gamma(g, shape, scale);
        s += v;
        s2 += v * v;
    }
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    const double sd = std::sqrt(var);
    CHECK_THAT(mean, WithinAbs(shape * scale, 4.0 * sd / std::sqrt(1.0 * n)));
    CHECK_THAT(var, WithinRel(shape * scale * scale, 0.05));
    const auto ks = ks_test(x, [&](double t) {
        return boost::math::gamma_p(shape, t / scale);
    });
    CHECK(ks.p_value > 0.01);
}

TEST_CASE("sample_gamma small-shape branch") {
    RngStream g(11, 4);
    const double shape = 0.4;
    const int n = 100000;
    std::vector<double> x(n);
    for (auto& v : x) {
        v = sample_gamma(g, shape);
        REQUIRE(v >= 0.0);
    }
    const auto ks = ks_test(x, [&](double t) { return boost::math::gamma_p(shape, t); });
    CHECK(ks.p_value > 0.01);
    CHECK(sample_gamma(g, 0.0, 2.0) == 0.0);
    CHECK_THROWS_AS(sample_gamma(g, -1.0, 1.0), ConfigError);
    CHECK_THROWS_AS(sample_gamma(g, 1.0, 0.0), ConfigError);
}

namespace {

double poisson_pmf(long k, double mean) {
    return std::exp(k * std::log(mean) - mean - std::lgamma(k + 1.0));
}

// Pearson chi-square GOF against the exact pmf, pooling the tails.
double poisson_chisq_stat(const std::vector<long>& counts, double mean, long n,
                          int* dof_out) {
    std::vector<double> expected;
    std::vector<double> observed;
    double tail_exp = static_cast<double>(n);
    double tail_obs = static_cast<double>(n);
    for (std::size_t k = 0; k < counts.size(); ++k) {
        const double e = n * poisson_pmf(static_cast<long>(k), mean);
        if (e < 5.0) continue;  // pooled into the remainder bucket
        expected.push_back(e);
        observed.push_back(static_cast<double>(counts[k]));
        tail_exp -= e;
        tail_obs -= static_cast<double>(counts[k]);
    }
    expected.push_back(std::max(tail_exp, 1e-9));
    observed.push_back(tail_obs);
    double stat = 0.0;
    for (std::size_t i = 0; i < expected.size(); ++i) {
        const double d = observed[i] - expected[i];
        stat += d * d / expected[i];
    }
    *dof_out = static_cast<int>(expected.size()) - 1;
    return stat;
}

}  // namespace

TEST_CASE("sample_poisson moments in both regimes") {
    for (double mean : {0.3, 12.0, 30.0, 80.0}) {
        RngStream g(5, static_cast<std::uint64_t>(mean * 10));
        const int n = 100000;
        double s = 0.0, s2 = 0.0;
        for (int i = 0; i < n; ++i) {
            const double v = static_cast<double>(sample_poisson(g, mean));
            s += v;
            s2 += v * v;
        }
        const double m = s / n;
        const double var = s2 / n - m * m;
        CHECK_THAT(m, WithinAbs(mean, 4.0 * std::sqrt(mean / n)));
        CHECK_THAT(var, WithinRel(mean, 0.05));
    }
    RngStream g(5, 99);
    CHECK(sample_poisson(g, 0.0) == 0);
    CHECK_THROWS_AS(sample_poisson(g, -1.0), ConfigError);
}

TEST_CASE("poisson branch samplers agree with the exact pmf at a common mean") {
    // both algorithms forced at mean 25, where each is exact
    const double mean = 25.0;
    const long n = 200000;
    for (int branch = 0; branch < 2; ++branch) {
        RngStream g(17, 100 + branch);
        std::vector<long> counts(120, 0);
        for (long i = 0; i < n; ++i) {
            const long k = branch == 0 ? detail::sample_poisson_knuth(g, mean)
                                       : detail::sample_poisson_ptrs(g, mean);
            if (k >= 0 && k < static_cast<long>(counts.size())) ++counts[k];
        }
        int dof = 0;
        const double stat = poisson_chisq_stat(counts, mean, n, &dof);
        // 99.9th percentile of chi-square(dof) is about dof + 3.1 sqrt(2 dof) + 10
        CHECK(stat < dof + 3.1 * std::sqrt(2.0 * dof) + 10.0);
    }
}

TEST_CASE("sample_ncx2 branch laws coincide") {
    const double df = 1.5, lambda = 2.3;
    const int n = 40000;
    RngStream ga(21, 0), gb(21, 1);
    std::vector<double> a(n), b(n);
    for (auto& v : a) v = detail::sample_ncx2_additive(ga, df, lambda);
    for (auto& v : b) v = detail::sample_ncx2_mixture(gb, df, lambda);
    const auto ks = ks_test_two_sample(a, b);
    CHECK(ks.p_value > 0.01);
}

TEST_CASE("sample_ncx2 matches the density by KS and by moments") {
    const double df = 4.0, lambda = 1.7;
    const int n = 20000;
    RngStream g(33, 0);
    std::vector<double> x(n);
    double s = 0.0, s2 = 0.0;
    for (auto& v : x) {
        v = sample_ncx2(g, df, lambda);
        REQUIRE(v >= 0.0);
        s += v;
        s2 += v * v;
    }
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    CHECK_THAT(mean, WithinAbs(df + lambda, 4.0 * std::sqrt(var / n)));
    CHECK_THAT(var, WithinRel(2.0 * (df + 2.0 * lambda), 0.08));
    // cumulative-trapezoid CDF of the analytic density as the reference
    const int grid_n = 4000;
    const double hi = 40.0;
    std::vector<double> cdf(grid_n + 1, 0.0);
    for (int i = 1; i <= grid_n; ++i) {
        const double x0 = (i - 1) * hi / grid_n, x1 = i * hi / grid_n;
        cdf[i] = cdf[i - 1] +
                 0.5 * (ncx2_pdf(x0, df, lambda) + ncx2_pdf(x1, df, lambda)) * (x1 - x0);
    }
    const auto ks = ks_test(x, [&](double t) {
        if (t <= 0.0) return 0.0;
        if (t >= hi) return 1.0;
        const double u = t / hi * grid_n;
        const int i = static_cast<int>(u);
        return cdf[i] + (u - i) * (cdf[i + 1] - cdf[i]);
    });
    CHECK(ks.p_value > 0.01);
}

TEST_CASE("sample_ncx2 degenerate corners") {
    RngStream g(33, 5);
    for (int i = 0; i < 1000; ++i) {
        CHECK(sample_ncx2(g, 0.7, 0.0) >= 0.0);
        CHECK(sample_ncx2(g, 0.0, 3.0) >= 0.0);
    }
    CHECK(sample_ncx2(g, 0.0, 0.0) == 0.0);
    CHECK_THROWS_AS(sample_ncx2(g, -1.0, 0.0), ConfigError);
}

TEST_CASE("sample_matrix_normal reproduces mean and Kronecker covariance") {
    MatrixNormalParams p;
    p.mean = Eigen::MatrixXd{{1.0, -2.0, 0.5}, {0.0, 3.0, 1.0}};
    p.row_cov = Eigen::MatrixXd{{2.0, 0.6}, {0.6, 1.0}};
    p.col_cov = Eigen::MatrixXd{{1.0, 0.3, 0.0}, {0.3, 2.0, -0.4}, {0.0, -0.4, 0.5}};
    RngStream g(44, 0);
    const int n = 60000;
    Eigen::MatrixXd msum = Eigen::MatrixXd::Zero(2, 3);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(6, 6);
    for (int i = 0; i < n; ++i) {
        const Eigen::MatrixXd x = sample_matrix_normal(g, p) - p.mean;
        msum += x;
        Eigen::VectorXd v(6);  // vec(X^T): rows stacked
        v << x(0, 0), x(0, 1), x(0, 2), x(1, 0), x(1, 1), x(1, 2);
        cov += v * v.transpose();
    }
    msum /= n;
    cov /= n;
    Eigen::MatrixXd kron(6, 6);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) kron.block(3 * i, 3 * j, 3, 3) = p.row_cov(i, j) * p.col_cov;
    CHECK(msum.cwiseAbs().maxCoeff() < 4.0 * std::sqrt(2.0 * 2.0 / n));
    CHECK((cov - kron).cwiseAbs().maxCoeff() < 0.1);
}

TEST_CASE("sample_matrix_normal rejects an indefinite covariance") {
    MatrixNormalParams p;
    p.mean = Eigen::MatrixXd::Zero(2, 2);
    p.row_cov = Eigen::MatrixXd{{1.0, 2.0}, {2.0, 1.0}};  // eigenvalues 3, -1
    p.col_cov = Eigen::MatrixXd::Identity(2, 2);
    RngStream g(44, 1);
    CHECK_THROWS_AS(sample_matrix_normal(g, p), NumericalError);
}

TEST_CASE("batch_means recovers the plain mean and a sane error bar") {
    RngStream g(55, 0);
    std::vector<double> x(10000);
    for (auto& v : x) v = sample_normal(g) * 2.0 + 1.0;
    const auto r = batch_means(x, 100);
    double s = 0.0;
    for (double v : x) s += v;
    CHECK_THAT(r.mean, WithinRel(s / x.size(), 1e-12));
    // true SE is 2/sqrt(n) = 0.02; batch estimate should be within a factor ~2
    CHECK(r.se > 0.01);
    CHECK(r.se < 0.04);
}
