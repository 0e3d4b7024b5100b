#pragma once

// Counter-based random streams and the exact samplers built on them.
//
// The generator is Philox2x64-10: a keyed bijection of the 128-bit counter
// (counter word, stream id) under the 64-bit seed.  Streams are cheap value
// types; (seed, stream_id) fully determines the sequence, so any path/worker
// layout that assigns disjoint stream ids reproduces bit-identically for any
// scheduling.  All distribution samplers consume the stream only through
// uniform doubles, and the normal sampler is a strict inverse-CDF transform,
// so antithetic variates (u -> 1-u) stay exact.

#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

#include "gopmc/base.hpp"
#include "gopmc/specfun.hpp"

namespace gopmc {

namespace detail {

inline constexpr std::uint64_t philox_m = 0xD2B74407B1CE6E93ULL;
inline constexpr std::uint64_t philox_weyl = 0x9E3779B97F4A7C15ULL;

inline void philox2x64_block(std::uint64_t ctr, std::uint64_t stream,
                             std::uint64_t key, std::uint64_t out[2]) {
    std::uint64_t x0 = ctr, x1 = stream, k = key;
    for (int r = 0; r < 10; ++r) {
        const unsigned __int128 prod = static_cast<unsigned __int128>(philox_m) * x0;
        const std::uint64_t hi = static_cast<std::uint64_t>(prod >> 64);
        const std::uint64_t lo = static_cast<std::uint64_t>(prod);
        x0 = hi ^ k ^ x1;
        x1 = lo;
        k += philox_weyl;
    }
    out[0] = x0;
    out[1] = x1;
}

}  // namespace detail

class RngStream {
  public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id)
        : seed_(seed), stream_(stream_id) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_; }

    std::uint64_t next_u64() {
        if (have_ == 0) {
            detail::philox2x64_block(ctr_++, stream_, seed_, buf_);
            have_ = 2;
        }
        return buf_[2 - have_--];
    }

    // uniform on the open interval (0, 1); never returns an endpoint
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1p-53;
    }

  private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t ctr_ = 0;
    std::uint64_t buf_[2] = {0, 0};
    int have_ = 0;
};

// Inverse of the standard normal CDF (Wichura's PPND16 rational
// approximations), |error| ~ 1e-16 across (0,1).
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw ConfigError("normal_quantile: requires 0 < p < 1");
    const double q = p - 0.5;
    double r;
    if (std::fabs(q) <= 0.425) {
        r = 0.180625 - q * q;
        return q *
               (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                     6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
                   1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
                 1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
               (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                     3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
                   5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
                 4.2313330701600911252e1) * r + 1.0);
    }
    r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double v;
    if (r <= 5.0) {
        r -= 1.6;
        v = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
                3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
              4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
              2.05319162663775882187e0) * r + 1.0);
    } else {
        r -= 5.0;
        v = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
              5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
              5.99832206555887937690e-1) * r + 1.0);
    }
    return q < 0.0 ? -v : v;
}

inline double sample_normal(RngStream& g) { return normal_quantile(g.uniform()); }

// Marsaglia-Tsang squeeze for shape >= 1, boosted by u^{1/shape} below 1.
// shape == 0 is the degenerate point mass at zero (used by the chi-square
// mixture when the Poisson index is zero).
inline double sample_gamma(RngStream& g, double shape, double scale = 1.0) {
    if (shape < 0.0 || !(scale > 0.0))
        throw ConfigError("sample_gamma: requires shape >= 0, scale > 0");
    if (shape == 0.0) return 0.0;
    if (shape < 1.0) {
        const double u = g.uniform();
        return sample_gamma(g, shape + 1.0, scale) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / (3.0 * std::sqrt(d));
    for (;;) {
        double x, v;
        do {
            x = sample_normal(g);
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = g.uniform();
        const double x2 = x * x;
        if (u < 1.0 - 0.0331 * x2 * x2) return d * v * scale;
        if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v * scale;
    }
}

namespace detail {

inline long sample_poisson_knuth(RngStream& g, double mean) {
    const double limit = std::exp(-mean);
    long k = 0;
    double p = 1.0;
    do {
        ++k;
        p *= g.uniform();
    } while (p > limit);
    return k - 1;
}

// Hormann's PTRS transformed-rejection sampler; exact for mean >= ~10,
// used from 30 up where the sequential search gets slow.
inline long sample_poisson_ptrs(RngStream& g, double mean) {
    const double slam = std::sqrt(mean);
    const double llam = std::log(mean);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
        const double u = g.uniform() - 0.5;
        const double v = g.uniform();
        const double us = 0.5 - std::fabs(u);
        const double kf = std::floor((2.0 * a / us + b) * u + mean + 0.43);
        if (us >= 0.07 && v <= vr) return static_cast<long>(kf);
        if (kf < 0.0 || (us < 0.013 && v > us)) continue;
        const long k = static_cast<long>(kf);
        if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
            k * llam - mean - log_gamma(k + 1.0))
            return k;
    }
}

}  // namespace detail

inline long sample_poisson(RngStream& g, double mean) {
    if (mean < 0.0) throw ConfigError("sample_poisson: requires mean >= 0");
    if (mean == 0.0) return 0;
    if (mean < 30.0) return detail::sample_poisson_knuth(g, mean);
    return detail::sample_poisson_ptrs(g, mean);
}

namespace detail {

// df > 1: chi-square(df-1) plus the shifted squared normal carrying the
// noncentrality.
inline double sample_ncx2_additive(RngStream& g, double df, double lambda) {
    const double chi = 2.0 * sample_gamma(g, 0.5 * (df - 1.0));
    const double z = sample_normal(g) + std::sqrt(lambda);
    return chi + z * z;
}

// any df >= 0: Poisson-mixed central chi-square(df + 2J)
inline double sample_ncx2_mixture(RngStream& g, double df, double lambda) {
    const long j = sample_poisson(g, 0.5 * lambda);
    return 2.0 * sample_gamma(g, 0.5 * df + static_cast<double>(j));
}

}  // namespace detail

inline double sample_ncx2(RngStream& g, double df, double lambda) {
    if (df < 0.0 || lambda < 0.0)
        throw ConfigError("sample_ncx2: requires df >= 0, lambda >= 0");
    const double x = df > 1.0 ? detail::sample_ncx2_additive(g, df, lambda)
                              : detail::sample_ncx2_mixture(g, df, lambda);
    return x >= 0.0 ? x : 0.0;
}

struct MatrixNormalParams {
    Eigen::MatrixXd mean;     // p x n
    Eigen::MatrixXd row_cov;  // p x p, PSD
    Eigen::MatrixXd col_cov;  // n x n, PSD
};

namespace detail {

// PSD square root factor L with L L^T = S; eigenvalues in [-tol, 0) are
// clipped to zero, anything lower is rejected.
inline Eigen::MatrixXd psd_sqrt_factor(const Eigen::MatrixXd& s, double tol = 1e-10) {
    if (s.rows() != s.cols()) throw ConfigError("psd factor: matrix must be square");
    if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-10 * (1.0 + s.cwiseAbs().maxCoeff()))
        throw ConfigError("psd factor: matrix must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    if (es.info() != Eigen::Success) throw NumericalError("psd factor: eigensolver failed");
    const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    Eigen::VectorXd lam = es.eigenvalues();
    for (int i = 0; i < lam.size(); ++i) {
        if (lam(i) < -tol * scale)
            throw NumericalError("psd factor: matrix has a significantly negative eigenvalue");
        lam(i) = std::max(lam(i), 0.0);
    }
    return es.eigenvectors() * lam.cwiseSqrt().asDiagonal();
}

}  // namespace detail

// X = M + L_row G L_col^T with G iid standard normal drawn in row-major
// order, so vec(X^T) ~ N(vec(M^T), row_cov (x) col_cov).
inline Eigen::MatrixXd sample_matrix_normal(RngStream& g, const MatrixNormalParams& p) {
    const auto rows = p.mean.rows(), cols = p.mean.cols();
    if (p.row_cov.rows() != rows || p.col_cov.rows() != cols)
        throw ConfigError("sample_matrix_normal: covariance shapes do not match mean");
    const Eigen::MatrixXd lr = detail::psd_sqrt_factor(p.row_cov);
    const Eigen::MatrixXd lc = detail::psd_sqrt_factor(p.col_cov);
    Eigen::MatrixXd z(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) z(i, j) = sample_normal(g);
    return p.mean + lr * z * lc.transpose();
}

}  // namespace gopmc
