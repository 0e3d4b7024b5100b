#pragma once

// Scalar special functions used by the transition densities and transforms:
// log-gamma (real and complex argument), log modified Bessel I of real and
// complex order, Kummer's confluent hypergeometric, the Whittaker M wrapper,
// and the noncentral chi-square density.  Everything that can underflow or
// overflow in the tails is evaluated in log space.

#include <cmath>
#include <complex>
#include <limits>

#include "gopmc/base.hpp"

namespace gopmc {

namespace detail {

// Stirling series for ln Gamma, valid once Re(z) >= 16: eight Bernoulli
// terms leave a remainder below 1e-18 there.  Smaller arguments are shifted
// up through the recurrence ln G(z) = ln G(z+1) - ln z.
inline constexpr double stirling_coef[8] = {
    1.0 / 12.0,       -1.0 / 360.0,      1.0 / 1260.0, -1.0 / 1680.0,
    1.0 / 1188.0, -691.0 / 360360.0, 1.0 / 156.0,  -3617.0 / 122400.0};

inline constexpr double half_log_two_pi = 0.91893853320467274178;

template <class T>
T stirling_log_gamma(T z) {
    const T zi = 1.0 / z;
    const T zi2 = zi * zi;
    T corr = 0.0;
    T p = zi;
    for (double c : stirling_coef) {
        corr += c * p;
        p *= zi2;
    }
    using std::log;
    return (z - 0.5) * log(z) - z + half_log_two_pi + corr;
}

inline std::complex<double> log_gamma_complex(std::complex<double> z);

// ln sin(pi z) without overflow for large |Im z|; imaginary part is only
// meaningful modulo 2*pi, which is fine for anything later exponentiated.
inline std::complex<double> log_sin_pi(std::complex<double> z) {
    const std::complex<double> i(0.0, 1.0);
    const std::complex<double> w = M_PI * z;
    if (z.imag() < 0.0)
        return -std::log(2.0 * i) + i * w + std::log(1.0 - std::exp(-2.0 * i * w));
    return -std::log(-2.0 * i) - i * w + std::log(1.0 - std::exp(2.0 * i * w));
}

inline std::complex<double> log_gamma_complex(std::complex<double> z) {
    if (z.real() < 0.5) {
        // reflection; rejects the poles at 0, -1, -2, ...
        const std::complex<double> s = log_sin_pi(z);
        if (!std::isfinite(s.real()))
            throw ConfigError("log_gamma: argument at or near a pole");
        return std::log(M_PI) - s - log_gamma_complex(1.0 - z);
    }
    std::complex<double> shift = 0.0;
    while (z.real() < 16.0) {
        shift += std::log(z);
        z += 1.0;
    }
    return stirling_log_gamma(z) - shift;
}

}  // namespace detail

// ln Gamma(x), x > 0.  Relative accuracy ~1e-14 across [1e-3, 1e6].
inline double log_gamma(double x, const EvalPolicy& = default_policy) {
    if (!(x > 0.0)) throw ConfigError("log_gamma: requires x > 0");
    double shift = 1.0;  // product of the recurrence factors; one log at the end
    while (x < 16.0) {
        shift *= x;
        x += 1.0;
    }
    return detail::stirling_log_gamma(x) - std::log(shift);
}

inline std::complex<double> log_gamma(std::complex<double> z,
                                      const EvalPolicy& = default_policy) {
    return detail::log_gamma_complex(z);
}

namespace detail {

// Ascending series for ln I_nu(z): terms are all positive, so the sum is run
// in linear space with periodic rescaling and only the prefactor
// (z/2)^nu / Gamma(nu+1) is kept in logs.  Valid for nu > -1, z > 0;
// intended for z below the asymptotic switchover.
inline double log_bessel_i_series(double nu, double z, const EvalPolicy& pol) {
    const double q = 0.25 * z * z;
    double term = 1.0;
    double sum = 1.0;
    double log_scale = 0.0;
    const int cap = std::max(pol.max_terms, 500);
    for (int k = 0; k < cap; ++k) {
        term *= q / ((k + 1.0) * (nu + k + 1.0));
        sum += term;
        if (term < 1e-17 * sum && (k + 1.0) * (k + 1.0) > q)
            return nu * std::log(0.5 * z) - log_gamma(nu + 1.0) + std::log(sum) +
                   log_scale;
        if (sum > 1e250) {
            sum *= 1e-250;
            term *= 1e-250;
            log_scale += 250.0 * std::log(10.0);
        }
    }
    throw NumericalError("log_bessel_i: series did not converge");
}

// Large-argument expansion ln I_nu(z) = z - ln(2 pi z)/2 + ln sum, with the
// usual alternating Poincare series.  Used for z >= 20*max(1,nu), where the
// terms fall below 1e-14 of the sum well before they turn divergent.
inline double log_bessel_i_asymptotic(double nu, double z) {
    const double mu = 4.0 * nu * nu;
    double term = 1.0;
    double sum = 1.0;
    double prev = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 40; ++k) {
        const double num = mu - (2.0 * k - 1.0) * (2.0 * k - 1.0);
        term *= -num / (8.0 * k * z);
        const double a = std::fabs(term);
        if (a >= prev) break;  // divergent tail reached; best truncation passed
        sum += term;
        prev = a;
        if (a < 1e-17 * std::fabs(sum)) break;
    }
    if (!(sum > 0.0))
        throw NumericalError("log_bessel_i: asymptotic sum lost positivity");
    return z - 0.5 * std::log(2.0 * M_PI * z) + std::log(sum);
}

// Internal entry allowing the nu in (-1, 0) needed by low-dimension
// transition densities; the public contract stays nu >= 0.
inline double log_bessel_i_any(double nu, double z, const EvalPolicy& pol) {
    if (!(nu > -1.0)) throw ConfigError("log_bessel_i: requires nu > -1");
    if (z < 0.0) throw ConfigError("log_bessel_i: requires z >= 0");
    if (z == 0.0) {
        if (nu == 0.0) return 0.0;
        return nu > 0.0 ? -std::numeric_limits<double>::infinity()
                        : std::numeric_limits<double>::infinity();
    }
    if (z < 20.0 * std::max(1.0, nu)) return log_bessel_i_series(nu, z, pol);
    return log_bessel_i_asymptotic(nu, z);
}

}  // namespace detail

// ln I_nu(z) for real order nu >= 0, z >= 0.
inline double bessel_i_log(double nu, double z,
                           const EvalPolicy& pol = default_policy) {
    if (!(nu >= 0.0)) throw ConfigError("bessel_i_log: requires nu >= 0");
    return detail::log_bessel_i_any(nu, z, pol);
}

// ln I_nu(z) for complex order (needed on Laplace-inversion contours), real
// argument z > 0.  Ascending series with periodic rescaling; the imaginary
// part of the result is reduced mod 2*pi by the final complex log, which is
// harmless downstream where only exp(result) enters.
inline std::complex<double> bessel_i_log(std::complex<double> nu, double z,
                                         const EvalPolicy& pol = default_policy) {
    if (!(z > 0.0)) throw ConfigError("bessel_i_log: requires z > 0");
    const double q = 0.25 * z * z;
    std::complex<double> term = 1.0;
    std::complex<double> sum = 1.0;
    double log_scale = 0.0;
    const int cap = std::max(pol.max_terms, 500);
    for (int k = 0; k < cap; ++k) {
        const std::complex<double> d = (k + 1.0) * (nu + (k + 1.0));
        if (std::abs(d) < 1e-12)
            throw NumericalError("bessel_i_log: order too close to a negative integer");
        term *= q / d;
        sum += term;
        if (std::abs(term) < 1e-17 * std::abs(sum) && (k + 1.0) * (k + 1.0) > q) {
            return nu * std::log(0.5 * z) - log_gamma(nu + 1.0) + std::log(sum) +
                   log_scale;
        }
        if (std::abs(sum) > 1e250) {
            sum *= 1e-250;
            term *= 1e-250;
            log_scale += 250.0 * std::log(10.0);
        }
    }
    throw NumericalError("bessel_i_log: complex-order series did not converge");
}

// Kummer's 1F1(a; c; z) by direct series with compensated summation.
// Intended range |z| <= a few hundred; c must not be a nonpositive integer.
inline double hyp1f1(double a, double c, double z,
                     const EvalPolicy& pol = default_policy) {
    if (c <= 0.0 && c == std::floor(c))
        throw ConfigError("hyp1f1: c must not be a nonpositive integer");
    double term = 1.0;
    double sum = 1.0;
    double comp = 0.0;  // Kahan carry
    const int cap = std::max(pol.max_terms, 2000);
    for (int k = 0; k < cap; ++k) {
        term *= (a + k) * z / ((c + k) * (k + 1.0));
        const double y = term - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        if (std::fabs(term) < pol.rel_tol * std::fabs(sum) && k > std::fabs(z))
            return sum;
    }
    throw NumericalError("hyp1f1: series did not converge");
}

// Whittaker M_{k,m}(z) = exp(-z/2) z^{m+1/2} 1F1(m-k+1/2; 1+2m; z).
inline double whittaker_m(double k, double m, double z,
                          const EvalPolicy& pol = default_policy) {
    if (!(z > 0.0)) throw ConfigError("whittaker_m: requires z > 0");
    const double f = hyp1f1(m - k + 0.5, 1.0 + 2.0 * m, z, pol);
    return std::exp(-0.5 * z + (m + 0.5) * std::log(z)) * f;
}

// Noncentral chi-square density with df degrees of freedom and noncentrality
// lambda, as a log-space Poisson mixture of central chi-square densities.
// The mixture terms are unimodal in the Poisson index, so truncation waits
// for the decreasing tail.
inline double ncx2_pdf(double x, double df, double lambda,
                       const EvalPolicy& pol = default_policy) {
    if (!(df > 0.0)) throw ConfigError("ncx2_pdf: requires df > 0");
    if (lambda < 0.0) throw ConfigError("ncx2_pdf: requires lambda >= 0");
    if (x < 0.0) return 0.0;
    auto log_central = [&](double k) {
        return (0.5 * k - 1.0) * std::log(x) - 0.5 * x - 0.5 * k * std::log(2.0) -
               log_gamma(0.5 * k);
    };
    if (x == 0.0) {
        if (df < 2.0) return std::numeric_limits<double>::infinity();
        if (df == 2.0) return 0.5 * std::exp(-0.5 * lambda);
        return 0.0;
    }
    if (lambda == 0.0) return std::exp(log_central(df));
    const double llh = std::log(0.5 * lambda);
    auto log_term = [&](long j) {
        return -0.5 * lambda + j * llh - log_gamma(j + 1.0) + log_central(df + 2.0 * j);
    };
    // The terms are unimodal in j with mode near sqrt(lambda*x)/2; summing
    // outward from there keeps the term count O(mode width) even deep in the
    // tails, and makes both walks monotone decreasing.
    const long j0 = std::max(0L, static_cast<long>((std::sqrt(lambda * x) - df) * 0.5));
    const double m = log_term(j0);
    if (m < -745.0) return 0.0;  // whole mixture underflows
    const double cut = std::log(pol.rel_tol);
    double s = 1.0;
    for (long j = j0 - 1; j >= 0; --j) {
        const double d = log_term(j) - m;
        s += std::exp(d);
        if (d < cut) break;
    }
    for (long j = j0 + 1; j < j0 + 1 + pol.max_terms; ++j) {
        const double d = log_term(j) - m;
        s += std::exp(d);
        if (d < cut) return std::exp(m) * s;
    }
    throw NumericalError("ncx2_pdf: mixture did not converge within max_terms");
}

}  // namespace gopmc
