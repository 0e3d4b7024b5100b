#pragma once

// Squared Bessel and square-root transition machinery, and the
// growth-optimal index dynamics built on them: the index is a time-changed squared
// Bessel process of dimension four, with operational time driven by an
// exponentially growing scaling function.

#include <cmath>
#include <vector>

#include "gopmc/base.hpp"
#include "gopmc/rng.hpp"
#include "gopmc/specfun.hpp"

namespace gopmc {

namespace detail {

// expm1(w)/w with the w -> 0 limit; exact for tiny arguments
inline double expm1_over(double w) { return w == 0.0 ? 1.0 : std::expm1(w) / w; }

}  // namespace detail

// Minimal market model of the index: S(t) = exp(r t) * X(phi(t)) where X is
// a squared Bessel process of dimension 4 started at sbar0, and
// phi(t) = phi0 + alpha0 (e^{eta t} - 1) / (4 eta).
struct MmmParams {
    double s0 = 1.0;      // initial index level (savings account normalized to 1)
    double alpha0 = 0.05; // initial scaling level
    double eta = 0.05;    // net growth rate of the scaling function
    double r = 0.03;      // short rate
    double phi0 = 0.0;    // operational time origin

    void validate() const {
        if (!(s0 > 0.0)) throw ConfigError("MmmParams: requires s0 > 0");
        if (!(alpha0 > 0.0)) throw ConfigError("MmmParams: requires alpha0 > 0");
        if (!(eta > 0.0)) throw ConfigError("MmmParams: requires eta > 0");
    }
    double sbar0() const { return s0; }          // discounted index at time 0
    double alpha(double t) const { return alpha0 * std::exp(eta * t); }
    // Normalized index Y = (discounted index) / alpha; the scale-free
    // square-root diffusion dY = (1 - eta Y) dt + sqrt(Y) dW.
    double y0() const { return s0 / alpha0; }
};

struct BesqParams {
    double delta = 4.0;  // dimension
    double x0 = 1.0;

    void validate() const {
        if (!(delta > 0.0)) throw ConfigError("BesqParams: requires delta > 0");
        if (x0 < 0.0) throw ConfigError("BesqParams: requires x0 >= 0");
    }
};

// dY = (a - b Y) dt + sigma sqrt(Y) dW
struct SquareRootParams {
    double a = 1.0;
    double b = 0.05;
    double sigma = 1.0;
    double y0 = 1.0;

    void validate() const {
        if (a < 0.0) throw ConfigError("SquareRootParams: requires a >= 0");
        if (!(sigma > 0.0)) throw ConfigError("SquareRootParams: requires sigma > 0");
        if (y0 < 0.0) throw ConfigError("SquareRootParams: requires y0 >= 0");
    }
};

// Operational time phi(t).
inline double phi_time(const MmmParams& p, double t) {
    p.validate();
    return p.phi0 + 0.25 * p.alpha0 * t * detail::expm1_over(p.eta * t);
}

// ln p(t, x, y) for the squared Bessel transition of dimension delta:
//   p = (1/2t) (y/x)^{nu/2} I_nu(sqrt(x y)/t) exp(-(x+y)/2t),  nu = delta/2 - 1,
// with the x = 0 gamma limit  y^{delta/2-1} e^{-y/2t} / ((2t)^{delta/2} G(delta/2)).
inline double besq_log_density(double t, double x, double y, double delta,
                               const EvalPolicy& pol = default_policy) {
    if (!(t > 0.0)) throw ConfigError("besq_density: requires t > 0");
    if (!(delta > 0.0)) throw ConfigError("besq_density: requires delta > 0");
    if (x < 0.0) throw ConfigError("besq_density: requires x >= 0");
    if (!(y > 0.0)) throw ConfigError("besq_density: requires y > 0");
    const double nu = 0.5 * delta - 1.0;
    if (x == 0.0) {
        return (0.5 * delta - 1.0) * std::log(y) - 0.5 * y / t -
               0.5 * delta * std::log(2.0 * t) - log_gamma(0.5 * delta);
    }
    return -std::log(2.0 * t) + 0.5 * nu * (std::log(y) - std::log(x)) +
           detail::log_bessel_i_any(nu, std::sqrt(x * y) / t, pol) -
           0.5 * (x + y) / t;
}

inline double besq_density(double t, double x, double y, double delta,
                           const EvalPolicy& pol = default_policy) {
    return std::exp(besq_log_density(t, x, y, delta, pol));
}

// E[exp(-lambda X_t) | X_0 = x] = exp(-x lambda/(1+2 lambda t)) (1+2 lambda t)^{-delta/2}
inline double besq_laplace(double x, double t, double lambda, double delta) {
    if (!(t > 0.0) || !(delta > 0.0) || x < 0.0 || lambda < 0.0)
        throw ConfigError("besq_laplace: bad arguments");
    const double den = 1.0 + 2.0 * lambda * t;
    return std::exp(-x * lambda / den - 0.5 * delta * std::log1p(2.0 * lambda * t));
}

// One exact transition over dt: X' = dt * ncx2(delta, x/dt).
inline double besq_sample_transition(RngStream& g, double x, double delta, double dt) {
    if (!(dt > 0.0)) throw ConfigError("besq_sample_transition: requires dt > 0");
    if (!(delta > 0.0) || x < 0.0)
        throw ConfigError("besq_sample_transition: bad parameters");
    return dt * sample_ncx2(g, delta, x / dt);
}

// Exact square-root transition: Y' = c * ncx2(4a/sigma^2, y e^{-b dt} / c)
// with c = sigma^2 (1 - e^{-b dt}) / (4b); the b -> 0 limit is taken through
// expm1 so tiny mean reversion is handled exactly.
inline double cir_sample_transition(RngStream& g, const SquareRootParams& p, double y,
                                    double dt) {
    p.validate();
    if (!(dt > 0.0)) throw ConfigError("cir_sample_transition: requires dt > 0");
    if (y < 0.0) throw ConfigError("cir_sample_transition: requires y >= 0");
    const double c = 0.25 * p.sigma * p.sigma * dt * detail::expm1_over(-p.b * dt);
    const double df = 4.0 * p.a / (p.sigma * p.sigma);
    const double lambda = y * std::exp(-p.b * dt) / c;
    return c * sample_ncx2(g, df, lambda);
}

inline double cir_mean(const SquareRootParams& p, double y, double dt) {
    return y * std::exp(-p.b * dt) + p.a * dt * detail::expm1_over(-p.b * dt);
}

inline double cir_variance(const SquareRootParams& p, double y, double dt) {
    const double s2 = p.sigma * p.sigma;
    const double g = dt * detail::expm1_over(-p.b * dt);  // (1 - e^{-b dt}) / b
    return y * s2 * std::exp(-p.b * dt) * g + 0.5 * p.a * s2 * g * g;
}

// Exact transition density over dt from y0, i.e. the law sampled by
// cir_sample_transition: a scaled noncentral chi-square with
// df = 4a/sigma^2 and noncentrality y0 e^{-b dt} / c.
inline double cir_density(const SquareRootParams& p, double y0, double dt, double y,
                          const EvalPolicy& pol = default_policy) {
    p.validate();
    if (!(dt > 0.0)) throw ConfigError("cir_density: requires dt > 0");
    if (y0 < 0.0) throw ConfigError("cir_density: requires y0 >= 0");
    const double c = 0.25 * p.sigma * p.sigma * dt * detail::expm1_over(-p.b * dt);
    const double df = 4.0 * p.a / (p.sigma * p.sigma);
    const double lambda = y0 * std::exp(-p.b * dt) / c;
    return ncx2_pdf(y / c, df, lambda, pol) / c;
}

// Full-truncation Euler step: drift and diffusion both see y clamped at 0.
inline double cir_euler_step(RngStream& g, const SquareRootParams& p, double y,
                             double dt) {
    if (!(dt > 0.0)) throw ConfigError("cir_euler_step: requires dt > 0");
    const double yp = std::max(y, 0.0);
    return y + (p.a - p.b * yp) * dt +
           p.sigma * std::sqrt(yp) * std::sqrt(dt) * sample_normal(g);
}

// Exact index path at the given (nondecreasing, nonnegative) times: the
// discounted index is advanced by exact transitions in operational time and
// scaled back by the savings account.
inline std::vector<double> mmm_gop_path(RngStream& g, const MmmParams& p,
                                        const std::vector<double>& times) {
    p.validate();
    if (times.empty()) throw ConfigError("mmm_gop_path: empty time grid");
    std::vector<double> s;
    s.reserve(times.size());
    double x = p.sbar0();
    double prev_t = 0.0;
    double prev_phi = phi_time(p, 0.0);
    for (double t : times) {
        if (t < prev_t) throw ConfigError("mmm_gop_path: times must be nondecreasing");
        if (t < 0.0) throw ConfigError("mmm_gop_path: times must be nonnegative");
        const double ph = phi_time(p, t);
        if (ph > prev_phi) x = besq_sample_transition(g, x, 4.0, ph - prev_phi);
        prev_phi = ph;
        prev_t = t;
        s.push_back(std::exp(p.r * t) * x);
    }
    return s;
}

}  // namespace gopmc
