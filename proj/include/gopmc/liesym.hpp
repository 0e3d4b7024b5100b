#pragma once

// Symmetry machinery for the linear PDE
//
//     u_t = b x^gamma u_xx + f(x) u_x - g(x) u ,   x > 0, b > 0,
//
// written throughout in terms of h(x) = x^{1-gamma} f(x):
//  - the three drift conditions under which the PDE admits a nontrivial
//    one-parameter symmetry group, as residual checks and as a classifier
//    that fits the free constants by linear least squares;
//  - the first-family symmetry transform, whose action on a stationary
//    solution produces Laplace-type transforms of the fundamental solution;
//  - the joint transform of a square-root process Y and its integrated
//    inverse int_0^T dt/Y_t: a Bessel-type kernel in the terminal level
//    whose order carries the transform variable of the time integral, plus
//    its fully closed form;
//  - numerical inversion of that transform (fixed-Talbot contour, with a
//    Bromwich-line Euler-accelerated alternative) onto a density grid.
//
// Everything here is pure; grid construction parallelizes over rows with
// deterministic output for any worker count.

#include <gopmc/base.hpp>
#include <gopmc/parallel.hpp>
#include <gopmc/processes.hpp>
#include <gopmc/quadrature.hpp>
#include <gopmc/specfun.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace gopmc {

// The gamma = 2 family needs a different symmetry construction entirely and
// is rejected up front with its own error type.
class GammaTwoError : public ConfigError {
  public:
    explicit GammaTwoError(const std::string& msg) : ConfigError(msg) {}
};

// The Cauchy-problem quadruple (gamma, b, f, g).  g defaults to zero; f' is
// optional and falls back to central differences with a relative step.
struct DriftProblem {
    double gamma = 1.0;
    double b = 1.0;
    std::function<double(double)> f;
    std::function<double(double)> g;        // empty means identically zero
    std::function<double(double)> f_prime;  // empty means central differences

    void validate() const {
        if (!(b > 0.0)) throw ConfigError("DriftProblem: requires b > 0");
        if (!f) throw ConfigError("DriftProblem: drift handle f is required");
        if (gamma == 2.0)
            throw GammaTwoError(
                "DriftProblem: the gamma = 2 family is outside this construction");
    }

    double potential(double x) const { return g ? g(x) : 0.0; }

    double drift_derivative(double x) const {
        if (f_prime) return f_prime(x);
        const double s = std::min(1e-6 * std::max(1.0, x), 0.5 * x);
        return (f(x + s) - f(x - s)) / (2.0 * s);
    }

    double h(double x) const { return std::pow(x, 1.0 - gamma) * f(x); }

    double h_prime(double x) const {
        return (1.0 - gamma) * std::pow(x, -gamma) * f(x) +
               std::pow(x, 1.0 - gamma) * drift_derivative(x);
    }

    // Left side shared by all three drift conditions:
    //   b x h' - b h + h^2/2 + 2 b x^{2-gamma} g(x).
    double drift_lhs(double x) const {
        if (!(x > 0.0)) throw ConfigError("DriftProblem: requires x > 0");
        const double hx = h(x);
        return b * x * h_prime(x) - b * hx + 0.5 * hx * hx +
               2.0 * b * std::pow(x, 2.0 - gamma) * potential(x);
    }
};

struct DriftConstants {
    double A = 0.0;
    double B = 0.0;
    double C = 0.0;
};

namespace detail {

// Right side of drift condition `case_id` split into the basis multiplying
// (A, B, C) plus a constant offset; unused trailing entries are zero.
struct RicattiBasis {
    std::array<double, 3> column{};
    int n_constants = 0;
    double offset = 0.0;
};

inline RicattiBasis ricatti_basis(int case_id, const DriftProblem& p, double x) {
    const double tg = 2.0 - p.gamma;
    RicattiBasis out;
    switch (case_id) {
        case 1:
            out.column = {2.0 * p.b * std::pow(x, tg), 1.0, 0.0};
            out.n_constants = 2;
            break;
        case 2:
            out.column = {std::pow(x, 2.0 * tg) / (2.0 * tg * tg),
                          std::pow(x, tg) / tg, 1.0};
            out.n_constants = 3;
            break;
        case 3: {
            const double e2 = 3.0 - 1.5 * p.gamma;
            const double kappa = 0.125 * p.gamma * (p.gamma - 4.0) * p.b * p.b;
            out.column = {std::pow(x, 2.0 * tg) / (2.0 * tg * tg),
                          std::pow(x, e2) / e2, std::pow(x, tg) / tg};
            out.n_constants = 3;
            out.offset = -kappa;
            break;
        }
        default:
            throw ConfigError("ricatti_basis: case must be 1, 2 or 3");
    }
    return out;
}

}  // namespace detail

// Signed residual (left minus right side) of the selected drift condition.
inline double ricatti_residual(int case_id, const DriftProblem& p,
                               const DriftConstants& consts, double x) {
    p.validate();
    if (!(x > 0.0)) throw ConfigError("ricatti_residual: requires x > 0");
    const auto basis = detail::ricatti_basis(case_id, p, x);
    const double rhs = consts.A * basis.column[0] + consts.B * basis.column[1] +
                       consts.C * basis.column[2] + basis.offset;
    return p.drift_lhs(x) - rhs;
}

struct CaseFit {
    DriftConstants constants;
    double residual_sup = std::numeric_limits<double>::infinity();
};

struct ClassifyResult {
    std::optional<int> case_id;  // empty: no family matches on the grid
    DriftConstants constants;    // of the matched family
    double residual_sup = std::numeric_limits<double>::infinity();
    std::array<CaseFit, 3> fits{};  // per-family fit details, index = family - 1
};

// Fit the free constants of each drift condition by linear least squares
// over the grid (they enter the right sides linearly) and report the first
// family whose residual sup-norm is below 1e-6 * (1 + sup |lhs|).
inline ClassifyResult classify_drift(const DriftProblem& p,
                                     const std::vector<double>& x_grid) {
    p.validate();
    if (x_grid.size() < 8)
        throw ConfigError("classify_drift: needs at least 8 grid points");
    for (double x : x_grid)
        if (!(x > 0.0)) throw ConfigError("classify_drift: grid must be positive");

    const auto n = static_cast<Eigen::Index>(x_grid.size());
    Eigen::VectorXd lhs(n);
    double sup_lhs = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        lhs[i] = p.drift_lhs(x_grid[static_cast<std::size_t>(i)]);
        sup_lhs = std::max(sup_lhs, std::fabs(lhs[i]));
    }
    const double tol = 1e-6 * (1.0 + sup_lhs);

    ClassifyResult out;
    for (int case_id = 1; case_id <= 3; ++case_id) {
        const int m =
            detail::ricatti_basis(case_id, p, x_grid.front()).n_constants;
        Eigen::MatrixXd design(n, m);
        Eigen::VectorXd target(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto basis =
                detail::ricatti_basis(case_id, p, x_grid[static_cast<std::size_t>(i)]);
            for (int j = 0; j < m; ++j) design(i, j) = basis.column[static_cast<std::size_t>(j)];
            target[i] = lhs[i] - basis.offset;
        }
        const Eigen::VectorXd w = design.colPivHouseholderQr().solve(target);
        double sup_res = (design * w - target).cwiseAbs().maxCoeff();

        CaseFit& fit = out.fits[static_cast<std::size_t>(case_id - 1)];
        fit.constants.A = w[0];
        fit.constants.B = m > 1 ? w[1] : 0.0;
        fit.constants.C = m > 2 ? w[2] : 0.0;
        fit.residual_sup = sup_res;
        if (!out.case_id && sup_res < tol) {
            out.case_id = case_id;
            out.constants = fit.constants;
            out.residual_sup = sup_res;
        }
    }
    return out;
}

// Data of the first-family symmetry: the drift-condition constants and the
// antiderivative F with F'(x) = f(x)/x^gamma.  Only differences of F enter
// the transform, so the quadrature base point is immaterial.
struct SymmetryCase1 {
    double A = 0.0;
    double B = 0.0;
    std::function<double(double)> F;  // empty: built by quadrature from x = 1
};

inline SymmetryCase1 make_symmetry_case1(const DriftProblem& p, double A = 0.0,
                                         double B = 0.0) {
    p.validate();
    SymmetryCase1 s;
    s.A = A;
    s.B = B;
    const double gamma = p.gamma;
    const auto f = p.f;
    s.F = [gamma, f](double x) {
        if (!(x > 0.0)) throw ConfigError("SymmetryCase1: F requires x > 0");
        auto integrand = [&](double u) { return f(u) / std::pow(u, gamma); };
        if (x >= 1.0) return integrate(integrand, 1.0, x);
        return -integrate(integrand, x, 1.0);
    };
    return s;
}

// Action of the first-family symmetry with group parameter eps on a solution
// u of the PDE:
//
//   (1+4 eps t)^{-(1-gamma)/(2-gamma)}
//     * exp{ -4 eps (x^{2-gamma} + A b (2-gamma)^2 t^2)
//            / (b (2-gamma)^2 (1+4 eps t)) }
//     * exp{ (F(x~) - F(x)) / (2b) }
//     * u(x~, t/(1+4 eps t)),     x~ = x (1+4 eps t)^{-2/(2-gamma)}.
inline double case1_symmetry(const DriftProblem& p, const SymmetryCase1& s,
                             const std::function<double(double, double)>& u,
                             double eps, double x, double t) {
    p.validate();
    if (!(x > 0.0)) throw ConfigError("case1_symmetry: requires x > 0");
    if (t < 0.0) throw ConfigError("case1_symmetry: requires t >= 0");
    if (!u) throw ConfigError("case1_symmetry: solution handle is required");
    const double jac = 1.0 + 4.0 * eps * t;
    if (!(jac > 0.0))
        throw std::domain_error("case1_symmetry: requires 1 + 4 eps t > 0");
    const auto& F = s.F ? s.F : make_symmetry_case1(p, s.A, s.B).F;
    const double tg = 2.0 - p.gamma;
    const double xt = x * std::pow(jac, -2.0 / tg);
    const double lead = std::pow(jac, -(1.0 - p.gamma) / tg);
    const double expo = -4.0 * eps *
                        (std::pow(x, tg) + s.A * p.b * tg * tg * t * t) /
                        (p.b * tg * tg * jac);
    const double gauge = (F(xt) - F(x)) / (2.0 * p.b);
    return lead * std::exp(expo + gauge) * u(xt, t / jac);
}

// The symmetry multiplier evaluated at eps = b (2-gamma)^2 lambda / 4: acting
// on a stationary solution u0 it equals the transform
// int_0^inf exp(-lambda y^{2-gamma}) u0(y) p(t, x, y) dy of the fundamental
// solution p.
inline double case1_u_lambda(const DriftProblem& p, const SymmetryCase1& s,
                             const std::function<double(double, double)>& u,
                             double lambda, double x, double t) {
    const double tg = 2.0 - p.gamma;
    return case1_symmetry(p, s, u, 0.25 * p.b * tg * tg * lambda, x, t);
}

// ---------------------------------------------------------------------------
// Joint transform of (Y_T, int_0^T dt/Y_t) for dY = (1 - eta Y) dt + sqrt(Y) dW.
//
// The mu-transform of the time integral, jointly with the terminal level y,
// is a Bessel-type kernel in which mu enters only through the order
// nu = sqrt(1 + 8 mu).  With
//     t* = (e^{eta T} - 1)/(4 eta),   y~ = y e^{eta T},
// the kernel equals
//     e^{eta T} (1/2t*) (y~/x)^{1/2} I_nu(sqrt(x y~)/t*) e^{-(x+y~)/(2t*)},
// a scaled squared-Bessel transition form that evaluates stably in log space;
// joint_kernel_mu_literal evaluates the algebraically identical hyperbolic
// form (prefactor eta/sinh(eta T/2), exponent
// eta(T + x - y - (x+y)/tanh(eta T/2)), argument 2 eta sqrt(xy)/sinh(eta T/2))
// exactly as a cross-check of the printed constants.
// ---------------------------------------------------------------------------

// Everything about the kernel except the Bessel order, frozen for one (x,T,y).
struct KernelSection {
    double log_pref = 0.0;  // log of the order-independent factor
    double z = 0.0;         // Bessel argument
};

inline KernelSection joint_kernel_section(double x, double T, double y, double eta) {
    if (!(x > 0.0) || !(T > 0.0) || !(y > 0.0) || !(eta > 0.0))
        throw ConfigError("joint_kernel_section: requires x, T, y, eta > 0");
    const double tstar = 0.25 * std::expm1(eta * T) / eta;
    const double yt = y * std::exp(eta * T);
    KernelSection sec;
    sec.log_pref = eta * T - std::log(2.0 * tstar) +
                   0.5 * (std::log(yt) - std::log(x)) - 0.5 * (x + yt) / tstar;
    sec.z = std::sqrt(x * yt) / tstar;
    return sec;
}

// log of the kernel at complex order argument; callers on inversion contours
// must add the exponential damping to this before exponentiating, because at
// large imaginary order the kernel value alone overflows the double range
// (1/|Gamma(1 + i a)| grows like e^{pi a / 2}).
inline std::complex<double> log_joint_kernel_at(const KernelSection& sec,
                                                std::complex<double> mu,
                                                const EvalPolicy& pol = default_policy) {
    const std::complex<double> nu = std::sqrt(1.0 + 8.0 * mu);
    return sec.log_pref + bessel_i_log(nu, sec.z, pol);
}

inline std::complex<double> joint_kernel_at(const KernelSection& sec,
                                            std::complex<double> mu,
                                            const EvalPolicy& pol = default_policy) {
    return std::exp(log_joint_kernel_at(sec, mu, pol));
}

inline double joint_kernel_mu(double x, double T, double y, double mu, double eta,
                              const EvalPolicy& pol = default_policy) {
    if (mu < 0.0) throw ConfigError("joint_kernel_mu: requires mu >= 0");
    const auto sec = joint_kernel_section(x, T, y, eta);
    const double nu = std::sqrt(1.0 + 8.0 * mu);
    return std::exp(sec.log_pref + bessel_i_log(nu, sec.z, pol));
}

// The same kernel with prefactor and exponent evaluated in their hyperbolic
// form, term by term as printed.
inline double joint_kernel_mu_literal(double x, double T, double y, double mu,
                                      double eta,
                                      const EvalPolicy& pol = default_policy) {
    if (!(x > 0.0) || !(T > 0.0) || !(y > 0.0) || !(eta > 0.0))
        throw ConfigError("joint_kernel_mu_literal: requires x, T, y, eta > 0");
    if (mu < 0.0) throw ConfigError("joint_kernel_mu_literal: requires mu >= 0");
    const double nu = std::sqrt(1.0 + 8.0 * mu);
    const double sh = std::sinh(0.5 * eta * T);
    const double th = std::tanh(0.5 * eta * T);
    const double log_term = std::log(eta / sh) + 0.5 * (std::log(y) - std::log(x)) +
                            eta * (T + x - y - (x + y) / th) +
                            bessel_i_log(nu, 2.0 * eta * std::sqrt(x * y) / sh, pol);
    return std::exp(log_term);
}

// E[exp(-lambda Y_T - mu int_0^T dt/Y_t)], computed by integrating
// exp(-lambda y) against the kernel over the terminal level.
inline double joint_laplace(double x, double T, double lambda, double mu,
                            double eta, const EvalPolicy& pol = default_policy) {
    if (lambda < 0.0) throw ConfigError("joint_laplace: requires lambda >= 0");
    if (mu < 0.0) throw ConfigError("joint_laplace: requires mu >= 0");
    if (!(x > 0.0) || !(T > 0.0) || !(eta > 0.0))
        throw ConfigError("joint_laplace: requires x, T, eta > 0");
    const double nu = std::sqrt(1.0 + 8.0 * mu);
    const double tstar = 0.25 * std::expm1(eta * T) / eta;
    const double scale = std::exp(eta * T);
    auto integrand = [&](double y) {
        if (y <= 0.0) return 0.0;
        const double yt = y * scale;
        const double lg = eta * T - std::log(2.0 * tstar) +
                          0.5 * (std::log(yt) - std::log(x)) -
                          0.5 * (x + yt) / tstar +
                          bessel_i_log(nu, std::sqrt(x * yt) / tstar, pol) -
                          lambda * y;
        return std::exp(lg);
    };
    return integrate_zero_inf(integrand, 1e-11);
}

// Closed form of the same transform.  This is the confluent-hypergeometric
// expansion of the Whittaker-function expression with first index -1: with
//     c = x/(4 t*^2),   q = lambda e^{-eta T} + 1/(2 t*),
// the vertical-line constants alpha = eta(1 + coth(eta T/2)) + lambda and
// beta = eta sqrt{x}/sinh(eta T/2) collapse via alpha = e^{eta T} q and
// beta^2/alpha = c/q, leaving
//     (1/2t*) x^{-1/2} e^{-x/2t*} c^{nu/2} q^{-(nu+3)/2}
//       * Gamma((nu+3)/2)/Gamma(nu+1) * 1F1((nu+3)/2; nu+1; c/q).
inline double joint_laplace_closed(double x, double T, double lambda, double mu,
                                   double eta,
                                   const EvalPolicy& pol = default_policy) {
    if (lambda < 0.0) throw ConfigError("joint_laplace_closed: requires lambda >= 0");
    if (mu < 0.0) throw ConfigError("joint_laplace_closed: requires mu >= 0");
    if (!(x > 0.0) || !(T > 0.0) || !(eta > 0.0))
        throw ConfigError("joint_laplace_closed: requires x, T, eta > 0");
    const double nu = std::sqrt(1.0 + 8.0 * mu);
    const double tstar = 0.25 * std::expm1(eta * T) / eta;
    const double c = 0.25 * x / (tstar * tstar);
    const double q = lambda * std::exp(-eta * T) + 0.5 / tstar;
    const double lg = -std::log(2.0 * tstar) - 0.5 * std::log(x) -
                      0.5 * x / tstar + 0.5 * nu * std::log(c) -
                      0.5 * (nu + 3.0) * std::log(q) +
                      log_gamma(0.5 * (nu + 3.0)) - log_gamma(nu + 1.0) +
                      std::log(hyp1f1(0.5 * (nu + 3.0), nu + 1.0, c / q, pol));
    return std::exp(lg);
}

// ---------------------------------------------------------------------------
// Numerical Laplace inversion.
// ---------------------------------------------------------------------------

enum class InversionMethod { talbot, euler_abate_whitt };

struct InversionConfig {
    InversionMethod method = InversionMethod::talbot;
    int nodes = 32;        // Talbot contour size M
    double scaling = 0.0;  // 0: per-method default (Talbot r = 0.4 M/v; line A = 18.4)
    double rel_tol = 1e-8;
    int euler_m = 11;  // binomial-averaging width
    int euler_n = 15;  // plain partial sums before averaging

    void validate() const {
        if (nodes < 8) throw ConfigError("InversionConfig: requires nodes >= 8");
        if (euler_m < 1 || euler_n < 1)
            throw ConfigError("InversionConfig: requires euler_m, euler_n >= 1");
        if (scaling < 0.0) throw ConfigError("InversionConfig: requires scaling >= 0");
    }
};

// Fixed-Talbot inversion at argument v with M nodes: the contour
// s(theta) = r theta (cot theta + i), theta_k = k pi / M, r = 0.4 M / v,
// with trapezoidal weights 1 + i sigma(theta),
// sigma = theta + (theta cot theta - 1) cot theta.
//
// The core works from log F so that the transform value and the e^{sv}
// damping combine inside a single exponential: transforms of Bessel type
// overflow the double range on their own far out on the contour while the
// damped product stays tiny.
template <class LF>
double talbot_invert_log(LF&& log_fhat, double v, int M, double scaling = 0.0) {
    if (!(v > 0.0)) throw ConfigError("talbot_invert: requires v > 0");
    if (M < 2) throw ConfigError("talbot_invert: requires M >= 2");
    const double r = (scaling > 0.0 ? scaling : 0.4) * M / v;
    double sum =
        0.5 * std::real(std::exp(log_fhat(std::complex<double>(r, 0.0)) + r * v));
    constexpr double pi = 3.14159265358979323846;
    for (int k = 1; k < M; ++k) {
        const double th = k * pi / M;
        const double cot = std::cos(th) / std::sin(th);
        const std::complex<double> s(r * th * cot, r * th);
        const double sigma = th + (th * cot - 1.0) * cot;
        const std::complex<double> weight(1.0, sigma);
        sum += std::real(std::exp(log_fhat(s) + s * v) * weight);
    }
    return sum * r / M;
}

template <class F>
double talbot_invert(F&& fhat, double v, int M, double scaling = 0.0) {
    return talbot_invert_log(
        [&fhat](std::complex<double> s) { return std::log(fhat(s)); }, v, M,
        scaling);
}

namespace detail {

inline double binomial(int n, int k) {
    return std::exp(log_gamma(n + 1.0) - log_gamma(k + 1.0) -
                    log_gamma(n - k + 1.0));
}

}  // namespace detail

// Bromwich-line inversion with alternating-series (Euler binomial)
// acceleration: nodes s_k = (A + 2 k pi i)/(2v) on Re s = A/(2v), where
// e^{s_k v} = e^{A/2} (-1)^k supplies the alternation; the last m partial
// sums beyond the first n are binomially averaged.
template <class LF>
double euler_invert_log(LF&& log_fhat, double v, int euler_m = 11,
                        int euler_n = 15, double A = 18.4) {
    if (!(v > 0.0)) throw ConfigError("euler_invert: requires v > 0");
    if (euler_m < 1 || euler_n < 1)
        throw ConfigError("euler_invert: requires euler_m, euler_n >= 1");
    const double x0 = 0.5 * A / v;
    constexpr double pi = 3.14159265358979323846;
    const int total = euler_n + euler_m;
    std::vector<double> partial(static_cast<std::size_t>(total) + 1);
    double acc =
        std::real(std::exp(log_fhat(std::complex<double>(x0, 0.0)) + 0.5 * A));
    partial[0] = acc / (2.0 * v);
    for (int k = 1; k <= total; ++k) {
        const std::complex<double> s(x0, k * pi / v);
        acc += 2.0 * std::real(std::exp(log_fhat(s) + s * v));
        partial[static_cast<std::size_t>(k)] = acc / (2.0 * v);
    }
    double out = 0.0;
    const double norm = std::pow(2.0, -euler_m);
    for (int j = 0; j <= euler_m; ++j)
        out += detail::binomial(euler_m, j) * norm *
               partial[static_cast<std::size_t>(euler_n + j)];
    return out;
}

template <class F>
double euler_invert(F&& fhat, double v, int euler_m = 11, int euler_n = 15,
                    double A = 18.4) {
    return euler_invert_log(
        [&fhat](std::complex<double> s) { return std::log(fhat(s)); }, v,
        euler_m, euler_n, A);
}

// Density of (Y_T, V_T = int_0^T dt/Y_t) tabulated on a rectangular grid,
// with trapezoidal quadrature weights along each axis.
struct JointDensityGrid {
    std::vector<double> y_grid;
    std::vector<double> v_grid;
    std::vector<double> y_weights;
    std::vector<double> v_weights;
    std::vector<double> values;  // row-major: values[iy * v_grid.size() + iv]
    double T = 0.0;
    double x = 0.0;
    double eta = 0.0;

    double at(std::size_t iy, std::size_t iv) const {
        return values[iy * v_grid.size() + iv];
    }

    double mass() const {
        double m = 0.0;
        for (std::size_t i = 0; i < y_grid.size(); ++i)
            for (std::size_t j = 0; j < v_grid.size(); ++j)
                m += y_weights[i] * v_weights[j] * at(i, j);
        return m;
    }

    // Marginal density of Y_T at row iy: the v-integral along that row.
    double y_marginal(std::size_t iy) const {
        double m = 0.0;
        for (std::size_t j = 0; j < v_grid.size(); ++j)
            m += v_weights[j] * at(iy, j);
        return m;
    }

    void save_csv(const std::string& path) const;
    void save(const std::string& json_path, const std::string& bin_path) const;
    static JointDensityGrid load(const std::string& json_path,
                                 const std::string& bin_path);
};

// Invert the kernel's order transform cellwise: for each terminal level y
// the map mu -> kernel(y; mu) is inverted at every v on the grid.  Each cell
// is computed at the configured node count and at double that count; the two
// must agree to 1e-4 relative or to 5e-5 of the grid peak absolute,
// whichever is weaker.  The absolute branch is the inverter's resolution:
// at arguments far below the support of the target density the contour
// sums return pure discretization noise (a few times 1e-6 of the peak at
// the default node count), so a purely relative gate would reject cells
// whose density is zero for every practical purpose.  Every reported value
// is therefore certified to 1e-4 relative or 5e-5 * peak absolute.
// Negatives beyond that same absolute band are rejected; smaller ones are
// clipped to zero.
inline JointDensityGrid invert_joint_density(double x, double T, double eta,
                                             const InversionConfig& cfg,
                                             const std::vector<double>& y_grid,
                                             const std::vector<double>& v_grid,
                                             int threads = 0) {
    cfg.validate();
    if (!(x > 0.0) || !(T > 0.0) || !(eta > 0.0))
        throw ConfigError("invert_joint_density: requires x, T, eta > 0");
    auto check_grid = [](const std::vector<double>& g, const char* name) {
        if (g.size() < 2)
            throw ConfigError(std::string("invert_joint_density: ") + name +
                              " needs at least 2 points");
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!(g[i] > 0.0))
                throw ConfigError(std::string("invert_joint_density: ") + name +
                                  " must be positive");
            if (i > 0 && !(g[i] > g[i - 1]))
                throw ConfigError(std::string("invert_joint_density: ") + name +
                                  " must be strictly increasing");
        }
    };
    check_grid(y_grid, "y_grid");
    check_grid(v_grid, "v_grid");

    JointDensityGrid grid;
    grid.y_grid = y_grid;
    grid.v_grid = v_grid;
    grid.y_weights = trapezoid_weights(y_grid);
    grid.v_weights = trapezoid_weights(v_grid);
    grid.T = T;
    grid.x = x;
    grid.eta = eta;
    const std::size_t ny = y_grid.size();
    const std::size_t nv = v_grid.size();
    std::vector<double> coarse(ny * nv);
    std::vector<double> fine(ny * nv);

    parallel_for_indexed(
        ny,
        [&](std::size_t iy) {
            const auto sec = joint_kernel_section(x, T, y_grid[iy], eta);
            auto lf = [&](std::complex<double> mu) {
                return log_joint_kernel_at(sec, mu);
            };
            for (std::size_t iv = 0; iv < nv; ++iv) {
                const double v = v_grid[iv];
                double a, b2;
                if (cfg.method == InversionMethod::talbot) {
                    // The Talbot damping factor e^{r v} multiplies roundoff
                    // as well as the contour sum, so the radius stops earning
                    // accuracy in double precision near r v ~ 14; cap it
                    // there.  The refinement pass reuses the coarse contour
                    // with doubled theta-sampling: discretization error drops
                    // geometrically while the roundoff envelope stays fixed,
                    // which keeps node-doubling a meaningful consistency
                    // probe at any configured node count.
                    const double s0 = cfg.scaling > 0.0 ? cfg.scaling : 0.4;
                    const double s_eff = std::min(s0, 14.0 / cfg.nodes);
                    a = talbot_invert_log(lf, v, cfg.nodes, s_eff);
                    b2 = talbot_invert_log(lf, v, 2 * cfg.nodes, 0.5 * s_eff);
                } else {
                    const double A = cfg.scaling > 0.0 ? cfg.scaling : 18.4;
                    a = euler_invert_log(lf, v, cfg.euler_m, cfg.euler_n, A);
                    b2 = euler_invert_log(lf, v, cfg.euler_m, 2 * cfg.euler_n, A);
                }
                coarse[iy * nv + iv] = a;
                fine[iy * nv + iv] = b2;
            }
        },
        threads);

    double peak = 0.0;
    for (double f : fine) peak = std::max(peak, std::fabs(f));
    if (!(peak > 0.0))
        throw NumericalError("invert_joint_density: inversion returned all zeros");
    grid.values.resize(ny * nv);
    const double abs_band = 5e-5 * peak;
    for (std::size_t idx = 0; idx < ny * nv; ++idx) {
        const double a = coarse[idx];
        const double b2 = fine[idx];
        const double gate = std::max(1e-4 * std::fabs(b2), abs_band);
        if (!(std::fabs(a - b2) <= gate)) {
            std::ostringstream msg;
            msg << "invert_joint_density: node-doubling disagreement "
                << std::fabs(a - b2) / std::max(std::fabs(b2), abs_band)
                << " at y=" << y_grid[idx / nv] << " v=" << v_grid[idx % nv];
            throw InversionDiagnosticError(msg.str());
        }
        double val = b2;
        if (val < 0.0) {
            if (-val < abs_band) {
                val = 0.0;
            } else {
                std::ostringstream msg;
                msg << "invert_joint_density: negative density " << val
                    << " beyond the noise floor at y=" << y_grid[idx / nv]
                    << " v=" << v_grid[idx % nv];
                throw InversionDiagnosticError(msg.str());
            }
        }
        grid.values[idx] = val;
    }
    return grid;
}

inline void JointDensityGrid::save_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("JointDensityGrid: cannot open " + path);
    out << "y,v,density,weight\n";
    char line[160];
    for (std::size_t i = 0; i < y_grid.size(); ++i) {
        for (std::size_t j = 0; j < v_grid.size(); ++j) {
            std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g\n",
                          y_grid[i], v_grid[j], at(i, j),
                          y_weights[i] * v_weights[j]);
            out << line;
        }
    }
    if (!out) throw NumericalError("JointDensityGrid: write failed for " + path);
}

inline void JointDensityGrid::save(const std::string& json_path,
                                   const std::string& bin_path) const {
    nlohmann::json header;
    header["T"] = T;
    header["x"] = x;
    header["eta"] = eta;
    header["y_grid"] = y_grid;
    header["v_grid"] = v_grid;
    header["y_weights"] = y_weights;
    header["v_weights"] = v_weights;
    header["shape"] = {y_grid.size(), v_grid.size()};
    header["dtype"] = "float64";
    header["order"] = "row-major";
    const auto slash = bin_path.find_last_of('/');
    header["values_file"] =
        slash == std::string::npos ? bin_path : bin_path.substr(slash + 1);
    std::ofstream jout(json_path);
    if (!jout) throw ConfigError("JointDensityGrid: cannot open " + json_path);
    jout << header.dump(2) << "\n";
    if (!jout) throw NumericalError("JointDensityGrid: write failed for " + json_path);

    std::ofstream bout(bin_path, std::ios::binary);
    if (!bout) throw ConfigError("JointDensityGrid: cannot open " + bin_path);
    bout.write(reinterpret_cast<const char*>(values.data()),
               static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!bout) throw NumericalError("JointDensityGrid: write failed for " + bin_path);
}

inline JointDensityGrid JointDensityGrid::load(const std::string& json_path,
                                               const std::string& bin_path) {
    std::ifstream jin(json_path);
    if (!jin) throw ConfigError("JointDensityGrid: cannot open " + json_path);
    nlohmann::json header;
    try {
        jin >> header;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("JointDensityGrid: bad header in " + json_path + ": " +
                          e.what());
    }
    JointDensityGrid grid;
    try {
        grid.T = header.at("T").get<double>();
        grid.x = header.at("x").get<double>();
        grid.eta = header.at("eta").get<double>();
        grid.y_grid = header.at("y_grid").get<std::vector<double>>();
        grid.v_grid = header.at("v_grid").get<std::vector<double>>();
        grid.y_weights = header.at("y_weights").get<std::vector<double>>();
        grid.v_weights = header.at("v_weights").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("JointDensityGrid: bad header in " + json_path + ": " +
                          e.what());
    }
    if (grid.y_weights.size() != grid.y_grid.size() ||
        grid.v_weights.size() != grid.v_grid.size())
        throw ConfigError("JointDensityGrid: weight/grid size mismatch in " +
                          json_path);
    const std::size_t n = grid.y_grid.size() * grid.v_grid.size();
    grid.values.resize(n);
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw ConfigError("JointDensityGrid: cannot open " + bin_path);
    bin.read(reinterpret_cast<char*>(grid.values.data()),
             static_cast<std::streamsize>(n * sizeof(double)));
    if (static_cast<std::size_t>(bin.gcount()) != n * sizeof(double))
        throw ConfigError("JointDensityGrid: " + bin_path +
                          " is shorter than the header's shape");
    return grid;
}

// Gaussian transform identity used as an inversion sanity anchor: for the
// heat flow with diffusion scale g the exponential moment of N(x, g^2 t)
// equals exp(a^2 g^2 t / 2 + a x).  Both sides are returned for assertion.
struct MgfCheck {
    double lhs = 0.0;
    double rhs = 0.0;
};

inline MgfCheck heat_mgf_check(double g, double a, double x, double t,
                               int nodes = 64) {
    if (!(g > 0.0)) throw ConfigError("heat_mgf_check: requires g > 0");
    if (t < 0.0) throw ConfigError("heat_mgf_check: requires t >= 0");
    if (nodes < 2) throw ConfigError("heat_mgf_check: requires nodes >= 2");
    const auto [u, w] = gauss_hermite(nodes);
    const double spread = g * std::sqrt(2.0 * t);
    constexpr double inv_sqrt_pi = 0.56418958354775628695;
    double lhs = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i)
        lhs += w[i] * std::exp(a * (x + spread * u[i]));
    lhs *= inv_sqrt_pi;
    const double rhs = std::exp(0.5 * a * a * g * g * t + a * x);
    return {lhs, rhs};
}

}  // namespace gopmc
