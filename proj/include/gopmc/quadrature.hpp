#pragma once

// Thin wrappers over adaptive Gauss-Kronrod / double-exponential rules plus
// Gauss-Hermite node generation (Golub-Welsch) and trapezoid weights for
// tabulated grids.

#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "gopmc/base.hpp"

namespace gopmc {

// Adaptive integral of f over [a, b].
template <class F>
double integrate(F&& f, double a, double b, double rel_tol = 1e-10) {
    return boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
        std::forward<F>(f), a, b, 15, rel_tol);
}

// Integral of f over (0, inf) via the exp-sinh transformation.
template <class F>
double integrate_zero_inf(F&& f, double rel_tol = 1e-10) {
    boost::math::quadrature::exp_sinh<double> rule;
    return rule.integrate(std::forward<F>(f), rel_tol);
}

// Gauss-Hermite nodes and weights for weight exp(-x^2) on the real line,
// from the eigen-decomposition of the Jacobi matrix; weights are
// sqrt(pi) * v0^2.
inline std::pair<std::vector<double>, std::vector<double>> gauss_hermite(int n) {
    if (n < 1) throw ConfigError("gauss_hermite: need n >= 1");
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) {
        const double off = std::sqrt(0.5 * k);
        j(k, k - 1) = off;
        j(k - 1, k) = off;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
    if (es.info() != Eigen::Success)
        throw NumericalError("gauss_hermite: eigensolver failed");
    std::vector<double> x(n), w(n);
    const double sqrt_pi = std::sqrt(M_PI);
    for (int k = 0; k < n; ++k) {
        x[k] = es.eigenvalues()(k);
        const double v0 = es.eigenvectors()(0, k);
        w[k] = sqrt_pi * v0 * v0;
    }
    return {std::move(x), std::move(w)};
}

// Composite trapezoid weights on an arbitrary strictly increasing grid.
inline std::vector<double> trapezoid_weights(const std::vector<double>& grid) {
    const std::size_t n = grid.size();
    if (n < 2) throw ConfigError("trapezoid_weights: need at least two points");
    std::vector<double> w(n, 0.0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double h = grid[i + 1] - grid[i];
        if (!(h > 0.0)) throw ConfigError("trapezoid_weights: grid must increase");
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    return w;
}

}  // namespace gopmc
