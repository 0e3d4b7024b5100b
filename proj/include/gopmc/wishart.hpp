#pragma once
// Matrix-valued process layer: existence classification for the affine
// matrix square-root SDE
//   dX = (alpha a^T a + b X + X b^T) dt + sqrt(X) dW a + a^T dW^T sqrt(X),
// exact integer-parameter transitions (matrix-Brownian squaring and sums of
// squared Ornstein-Uhlenbeck vectors), noncentral Wishart sampling through
// the squared-matrix-normal law, an Euler fallback with PSD repair, and the
// correlated two-index terminal sampler built on these laws.

#include <array>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "gopmc/base.hpp"
#include "gopmc/processes.hpp"
#include "gopmc/rng.hpp"

namespace gopmc {

namespace detail {

inline void check_square(const Eigen::MatrixXd& m, const char* what) {
    if (m.rows() != m.cols() || m.rows() < 1)
        throw ConfigError(std::string(what) + ": matrix must be square");
}

inline void check_symmetric(const Eigen::MatrixXd& m, const char* what,
                            double tol = 1e-12) {
    const double scale = 1.0 + m.cwiseAbs().maxCoeff();
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > tol * scale)
        throw ConfigError(std::string(what) + ": matrix must be symmetric");
}

// Debug-mode invariant: every matrix handed back by a sampler is symmetric
// and has eigenvalues >= -1e-10 (relative).
inline void debug_check_psd(const Eigen::MatrixXd& m) {
#ifndef NDEBUG
    assert((m - m.transpose()).cwiseAbs().maxCoeff() <=
           1e-10 * (1.0 + m.cwiseAbs().maxCoeff()));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    assert(es.info() == Eigen::Success);
    assert(es.eigenvalues().minCoeff() >=
           -1e-10 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff()));
#else
    (void)m;
#endif
}

// Symmetric PSD square root with tolerance clipping.
inline Eigen::MatrixXd sym_sqrt(const Eigen::MatrixXd& s, double tol = 1e-12) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (s + s.transpose()));
    if (es.info() != Eigen::Success)
        throw NumericalError("sym_sqrt: eigensolver failed");
    const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    Eigen::VectorXd lam = es.eigenvalues();
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
        if (lam(i) < -tol * scale)
            throw NumericalError("sym_sqrt: matrix has a negative eigenvalue");
        lam(i) = std::max(lam(i), 0.0);
    }
    return es.eigenvectors() * lam.cwiseSqrt().asDiagonal() *
           es.eigenvectors().transpose();
}

// Symmetrize and clip negative eigenvalues to zero (PSD repair).
inline Eigen::MatrixXd psd_clip(const Eigen::MatrixXd& s) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (s + s.transpose()));
    if (es.info() != Eigen::Success)
        throw NumericalError("psd_clip: eigensolver failed");
    Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0);
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

// Parameters of the matrix square-root diffusion above; the scalar d = 1,
// a = sigma/2... reduction recovers the square-root family.
struct WishartParams {
    int d = 2;               // matrix dimension
    double alpha = 2.0;      // degrees-of-freedom parameter
    Eigen::MatrixXd a;       // d x d diffusion matrix
    Eigen::MatrixXd b;       // d x d drift matrix
    Eigen::MatrixXd x0;      // d x d symmetric PSD initial state

    void validate() const {
        if (d < 1) throw ConfigError("WishartParams: requires d >= 1");
        if (alpha < 0.0) throw ConfigError("WishartParams: requires alpha >= 0");
        if (a.rows() != d || a.cols() != d || b.rows() != d || b.cols() != d ||
            x0.rows() != d || x0.cols() != d)
            throw ConfigError("WishartParams: matrices must be d x d");
        detail::check_symmetric(x0, "WishartParams x0");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(x0);
        if (es.info() != Eigen::Success)
            throw NumericalError("WishartParams: eigensolver failed on x0");
        const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
        if (es.eigenvalues().minCoeff() < -1e-12 * scale)
            throw ConfigError("WishartParams: x0 must be positive semidefinite");
    }
};

enum class ExistenceClass { strong, weak, none };

// Solution classification: a unique weak solution exists when x0 is PSD and
// alpha >= d - 1; it is strong when x0 is strictly PD and alpha >= d + 1.
inline ExistenceClass existence_class(const WishartParams& p) {
    p.validate();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p.x0);
    const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    const double min_eig = es.eigenvalues().minCoeff();
    const bool pd = min_eig > 1e-12 * scale;
    if (pd && p.alpha >= p.d + 1) return ExistenceClass::strong;
    if (p.alpha >= p.d - 1) return ExistenceClass::weak;  // x0 PSD per validate
    return ExistenceClass::none;
}

// Rectangular factor C (rows x p) with C^T C = S for PSD S: row i carries
// the i-th scaled eigenvector, remaining rows are zero; requires
// rows >= rank(S).
inline Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& s, int rows) {
    detail::check_square(s, "psd_factor");
    detail::check_symmetric(s, "psd_factor", 1e-10);
    if (rows < 1) throw ConfigError("psd_factor: requires rows >= 1");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (s + s.transpose()));
    if (es.info() != Eigen::Success)
        throw NumericalError("psd_factor: eigensolver failed");
    const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    const Eigen::Index p = s.rows();
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(rows, p);
    int row = 0;
    for (Eigen::Index i = p; i-- > 0;) {  // eigenvalues ascending; take largest first
        const double lam = es.eigenvalues()(i);
        if (lam < -1e-12 * scale)
            throw ConfigError("psd_factor: matrix is not positive semidefinite");
        if (lam <= 0.0) continue;
        if (row >= rows)
            throw ConfigError("psd_factor: rows is smaller than rank(S)");
        c.row(row++) = std::sqrt(lam) * es.eigenvectors().col(i).transpose();
    }
    return c;
}

// Exact one-step transition of the zero-drift unit-diffusion matrix
// square-root process with integer parameter n: the process is the square
// B^T B of an n x d Brownian motion, so the step from x over dt is
// G^T G with G = psd_factor(x, n) + sqrt(dt) Z, Z standard n x d normal.
inline Eigen::MatrixXd wishart_bm_transition(RngStream& g, const Eigen::MatrixXd& x,
                                             int n, double dt) {
    if (n < 1) throw ConfigError("wishart_bm_transition: requires n >= 1");
    if (!(dt > 0.0)) throw ConfigError("wishart_bm_transition: requires dt > 0");
    Eigen::MatrixXd big_g = psd_factor(x, n);
    const double sq = std::sqrt(dt);
    for (Eigen::Index i = 0; i < big_g.rows(); ++i)
        for (Eigen::Index j = 0; j < big_g.cols(); ++j)
            big_g(i, j) += sq * sample_normal(g);
    Eigen::MatrixXd out = big_g.transpose() * big_g;
    out = 0.5 * (out + out.transpose());
    detail::debug_check_psd(out);
    return out;
}

// Noncentral Wishart descriptor: dimension p is implied by Sigma; the
// noncentrality Theta enters through the factorization Sigma Theta = M M^T.
struct NoncentralWishartParams {
    double n = 4.0;          // degrees of freedom; the sampler needs an integer
    Eigen::MatrixXd sigma;   // p x p positive definite
    Eigen::MatrixXd theta;   // p x p PSD noncentrality

    void validate() const {
        detail::check_square(sigma, "NoncentralWishartParams sigma");
        if (theta.rows() != sigma.rows() || theta.cols() != sigma.cols())
            throw ConfigError(
                "NoncentralWishartParams: theta must match sigma's shape");
        if (!(n >= 1.0))
            throw ConfigError("NoncentralWishartParams: requires n >= 1");
        // The factorization Sigma*Theta = M M^T needs a symmetrizable product.
        const Eigen::MatrixXd prod = sigma * theta;
        const double scale = std::max(1.0, prod.cwiseAbs().maxCoeff());
        if ((prod - prod.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
            throw ConfigError(
                "NoncentralWishartParams: Sigma*Theta must symmetrize within 1e-10");
    }
};

// Draw from the noncentral Wishart law via the squared-matrix-normal
// construction: X ~ N_{p,n}(M, Sigma (x) I_n) implies X X^T is noncentral
// Wishart with noncentrality Sigma^{-1} M M^T, so M is recovered by
// factoring the symmetrized product Sigma Theta (clipping eigenvalues above
// -1e-8 relative) and the draw is X X^T.
inline Eigen::MatrixXd sample_noncentral_wishart(RngStream& g,
                                                 const NoncentralWishartParams& p) {
    p.validate();
    const double n_round = std::nearbyint(p.n);
    if (std::fabs(p.n - n_round) > 1e-9 || n_round < 1.0)
        throw ConfigError("sample_noncentral_wishart: n must be a positive integer");
    const int n = static_cast<int>(n_round);
    const Eigen::Index dim = p.sigma.rows();

    const Eigen::MatrixXd prod = p.sigma * p.theta;
    const double scale = std::max(1.0, prod.cwiseAbs().maxCoeff());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        0.5 * (prod + prod.transpose()));
    if (es.info() != Eigen::Success)
        throw NumericalError("sample_noncentral_wishart: eigensolver failed");
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(dim, n);
    int col = 0;
    for (Eigen::Index i = dim; i-- > 0;) {
        const double lam = es.eigenvalues()(i);
        if (lam < -1e-8 * scale)
            throw NumericalError(
                "sample_noncentral_wishart: Sigma*Theta has a negative eigenvalue");
        if (lam <= 0.0) continue;
        if (col >= n)
            throw ConfigError(
                "sample_noncentral_wishart: n is smaller than rank(Sigma*Theta)");
        mean.col(col++) = std::sqrt(lam) * es.eigenvectors().col(i);
    }

    MatrixNormalParams mn;
    mn.mean = std::move(mean);
    mn.row_cov = p.sigma;
    mn.col_cov = Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd x = sample_matrix_normal(g, mn);
    Eigen::MatrixXd out = x * x.transpose();
    out = 0.5 * (out + out.transpose());
    detail::debug_check_psd(out);
    return out;
}

// Exact Gaussian transition moments of dX = A X dt + Q^T dW over dt:
// propagator e^{A dt} and covariance int_0^dt e^{As} Q^T Q e^{A^T s} ds,
// the latter by the block-matrix-exponential construction
//   exp([[ -A, Q^T Q ], [ 0, A^T ]] dt) = [[ *, G ], [ 0, F ]],
// cov = F^T G.
struct OuMoments {
    Eigen::MatrixXd propagator;
    Eigen::MatrixXd cov;
};

inline OuMoments ou_transition_moments(const Eigen::MatrixXd& a_mat,
                                       const Eigen::MatrixXd& q, double dt) {
    detail::check_square(a_mat, "ou_transition_moments");
    if (q.rows() != a_mat.rows() || q.cols() != a_mat.rows())
        throw ConfigError("ou_transition_moments: Q must match A's shape");
    if (!(dt > 0.0)) throw ConfigError("ou_transition_moments: requires dt > 0");
    const Eigen::Index d = a_mat.rows();
    Eigen::MatrixXd block = Eigen::MatrixXd::Zero(2 * d, 2 * d);
    block.topLeftCorner(d, d) = -a_mat * dt;
    block.topRightCorner(d, d) = q.transpose() * q * dt;
    block.bottomRightCorner(d, d) = a_mat.transpose() * dt;
    const Eigen::MatrixXd e = block.exp();
    OuMoments m;
    m.propagator = e.bottomRightCorner(d, d).transpose();
    Eigen::MatrixXd cov = m.propagator * e.topRightCorner(d, d);
    m.cov = 0.5 * (cov + cov.transpose());
    return m;
}

// One exact step of the vector Ornstein-Uhlenbeck SDE dX = A X dt + Q^T dW.
inline Eigen::VectorXd ou_exact_step(RngStream& g, const Eigen::MatrixXd& a_mat,
                                     const Eigen::MatrixXd& q,
                                     const Eigen::VectorXd& x, double dt) {
    if (x.size() != a_mat.rows())
        throw ConfigError("ou_exact_step: state size must match A");
    const OuMoments m = ou_transition_moments(a_mat, q, dt);
    const Eigen::MatrixXd l = detail::psd_sqrt_factor(m.cov, 1e-12);
    Eigen::VectorXd z(x.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = sample_normal(g);
    return m.propagator * x + l * z;
}

// Sum of beta squared Ornstein-Uhlenbeck vectors: V_t = sum_k X_k X_k^T
// solves dV = (beta Q^T Q + A V + V A^T) dt + sqrt(V) dW Q + Q^T dW^T sqrt(V).
// The initial state is split into beta vectors via psd_factor, each vector
// evolves exactly, and V is reassembled at every requested time.
inline std::vector<Eigen::MatrixXd> wishart_ou_path(RngStream& g, int beta,
                                                    const Eigen::MatrixXd& a_mat,
                                                    const Eigen::MatrixXd& q,
                                                    const Eigen::MatrixXd& x0,
                                                    const std::vector<double>& times) {
    if (beta < 1) throw ConfigError("wishart_ou_path: requires beta >= 1");
    if (times.empty()) throw ConfigError("wishart_ou_path: empty time grid");
    detail::check_square(a_mat, "wishart_ou_path");
    const Eigen::Index d = a_mat.rows();
    if (q.rows() != d || q.cols() != d || x0.rows() != d || x0.cols() != d)
        throw ConfigError("wishart_ou_path: Q and x0 must match A's shape");
    // Rows of the factor are the initial vectors; psd_factor rejects
    // beta < rank(x0) with its own message.
    Eigen::MatrixXd states = psd_factor(x0, beta);  // beta x d; row k = X_k(0)^T
    std::vector<Eigen::MatrixXd> out;
    out.reserve(times.size());
    double prev = 0.0;
    for (double t : times) {
        if (t < 0.0) throw ConfigError("wishart_ou_path: times must be nonnegative");
        if (t < prev)
            throw ConfigError("wishart_ou_path: times must be nondecreasing");
        if (t > prev) {
            const OuMoments m = ou_transition_moments(a_mat, q, t - prev);
            const Eigen::MatrixXd l = detail::psd_sqrt_factor(m.cov, 1e-12);
            for (int k = 0; k < beta; ++k) {
                Eigen::VectorXd z(d);
                for (Eigen::Index i = 0; i < d; ++i) z(i) = sample_normal(g);
                states.row(k) =
                    (m.propagator * states.row(k).transpose() + l * z).transpose();
            }
        }
        Eigen::MatrixXd v = states.transpose() * states;
        v = 0.5 * (v + v.transpose());
        detail::debug_check_psd(v);
        out.push_back(std::move(v));
        prev = t;
    }
    return out;
}

// Euler-Maruyama fallback for non-integer parameters: one step of the
// matrix square-root SDE with the symmetric PSD square root of the current
// state, followed by symmetrization and eigenvalue clipping so the iterate
// stays PSD.
inline Eigen::MatrixXd wishart_euler_step(RngStream& g, const WishartParams& p,
                                          const Eigen::MatrixXd& x, double dt) {
    p.validate();
    if (!(dt > 0.0)) throw ConfigError("wishart_euler_step: requires dt > 0");
    if (x.rows() != p.d || x.cols() != p.d)
        throw ConfigError("wishart_euler_step: state must be d x d");
    const Eigen::MatrixXd sqx = detail::sym_sqrt(x, 1e-9);
    Eigen::MatrixXd w(p.d, p.d);
    const double sq = std::sqrt(dt);
    for (int i = 0; i < p.d; ++i)
        for (int j = 0; j < p.d; ++j) w(i, j) = sq * sample_normal(g);
    const Eigen::MatrixXd drift =
        p.alpha * p.a.transpose() * p.a + p.b * x + x * p.b.transpose();
    const Eigen::MatrixXd noise =
        sqx * w * p.a + p.a.transpose() * w.transpose() * sqx;
    const Eigen::MatrixXd out = detail::psd_clip(x + drift * dt + noise);
    detail::debug_check_psd(out);
    return out;
}

// Correlated two-index model: each discounted index is a sum of four
// squared Gaussian coordinates (its own time-changed squared Bessel law);
// the two sets of coordinates are pairwise correlated through the 2 x 2
// covariance built from the operational-time increments and the cross term
//   Sigma_12 = (rho/4) sqrt(alpha0_a alpha0_b)
//              (e^{(eta_a+eta_b)T/2} - 1) / ((eta_a+eta_b)/2).
struct BivariateMmmParams {
    std::array<double, 2> r{0.02, 0.04};        // short rates
    std::array<double, 2> alpha0{0.05, 0.05};   // initial scaling levels
    std::array<double, 2> eta{0.04, 0.06};      // scaling growth rates
    std::array<double, 2> sbar0{1.0, 1.0};      // initial discounted indices
    double rho = 0.3;                           // coordinate correlation
    Eigen::MatrixXd w;  // 4 x 2 initial offsets; empty selects the default
                        // allocation w(0,k) = sqrt(sbar0_k), rest zero

    // The law of each index depends on w only through its column norm, so
    // the first-row allocation is the canonical default.
    Eigen::MatrixXd offsets() const {
        if (w.size() != 0) return w;
        Eigen::MatrixXd def = Eigen::MatrixXd::Zero(4, 2);
        def(0, 0) = std::sqrt(sbar0[0]);
        def(0, 1) = std::sqrt(sbar0[1]);
        return def;
    }

    void validate() const {
        for (int k = 0; k < 2; ++k) {
            if (!(alpha0[k] > 0.0))
                throw ConfigError("BivariateMmmParams: requires alpha0 > 0");
            if (!(eta[k] > 0.0))
                throw ConfigError("BivariateMmmParams: requires eta > 0");
            if (!(sbar0[k] > 0.0))
                throw ConfigError("BivariateMmmParams: requires sbar0 > 0");
        }
        if (!(std::fabs(rho) < 1.0))
            throw ConfigError("BivariateMmmParams: requires |rho| < 1");
        const Eigen::MatrixXd off = offsets();
        if (off.rows() != 4 || off.cols() != 2)
            throw ConfigError("BivariateMmmParams: w must be 4 x 2");
        for (int k = 0; k < 2; ++k)
            if (std::fabs(off.col(k).squaredNorm() - sbar0[k]) >
                1e-12 * std::max(1.0, sbar0[k]))
                throw ConfigError(
                    "BivariateMmmParams: column norms of w must match sbar0");
    }

    // Operational-time increment of currency k over [0, T].
    double phi(int k, double T) const {
        return 0.25 * alpha0[static_cast<std::size_t>(k)] * T *
               detail::expm1_over(eta[static_cast<std::size_t>(k)] * T);
    }
};

// Terminal discounted index levels (sbar_a, sbar_b) at horizon T: draw the
// 4 x 2 coordinate matrix X with independent rows and per-row cross-currency
// covariance Sigma, return the squared column norms.
inline std::pair<double, double> bivariate_terminal_sample(
    RngStream& g, const BivariateMmmParams& p, double T) {
    p.validate();
    if (!(T > 0.0)) throw ConfigError("bivariate_terminal_sample: requires T > 0");
    Eigen::Matrix2d sigma;
    sigma(0, 0) = p.phi(0, T);
    sigma(1, 1) = p.phi(1, T);
    const double cross =
        0.25 * p.rho * std::sqrt(p.alpha0[0] * p.alpha0[1]) * T *
        detail::expm1_over(0.5 * (p.eta[0] + p.eta[1]) * T);
    sigma(0, 1) = sigma(1, 0) = cross;
    if (!(sigma(0, 0) > 0.0) || !(sigma(1, 1) > 0.0) ||
        !(sigma(0, 0) * sigma(1, 1) - cross * cross > 0.0))
        throw NumericalError("bivariate_terminal_sample: covariance is not PD");

    MatrixNormalParams mn;
    mn.mean = p.offsets();
    mn.row_cov = Eigen::MatrixXd::Identity(4, 4);
    mn.col_cov = sigma;
    const Eigen::MatrixXd x = sample_matrix_normal(g, mn);
    return {x.col(0).squaredNorm(), x.col(1).squaredNorm()};
}

// Long-format CSV for matrix paths: path_id, time, i, j, value.
inline void wishart_path_to_csv(std::ostream& out, const std::vector<double>& times,
                                const std::vector<Eigen::MatrixXd>& path,
                                int path_id, bool header = true) {
    if (times.size() != path.size())
        throw ConfigError("wishart_path_to_csv: times and path sizes differ");
    if (header) out << "path_id,time,i,j,value\n";
    char line[128];
    for (std::size_t t = 0; t < times.size(); ++t)
        for (Eigen::Index i = 0; i < path[t].rows(); ++i)
            for (Eigen::Index j = 0; j < path[t].cols(); ++j) {
                std::snprintf(line, sizeof line, "%d,%.17g,%ld,%ld,%.17g\n",
                              path_id, times[t], static_cast<long>(i),
                              static_cast<long>(j), path[t](i, j));
                out << line;
            }
    if (!out) throw NumericalError("wishart_path_to_csv: write failed");
}

inline void wishart_path_to_csv(const std::string& filename,
                                const std::vector<double>& times,
                                const std::vector<Eigen::MatrixXd>& path,
                                int path_id, bool header = true) {
    std::ofstream out(filename);
    if (!out) throw ConfigError("wishart_path_to_csv: cannot open " + filename);
    wishart_path_to_csv(out, times, path, path_id, header);
}

}  // namespace gopmc
