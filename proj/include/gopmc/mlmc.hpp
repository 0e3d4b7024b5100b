#pragma once
// Multilevel Monte Carlo for the benchmarked volatility-put payoff: levels
// refine a full-truncation Euler discretization of the normalized index by
// factor 2, fine and coarse paths share Brownian increments (the coarse
// increment is the exact pairwise sum of fine increments), and samples are
// allocated across levels by the variance-optimal rule with a bias stop
// driven by the observed weak order.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gopmc/base.hpp"
#include "gopmc/estimate.hpp"
#include "gopmc/parallel.hpp"
#include "gopmc/processes.hpp"
#include "gopmc/rng.hpp"

namespace gopmc {

struct MlmcConfig {
    double eps = 1e-3;   // target root-mean-square accuracy (payoff units)
    int l_max = 10;      // maximum refinement level
    int n0 = 4;          // steps per unit maturity at level 0
    long pilot_n = 1000; // pilot samples per level

    void validate() const {
        if (!(eps > 0.0)) throw ConfigError("MlmcConfig: requires eps > 0");
        if (l_max < 0) throw ConfigError("MlmcConfig: requires l_max >= 0");
        if (n0 < 1) throw ConfigError("MlmcConfig: requires n0 >= 1");
        if (pilot_n < 2) throw ConfigError("MlmcConfig: requires pilot_n >= 2");
    }
};

struct LevelStats {
    int level = 0;
    double mean = 0.0;      // mean of the level difference (level 0: plain payoff)
    double variance = 0.0;  // variance of the level difference
    double cost = 0.0;      // Euler steps per sample (fine plus coarse)
    long n_assigned = 0;
};

class MlmcNonConvergence : public NumericalError {
  public:
    std::vector<LevelStats> levels;
    MlmcNonConvergence(const std::string& msg, std::vector<LevelStats> lv)
        : NumericalError(msg), levels(std::move(lv)) {}
};

struct LevelSample {
    double fine = 0.0;   // payoff of the fine path
    double delta = 0.0;  // fine minus coarse (level 0: equal to fine)
};

namespace detail {

// One full-truncation Euler increment of dY = (1 - eta Y) dt + sqrt(Y) dW.
inline double euler_y_step(double y, double eta, double h, double dw) {
    const double yp = y > 0.0 ? y : 0.0;
    return y + (1.0 - eta * yp) * h + std::sqrt(yp) * dw;
}

// Full-truncation Euler path of the normalized index with the trapezoidal
// time integral of 1/max(Y, floor); one standard normal per step in time
// order.  Returns the terminal level and the integral.
struct EulerVolPath {
    double y_end = 0.0;
    double integral = 0.0;
};

inline EulerVolPath euler_vol_path(RngStream& g, const MmmParams& p, double T,
                                   long n_steps, double floor_) {
    const double h = T / static_cast<double>(n_steps);
    const double sq = std::sqrt(h);
    const auto inv = [floor_](double y) {
        return 1.0 / (y > floor_ ? y : floor_);
    };
    double y = p.y0();
    double acc = 0.5 * inv(y);
    for (long k = 0; k < n_steps; ++k) {
        y = euler_y_step(y, p.eta, h, sq * sample_normal(g));
        acc += (k + 1 < n_steps ? 1.0 : 0.5) * inv(y);
    }
    return {y, h * acc};
}

}  // namespace detail

// Coupled fine/coarse sample of the benchmarked volatility-put payoff
//   s0 * (K - sqrt(V/T))^+ / S_T,  V = int_0^T dt / Y_t,
// with S_T = e^{rT} alpha(T) Y_T and the time integral by the trapezoidal
// rule on max(Y, floor).  The fine path takes n0*2^level steps; for
// level >= 1 the coarse path takes half as many, driven by the pairwise
// sums of the fine increments.  Draw order is one standard normal per fine
// step, in time order — this layout is part of the coupling contract.
inline LevelSample coupled_level_sample(RngStream& g, const MmmParams& p,
                                        double strike, double T, int level,
                                        int n0 = 4, double floor_ = 1e-10) {
    p.validate();
    if (strike < 0.0) throw ConfigError("coupled_level_sample: requires strike >= 0");
    if (!(T > 0.0)) throw ConfigError("coupled_level_sample: requires T > 0");
    if (level < 0) throw ConfigError("coupled_level_sample: requires level >= 0");
    if (n0 < 1) throw ConfigError("coupled_level_sample: requires n0 >= 1");
    const long nf = static_cast<long>(n0) << level;
    const double hf = T / static_cast<double>(nf);
    const double sq = std::sqrt(hf);
    const double y_start = p.y0();

    const auto inv = [floor_](double y) {
        return 1.0 / (y > floor_ ? y : floor_);
    };
    const auto payoff = [&](double y_end, double v) {
        const double vol = std::sqrt(v / T);
        const double gain = strike > vol ? strike - vol : 0.0;
        const double s_end =
            std::exp(p.r * T) * p.alpha(T) * (y_end > floor_ ? y_end : floor_);
        return p.s0 * gain / s_end;
    };

    LevelSample out;
    if (level == 0) {
        const auto path = detail::euler_vol_path(g, p, T, nf, floor_);
        out.fine = payoff(path.y_end, path.integral);
        out.delta = out.fine;
        return out;
    }

    double yf = y_start;
    double acc_f = 0.5 * inv(yf);
    const double hc = 2.0 * hf;
    double yc = y_start;
    double acc_c = 0.5 * inv(yc);
    const long nc = nf / 2;
    for (long m = 0; m < nc; ++m) {
        const double dw1 = sq * sample_normal(g);
        const double dw2 = sq * sample_normal(g);
        yf = detail::euler_y_step(yf, p.eta, hf, dw1);
        acc_f += inv(yf);
        yf = detail::euler_y_step(yf, p.eta, hf, dw2);
        acc_f += (m + 1 < nc ? 1.0 : 0.5) * inv(yf);
        yc = detail::euler_y_step(yc, p.eta, hc, dw1 + dw2);
        acc_c += (m + 1 < nc ? 1.0 : 0.5) * inv(yc);
    }
    out.fine = payoff(yf, hf * acc_f);
    out.delta = out.fine - payoff(yc, hc * acc_c);
    return out;
}

struct MlmcResult {
    Estimate estimate;
    std::vector<LevelStats> levels;
    double total_cost = 0.0;  // sum over levels of n_assigned * cost
};

// Sample index i at level l draws from RngStream(seed, (l << 40) | i), so
// estimates are reproducible for any worker count and allocation history.
inline MlmcResult mlmc_run(const MmmParams& p, const PayoffSpec& payoff,
                           const MlmcConfig& cfg, std::uint64_t seed,
                           int threads = 0, double ci_level = 0.99) {
    p.validate();
    payoff.validate();
    cfg.validate();
    if (payoff.kind != PayoffKind::vol_put)
        throw ConfigError("mlmc_run: only the vol_put payoff is supported");
    const double strike = payoff.strike, T = payoff.maturity;

    const auto cost_of = [&](int l) {
        const double fine = static_cast<double>(static_cast<long>(cfg.n0) << l);
        return l == 0 ? fine : 1.5 * fine;  // fine plus half-rate coarse steps
    };
    const auto draw = [&](int l, long i) {
        RngStream g(seed, (static_cast<std::uint64_t>(l) << 40) |
                              static_cast<std::uint64_t>(i));
        const LevelSample s = coupled_level_sample(g, p, strike, T, l, cfg.n0);
        return l == 0 ? s.fine : s.delta;
    };

    std::vector<std::vector<double>> values;  // per level, index order
    std::vector<long> target;
    const auto add_level = [&] {
        values.emplace_back();
        target.push_back(cfg.pilot_n);
    };
    int top = std::min(2, cfg.l_max);
    for (int l = 0; l <= top; ++l) add_level();

    std::vector<double> mean, var;
    const auto refresh_stats = [&] {
        mean.assign(values.size(), 0.0);
        var.assign(values.size(), 0.0);
        for (std::size_t l = 0; l < values.size(); ++l) {
            const auto& v = values[l];
            double s = 0.0;
            for (double x : v) s += x;
            mean[l] = s / static_cast<double>(v.size());
            double s2 = 0.0;
            for (double x : v) s2 += (x - mean[l]) * (x - mean[l]);
            var[l] = s2 / static_cast<double>(v.size() - 1);
        }
    };

    const double var_floor = 1e-30;  // keeps the allocation positive when a
                                     // level degenerates to constant payoffs
    for (int round = 0;; ++round) {
        if (round > 1000)
            throw NumericalError("mlmc_run: allocation failed to stabilize");
        for (std::size_t l = 0; l < values.size(); ++l) {
            const long have = static_cast<long>(values[l].size());
            if (have >= target[l]) continue;
            values[l].resize(static_cast<std::size_t>(target[l]));
            parallel_for_indexed(
                static_cast<std::size_t>(target[l] - have),
                [&, l, have](std::size_t k) {
                    const long i = have + static_cast<long>(k);
                    values[l][static_cast<std::size_t>(i)] =
                        draw(static_cast<int>(l), i);
                },
                threads);
        }
        refresh_stats();

        double alloc_sum = 0.0;
        for (std::size_t l = 0; l < values.size(); ++l)
            alloc_sum += std::sqrt(std::max(var[l], var_floor) *
                                   cost_of(static_cast<int>(l)));
        bool grew = false;
        for (std::size_t l = 0; l < values.size(); ++l) {
            const double n_opt =
                2.0 / (cfg.eps * cfg.eps) *
                std::sqrt(std::max(var[l], var_floor) /
                          cost_of(static_cast<int>(l))) *
                alloc_sum;
            const long want = static_cast<long>(std::ceil(n_opt));
            if (want > target[l]) {
                target[l] = want;
                grew = true;
            }
        }
        if (grew) continue;

        if (cfg.l_max == 0) break;  // plain single-level MC: no bias control

        // Observed weak order from the last three level means, then the
        // bias stop |m_L| < eps/sqrt(2) * (2^gamma - 1).
        const std::size_t L = values.size() - 1;
        double gamma_sum = 0.0;
        int gamma_cnt = 0;
        for (std::size_t l = L; l >= 1 && l + 2 > L; --l) {
            const double lo = std::fabs(mean[l]), hi = std::fabs(mean[l - 1]);
            if (lo > 0.0 && hi > 0.0) {
                gamma_sum += std::log2(hi / lo);
                ++gamma_cnt;
            }
            if (l == 1) break;
        }
        double gamma = gamma_cnt > 0 ? gamma_sum / gamma_cnt : 1.0;
        gamma = std::min(2.0, std::max(0.5, gamma));
        const double bias_gate =
            cfg.eps / std::sqrt(2.0) * (std::pow(2.0, gamma) - 1.0);
        if (std::fabs(mean.back()) < bias_gate) break;
        if (static_cast<int>(L) == cfg.l_max) {
            std::vector<LevelStats> diag;
            for (std::size_t l = 0; l < values.size(); ++l)
                diag.push_back({static_cast<int>(l), mean[l], var[l],
                                cost_of(static_cast<int>(l)),
                                static_cast<long>(values[l].size())});
            std::ostringstream msg;
            msg << "mlmc_run: level " << L << " reached l_max with |mean| "
                << std::fabs(mean.back()) << " above the bias gate " << bias_gate;
            throw MlmcNonConvergence(msg.str(), std::move(diag));
        }
        add_level();
    }

    MlmcResult res;
    double value = 0.0, est_var = 0.0;
    long n_total = 0;
    for (std::size_t l = 0; l < values.size(); ++l) {
        const long n = static_cast<long>(values[l].size());
        value += mean[l];
        est_var += var[l] / static_cast<double>(n);
        n_total += n;
        res.levels.push_back({static_cast<int>(l), mean[l], var[l],
                              cost_of(static_cast<int>(l)), n});
        res.total_cost += static_cast<double>(n) * cost_of(static_cast<int>(l));
    }
    res.estimate = make_estimate(value, std::sqrt(est_var), n_total, seed,
                                 EstimateMethod::mlmc, ci_level);
    return res;
}

inline void levels_to_csv(std::ostream& out, const std::vector<LevelStats>& levels) {
    out << "level,mean,variance,cost,n\n";
    char line[160];
    for (const auto& s : levels) {
        std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%ld\n", s.level,
                      s.mean, s.variance, s.cost, s.n_assigned);
        out << line;
    }
    if (!out) throw NumericalError("levels_to_csv: write failed");
}

}  // namespace gopmc
