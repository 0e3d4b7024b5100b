#pragma once
// Real-world pricing under the growth-optimal-portfolio numeraire: the
// price of a claim H is S_0 * E[H / S_T] under the physical measure, with
// terminal index levels drawn exactly.  The module provides the generic
// benchmarked Monte Carlo pricer for one- and two-index models, volatility
// puts by quadrature against the tabulated joint density of the normalized
// index and its inverse time integral (or by multilevel Monte Carlo),
// foreign-exchange calls on the index ratio, the put-call parity check, and
// the strict-supermartingale diagnostic of the benchmarked savings account.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "gopmc/base.hpp"
#include "gopmc/estimate.hpp"
#include "gopmc/liesym.hpp"
#include "gopmc/mlmc.hpp"
#include "gopmc/parallel.hpp"
#include "gopmc/processes.hpp"
#include "gopmc/rng.hpp"
#include "gopmc/stats.hpp"
#include "gopmc/wishart.hpp"

namespace gopmc {

namespace detail {

// Exact draw of the terminal discounted index: a squared Bessel transition
// of dimension 4 over the operational-time increment.
inline double mmm_terminal_sbar(RngStream& g, const MmmParams& p, double T) {
    return besq_sample_transition(g, p.sbar0(), 4.0,
                                  phi_time(p, T) - phi_time(p, 0.0));
}

// Batch-means estimate from per-path contributions (path-index order),
// with the heavy-tail diagnostic: the share of the total carried by the
// largest 0.1% of |contributions| is reported, and flagged above 20%.
inline Estimate finish_mc(std::vector<double> vals, std::uint64_t seed,
                          double ci_level) {
    const auto ms = batch_means(vals);
    Estimate e = make_estimate(ms.mean, ms.se, static_cast<long>(vals.size()),
                               seed, EstimateMethod::exact_mc, ci_level);
    std::vector<double> mags;
    mags.reserve(vals.size());
    double total = 0.0;
    for (double v : vals) {
        mags.push_back(std::fabs(v));
        total += mags.back();
    }
    const std::size_t k = std::max<std::size_t>(1, vals.size() / 1000);
    std::nth_element(mags.begin(), mags.begin() + (k - 1), mags.end(),
                     std::greater<double>());
    double top = 0.0;
    for (std::size_t i = 0; i < k; ++i) top += mags[i];
    e.tail_fraction = total > 0.0 ? top / total : 0.0;
    e.tail_warning = e.tail_fraction > 0.2;
    return e;
}

}  // namespace detail

// E[1/X_t] for a squared Bessel process of dimension 4 started at x:
// (1 - e^{-x/(2t)}) / x.
inline double besq_inverse_mean(double x, double t) {
    if (!(x > 0.0) || !(t > 0.0))
        throw ConfigError("besq_inverse_mean: requires x, t > 0");
    return -std::expm1(-x / (2.0 * t)) / x;
}

// Generic benchmarked pricer for a terminal claim h(S_T) on the one-index
// model: S_0 * mean(h(S_T)/S_T) over exact terminal draws.  Path i draws
// from RngStream(mc.seed, i), so results are reproducible for any worker
// count.
inline Estimate real_world_price(const MmmParams& p,
                                 const std::function<double(double)>& h, double T,
                                 const McConfig& mc) {
    p.validate();
    mc.validate();
    if (!(T > 0.0)) throw ConfigError("real_world_price: requires T > 0");
    const std::size_t n = static_cast<std::size_t>(mc.n_paths);
    std::vector<double> vals(n);
    const double growth = std::exp(p.r * T);
    parallel_for_indexed(
        n,
        [&](std::size_t i) {
            RngStream g(mc.seed, i);
            const double s_T = growth * detail::mmm_terminal_sbar(g, p, T);
            vals[i] = p.s0 * h(s_T) / s_T;
        },
        mc.threads);
    return detail::finish_mc(std::move(vals), mc.seed, mc.ci_level);
}

// Two-index version: claims h(S^a_T, S^b_T) benchmarked by the first index.
inline Estimate real_world_price(const BivariateMmmParams& p,
                                 const std::function<double(double, double)>& h,
                                 double T, const McConfig& mc) {
    p.validate();
    mc.validate();
    if (!(T > 0.0)) throw ConfigError("real_world_price: requires T > 0");
    const std::size_t n = static_cast<std::size_t>(mc.n_paths);
    std::vector<double> vals(n);
    const double ga = std::exp(p.r[0] * T), gb = std::exp(p.r[1] * T);
    parallel_for_indexed(
        n,
        [&](std::size_t i) {
            RngStream g(mc.seed, i);
            const auto [sbar_a, sbar_b] = bivariate_terminal_sample(g, p, T);
            const double sa = ga * sbar_a, sb = gb * sbar_b;
            vals[i] = p.sbar0[0] * h(sa, sb) / sa;
        },
        mc.threads);
    return detail::finish_mc(std::move(vals), mc.seed, mc.ci_level);
}

inline Estimate real_world_price(const MmmParams& p, const PayoffSpec& spec,
                                 const McConfig& mc) {
    spec.validate();
    const double k = spec.strike;
    switch (spec.kind) {
        case PayoffKind::eu_call_on_index:
            return real_world_price(
                p, [k](double s) { return s > k ? s - k : 0.0; }, spec.maturity, mc);
        case PayoffKind::eu_put_on_index:
            return real_world_price(
                p, [k](double s) { return k > s ? k - s : 0.0; }, spec.maturity, mc);
        case PayoffKind::zcb:
            return real_world_price(p, [](double) { return 1.0; }, spec.maturity, mc);
        case PayoffKind::vol_put:
        case PayoffKind::vol_call:
            throw ConfigError(
                "real_world_price: volatility payoffs are priced by "
                "price_vol_put (quadrature or mlmc)");
        case PayoffKind::fx_call:
            throw ConfigError("real_world_price: fx_call needs the two-index model");
        case PayoffKind::custom_terminal:
            throw ConfigError(
                "real_world_price: custom payoffs use the callable overload");
    }
    throw ConfigError("real_world_price: unknown payoff kind");
}

inline Estimate real_world_price(const BivariateMmmParams& p, const PayoffSpec& spec,
                                 const McConfig& mc) {
    spec.validate();
    const double k = spec.strike;
    switch (spec.kind) {
        case PayoffKind::fx_call:
            return real_world_price(
                p,
                [k](double sa, double sb) {
                    const double ratio = sa / sb;
                    return ratio > k ? ratio - k : 0.0;
                },
                spec.maturity, mc);
        case PayoffKind::eu_call_on_index:
            return real_world_price(
                p, [k](double sa, double) { return sa > k ? sa - k : 0.0; },
                spec.maturity, mc);
        case PayoffKind::eu_put_on_index:
            return real_world_price(
                p, [k](double sa, double) { return k > sa ? k - sa : 0.0; },
                spec.maturity, mc);
        case PayoffKind::zcb:
            return real_world_price(p, [](double, double) { return 1.0; },
                                    spec.maturity, mc);
        case PayoffKind::vol_put:
        case PayoffKind::vol_call:
            throw ConfigError(
                "real_world_price: volatility payoffs are one-index claims");
        case PayoffKind::custom_terminal:
            throw ConfigError(
                "real_world_price: custom payoffs use the callable overload");
    }
    throw ConfigError("real_world_price: unknown payoff kind");
}

// Foreign-exchange call on the index ratio, benchmarked by the numerator
// index: S^a_0 * E[(S^a_T/S^b_T - K)^+ / S^a_T].
inline Estimate price_fx_call(const BivariateMmmParams& p, double strike, double T,
                              const McConfig& mc) {
    PayoffSpec spec;
    spec.kind = PayoffKind::fx_call;
    spec.strike = strike;
    spec.maturity = T;
    return real_world_price(p, spec, mc);
}

// Volatility put S_0 * E[(K - sqrt(V/T))^+ / S_T] with V the time integral
// of 1/Y.  The quadrature method integrates the benchmarked payoff against
// the tabulated joint density (the grid must have been built for this
// model's normalized start, horizon, and drift); the mlmc method delegates
// to the multilevel engine.
inline Estimate price_vol_put(const MmmParams& p, double strike, double T,
                              const JointDensityGrid& grid, const McConfig& mc,
                              EstimateMethod method,
                              const MlmcConfig& mlmc_cfg = MlmcConfig{}) {
    p.validate();
    mc.validate();
    if (strike < 0.0) throw ConfigError("price_vol_put: requires strike >= 0");
    if (!(T > 0.0)) throw ConfigError("price_vol_put: requires T > 0");

    if (method == EstimateMethod::mlmc) {
        return mlmc_run(p, vol_put_spec(strike, T), mlmc_cfg, mc.seed, mc.threads,
                        mc.ci_level)
            .estimate;
    }
    if (method != EstimateMethod::quadrature)
        throw ConfigError("price_vol_put: method must be quadrature or mlmc");

    const double y0 = p.y0();
    if (std::fabs(grid.x - y0) > 1e-9 * std::max(1.0, y0) ||
        std::fabs(grid.T - T) > 1e-12 * std::max(1.0, T) ||
        std::fabs(grid.eta - p.eta) > 1e-12)
        throw ConfigError(
            "price_vol_put: grid was built for different model parameters");
    const double coverage = grid.mass();
    if (coverage < 0.99)
        throw ConfigError("price_vol_put: grid covers only " +
                          std::to_string(coverage) + " of the joint law");

    const double denom = std::exp(p.r * T) * p.alpha(T);
    double sum = 0.0;
    for (std::size_t i = 0; i < grid.y_grid.size(); ++i) {
        const double y = grid.y_grid[i];
        double row = 0.0;
        for (std::size_t j = 0; j < grid.v_grid.size(); ++j) {
            const double vol = std::sqrt(grid.v_grid[j] / T);
            if (vol >= strike) continue;
            row += grid.v_weights[j] * (strike - vol) * grid.at(i, j);
        }
        sum += grid.y_weights[i] * row / (denom * y);
    }
    Estimate e = make_estimate(p.s0 * sum, 0.0,
                               static_cast<long>(grid.values.size()), mc.seed,
                               EstimateMethod::quadrature, mc.ci_level);
    e.coverage = coverage;
    return e;
}

// Put-call parity gap for volatility options, evaluated on common paths:
// the pathwise combination (vol - K)^+ - (K - vol)^+ - (vol - K) is exactly
// zero in floating point, so the benchmarked estimate is structurally zero
// with zero variance.
inline Estimate parity_gap(const MmmParams& p, double strike, double T,
                           const McConfig& mc, long n_steps = 64) {
    p.validate();
    mc.validate();
    if (strike < 0.0) throw ConfigError("parity_gap: requires strike >= 0");
    if (!(T > 0.0)) throw ConfigError("parity_gap: requires T > 0");
    if (n_steps < 1) throw ConfigError("parity_gap: requires n_steps >= 1");
    const std::size_t n = static_cast<std::size_t>(mc.n_paths);
    const double floor_ = 1e-10;
    const double denom_scale = std::exp(p.r * T) * p.alpha(T);
    std::vector<double> vals(n);
    parallel_for_indexed(
        n,
        [&](std::size_t i) {
            RngStream g(mc.seed, i);
            const auto path = detail::euler_vol_path(g, p, T, n_steps, floor_);
            const double vol = std::sqrt(path.integral / T);
            const double call = vol > strike ? vol - strike : 0.0;
            const double put = strike > vol ? strike - vol : 0.0;
            const double s_T =
                denom_scale * (path.y_end > floor_ ? path.y_end : floor_);
            vals[i] = p.s0 * (call - put - (vol - strike)) / s_T;
        },
        mc.threads);
    return detail::finish_mc(std::move(vals), mc.seed, mc.ci_level);
}

// Mean of the benchmarked savings account, normalized by its initial value:
// an estimate of E[sbar_0 / sbar_T].  The exact value 1 - e^{-sbar_0/(2 t)}
// (t the operational-time increment) is strictly below 1: the benchmarked
// savings account is a strict supermartingale, which is why bond-like
// claims price below their risk-neutral value under this model.
inline Estimate benchmarked_savings_mean(const MmmParams& p, double T,
                                         const McConfig& mc) {
    p.validate();
    mc.validate();
    if (!(T > 0.0))
        throw ConfigError("benchmarked_savings_mean: requires T > 0");
    const std::size_t n = static_cast<std::size_t>(mc.n_paths);
    std::vector<double> vals(n);
    parallel_for_indexed(
        n,
        [&](std::size_t i) {
            RngStream g(mc.seed, i);
            vals[i] = p.sbar0() / detail::mmm_terminal_sbar(g, p, T);
        },
        mc.threads);
    return detail::finish_mc(std::move(vals), mc.seed, mc.ci_level);
}

inline double savings_mean_exact(const MmmParams& p, double T) {
    p.validate();
    if (!(T > 0.0)) throw ConfigError("savings_mean_exact: requires T > 0");
    const double t = phi_time(p, T) - phi_time(p, 0.0);
    return p.sbar0() * besq_inverse_mean(p.sbar0(), t);
}

// JSON record of an estimate: {value, std_error, ci, n, seed, method,
// model, payoff} plus the tail/coverage diagnostics.
inline nlohmann::json estimate_to_json(const Estimate& e, const std::string& model,
                                       const std::string& payoff) {
    nlohmann::json j;
    j["value"] = e.value;
    j["std_error"] = e.std_error;
    j["ci"] = {e.ci_low, e.ci_high};
    j["n"] = e.n_samples;
    j["seed"] = e.seed;
    j["method"] = method_name(e.method);
    j["model"] = model;
    j["payoff"] = payoff;
    j["tail_fraction"] = e.tail_fraction;
    j["tail_warning"] = e.tail_warning;
    j["coverage"] = e.coverage;
    return j;
}

// Append one estimate to a CSV results ledger, writing the header when the
// file is new or empty.
inline void append_results_csv(const std::string& path, const Estimate& e,
                               const std::string& model,
                               const std::string& payoff) {
    bool need_header = true;
    {
        std::ifstream probe(path);
        if (probe.good() && probe.peek() != std::ifstream::traits_type::eof())
            need_header = false;
    }
    std::ofstream out(path, std::ios::app);
    if (!out) throw ConfigError("append_results_csv: cannot open " + path);
    if (need_header)
        out << "model,payoff,method,value,std_error,ci_low,ci_high,n,seed\n";
    char line[320];
    std::snprintf(line, sizeof line, "%s,%s,%s,%.17g,%.17g,%.17g,%.17g,%ld,%llu\n",
                  model.c_str(), payoff.c_str(), method_name(e.method).c_str(),
                  e.value, e.std_error, e.ci_low, e.ci_high, e.n_samples,
                  static_cast<unsigned long long>(e.seed));
    out << line;
    if (!out) throw NumericalError("append_results_csv: write failed");
}

}  // namespace gopmc
