#pragma once
// Shared estimator vocabulary for the pricing and multilevel layers: Monte
// Carlo run configuration, payoff descriptors, and the Estimate record every
// pricer returns (value, batch-means standard error, confidence interval,
// provenance, and tail diagnostics).

#include <cstdint>
#include <string>

#include "gopmc/base.hpp"
#include "gopmc/rng.hpp"

namespace gopmc {

struct McConfig {
    long n_paths = 100000;
    std::uint64_t seed = 1;
    long batch_size = 10000;  // chunk size for parallel generation
    double ci_level = 0.99;
    bool antithetic = false;  // accepted in configs but not implemented
    int threads = 0;          // 0: hardware concurrency

    void validate() const {
        if (n_paths < 1) throw ConfigError("McConfig: requires n_paths >= 1");
        if (batch_size < 1) throw ConfigError("McConfig: requires batch_size >= 1");
        if (!(ci_level > 0.0) || !(ci_level < 1.0))
            throw ConfigError("McConfig: requires 0 < ci_level < 1");
        if (antithetic)
            throw ConfigError(
                "McConfig: antithetic sampling is not implemented for the "
                "chi-square-driven exact samplers");
        if (threads < 0) throw ConfigError("McConfig: requires threads >= 0");
    }
};

enum class PayoffKind {
    eu_call_on_index,
    eu_put_on_index,
    vol_put,
    vol_call,
    fx_call,
    zcb,
    custom_terminal,
};

enum class Monitoring { terminal, integral };

inline std::string payoff_kind_name(PayoffKind k) {
    switch (k) {
        case PayoffKind::eu_call_on_index: return "eu_call_on_index";
        case PayoffKind::eu_put_on_index: return "eu_put_on_index";
        case PayoffKind::vol_put: return "vol_put";
        case PayoffKind::vol_call: return "vol_call";
        case PayoffKind::fx_call: return "fx_call";
        case PayoffKind::zcb: return "zcb";
        case PayoffKind::custom_terminal: return "custom_terminal";
    }
    throw ConfigError("payoff_kind_name: unknown kind");
}

inline PayoffKind parse_payoff_kind(const std::string& s) {
    for (PayoffKind k :
         {PayoffKind::eu_call_on_index, PayoffKind::eu_put_on_index,
          PayoffKind::vol_put, PayoffKind::vol_call, PayoffKind::fx_call,
          PayoffKind::zcb, PayoffKind::custom_terminal})
        if (payoff_kind_name(k) == s) return k;
    throw ConfigError("parse_payoff_kind: unknown kind '" + s + "'");
}

struct PayoffSpec {
    PayoffKind kind = PayoffKind::eu_call_on_index;
    double strike = 0.0;
    double maturity = 1.0;
    Monitoring monitoring = Monitoring::terminal;

    void validate() const {
        if (strike < 0.0) throw ConfigError("PayoffSpec: requires strike >= 0");
        if (!(maturity > 0.0)) throw ConfigError("PayoffSpec: requires maturity > 0");
        const bool vol = kind == PayoffKind::vol_put || kind == PayoffKind::vol_call;
        if (vol && monitoring != Monitoring::integral)
            throw ConfigError(
                "PayoffSpec: volatility payoffs use integral monitoring");
        if (!vol && monitoring != Monitoring::terminal)
            throw ConfigError("PayoffSpec: terminal payoffs use terminal monitoring");
    }
};

inline PayoffSpec vol_put_spec(double strike, double maturity) {
    PayoffSpec s;
    s.kind = PayoffKind::vol_put;
    s.strike = strike;
    s.maturity = maturity;
    s.monitoring = Monitoring::integral;
    return s;
}

enum class EstimateMethod { exact_mc, quadrature, mlmc };

inline std::string method_name(EstimateMethod m) {
    switch (m) {
        case EstimateMethod::exact_mc: return "exact_mc";
        case EstimateMethod::quadrature: return "quadrature";
        case EstimateMethod::mlmc: return "mlmc";
    }
    throw ConfigError("method_name: unknown method");
}

struct Estimate {
    double value = 0.0;
    double std_error = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    long n_samples = 0;
    std::uint64_t seed = 0;
    EstimateMethod method = EstimateMethod::exact_mc;
    // Diagnostics: share of the estimate carried by the largest 0.1% of
    // samples, the warning flag it trips above 20%, and (for quadrature)
    // the probability mass covered by the grid.
    double tail_fraction = 0.0;
    bool tail_warning = false;
    double coverage = 1.0;
};

// Assemble an Estimate with a symmetric normal confidence interval.
inline Estimate make_estimate(double value, double std_error, long n_samples,
                              std::uint64_t seed, EstimateMethod method,
                              double ci_level) {
    if (!(std_error >= 0.0))
        throw NumericalError("make_estimate: negative standard error");
    const double z = normal_quantile(0.5 + 0.5 * ci_level);
    Estimate e;
    e.value = value;
    e.std_error = std_error;
    e.ci_low = value - z * std_error;
    e.ci_high = value + z * std_error;
    e.n_samples = n_samples;
    e.seed = seed;
    e.method = method;
    return e;
}

}  // namespace gopmc
