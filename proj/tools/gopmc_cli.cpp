// Command-line surface: configuration ingestion, experiment orchestration,
// and result emission for the diffusion samplers, transform inversion, and
// real-world pricers.  Subcommands: simulate, price, density, check-symmetry,
// validate.  Every command is deterministic under a fixed (config, seed) and
// stamps its outputs with seed, stream layout, and build id.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical/diagnostic error.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gopmc/liesym.hpp"
#include "gopmc/mlmc.hpp"
#include "gopmc/pricing.hpp"
#include "gopmc/processes.hpp"
#include "gopmc/quadrature.hpp"
#include "gopmc/wishart.hpp"

#ifndef GOPMC_BUILD_ID
#define GOPMC_BUILD_ID "unversioned"
#endif

namespace {

using nlohmann::json;
using namespace gopmc;

constexpr const char* kStreamLayout = "per-path counter (seed, index)";

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Run configuration: defaults < preset < config file < explicit flags.
// ---------------------------------------------------------------------------

struct GridSpec {
    std::optional<double> y_min, y_max, v_min, v_max;
    int ny = 91;
    int nv = 67;
};

struct RunConfig {
    std::string model_kind = "mmm";  // mmm | bivariate | wishart
    MmmParams mmm;
    BivariateMmmParams biv;
    int w_d = 2;
    double w_alpha = 4.0;

    PayoffSpec payoff;
    McConfig mc;
    MlmcConfig mlmc;
    // The vertical-line contour with lengthened partial sums certifies at
    // start levels where the Talbot contour's complex Bessel orders cannot;
    // the config file can still select {"method": "talbot"} explicitly.
    InversionConfig inversion = [] {
        InversionConfig c;
        c.method = InversionMethod::euler_abate_whitt;
        c.euler_n = 45;
        return c;
    }();
    GridSpec grid;

    double T = 1.0;
    long steps = 16;
    std::string scheme = "bm";  // wishart simulate: bm | ou
    bool summary = false;

    std::string out_dir = ".";
    std::string format = "csv";  // simulate path output: csv | json
};

void apply_preset(RunConfig& cfg, const std::string& name) {
    if (name == "stylized") {
        cfg.model_kind = "mmm";
        cfg.mmm = MmmParams{};
    } else if (name == "bivariate") {
        cfg.model_kind = "bivariate";
        cfg.biv = BivariateMmmParams{};
    } else {
        throw ConfigError("config: unknown preset '" + name +
                          "' (available: stylized, bivariate)");
    }
}

// --- schema-checked JSON ingestion -----------------------------------------

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
    for (const auto& [key, _] : obj.items())
        if (!allowed.count(key))
            throw ConfigError("config: unknown key '" + where + key + "'");
}

double need_number(const json& v, const std::string& where) {
    if (!v.is_number())
        throw ConfigError("config: " + where + " must be a number");
    return v.get<double>();
}

long need_integer(const json& v, const std::string& where) {
    if (!v.is_number_integer())
        throw ConfigError("config: " + where + " must be an integer");
    return v.get<long>();
}

std::string need_string(const json& v, const std::string& where) {
    if (!v.is_string())
        throw ConfigError("config: " + where + " must be a string");
    return v.get<std::string>();
}

bool need_bool(const json& v, const std::string& where) {
    if (!v.is_boolean())
        throw ConfigError("config: " + where + " must be a boolean");
    return v.get<bool>();
}

std::array<double, 2> need_pair(const json& v, const std::string& where) {
    if (!v.is_array() || v.size() != 2)
        throw ConfigError("config: " + where + " must be an array of 2 numbers");
    return {need_number(v[0], where + "[0]"), need_number(v[1], where + "[1]")};
}

void load_model_section(RunConfig& cfg, const json& m) {
    if (!m.is_object()) throw ConfigError("config: model must be an object");
    const std::string kind =
        m.contains("kind") ? need_string(m["kind"], "model.kind") : cfg.model_kind;
    if (kind == "mmm") {
        reject_unknown_keys(m, {"kind", "s0", "alpha0", "eta", "r", "phi0"},
                            "model.");
        cfg.model_kind = "mmm";
        if (m.contains("s0")) cfg.mmm.s0 = need_number(m["s0"], "model.s0");
        if (m.contains("alpha0"))
            cfg.mmm.alpha0 = need_number(m["alpha0"], "model.alpha0");
        if (m.contains("eta")) cfg.mmm.eta = need_number(m["eta"], "model.eta");
        if (m.contains("r")) cfg.mmm.r = need_number(m["r"], "model.r");
        if (m.contains("phi0")) cfg.mmm.phi0 = need_number(m["phi0"], "model.phi0");
    } else if (kind == "bivariate") {
        reject_unknown_keys(m, {"kind", "r", "alpha0", "eta", "sbar0", "rho"},
                            "model.");
        cfg.model_kind = "bivariate";
        if (m.contains("r")) cfg.biv.r = need_pair(m["r"], "model.r");
        if (m.contains("alpha0"))
            cfg.biv.alpha0 = need_pair(m["alpha0"], "model.alpha0");
        if (m.contains("eta")) cfg.biv.eta = need_pair(m["eta"], "model.eta");
        if (m.contains("sbar0")) cfg.biv.sbar0 = need_pair(m["sbar0"], "model.sbar0");
        if (m.contains("rho")) cfg.biv.rho = need_number(m["rho"], "model.rho");
    } else if (kind == "wishart") {
        reject_unknown_keys(m, {"kind", "d", "alpha"}, "model.");
        cfg.model_kind = "wishart";
        if (m.contains("d"))
            cfg.w_d = static_cast<int>(need_integer(m["d"], "model.d"));
        if (m.contains("alpha")) cfg.w_alpha = need_number(m["alpha"], "model.alpha");
    } else {
        throw ConfigError("config: model.kind must be mmm, bivariate or wishart");
    }
}

void load_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) throw ConfigError("config: cannot open '" + path + "'");
    json root;
    try {
        root = json::parse(in);
    } catch (const json::parse_error& e) {
        // the parser message carries the line/column location
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (!root.is_object()) throw ConfigError("config: top level must be an object");
    reject_unknown_keys(
        root, {"preset", "model", "payoff", "mc", "mlmc", "inversion", "output"},
        "");
    if (root.contains("preset"))
        apply_preset(cfg, need_string(root["preset"], "preset"));
    if (root.contains("model")) load_model_section(cfg, root["model"]);
    if (root.contains("payoff")) {
        const json& p = root["payoff"];
        if (!p.is_object()) throw ConfigError("config: payoff must be an object");
        reject_unknown_keys(p, {"kind", "strike", "maturity"}, "payoff.");
        if (p.contains("kind"))
            cfg.payoff.kind = parse_payoff_kind(need_string(p["kind"], "payoff.kind"));
        if (p.contains("strike"))
            cfg.payoff.strike = need_number(p["strike"], "payoff.strike");
        if (p.contains("maturity"))
            cfg.payoff.maturity = need_number(p["maturity"], "payoff.maturity");
    }
    if (root.contains("mc")) {
        const json& m = root["mc"];
        if (!m.is_object()) throw ConfigError("config: mc must be an object");
        reject_unknown_keys(
            m, {"n_paths", "seed", "batch_size", "ci_level", "antithetic", "threads"},
            "mc.");
        if (m.contains("n_paths")) cfg.mc.n_paths = need_integer(m["n_paths"], "mc.n_paths");
        if (m.contains("seed"))
            cfg.mc.seed = static_cast<std::uint64_t>(need_integer(m["seed"], "mc.seed"));
        if (m.contains("batch_size"))
            cfg.mc.batch_size = need_integer(m["batch_size"], "mc.batch_size");
        if (m.contains("ci_level"))
            cfg.mc.ci_level = need_number(m["ci_level"], "mc.ci_level");
        if (m.contains("antithetic"))
            cfg.mc.antithetic = need_bool(m["antithetic"], "mc.antithetic");
        if (m.contains("threads"))
            cfg.mc.threads = static_cast<int>(need_integer(m["threads"], "mc.threads"));
    }
    if (root.contains("mlmc")) {
        const json& m = root["mlmc"];
        if (!m.is_object()) throw ConfigError("config: mlmc must be an object");
        reject_unknown_keys(m, {"eps", "l_max", "n0", "pilot_n"}, "mlmc.");
        if (m.contains("eps")) cfg.mlmc.eps = need_number(m["eps"], "mlmc.eps");
        if (m.contains("l_max"))
            cfg.mlmc.l_max = static_cast<int>(need_integer(m["l_max"], "mlmc.l_max"));
        if (m.contains("n0"))
            cfg.mlmc.n0 = static_cast<int>(need_integer(m["n0"], "mlmc.n0"));
        if (m.contains("pilot_n")) cfg.mlmc.pilot_n = need_integer(m["pilot_n"], "mlmc.pilot_n");
    }
    if (root.contains("inversion")) {
        const json& v = root["inversion"];
        if (!v.is_object()) throw ConfigError("config: inversion must be an object");
        reject_unknown_keys(v,
                            {"method", "nodes", "scaling", "euler_m", "euler_n",
                             "y_min", "y_max", "ny", "v_min", "v_max", "nv"},
                            "inversion.");
        if (v.contains("method")) {
            const std::string name = need_string(v["method"], "inversion.method");
            if (name == "talbot")
                cfg.inversion.method = InversionMethod::talbot;
            else if (name == "euler")
                cfg.inversion.method = InversionMethod::euler_abate_whitt;
            else
                throw ConfigError("config: inversion.method must be talbot or euler");
        }
        if (v.contains("nodes"))
            cfg.inversion.nodes = static_cast<int>(need_integer(v["nodes"], "inversion.nodes"));
        if (v.contains("scaling"))
            cfg.inversion.scaling = need_number(v["scaling"], "inversion.scaling");
        if (v.contains("euler_m"))
            cfg.inversion.euler_m = static_cast<int>(need_integer(v["euler_m"], "inversion.euler_m"));
        if (v.contains("euler_n"))
            cfg.inversion.euler_n = static_cast<int>(need_integer(v["euler_n"], "inversion.euler_n"));
        if (v.contains("y_min")) cfg.grid.y_min = need_number(v["y_min"], "inversion.y_min");
        if (v.contains("y_max")) cfg.grid.y_max = need_number(v["y_max"], "inversion.y_max");
        if (v.contains("v_min")) cfg.grid.v_min = need_number(v["v_min"], "inversion.v_min");
        if (v.contains("v_max")) cfg.grid.v_max = need_number(v["v_max"], "inversion.v_max");
        if (v.contains("ny"))
            cfg.grid.ny = static_cast<int>(need_integer(v["ny"], "inversion.ny"));
        if (v.contains("nv"))
            cfg.grid.nv = static_cast<int>(need_integer(v["nv"], "inversion.nv"));
    }
    if (root.contains("output")) {
        const json& o = root["output"];
        if (!o.is_object()) throw ConfigError("config: output must be an object");
        reject_unknown_keys(o, {"dir", "format"}, "output.");
        if (o.contains("dir")) cfg.out_dir = need_string(o["dir"], "output.dir");
        if (o.contains("format")) cfg.format = need_string(o["format"], "output.format");
    }
}

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

json provenance(std::uint64_t seed) {
    return {{"seed", seed}, {"streams", kStreamLayout}, {"build", GOPMC_BUILD_ID}};
}

std::string csv_provenance(std::uint64_t seed) {
    std::ostringstream os;
    os << "# seed: " << seed << "\n# streams: " << kStreamLayout
       << "\n# build: " << GOPMC_BUILD_ID << "\n";
    return os.str();
}

std::filesystem::path out_path(const RunConfig& cfg, const std::string& name) {
    std::filesystem::create_directories(cfg.out_dir);
    return std::filesystem::path(cfg.out_dir) / name;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out.good())
        throw ConfigError("output: cannot write '" + p.string() + "'");
    out << text;
}

void write_json(const std::filesystem::path& p, const json& j) {
    write_text(p, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Joint-density grid construction shared by `density` and the quadrature
// volatility-put pricer.  Axis bounds default to a padded envelope of a
// deterministic Euler pilot of (Y_T, int dt/Y); the certification inside
// invert_joint_density raises a diagnostic error (exit 3) if the configured
// contour cannot deliver the grid.
// ---------------------------------------------------------------------------

std::vector<double> linspace(double a, double b, int n) {
    if (n < 2) throw ConfigError("config: grid axes need at least 2 points");
    if (!(b > a)) throw ConfigError("config: grid bounds must satisfy max > min");
    std::vector<double> g(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        g[static_cast<std::size_t>(i)] = a + (b - a) * i / (n - 1.0);
    return g;
}

JointDensityGrid build_density_grid(const RunConfig& cfg) {
    if (cfg.model_kind != "mmm")
        throw ConfigError(
            "density: the joint transform inversion applies to the mmm model");
    const MmmParams& p = cfg.mmm;
    p.validate();
    double y_lo, y_hi, v_lo, v_hi;
    if (cfg.grid.y_min && cfg.grid.y_max && cfg.grid.v_min && cfg.grid.v_max) {
        y_lo = *cfg.grid.y_min;
        y_hi = *cfg.grid.y_max;
        v_lo = *cfg.grid.v_min;
        v_hi = *cfg.grid.v_max;
    } else if (cfg.grid.y_min || cfg.grid.y_max || cfg.grid.v_min ||
               cfg.grid.v_max) {
        throw ConfigError(
            "config: grid bounds must be given all together "
            "(inversion.y_min/y_max/v_min/v_max) or not at all");
    } else {
        // deterministic pilot envelope
        const long n_pilot = 4000, n_steps = 64;
        double ymin = 1e300, ymax = 0.0, vmin = 1e300, vmax = 0.0;
        for (long i = 0; i < n_pilot; ++i) {
            RngStream g(cfg.mc.seed ^ 0x517cc1b727220a95ULL,
                        static_cast<std::uint64_t>(i));
            const auto path = detail::euler_vol_path(g, p, cfg.T, n_steps, 1e-10);
            ymin = std::min(ymin, path.y_end);
            ymax = std::max(ymax, path.y_end);
            vmin = std::min(vmin, path.integral);
            vmax = std::max(vmax, path.integral);
        }
        y_lo = std::max(1e-8, 0.8 * ymin);
        y_hi = 1.2 * ymax;
        v_lo = 0.85 * vmin;
        v_hi = 1.15 * vmax;
    }
    return invert_joint_density(p.y0(), cfg.T, p.eta, cfg.inversion,
                                linspace(y_lo, y_hi, cfg.grid.ny),
                                linspace(v_lo, v_hi, cfg.grid.nv),
                                cfg.mc.threads);
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

int cmd_simulate(const RunConfig& cfg) {
    if (cfg.model_kind == "mmm") {
        cfg.mmm.validate();
        cfg.mc.validate();
        if (cfg.steps < 1) throw ConfigError("simulate: requires steps >= 1");
        if (!(cfg.T > 0.0)) throw ConfigError("simulate: requires T > 0");
        std::vector<double> times;
        for (long k = 0; k <= cfg.steps; ++k)
            times.push_back(cfg.T * static_cast<double>(k) /
                            static_cast<double>(cfg.steps));
        const long n = cfg.mc.n_paths;
        std::vector<std::vector<double>> paths(static_cast<std::size_t>(n));
        for (long i = 0; i < n; ++i) {
            RngStream g(cfg.mc.seed, static_cast<std::uint64_t>(i));
            paths[static_cast<std::size_t>(i)] = mmm_gop_path(g, cfg.mmm, times);
        }
        if (cfg.summary) {
            std::ostringstream os;
            os << csv_provenance(cfg.mc.seed) << "t,mean,se\n";
            std::vector<double> col(static_cast<std::size_t>(n));
            for (std::size_t k = 0; k < times.size(); ++k) {
                for (long i = 0; i < n; ++i)
                    col[static_cast<std::size_t>(i)] =
                        paths[static_cast<std::size_t>(i)][k];
                const auto ms = batch_means(col);
                os << fmt_double(times[k]) << ',' << fmt_double(ms.mean) << ','
                   << fmt_double(ms.se) << '\n';
            }
            const auto p = out_path(cfg, "summary.csv");
            write_text(p, os.str());
            std::cout << "wrote " << p.string() << " (" << n << " paths)\n";
        } else if (cfg.format == "json") {
            json j;
            j["provenance"] = provenance(cfg.mc.seed);
            j["t"] = times;
            j["paths"] = paths;
            const auto p = out_path(cfg, "paths.json");
            write_json(p, j);
            std::cout << "wrote " << p.string() << " (" << n << " paths)\n";
        } else {
            std::ostringstream os;
            os << csv_provenance(cfg.mc.seed) << "t";
            for (long i = 0; i < n; ++i) os << ",path_" << i;
            os << '\n';
            for (std::size_t k = 0; k < times.size(); ++k) {
                os << fmt_double(times[k]);
                for (long i = 0; i < n; ++i)
                    os << ',' << fmt_double(paths[static_cast<std::size_t>(i)][k]);
                os << '\n';
            }
            const auto p = out_path(cfg, "paths.csv");
            write_text(p, os.str());
            std::cout << "wrote " << p.string() << " (" << n << " paths)\n";
        }
        return 0;
    }
    if (cfg.model_kind == "wishart") {
        cfg.mc.validate();
        if (!(cfg.T > 0.0)) throw ConfigError("simulate: requires T > 0");
        const int d = cfg.w_d;
        WishartParams wp;
        wp.d = d;
        wp.alpha = cfg.w_alpha;
        wp.a = Eigen::MatrixXd::Identity(d, d);
        wp.b = Eigen::MatrixXd::Zero(d, d);
        wp.x0 = Eigen::MatrixXd::Identity(d, d);
        if (existence_class(wp) == ExistenceClass::none)
            throw ConfigError(
                "simulate: no weak solution for alpha = " +
                fmt_double(cfg.w_alpha) + ", d = " + std::to_string(d) +
                "; existence requires alpha >= d - 1");
        const long n_int = std::lround(cfg.w_alpha);
        if (std::fabs(cfg.w_alpha - static_cast<double>(n_int)) > 1e-12)
            throw ConfigError(
                "simulate: the squared-Brownian and squared-Ornstein-Uhlenbeck "
                "schemes need an integer degrees-of-freedom parameter");
        const long n = cfg.mc.n_paths;
        std::ostringstream os;
        os << csv_provenance(cfg.mc.seed);
        std::vector<std::pair<int, int>> entries;
        for (int i = 0; i < d; ++i)
            for (int j = i; j < d; ++j) entries.emplace_back(i, j);
        bool first = true;
        for (auto [i, j] : entries) {
            os << (first ? "" : ",") << 'x' << i << '_' << j;
            first = false;
        }
        os << '\n';
        std::vector<std::vector<double>> cols(
            entries.size(), std::vector<double>(static_cast<std::size_t>(n)));
        for (long k = 0; k < n; ++k) {
            RngStream g(cfg.mc.seed, static_cast<std::uint64_t>(k));
            Eigen::MatrixXd x;
            if (cfg.scheme == "bm") {
                x = wishart_bm_transition(g, wp.x0, static_cast<int>(n_int), cfg.T);
            } else if (cfg.scheme == "ou") {
                x = wishart_ou_path(g, static_cast<int>(n_int),
                                    Eigen::MatrixXd::Zero(d, d),
                                    Eigen::MatrixXd::Identity(d, d), wp.x0,
                                    {cfg.T})
                        .back();
            } else {
                throw ConfigError("simulate: scheme must be bm or ou");
            }
            first = true;
            for (std::size_t e = 0; e < entries.size(); ++e) {
                const double v = x(entries[e].first, entries[e].second);
                cols[e][static_cast<std::size_t>(k)] = v;
                os << (first ? "" : ",") << fmt_double(v);
                first = false;
            }
            os << '\n';
        }
        if (cfg.summary) {
            std::ostringstream ss;
            ss << csv_provenance(cfg.mc.seed) << "entry,mean,se,drift_mean\n";
            for (std::size_t e = 0; e < entries.size(); ++e) {
                const auto ms = batch_means(cols[e]);
                const auto [i, j] = entries[e];
                const double theory =
                    wp.x0(i, j) + (i == j ? cfg.w_alpha * cfg.T : 0.0);
                ss << 'x' << i << '_' << j << ',' << fmt_double(ms.mean) << ','
                   << fmt_double(ms.se) << ',' << fmt_double(theory) << '\n';
            }
            const auto p = out_path(cfg, "summary.csv");
            write_text(p, ss.str());
            std::cout << "wrote " << p.string() << " (" << n << " samples)\n";
        } else {
            const auto p = out_path(cfg, "paths.csv");
            write_text(p, os.str());
            std::cout << "wrote " << p.string() << " (" << n << " samples)\n";
        }
        return 0;
    }
    throw ConfigError("simulate: supports the mmm and wishart models");
}

// ---------------------------------------------------------------------------
// price
// ---------------------------------------------------------------------------

int cmd_price(const RunConfig& cfg, const std::string& method_str) {
    PayoffSpec spec = cfg.payoff;
    const bool vol = spec.kind == PayoffKind::vol_put || spec.kind == PayoffKind::vol_call;
    spec.monitoring = vol ? Monitoring::integral : Monitoring::terminal;
    spec.validate();
    cfg.mc.validate();

    Estimate est;
    std::string model_name = cfg.model_kind;
    if (spec.kind == PayoffKind::vol_put) {
        if (cfg.model_kind != "mmm")
            throw ConfigError("price: the volatility put uses the mmm model");
        if (method_str == "quadrature") {
            const auto grid = build_density_grid(cfg);
            est = price_vol_put(cfg.mmm, spec.strike, spec.maturity, grid, cfg.mc,
                                EstimateMethod::quadrature);
        } else if (method_str == "mlmc") {
            cfg.mlmc.validate();
            est = mlmc_run(cfg.mmm, spec, cfg.mlmc, cfg.mc.seed, cfg.mc.threads,
                           cfg.mc.ci_level)
                      .estimate;
        } else {
            throw ConfigError(
                "price: the volatility put has no exact-sampling estimator; "
                "use --method quadrature or --method mlmc");
        }
    } else if (spec.kind == PayoffKind::fx_call) {
        if (cfg.model_kind != "bivariate")
            throw ConfigError("price: fx_call uses the bivariate model");
        if (method_str != "mc")
            throw ConfigError("price: fx_call is estimated by --method mc");
        est = price_fx_call(cfg.biv, spec.strike, spec.maturity, cfg.mc);
    } else {
        if (method_str != "mc")
            throw ConfigError("price: terminal payoffs are estimated by --method mc");
        if (cfg.model_kind == "mmm")
            est = real_world_price(cfg.mmm, spec, cfg.mc);
        else if (cfg.model_kind == "bivariate")
            est = real_world_price(cfg.biv, spec, cfg.mc);
        else
            throw ConfigError("price: supports the mmm and bivariate models");
    }

    json j = estimate_to_json(est, model_name, payoff_kind_name(spec.kind));
    j["strike"] = spec.strike;
    j["maturity"] = spec.maturity;
    j["provenance"] = provenance(est.seed);
    const auto jp = out_path(cfg, "price.json");
    write_json(jp, j);
    const auto cp = out_path(cfg, "price.csv");
    std::error_code ec;
    std::filesystem::remove(cp, ec);  // the ledger is rewritten per run
    append_results_csv(cp.string(), est, model_name, payoff_kind_name(spec.kind));
    std::cout << payoff_kind_name(spec.kind) << " value " << fmt_double(est.value)
              << " se " << fmt_double(est.std_error) << "\nwrote " << jp.string()
              << " and " << cp.string() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// density
// ---------------------------------------------------------------------------

int cmd_density(const RunConfig& cfg) {
    const auto grid = build_density_grid(cfg);
    std::ostringstream os;
    os << csv_provenance(cfg.mc.seed) << "y,v,density\n";
    for (std::size_t i = 0; i < grid.y_grid.size(); ++i)
        for (std::size_t j = 0; j < grid.v_grid.size(); ++j)
            os << fmt_double(grid.y_grid[i]) << ',' << fmt_double(grid.v_grid[j])
               << ',' << fmt_double(grid.at(i, j)) << '\n';
    const auto cp = out_path(cfg, "density.csv");
    write_text(cp, os.str());

    json rep;
    rep["mass"] = grid.mass();
    rep["x"] = grid.x;
    rep["T"] = grid.T;
    rep["eta"] = grid.eta;
    rep["ny"] = grid.y_grid.size();
    rep["nv"] = grid.v_grid.size();
    rep["y_range"] = {grid.y_grid.front(), grid.y_grid.back()};
    rep["v_range"] = {grid.v_grid.front(), grid.v_grid.back()};
    rep["method"] =
        cfg.inversion.method == InversionMethod::talbot ? "talbot" : "euler";
    rep["provenance"] = provenance(cfg.mc.seed);
    const auto jp = out_path(cfg, "density.json");
    write_json(jp, rep);
    std::cout << "mass " << fmt_double(grid.mass()) << "\nwrote " << cp.string()
              << " and " << jp.string() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// check-symmetry
// ---------------------------------------------------------------------------

int cmd_check_symmetry(const RunConfig& cfg, const std::string& drift,
                       double delta, double c0, double c1, double gamma,
                       double bcoef) {
    DriftProblem prob;
    prob.gamma = gamma;
    std::string drift_desc;
    if (drift == "besq") {
        // squared-Bessel scale: diffusion 2 sqrt(b x) with b = 2
        prob.b = bcoef > 0.0 ? bcoef : 2.0;
        prob.f = [delta](double) { return delta; };
        prob.f_prime = [](double) { return 0.0; };
        drift_desc = "constant " + fmt_double(delta);
    } else if (drift == "linear") {
        prob.b = bcoef > 0.0 ? bcoef : 1.0;
        prob.f = [c0, c1](double x) { return c0 + c1 * x; };
        prob.f_prime = [c1](double) { return c1; };
        drift_desc = fmt_double(c0) + " + " + fmt_double(c1) + " x";
    } else {
        throw ConfigError("check-symmetry: drift must be besq or linear");
    }
    std::vector<double> grid;
    for (int i = 0; i < 24; ++i)
        grid.push_back(0.25 * std::pow(8.0 / 0.25, i / 23.0));
    const auto res = classify_drift(prob, grid);

    json j;
    j["drift"] = drift_desc;
    j["gamma"] = gamma;
    j["b"] = bcoef;
    if (res.case_id) {
        j["case"] = *res.case_id;
        j["constants"] = {{"A", res.constants.A},
                          {"B", res.constants.B},
                          {"C", res.constants.C}};
        j["residual_sup"] = res.residual_sup;
        std::cout << "nontrivial symmetry family: case " << *res.case_id << " (A="
                  << fmt_double(res.constants.A) << ", B="
                  << fmt_double(res.constants.B) << ", C="
                  << fmt_double(res.constants.C) << "), residual sup "
                  << fmt_double(res.residual_sup) << '\n';
    } else {
        j["case"] = nullptr;
        std::cout << "no symmetry family matches this drift on the test grid\n";
    }
    json fits = json::array();
    for (int k = 0; k < 3; ++k)
        fits.push_back({{"case", k + 1},
                        {"A", res.fits[static_cast<std::size_t>(k)].constants.A},
                        {"B", res.fits[static_cast<std::size_t>(k)].constants.B},
                        {"C", res.fits[static_cast<std::size_t>(k)].constants.C},
                        {"residual_sup",
                         res.fits[static_cast<std::size_t>(k)].residual_sup}});
    j["fits"] = fits;
    const auto p = out_path(cfg, "symmetry.json");
    write_json(p, j);
    std::cout << "wrote " << p.string() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
    std::optional<double> value;  // headline number, when one exists
};

void run_normalization(std::vector<CheckResult>& out) {
    {
        const double t = 0.3, x0 = 1.0;
        const double m = integrate_zero_inf(
            [&](double y) { return besq_density(t, x0, y, 4.0); }, 1e-12);
        out.push_back({"besq_density_normalization", std::fabs(m - 1.0) < 1e-8,
                       "integral " + fmt_double(m)});
    }
    {
        MmmParams p;
        const double m = integrate_zero_inf(
            [&](double y) { return joint_kernel_mu(p.y0(), 1.0, y, 0.0, p.eta); },
            1e-10);
        out.push_back({"joint_kernel_mu0_normalization", std::fabs(m - 1.0) < 1e-6,
                       "integral " + fmt_double(m)});
    }
    {
        // mu = 0 reduces the weighted kernel to the plain transition density
        MmmParams p;
        SquareRootParams sp;
        sp.a = 1.0;
        sp.b = p.eta;
        sp.sigma = 1.0;
        double sup_rel = 0.0;
        const double t_star = 0.25 * std::expm1(p.eta) / p.eta;
        for (int k = 1; k <= 200; ++k) {
            const double y = 0.4 * k;
            const double kern = joint_kernel_mu(p.y0(), 1.0, y, 0.0, p.eta);
            const double cir = cir_density(sp, p.y0(), 1.0, y);
            if (cir > 1e-300)
                sup_rel = std::max(sup_rel, std::fabs(kern - cir) / cir);
            (void)t_star;
        }
        out.push_back({"kernel_matches_cir_transition", sup_rel < 1e-6,
                       "sup relative gap " + fmt_double(sup_rel)});
    }
}

void run_moments(std::vector<CheckResult>& out, std::uint64_t seed) {
    {
        const double x0 = 1.0, t = 0.7, delta = 4.0;
        const long n = 20000;
        std::vector<double> v(static_cast<std::size_t>(n));
        for (long i = 0; i < n; ++i) {
            RngStream g(seed, static_cast<std::uint64_t>(i));
            v[static_cast<std::size_t>(i)] = besq_sample_transition(g, x0, delta, t);
        }
        const auto ms = batch_means(v);
        const double mean_th = x0 + delta * t;
        const bool ok = std::fabs(ms.mean - mean_th) < 3.0 * ms.se;
        out.push_back({"besq_mean_drift", ok,
                       "sample " + fmt_double(ms.mean) + " vs " +
                           fmt_double(mean_th) + " (se " + fmt_double(ms.se) + ")"});
    }
    {
        const int d = 2;
        const double alpha = 4.0, T = 1.0;
        const long n = 3000;
        const Eigen::MatrixXd x0 = Eigen::MatrixXd::Identity(d, d);
        std::vector<double> diag0(static_cast<std::size_t>(n));
        for (long i = 0; i < n; ++i) {
            RngStream g(seed + 1, static_cast<std::uint64_t>(i));
            diag0[static_cast<std::size_t>(i)] =
                wishart_bm_transition(g, x0, 4, T)(0, 0);
        }
        const auto ms = batch_means(diag0);
        const double mean_th = x0(0, 0) + alpha * T;
        const bool ok = std::fabs(ms.mean - mean_th) < 3.0 * ms.se;
        out.push_back({"wishart_mean_drift", ok,
                       "sample " + fmt_double(ms.mean) + " vs " +
                           fmt_double(mean_th) + " (se " + fmt_double(ms.se) + ")"});
    }
}

void run_cross_method(std::vector<CheckResult>& out, std::uint64_t seed) {
    MmmParams p;
    const double T = 1.0;
    {
        const long n = 50000;
        std::vector<double> one(static_cast<std::size_t>(n)),
            two(static_cast<std::size_t>(n));
        for (long i = 0; i < n; ++i) {
            RngStream g1(seed + 2, static_cast<std::uint64_t>(i));
            RngStream g2(seed + 3, static_cast<std::uint64_t>(i));
            one[static_cast<std::size_t>(i)] = mmm_gop_path(g1, p, {T}).back();
            two[static_cast<std::size_t>(i)] =
                mmm_gop_path(g2, p, {0.5 * T, T}).back();
        }
        const auto a = batch_means(one);
        const auto b = batch_means(two);
        const double se = std::sqrt(a.se * a.se + b.se * b.se);
        const bool ok = std::fabs(a.mean - b.mean) < 3.0 * se;
        out.push_back({"one_step_vs_two_step", ok,
                       fmt_double(a.mean) + " vs " + fmt_double(b.mean) +
                           " (combined se " + fmt_double(se) + ")"});
        const double t = phi_time(p, T) - phi_time(p, 0.0);
        const double mean_th = std::exp(p.r * T) * (p.sbar0() + 4.0 * t);
        const bool ok2 = std::fabs(a.mean - mean_th) < 3.0 * a.se;
        out.push_back({"terminal_mean_vs_closed_form", ok2,
                       fmt_double(a.mean) + " vs " + fmt_double(mean_th)});
    }
    {
        const double t = phi_time(p, T) - phi_time(p, 0.0);
        const double quad = integrate_zero_inf(
            [&](double y) { return besq_density(t, p.sbar0(), y, 4.0) / y; },
            1e-11);
        const double closed = besq_inverse_mean(p.sbar0(), t);
        const bool ok = std::fabs(quad - closed) < 1e-10 * closed;
        out.push_back({"inverse_mean_quadrature_vs_closed_form", ok,
                       fmt_double(quad) + " vs " + fmt_double(closed)});
    }
}

void run_fx_oracle(std::vector<CheckResult>& out, const RunConfig& cfg,
                   double strike) {
    BivariateMmmParams bp = cfg.biv;
    const double T = cfg.T;
    const double ga = std::exp(bp.r[0] * T), gb = std::exp(bp.r[1] * T);
    const double K = strike > 0.0 ? strike : 1.05 * ga / gb;
    const double pa = bp.phi(0, T), pb = bp.phi(1, T);
    auto fa = [&](double s) { return besq_density(pa, bp.sbar0[0], s, 4.0); };
    auto fb = [&](double s) { return besq_density(pb, bp.sbar0[1], s, 4.0); };
    auto inner = [&](double yb) {
        const double lo = K * gb * yb / ga;
        return integrate(
            [&](double ya) { return (1.0 / (gb * yb) - K / (ga * ya)) * fa(ya); },
            lo, lo + 60.0 * pa + 8.0 * bp.sbar0[0], 1e-10);
    };
    const double oracle =
        bp.sbar0[0] * integrate([&](double yb) { return inner(yb) * fb(yb); },
                                1e-12, 60.0 * pb + 8.0 * bp.sbar0[1], 1e-9);
    const bool ok = std::isfinite(oracle) && oracle >= 0.0;
    out.push_back({"fx_oracle", ok,
                   "strike " + fmt_double(K) + " value " + fmt_double(oracle) +
                       " (marginal-product form, valid for rho = 0)",
                   oracle});
}

int cmd_validate(const RunConfig& cfg, const std::string& suite, double strike) {
    std::vector<CheckResult> checks;
    const std::uint64_t seed = cfg.mc.seed;
    if (suite == "normalization" || suite == "all") run_normalization(checks);
    if (suite == "moments" || suite == "all") run_moments(checks, seed);
    if (suite == "cross-method" || suite == "all") run_cross_method(checks, seed);
    if (suite == "fx-oracle" || suite == "all") run_fx_oracle(checks, cfg, strike);
    if (checks.empty())
        throw ConfigError(
            "validate: suite must be one of all, normalization, moments, "
            "cross-method, fx-oracle");

    json j;
    j["suite"] = suite;
    j["provenance"] = provenance(seed);
    json arr = json::array();
    bool all_pass = true;
    for (const auto& c : checks) {
        json entry = {{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}};
        if (c.value) entry["value"] = *c.value;
        arr.push_back(entry);
        all_pass = all_pass && c.pass;
        std::cout << (c.pass ? "[PASS] " : "[FAIL] ") << c.name << " — "
                  << c.detail << '\n';
    }
    j["checks"] = arr;
    j["all_pass"] = all_pass;
    const auto p = out_path(cfg, "validate.json");
    write_json(p, j);
    std::cout << "wrote " << p.string() << '\n';
    if (!all_pass) throw NumericalError("validate: " + suite + " reported failures");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Exact simulation, transform inversion, and real-world pricing for "
        "squared Bessel, square-root and matrix-valued diffusions"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string config_file, preset;
    std::uint64_t seed = cfg.mc.seed;
    long paths = cfg.mc.n_paths;
    int threads = 0;

    auto add_shared = [&](CLI::App* sub) {
        sub->add_option("--config", config_file, "JSON configuration file");
        sub->add_option("--preset", preset, "parameter preset (stylized, bivariate)");
        sub->add_option("--seed", seed, "base random seed");
        sub->add_option("--paths", paths, "number of Monte Carlo paths");
        sub->add_option("--threads", threads, "worker threads (0: hardware)");
        sub->add_option("--out", cfg.out_dir, "output directory");
        sub->add_option("--format", cfg.format, "path output format (csv, json)");
    };

    // simulate
    auto* sim = app.add_subcommand("simulate", "sample diffusion paths to CSV");
    add_shared(sim);
    std::string sim_model = "mmm";
    sim->add_option("--model", sim_model, "model (mmm, wishart)");
    sim->add_option("--T", cfg.T, "horizon");
    sim->add_option("--steps", cfg.steps, "time-grid steps (mmm)");
    sim->add_option("--alpha", cfg.w_alpha, "matrix degrees-of-freedom (wishart)");
    sim->add_option("--d", cfg.w_d, "matrix dimension (wishart)");
    sim->add_option("--scheme", cfg.scheme, "wishart scheme (bm, ou)");
    sim->add_flag("--summary", cfg.summary, "emit per-time mean/se instead of paths");

    // price
    auto* pr = app.add_subcommand("price", "price a claim under the real-world measure");
    add_shared(pr);
    std::string payoff_name = "zcb", method_str = "mc";
    double strike = 0.0, maturity = 1.0;
    std::optional<double> rho_override;
    double mlmc_eps = cfg.mlmc.eps;
    pr->add_option("--payoff", payoff_name,
                   "payoff (index_call, index_put, zcb, vol_put, fx_call)");
    pr->add_option("--strike", strike, "strike");
    pr->add_option("--T", maturity, "maturity");
    pr->add_option("--method", method_str, "estimator (mc, quadrature, mlmc)");
    pr->add_option("--rho", rho_override, "bivariate correlation override");
    pr->add_option("--eps", mlmc_eps, "multilevel accuracy target");

    // density
    auto* de = app.add_subcommand("density",
                                  "tabulate the joint law of the index level and "
                                  "its inverse time integral");
    add_shared(de);
    de->add_option("--T", cfg.T, "horizon");

    // check-symmetry
    auto* cs = app.add_subcommand("check-symmetry",
                                  "classify a drift against the solvable families");
    add_shared(cs);
    std::string drift = "besq";
    double delta = 4.0, c0 = 0.0, c1 = 0.0, gamma = 1.0, bcoef = 0.0;
    cs->add_option("--drift", drift, "drift family (besq, linear)");
    cs->add_option("--delta", delta, "constant drift level (besq)");
    cs->add_option("--c0", c0, "constant coefficient (linear)");
    cs->add_option("--c1", c1, "slope coefficient (linear)");
    cs->add_option("--gamma", gamma, "diffusion exponent");
    cs->add_option("--b", bcoef, "diffusion scale (0: per-drift default)");

    // validate
    auto* va = app.add_subcommand("validate", "run the oracle suites");
    add_shared(va);
    std::string suite = "all";
    double fx_strike = 0.0;
    va->add_option("suite", suite,
                   "suite (all, normalization, moments, cross-method, fx-oracle)");
    va->add_option("--strike", fx_strike, "fx-oracle strike (0: at-the-money +5%)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        // precedence: defaults < preset < config file < explicit flags
        if (!preset.empty()) apply_preset(cfg, preset);
        if (!config_file.empty()) load_config_file(cfg, config_file);
        for (CLI::App* sub : {sim, pr, de, cs, va}) {
            if (!sub->parsed()) continue;
            if (sub->count("--seed")) cfg.mc.seed = seed;
            if (sub->count("--paths")) cfg.mc.n_paths = paths;
            if (sub->count("--threads")) cfg.mc.threads = threads;
        }
        if (sim->parsed() && sim->count("--model")) cfg.model_kind = sim_model;

        if (sim->parsed()) return cmd_simulate(cfg);
        if (pr->parsed()) {
            if (pr->count("--payoff")) {
                if (payoff_name == "index_call")
                    cfg.payoff.kind = PayoffKind::eu_call_on_index;
                else if (payoff_name == "index_put")
                    cfg.payoff.kind = PayoffKind::eu_put_on_index;
                else
                    cfg.payoff.kind = parse_payoff_kind(payoff_name);
            }
            if (pr->count("--strike")) cfg.payoff.strike = strike;
            if (pr->count("--T")) cfg.payoff.maturity = maturity;
            if (pr->count("--eps")) cfg.mlmc.eps = mlmc_eps;
            if (rho_override) cfg.biv.rho = *rho_override;
            if (cfg.payoff.kind == PayoffKind::fx_call && cfg.model_kind == "mmm" &&
                !pr->count("--config") && preset.empty())
                cfg.model_kind = "bivariate";  // fx claims live on the two-index model
            cfg.T = cfg.payoff.maturity;  // grid horizon follows the claim
            return cmd_price(cfg, method_str);
        }
        if (de->parsed()) return cmd_density(cfg);
        if (cs->parsed())
            return cmd_check_symmetry(cfg, drift, delta, c0, c1, gamma, bcoef);
        if (va->parsed()) return cmd_validate(cfg, suite, fx_strike);
        throw ConfigError("no subcommand selected");
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
