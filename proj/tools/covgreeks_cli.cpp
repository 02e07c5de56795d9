// Command-line front end. Links the C API only.
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "covgreeks.h"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1; // numeric/validation failure
constexpr int kExitUsage = 2;

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    long long seed = -1;
    double eta = -1.0;
    std::string bumps;     // "hS,hSigma" with hS relative to spot
    std::string vol_units; // points|decimal
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_out = true) {
    cmd->add_option("--config", opts.config_path, "JSON config file");
    if (with_out)
        cmd->add_option("--out", opts.out_dir, "output directory");
    cmd->add_option("--seed", opts.seed, "RNG seed override");
    cmd->add_option("--eta", opts.eta, "ridge weight override");
    cmd->add_option("--bumps", opts.bumps, "finite-difference bumps hS,hSigma");
    cmd->add_option("--vol-units", opts.vol_units, "vol units: points|decimal")
        ->check(CLI::IsMember({"points", "decimal"}));
}

json load_config(const CommonOpts& opts) {
    if (opts.config_path.empty())
        return json::object();
    std::ifstream in(opts.config_path);
    if (!in) {
        std::cerr << "error: cannot open config file '" << opts.config_path << "'\n";
        std::exit(kExitFailure);
    }
    try {
        json j;
        in >> j;
        return j;
    } catch (const std::exception& e) {
        std::cerr << "error: config parse failure: " << e.what() << "\n";
        std::exit(kExitFailure);
    }
}

// Config file values < flag overrides.
void apply_overrides(json& config, const CommonOpts& opts) {
    if (opts.seed >= 0) {
        if (!config.contains("synthetic"))
            config["synthetic"] = json::object();
        config["synthetic"]["seed"] = opts.seed;
    }
    if (opts.eta >= 0.0)
        config["eta"] = opts.eta;
    if (!opts.bumps.empty()) {
        std::stringstream ss(opts.bumps);
        std::string a, b;
        if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',')) {
            std::cerr << "error: --bumps expects hS,hSigma\n";
            std::exit(kExitUsage);
        }
        config["bumps"]["spot_rel"] = std::stod(a);
        config["bumps"]["vol"] = std::stod(b);
    }
    if (!opts.vol_units.empty())
        config["vol_units"] = opts.vol_units;
}

std::string resolve_out_dir(const CommonOpts& opts) {
    if (!opts.out_dir.empty())
        return opts.out_dir;
    if (const char* env = std::getenv("COVGREEKS_OUT"))
        return env;
    return "out";
}

int print_result(cvg_status status, char* out_json) {
    if (status != CVG_OK) {
        std::cerr << "error (" << cvg_status_name(status) << "): " << cvg_last_error() << "\n";
        return kExitFailure;
    }
    std::cout << out_json << "\n";
    cvg_string_free(out_json);
    return kExitOk;
}

int run_simple(const CommonOpts& opts,
               cvg_status (*fn)(const char*, char**)) {
    json config = load_config(opts);
    apply_overrides(config, const_cast<CommonOpts&>(opts));
    char* out = nullptr;
    const cvg_status status = fn(config.dump().c_str(), &out);
    return print_result(status, out);
}

cvg_series* open_series(const json& config) {
    cvg_series* series = nullptr;
    cvg_status status;
    if (config.contains("series") && config["series"].contains("path")) {
        json options;
        if (config.contains("vol_units"))
            options["vol_units"] = config["vol_units"];
        if (config["series"].contains("delimiter"))
            options["delimiter"] = config["series"]["delimiter"];
        status = cvg_series_load(config["series"]["path"].get<std::string>().c_str(),
                                 options.dump().c_str(), &series);
    } else if (config.contains("synthetic")) {
        status = cvg_series_synthesize(config["synthetic"].dump().c_str(), &series);
    } else {
        std::cerr << "error: config needs a 'series' {path} or 'synthetic' block\n";
        std::exit(kExitFailure);
    }
    if (status != CVG_OK) {
        std::cerr << "error (" << cvg_status_name(status) << "): " << cvg_last_error() << "\n";
        std::exit(kExitFailure);
    }
    return series;
}

int run_backtest(const CommonOpts& opts, bool pnl) {
    json config = load_config(opts);
    apply_overrides(config, const_cast<CommonOpts&>(opts));
    cvg_series* series = open_series(config);
    char* out = nullptr;
    const std::string out_dir = resolve_out_dir(opts);
    const cvg_status status =
        pnl ? cvg_run_backtest_pnl(series, config.dump().c_str(), out_dir.c_str(), &out)
            : cvg_run_backtest_cost(series, config.dump().c_str(), out_dir.c_str(), &out);
    cvg_series_free(series);
    return print_result(status, out);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"covgreeks: connection-adjusted option Greeks, execution-cost penalties and "
                 "hedging backtests"};
    app.require_subcommand(1);
    app.footer("Config file grammars are documented in README.md.");

    CommonOpts greeks_opts, calib_opts, adj_opts, liq_opts, trans_opts, pnl_opts, cost_opts,
        recon_opts;

    CLI::App* cmd_greeks =
        app.add_subcommand("greeks", "price and Greeks for a vanilla or barrier option");
    add_common(cmd_greeks, greeks_opts, false);

    CLI::App* cmd_calibrate =
        app.add_subcommand("calibrate", "fit connection coefficients to quadratic targets");
    add_common(cmd_calibrate, calib_opts, false);

    CLI::App* cmd_adjusted = app.add_subcommand(
        "adjusted-greeks", "covariant Hessian from a connection, smile target or liquidity");
    add_common(cmd_adjusted, adj_opts, false);

    CLI::App* cmd_liquidity = app.add_subcommand(
        "liquidity", "impact matrix, hedge response, factor penalty and induced connection");
    add_common(cmd_liquidity, liq_opts, false);

    CLI::App* cmd_transform =
        app.add_subcommand("transform", "chart transport of gradients, forms and connections");
    add_common(cmd_transform, trans_opts, false);

    CLI::App* cmd_pnl = app.add_subcommand("backtest-pnl", "one-step P&L predictor replay");
    add_common(cmd_pnl, pnl_opts);

    CLI::App* cmd_cost = app.add_subcommand("backtest-cost", "hedge execution-cost replay");
    add_common(cmd_cost, cost_opts);

    CLI::App* cmd_recon = app.add_subcommand(
        "reconstruct-metric", "least-squares metric reconstruction from a connection field");
    add_common(cmd_recon, recon_opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    if (cmd_greeks->parsed())
        return run_simple(greeks_opts, cvg_run_greeks);
    if (cmd_calibrate->parsed())
        return run_simple(calib_opts, cvg_run_calibrate);
    if (cmd_adjusted->parsed())
        return run_simple(adj_opts, cvg_run_adjusted_greeks);
    if (cmd_liquidity->parsed())
        return run_simple(liq_opts, cvg_run_liquidity);
    if (cmd_transform->parsed())
        return run_simple(trans_opts, cvg_run_transform);
    if (cmd_pnl->parsed())
        return run_backtest(pnl_opts, true);
    if (cmd_cost->parsed())
        return run_backtest(cost_opts, false);
    if (cmd_recon->parsed()) {
        json config = load_config(recon_opts);
        apply_overrides(config, recon_opts);
        char* out = nullptr;
        const cvg_status status = cvg_run_reconstruct_metric(
            config.dump().c_str(), resolve_out_dir(recon_opts).c_str(), &out);
        return print_result(status, out);
    }
    return kExitUsage;
}
