#include "covgreeks.h"

#include <cstring>
#include <new>
#include <string>

#include "covgreeks/book.hpp"
#include "covgreeks/driver.hpp"
#include "covgreeks/metric_recon.hpp"

using namespace covgreeks;

namespace {

thread_local std::string g_last_error;

cvg_status fail(cvg_status code, const char* what) {
    g_last_error = what ? what : "";
    return code;
}

// Translate the C++ error taxonomy into C status codes.
template <typename Fn>
cvg_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return CVG_OK;
    } catch (const ChartMismatchError& e) {
        return fail(CVG_ERR_CHART_MISMATCH, e.what());
    } catch (const DimensionError& e) {
        return fail(CVG_ERR_DIMENSION_MISMATCH, e.what());
    } catch (const InvalidInputError& e) {
        return fail(CVG_ERR_INVALID_ARGUMENT, e.what());
    } catch (const SingularError& e) {
        return fail(CVG_ERR_SINGULAR, e.what());
    } catch (const NotPositiveDefiniteError& e) {
        return fail(CVG_ERR_NOT_POSITIVE_DEFINITE, e.what());
    } catch (const ConditioningError& e) {
        return fail(CVG_ERR_CONDITIONING, e.what());
    } catch (const IoError& e) {
        return fail(CVG_ERR_IO, e.what());
    } catch (const ParseError& e) {
        return fail(CVG_ERR_PARSE, e.what());
    } catch (const nlohmann::json::exception& e) {
        return fail(CVG_ERR_PARSE, e.what());
    } catch (const NumericError& e) {
        return fail(CVG_ERR_NUMERIC, e.what());
    } catch (const std::invalid_argument& e) {
        return fail(CVG_ERR_INVALID_ARGUMENT, e.what());
    } catch (const std::exception& e) {
        return fail(CVG_ERR_UNKNOWN, e.what());
    } catch (...) {
        return fail(CVG_ERR_UNKNOWN, "unknown error");
    }
}

cvg_status require(bool ok, const char* what) {
    return ok ? CVG_OK : fail(CVG_ERR_INVALID_ARGUMENT, what);
}

MarketSnapshot snapshot(double spot, double vol, double r_dom, double r_for,
                        int vol_in_points) {
    return MarketSnapshot(spot, vol, r_dom, r_for,
                          vol_in_points ? VolUnit::points : VolUnit::decimal);
}

void fill_greeks(const GreekBundle& g, cvg_greeks* out) {
    out->price = g.price;
    out->delta = g.delta;
    out->vega = g.vega;
    out->gamma = g.gamma;
    out->vanna = g.vanna;
    out->volga = g.volga;
    out->degenerate = g.degenerate ? 1 : 0;
}

Matrix map_matrix(const double* data, int rows, int cols) {
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                          Eigen::RowMajor>>(data, rows, cols);
}

Vector map_vector(const double* data, int n) { return Eigen::Map<const Vector>(data, n); }

void store_matrix(const Matrix& m, double* out) {
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j)
            out[i * m.cols() + j] = m(i, j);
}

std::vector<Matrix> map_slices(const double* data, int count, int d) {
    std::vector<Matrix> slices;
    slices.reserve(count);
    for (int k = 0; k < count; ++k)
        slices.push_back(map_matrix(data + static_cast<size_t>(k) * d * d, d, d));
    return slices;
}

char* dup_string(const std::string& s) {
    char* out = new (std::nothrow) char[s.size() + 1];
    if (out)
        std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

cvg_status run_json(char** out_json, const std::function<driver::json()>& fn) {
    if (!out_json)
        return fail(CVG_ERR_INVALID_ARGUMENT, "output pointer is null");
    return guarded([&] {
        const driver::json result = fn();
        *out_json = dup_string(result.dump(2));
        if (!*out_json)
            throw std::bad_alloc();
    });
}

driver::json parse_config(const char* config_json) {
    if (!config_json)
        throw ParseError("config string is null");
    return driver::json::parse(config_json);
}

Chart chart_of_dim(int d) {
    std::vector<std::string> coords;
    for (int i = 0; i < d; ++i)
        coords.push_back("x" + std::to_string(i));
    return Chart("raw" + std::to_string(d), coords);
}

} // namespace

struct cvg_series {
    MarketSeries series;
};

extern "C" {

const char* cvg_version(void) { return "0.1.0"; }

const char* cvg_status_name(cvg_status status) {
    switch (status) {
    case CVG_OK: return "ok";
    case CVG_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case CVG_ERR_CHART_MISMATCH: return "chart_mismatch";
    case CVG_ERR_DIMENSION_MISMATCH: return "dimension_mismatch";
    case CVG_ERR_SINGULAR: return "singular";
    case CVG_ERR_NOT_POSITIVE_DEFINITE: return "not_positive_definite";
    case CVG_ERR_CONDITIONING: return "conditioning";
    case CVG_ERR_NUMERIC: return "numeric";
    case CVG_ERR_IO: return "io";
    case CVG_ERR_PARSE: return "parse";
    case CVG_ERR_UNKNOWN: return "unknown";
    }
    return "unknown";
}

const char* cvg_last_error(void) { return g_last_error.c_str(); }

void cvg_string_free(char* str) { delete[] str; }

cvg_status cvg_bs_greeks(int is_call, double strike, double expiry, double spot, double vol,
                         double r_dom, double r_for, int vol_in_points, cvg_greeks* out) {
    if (cvg_status s = require(out != nullptr, "output pointer is null"))
        return s;
    return guarded([&] {
        const GreekBundle g =
            bs_greeks(VanillaSpec(is_call ? OptionType::call : OptionType::put, strike, expiry),
                      snapshot(spot, vol, r_dom, r_for, vol_in_points));
        fill_greeks(g, out);
    });
}

cvg_status cvg_uic_price(double strike, double barrier, double expiry, double spot, double vol,
                         double r_dom, double r_for, int vol_in_points, double* out) {
    if (cvg_status s = require(out != nullptr, "output pointer is null"))
        return s;
    return guarded([&] {
        *out = reiner_rubinstein_uic(BarrierSpec(strike, barrier, expiry),
                                     snapshot(spot, vol, r_dom, r_for, vol_in_points));
    });
}

cvg_status cvg_uic_greeks(double strike, double barrier, double expiry, double spot, double vol,
                          double r_dom, double r_for, int vol_in_points, double bump_spot_rel,
                          double bump_vol, cvg_greeks* out) {
    if (cvg_status s = require(out != nullptr, "output pointer is null"))
        return s;
    return guarded([&] {
        FdBumps bumps;
        if (bump_spot_rel > 0.0)
            bumps.spot_rel = bump_spot_rel;
        if (bump_vol > 0.0)
            bumps.vol = bump_vol;
        const GreekBundle g = uic_greeks(BarrierSpec(strike, barrier, expiry),
                                         snapshot(spot, vol, r_dom, r_for, vol_in_points), bumps);
        fill_greeks(g, out);
    });
}

cvg_status cvg_vanna_volga_price(int is_call, double strike, double expiry, double spot,
                                 double vol, double r_dom, double r_for, int vol_in_points,
                                 double pillar_atm, double pillar_25c, double pillar_25p,
                                 double* out) {
    if (cvg_status s = require(out != nullptr, "output pointer is null"))
        return s;
    return guarded([&] {
        *out = vanna_volga_price(
            VanillaSpec(is_call ? OptionType::call : OptionType::put, strike, expiry),
            snapshot(spot, vol, r_dom, r_for, vol_in_points),
            SmilePillars(expiry, pillar_atm, pillar_25c, pillar_25p));
    });
}

cvg_status cvg_vv_target_hessian(int is_call, double strike, double expiry, double spot,
                                 double vol, double r_dom, double r_for, int vol_in_points,
                                 double pillar_atm, double pillar_25c, double pillar_25p,
                                 double bump_spot_rel, double bump_vol, double out_h[4]) {
    if (cvg_status s = require(out_h != nullptr, "output pointer is null"))
        return s;
    return guarded([&] {
        FdBumps bumps;
        if (bump_spot_rel > 0.0)
            bumps.spot_rel = bump_spot_rel;
        if (bump_vol > 0.0)
            bumps.vol = bump_vol;
        const QuadraticForm h = vv_target_hessian(
            VanillaSpec(is_call ? OptionType::call : OptionType::put, strike, expiry),
            snapshot(spot, vol, r_dom, r_for, vol_in_points),
            SmilePillars(expiry, pillar_atm, pillar_25c, pillar_25p), bumps);
        store_matrix(h.matrix(), out_h);
    });
}

cvg_status cvg_covariant_hessian(int d, const double* hessian, const double* connection,
                                 const double* gradient, double* out) {
    if (cvg_status s = require(d >= 1 && hessian && connection && gradient && out,
                               "null argument or non-positive dimension"))
        return s;
    return guarded([&] {
        const Chart chart = chart_of_dim(d);
        const QuadraticForm h(chart, map_matrix(hessian, d, d), FormKind::hessian_target);
        const Connection c(chart, map_slices(connection, d, d));
        const Gradient g(chart, map_vector(gradient, d));
        store_matrix(covariant_hessian(h, c, g).matrix(), out);
    });
}

cvg_status cvg_quadratic_predictor(int d, const double* gradient, const double* quad,
                                   const double* move, const double* penalty_or_null,
                                   double* out) {
    if (cvg_status s = require(d >= 1 && gradient && quad && move && out,
                               "null argument or non-positive dimension"))
        return s;
    return guarded([&] {
        const Chart chart = chart_of_dim(d);
        std::optional<QuadraticForm> penalty;
        if (penalty_or_null)
            penalty.emplace(chart, map_matrix(penalty_or_null, d, d), FormKind::penalty);
        *out = quadratic_predictor(Gradient(chart, map_vector(gradient, d)),
                                   QuadraticForm(chart, map_matrix(quad, d, d),
                                                 FormKind::hessian_target),
                                   TangentMove(chart, map_vector(move, d)), penalty);
    });
}

namespace {

ChartMapAtPoint raw_map(int d, const double* jacobian, const double* second_or_null) {
    Chart source = chart_of_dim(d);
    Chart target("raw" + std::to_string(d) + "_target", source.coords());
    std::vector<Matrix> second;
    if (second_or_null)
        second = map_slices(second_or_null, d, d);
    return ChartMapAtPoint(std::move(source), std::move(target), map_matrix(jacobian, d, d),
                           std::move(second));
}

} // namespace

cvg_status cvg_transform_gradient(int d, const double* gradient, const double* jacobian,
                                  double* out) {
    if (cvg_status s = require(d >= 1 && gradient && jacobian && out, "null argument"))
        return s;
    return guarded([&] {
        const ChartMapAtPoint map = raw_map(d, jacobian, nullptr);
        const Gradient g(map.source(), map_vector(gradient, d));
        const Vector v = transform_gradient(g, map).values;
        for (int i = 0; i < d; ++i)
            out[i] = v[i];
    });
}

cvg_status cvg_transform_quadratic(int d, const double* quad, const double* jacobian,
                                   double* out) {
    if (cvg_status s = require(d >= 1 && quad && jacobian && out, "null argument"))
        return s;
    return guarded([&] {
        const ChartMapAtPoint map = raw_map(d, jacobian, nullptr);
        const QuadraticForm q(map.source(), map_matrix(quad, d, d), FormKind::hessian_target);
        store_matrix(transform_quadratic_form(q, map).matrix(), out);
    });
}

cvg_status cvg_transform_connection(int d, const double* connection, const double* jacobian,
                                    const double* second_or_null, double* out) {
    if (cvg_status s = require(d >= 1 && connection && jacobian && out, "null argument"))
        return s;
    return guarded([&] {
        const ChartMapAtPoint map = raw_map(d, jacobian, second_or_null);
        const Connection c(map.source(), map_slices(connection, d, d));
        const Connection t = transform_connection(c, map);
        for (int k = 0; k < d; ++k)
            store_matrix(t.lower(k), out + static_cast<size_t>(k) * d * d);
    });
}

cvg_status cvg_solve_two_instrument(const double design[4], const double rhs[2],
                                    double out_coeffs[2]) {
    if (cvg_status s = require(design && rhs && out_coeffs, "null argument"))
        return s;
    return guarded([&] {
        Matrix g(2, 2);
        g << design[0], design[1], design[2], design[3];
        Vector b(2);
        b << rhs[0], rhs[1];
        const auto [cs, cv] = solve_two_instrument(g, b);
        out_coeffs[0] = cs;
        out_coeffs[1] = cv;
    });
}

cvg_status cvg_solve_ridge(int m, int d, const double* design, const double* rhs,
                           const double* weights, double eta, double* out_u, double* out_rho,
                           double* out_rho_min) {
    if (cvg_status s = require(m >= 1 && d >= 1 && design && rhs && out_u, "null argument"))
        return s;
    return guarded([&] {
        std::vector<double> w;
        if (weights)
            w.assign(weights, weights + m);
        const RidgeSolution sol =
            solve_ridge(map_matrix(design, m, d), map_vector(rhs, m), w, eta);
        for (int i = 0; i < d; ++i)
            out_u[i] = sol.u[i];
        if (out_rho)
            *out_rho = sol.rho;
        if (out_rho_min)
            *out_rho_min = sol.rho_min;
    });
}

cvg_status cvg_half_spread_from_vol_width(double vol_half_width, double quote_vega_per_unit,
                                          double* out) {
    if (cvg_status s = require(out != nullptr, "output pointer is null"))
        return s;
    return guarded([&] { *out = half_spread_from_vol_width(vol_half_width, quote_vega_per_unit); });
}

cvg_status cvg_lambda_from_width_clip(double price_half_spread_per_unit, double clip,
                                      double* out) {
    if (cvg_status s = require(out != nullptr, "output pointer is null"))
        return s;
    return guarded([&] { *out = lambda_from_width_clip(price_half_spread_per_unit, clip); });
}

cvg_status cvg_tiered_lambda(double trade_size, int n_tiers, const double* plateaus,
                             const double* transitions, const double* widths, double* out) {
    if (cvg_status s = require(n_tiers >= 1 && plateaus && out &&
                                   (n_tiers == 1 || (transitions && widths)),
                               "null argument"))
        return s;
    return guarded([&] {
        TierSpec tiers(std::vector<double>(plateaus, plateaus + n_tiers),
                       std::vector<double>(transitions ? transitions : plateaus,
                                           (transitions ? transitions : plateaus) +
                                               (n_tiers - 1)),
                       std::vector<double>(widths ? widths : plateaus,
                                           (widths ? widths : plateaus) + (n_tiers - 1)));
        *out = tiered_lambda(trade_size, tiers);
    });
}

cvg_status cvg_least_cost_trade(int m, int p, const double* lambda, const double* b,
                                const double* c, double* out_dq) {
    if (cvg_status s = require(m >= 1 && p >= 1 && lambda && b && c && out_dq, "null argument"))
        return s;
    return guarded([&] {
        const ImpactMatrix lam(map_matrix(lambda, m, m));
        const Vector dq = least_cost_trade(lam, map_matrix(b, p, m), map_vector(c, p));
        for (int i = 0; i < m; ++i)
            out_dq[i] = dq[i];
    });
}

cvg_status cvg_hedge_response(int m, int p, int d, const double* lambda, const double* b,
                              const double* j_e, double* out_m) {
    if (cvg_status s =
            require(m >= 1 && p >= 1 && d >= 1 && lambda && b && j_e && out_m, "null argument"))
        return s;
    return guarded([&] {
        const ImpactMatrix lam(map_matrix(lambda, m, m));
        const HedgeResponse resp =
            build_hedge_response(lam, ExposureSpec(map_matrix(b, p, m), map_matrix(j_e, p, d)));
        store_matrix(resp.m, out_m);
    });
}

cvg_status cvg_pullback_penalty(int m, int d, const double* response, const double* lambda,
                                double* out_g) {
    if (cvg_status s = require(m >= 1 && d >= 1 && response && lambda && out_g, "null argument"))
        return s;
    return guarded([&] {
        const ImpactMatrix lam(map_matrix(lambda, m, m));
        const HedgeResponse resp{map_matrix(response, m, d)};
        const FactorPenalty g = pullback_penalty(resp, lam, chart_of_dim(d));
        store_matrix(g.matrix(), out_g);
    });
}

cvg_status cvg_levi_civita(int d, const double* g, const double* dg, double* out_connection) {
    if (cvg_status s = require(d >= 1 && g && dg && out_connection, "null argument"))
        return s;
    return guarded([&] {
        const auto coeffs =
            detail::levi_civita_raw(map_matrix(g, d, d), map_slices(dg, d, d),
                                    defaults::kPdTol);
        for (int k = 0; k < d; ++k)
            store_matrix(coeffs[k], out_connection + static_cast<size_t>(k) * d * d);
    });
}

cvg_status cvg_portfolio_cost(int n_deals, int m, const double* weights, const double* trades,
                              const double* lambda, double* out_total, double* out_net) {
    if (cvg_status s = require(n_deals >= 1 && m >= 1 && weights && trades && lambda &&
                                   out_total,
                               "null argument"))
        return s;
    return guarded([&] {
        std::vector<DealHedge> deals;
        for (int nu = 0; nu < n_deals; ++nu)
            deals.emplace_back("deal" + std::to_string(nu), weights[nu],
                               map_vector(trades + static_cast<size_t>(nu) * m, m));
        const PortfolioCostReport report =
            portfolio_cost(deals, ImpactMatrix(map_matrix(lambda, m, m)));
        *out_total = report.total_cost;
        if (out_net)
            for (int i = 0; i < m; ++i)
                out_net[i] = report.net_trade[i];
    });
}

cvg_status cvg_incremental_liquidity_charge(int m, const double* book_trade,
                                            const double* deal_trade, const double* lambda,
                                            double* out) {
    if (cvg_status s = require(m >= 1 && book_trade && deal_trade && lambda && out,
                               "null argument"))
        return s;
    return guarded([&] {
        *out = incremental_liquidity_charge(map_vector(book_trade, m), map_vector(deal_trade, m),
                                            ImpactMatrix(map_matrix(lambda, m, m)));
    });
}

cvg_status cvg_wealth_step(int m, double wealth, const double* position, const double* prices,
                           const double* next_prices, const double* next_position,
                           const double* lambda, double* out) {
    if (cvg_status s = require(m >= 1 && position && prices && next_prices && next_position &&
                                   lambda && out,
                               "null argument"))
        return s;
    return guarded([&] {
        *out = wealth_step(wealth, map_vector(position, m), map_vector(prices, m),
                           map_vector(next_prices, m), map_vector(next_position, m),
                           ImpactMatrix(map_matrix(lambda, m, m)));
    });
}

cvg_status cvg_series_load(const char* path, const char* options_json_or_null,
                           cvg_series** out) {
    if (cvg_status s = require(path && out, "null argument"))
        return s;
    return guarded([&] {
        SeriesSchema schema;
        if (options_json_or_null) {
            const auto j = driver::json::parse(options_json_or_null);
            schema.vol_unit = driver::parse_vol_unit(j);
            if (j.contains("delimiter"))
                schema.delimiter = j["delimiter"].get<std::string>().at(0);
        }
        auto* handle = new cvg_series{load_market_series(path, schema)};
        *out = handle;
    });
}

cvg_status cvg_series_synthesize(const char* config_json, cvg_series** out) {
    if (cvg_status s = require(config_json && out, "null argument"))
        return s;
    return guarded([&] {
        driver::json wrapper;
        wrapper["synthetic"] = driver::json::parse(config_json);
        auto* handle = new cvg_series{driver::series_from_config(wrapper)};
        *out = handle;
    });
}

int cvg_series_length(const cvg_series* series) {
    return series ? static_cast<int>(series->series.rows.size()) : 0;
}

cvg_status cvg_series_save(const cvg_series* series, const char* path) {
    if (cvg_status s = require(series && path, "null argument"))
        return s;
    return guarded([&] { save_market_series(series->series, path); });
}

void cvg_series_free(cvg_series* series) { delete series; }

cvg_status cvg_run_greeks(const char* config_json, char** out_json) {
    return run_json(out_json, [&] { return driver::greeks(parse_config(config_json)); });
}

cvg_status cvg_run_calibrate(const char* config_json, char** out_json) {
    return run_json(out_json, [&] { return driver::calibrate(parse_config(config_json)); });
}

cvg_status cvg_run_adjusted_greeks(const char* config_json, char** out_json) {
    return run_json(out_json,
                    [&] { return driver::adjusted_greeks(parse_config(config_json)); });
}

cvg_status cvg_run_liquidity(const char* config_json, char** out_json) {
    return run_json(out_json,
                    [&] { return driver::liquidity_report(parse_config(config_json)); });
}

cvg_status cvg_run_transform(const char* config_json, char** out_json) {
    return run_json(out_json, [&] { return driver::transform(parse_config(config_json)); });
}

cvg_status cvg_run_backtest_pnl(const cvg_series* series, const char* config_json,
                                const char* out_dir, char** out_json) {
    if (cvg_status s = require(series != nullptr, "series handle is null"))
        return s;
    return run_json(out_json, [&] {
        return driver::backtest_pnl(series->series, parse_config(config_json),
                                    out_dir ? out_dir : "");
    });
}

cvg_status cvg_run_backtest_cost(const cvg_series* series, const char* config_json,
                                 const char* out_dir, char** out_json) {
    if (cvg_status s = require(series != nullptr, "series handle is null"))
        return s;
    return run_json(out_json, [&] {
        return driver::backtest_cost(series->series, parse_config(config_json),
                                     out_dir ? out_dir : "");
    });
}

cvg_status cvg_run_reconstruct_metric(const char* config_json, const char* out_dir,
                                      char** out_json) {
    return run_json(out_json, [&] {
        return driver::reconstruct_metric_run(parse_config(config_json), out_dir ? out_dir : "");
    });
}

} // extern "C"
