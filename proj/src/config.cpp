#include "covgreeks/driver.hpp"

#include <cmath>
#include <filesystem>

#include "covgreeks/metric_recon.hpp"
#include "covgreeks/penalties.hpp"

namespace covgreeks::driver {

namespace {

double get_num(const json& j, const std::string& key) {
    if (!j.contains(key) || !j[key].is_number())
        throw ParseError("config: missing or non-numeric field '" + key + "'");
    return j[key].get<double>();
}

double get_num_or(const json& j, const std::string& key, double fallback) {
    return j.contains(key) ? get_num(j, key) : fallback;
}

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (int i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (int j = 0; j < m.cols(); ++j)
            row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

json vector_to_json(const Vector& v) {
    json out = json::array();
    for (int i = 0; i < v.size(); ++i)
        out.push_back(v[i]);
    return out;
}

Matrix matrix_from_json(const json& j, const std::string& what) {
    if (!j.is_array() || j.empty() || !j[0].is_array())
        throw ParseError("config: '" + what + "' must be a matrix (array of arrays)");
    const int rows = static_cast<int>(j.size());
    const int cols = static_cast<int>(j[0].size());
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        if (static_cast<int>(j[r].size()) != cols)
            throw ParseError("config: ragged matrix in '" + what + "'");
        for (int c = 0; c < cols; ++c)
            m(r, c) = j[r][c].get<double>();
    }
    return m;
}

Vector vector_from_json(const json& j, const std::string& what) {
    if (!j.is_array())
        throw ParseError("config: '" + what + "' must be an array");
    Vector v(j.size());
    for (size_t i = 0; i < j.size(); ++i)
        v[i] = j[i].get<double>();
    return v;
}

json connection_to_json(const Connection& conn) {
    json out;
    for (int k = 0; k < conn.dim(); ++k)
        out["C_" + conn.chart().coord(k)] = matrix_to_json(conn.lower(k));
    return out;
}

Connection connection_from_json(const json& j, const Chart& chart) {
    std::vector<Matrix> coeffs;
    for (int k = 0; k < chart.dim(); ++k) {
        const std::string key = "C_" + chart.coord(k);
        if (!j.contains(key))
            throw ParseError("config: connection is missing slice '" + key + "'");
        coeffs.push_back(matrix_from_json(j[key], key));
    }
    return Connection(chart, std::move(coeffs));
}

Chart chart_by_name(const std::string& name, VolUnit unit) {
    const std::string u = vol_unit_label(unit);
    if (name == "spot_vol")
        return Chart::spot_vol(u);
    if (name == "forward_vol")
        return Chart::forward_vol(u);
    if (name == "log_forward_vol")
        return Chart::log_forward_vol(u);
    if (name == "smile_state")
        return Chart::smile_state(u);
    throw ParseError("config: unknown chart '" + name + "'");
}

bool is_barrier(const json& instrument) { return instrument.contains("barrier"); }

VanillaSpec parse_vanilla(const json& j) {
    OptionType type = OptionType::call;
    if (j.contains("type")) {
        const std::string t = j["type"].get<std::string>();
        if (t == "put")
            type = OptionType::put;
        else if (t != "call")
            throw ParseError("config: instrument type must be 'call' or 'put'");
    }
    return VanillaSpec(type, get_num(j, "strike"), get_num(j, "expiry"));
}

SmilePillars pillars_from_config(const json& j, double expiry, double atm_vol) {
    if (j.contains("vol_25c") || j.contains("vol_25p"))
        return SmilePillars(expiry, get_num_or(j, "vol_atm", atm_vol), get_num(j, "vol_25c"),
                            get_num(j, "vol_25p"));
    return SmilePillars::from_rr_bf(expiry, get_num_or(j, "vol_atm", atm_vol),
                                    get_num_or(j, "rr25", 0.0), get_num_or(j, "bf25", 0.0));
}

GreekBundle instrument_greeks(const json& instrument, const MarketSnapshot& mkt,
                              const FdBumps& bumps) {
    if (is_barrier(instrument))
        return uic_greeks(parse_barrier(instrument), mkt, bumps);
    return bs_greeks(parse_vanilla(instrument), mkt);
}

} // namespace

VolUnit parse_vol_unit(const json& j, VolUnit fallback) {
    if (!j.contains("vol_units"))
        return fallback;
    const std::string u = j["vol_units"].get<std::string>();
    if (u == "points")
        return VolUnit::points;
    if (u == "decimal")
        return VolUnit::decimal;
    throw ParseError("config: vol_units must be 'points' or 'decimal'");
}

MarketSnapshot parse_market(const json& j, VolUnit unit) {
    if (!j.contains("market"))
        throw ParseError("config: missing 'market' block");
    const json& m = j["market"];
    return MarketSnapshot(get_num(m, "spot"), get_num(m, "vol"), get_num(m, "r_dom"),
                          get_num(m, "r_for"), unit);
}

BarrierSpec parse_barrier(const json& j) {
    return BarrierSpec(get_num(j, "strike"), get_num(j, "barrier"), get_num(j, "expiry"));
}

FdBumps parse_bumps(const json& j) {
    FdBumps bumps;
    if (j.contains("bumps")) {
        bumps.spot_rel = get_num_or(j["bumps"], "spot_rel", bumps.spot_rel);
        bumps.vol = get_num_or(j["bumps"], "vol", bumps.vol);
    }
    return bumps;
}

std::vector<HedgeLeg> parse_hedges(const json& j) {
    if (!j.contains("hedges") || !j["hedges"].is_array() || j["hedges"].empty())
        throw ParseError("config: missing 'hedges' array");
    std::vector<HedgeLeg> legs;
    for (const auto& h : j["hedges"]) {
        HedgeLeg leg;
        leg.name = h.value("name", std::string("hedge") + std::to_string(legs.size()));
        const std::string role = h.value("role", std::string("spot"));
        if (role == "spot")
            leg.role = HedgeRole::spot;
        else if (role == "atm_straddle" || role == "straddle")
            leg.role = HedgeRole::atm_straddle;
        else if (role == "call25" || role == "25d_call")
            leg.role = HedgeRole::call25;
        else
            throw ParseError("config: unknown hedge role '" + role + "'");
        leg.tenor = get_num_or(h, "tenor", 1.0);
        const std::string wt = h.value("width_type", std::string("price"));
        if (wt == "price")
            leg.width_kind = WidthKind::price;
        else if (wt == "vol")
            leg.width_kind = WidthKind::vol;
        else
            throw ParseError("config: width_type must be 'price' or 'vol'");
        leg.half_width = get_num_or(h, "half_width", 0.0);
        leg.clip = get_num_or(h, "clip", 0.0);
        if (h.contains("quote_vega_per_unit"))
            leg.quote_vega = get_num(h, "quote_vega_per_unit");
        else if (h.contains("quote_vega_per_clip"))
            leg.quote_vega = get_num(h, "quote_vega_per_clip") / get_num(h, "clip");
        if (h.contains("width_vol_units"))
            leg.width_vol_unit = h["width_vol_units"].get<std::string>() == "decimal"
                                     ? VolUnit::decimal
                                     : VolUnit::points;
        leg.omega_frac = get_num_or(h, "tier_omega_frac", 0.1);
        if (h.contains("tiers")) {
            for (const auto& t : h["tiers"]) {
                TierRow row;
                row.breakpoint = get_num(t, "breakpoint");
                row.clip = get_num(t, "clip");
                row.half_width = get_num(t, "half_width");
                if (t.contains("omega"))
                    row.omega = get_num(t, "omega");
                leg.tiers.push_back(row);
            }
            if (leg.tiers.empty())
                throw ParseError("config: hedge '" + leg.name + "' has an empty tiers array");
        }
        legs.push_back(std::move(leg));
    }
    return legs;
}

json greeks(const json& config) {
    const VolUnit unit = parse_vol_unit(config);
    const MarketSnapshot mkt = parse_market(config, unit);
    const FdBumps bumps = parse_bumps(config);
    if (!config.contains("instrument"))
        throw ParseError("config: missing 'instrument' block");
    const json& inst = config["instrument"];
    const GreekBundle g = instrument_greeks(inst, mkt, bumps);

    json out;
    out["vol_units"] = unit == VolUnit::points ? "points" : "decimal";
    out["price"] = g.price;
    out["delta"] = g.delta;
    out["vega"] = g.vega;
    out["gamma"] = g.gamma;
    out["vanna"] = g.vanna;
    out["volga"] = g.volga;
    out["degenerate"] = g.degenerate;
    if (config.contains("pillars")) {
        const double expiry = get_num(inst, "expiry");
        const SmilePillars pillars = pillars_from_config(config["pillars"], expiry, mkt.vol);
        out["vv_price"] = is_barrier(inst)
                              ? vanna_volga_price(parse_barrier(inst), mkt, pillars, bumps)
                              : vanna_volga_price(parse_vanilla(inst), mkt, pillars);
    }
    return out;
}

namespace {

std::vector<CalibrationInstrument> instruments_from_config(const json& config,
                                                           const Chart& chart) {
    std::vector<CalibrationInstrument> instruments;
    for (const auto& inst : config["instruments"]) {
        Gradient grad(chart, vector_from_json(inst.at("gradient"), "gradient"));
        QuadraticForm base(chart, matrix_from_json(inst.at("baseline"), "baseline"),
                           FormKind::hessian_target);
        QuadraticForm target(chart, matrix_from_json(inst.at("target"), "target"),
                             FormKind::hessian_target);
        instruments.emplace_back(std::move(grad), std::move(base), std::move(target),
                                 inst.value("weight", 1.0));
    }
    return instruments;
}

} // namespace

json calibrate(const json& config) {
    const VolUnit unit = parse_vol_unit(config);
    std::vector<CalibrationInstrument> instruments;
    if (config.contains("instruments")) {
        const Chart chart = chart_by_name(config.value("chart", "spot_vol"), unit);
        instruments = instruments_from_config(config, chart);
    } else {
        const MarketSnapshot mkt = parse_market(config, unit);
        const double expiry = get_num(config, "expiry");
        const SmilePillars pillars = pillars_from_config(
            config.contains("pillars") ? config["pillars"] : json::object(), expiry, mkt.vol);
        instruments = vv_calibration_instruments(mkt, pillars, expiry, parse_bumps(config));
    }
    CalibrationOptions options;
    options.eta = get_num_or(config, "eta", 0.0);
    if (config.contains("weights"))
        for (const auto& w : config["weights"])
            options.weights.push_back(w.get<double>());
    if (config.contains("pairs"))
        for (const auto& p : config["pairs"])
            options.pairs.emplace_back(p[0].get<int>(), p[1].get<int>());
    const CalibrationResult result = calibrate_connection(instruments, options);

    json out;
    out["connection"] = connection_to_json(result.connection);
    out["pairs"] = json::array();
    for (size_t i = 0; i < result.pairs.size(); ++i) {
        json entry;
        entry["i"] = result.pairs[i].first;
        entry["j"] = result.pairs[i].second;
        entry["rho"] = result.rho[i];
        entry["rho_min"] = result.rho_min[i];
        out["pairs"].push_back(entry);
    }
    out["normal_matrix_condition"] = result.normal_matrix_condition;
    return out;
}

namespace {

// Factor-space execution-cost field for a barrier book hedged by the
// configured legs, with Lambda frozen at the reference state.
PenaltyField liquidity_field(const json& config, const MarketSnapshot& ref,
                             const BarrierSpec& book, const std::vector<HedgeLeg>& legs,
                             double notional, double block, const FdBumps& bumps,
                             ImpactMatrix* lambda_out, Matrix* b_out, Matrix* je_out) {
    (void)config;
    std::vector<HedgeInstrumentSpec> specs;
    specs.reserve(legs.size());
    for (const auto& leg : legs)
        specs.push_back(materialize_hedge_leg(leg, ref, block));
    ImpactMatrix lambda = build_impact_matrix(specs, "reference");
    if (lambda_out)
        *lambda_out = lambda;

    auto field = [legs, lambda, book, notional, block, bumps,
                  unit = ref.vol_unit, rd = ref.r_dom, rf = ref.r_for](const Vector& x) {
        MarketSnapshot mkt(x[0], x[1], rd, rf, unit);
        const GreekBundle g = uic_greeks(book, mkt, bumps);
        const int m = static_cast<int>(legs.size());
        Matrix b(2, m);
        for (int r = 0; r < m; ++r) {
            const GreekBundle h = hedge_leg_greeks(legs[r], mkt);
            b(0, r) = h.delta * block;
            b(1, r) = h.vega * block;
        }
        Matrix j_e(2, 2);
        j_e << g.gamma, g.vanna, g.vanna, g.volga;
        j_e *= notional;
        const HedgeResponse resp = build_hedge_response(lambda, ExposureSpec(b, j_e));
        return Matrix(resp.m.transpose() * lambda.lambda * resp.m);
    };
    if (b_out || je_out) {
        const GreekBundle g = uic_greeks(book, ref, bumps);
        const int m = static_cast<int>(legs.size());
        Matrix b(2, m);
        for (int r = 0; r < m; ++r) {
            const GreekBundle h = hedge_leg_greeks(legs[r], ref);
            b(0, r) = h.delta * block;
            b(1, r) = h.vega * block;
        }
        if (b_out)
            *b_out = b;
        if (je_out) {
            Matrix j_e(2, 2);
            j_e << g.gamma, g.vanna, g.vanna, g.volga;
            *je_out = notional * j_e;
        }
    }
    return field;
}

Vector fd_steps_for(const MarketSnapshot& mkt, double rel) {
    Vector h(2);
    h << rel * mkt.spot, rel * std::max(mkt.vol, 1.0);
    return h;
}

} // namespace

json liquidity_report(const json& config) {
    const VolUnit unit = parse_vol_unit(config);
    const MarketSnapshot mkt = parse_market(config, unit);
    const BarrierSpec book = parse_barrier(config.at("instrument"));
    const std::vector<HedgeLeg> legs = parse_hedges(config);
    const double notional = get_num_or(config, "notional", 1.0);
    const double block = get_num_or(config, "unit_block", 1e6);
    const FdBumps bumps = parse_bumps(config);

    ImpactMatrix lambda{Matrix::Identity(1, 1)};
    Matrix b, j_e;
    PenaltyField field =
        liquidity_field(config, mkt, book, legs, notional, block, bumps, &lambda, &b, &j_e);

    const HedgeResponse resp = build_hedge_response(lambda, ExposureSpec(b, j_e));
    const Chart chart = Chart::spot_vol(vol_unit_label(unit));
    const FactorPenalty g_ell = pullback_penalty(resp, lambda, chart);

    json out;
    out["instruments"] = json::array();
    for (const auto& leg : legs)
        out["instruments"].push_back(leg.name);
    out["unit_block"] = block;
    out["lambda"] = matrix_to_json(lambda.lambda);
    out["B"] = matrix_to_json(b);
    out["J_E"] = matrix_to_json(j_e);
    out["M"] = matrix_to_json(resp.m);
    out["g_ell"] = matrix_to_json(g_ell.matrix());
    try {
        Vector x0(2);
        x0 << mkt.spot, mkt.vol;
        const Connection lc = levi_civita_field(
            field, StatePoint(chart, x0), fd_steps_for(mkt, get_num_or(config, "fd_rel", 1e-4)));
        out["levi_civita"] = connection_to_json(lc);
    } catch (const std::exception& e) {
        out["levi_civita_error"] = e.what();
    }
    return out;
}

json adjusted_greeks(const json& config) {
    const VolUnit unit = parse_vol_unit(config);
    const MarketSnapshot mkt = parse_market(config, unit);
    const FdBumps bumps = parse_bumps(config);
    const Chart chart = Chart::spot_vol(vol_unit_label(unit));
    const json& inst = config.at("instrument");
    const GreekBundle g = instrument_greeks(inst, mkt, bumps);

    Connection conn = Connection::zero(chart);
    if (config.contains("connection")) {
        conn = connection_from_json(config["connection"], chart);
    } else if (config.contains("pillars")) {
        const double expiry = get_num(inst, "expiry");
        const SmilePillars pillars = pillars_from_config(config["pillars"], expiry, mkt.vol);
        const auto instruments = vv_calibration_instruments(mkt, pillars, expiry, bumps);
        CalibrationOptions options;
        options.eta = get_num_or(config, "eta", 0.0);
        conn = calibrate_connection(instruments, options).connection;
    } else if (config.contains("hedges")) {
        const BarrierSpec book = parse_barrier(inst);
        PenaltyField field = liquidity_field(config, mkt, book, parse_hedges(config),
                                             get_num_or(config, "notional", 1.0),
                                             get_num_or(config, "unit_block", 1e6), bumps,
                                             nullptr, nullptr, nullptr);
        Vector x0(2);
        x0 << mkt.spot, mkt.vol;
        conn = levi_civita_field(field, StatePoint(chart, x0),
                                 fd_steps_for(mkt, get_num_or(config, "fd_rel", 1e-4)));
    } else {
        throw ParseError("config: adjusted greeks need 'connection', 'pillars' or 'hedges'");
    }

    const QuadraticForm adjusted = covariant_hessian(g.hessian(chart), conn, g.gradient(chart));
    json out;
    out["price"] = g.price;
    out["delta"] = g.delta;
    out["vega"] = g.vega;
    out["gamma"] = g.gamma;
    out["vanna"] = g.vanna;
    out["volga"] = g.volga;
    out["adjusted_gamma"] = adjusted.matrix()(0, 0);
    out["adjusted_vanna"] = adjusted.matrix()(0, 1);
    out["adjusted_volga"] = adjusted.matrix()(1, 1);
    out["connection"] = connection_to_json(conn);
    return out;
}

namespace {

ChartMapAtPoint map_between(const std::string& from, const std::string& to, const json& point,
                            VolUnit unit) {
    const std::string u = vol_unit_label(unit);
    const double carry = point.value("carry", 1.0);
    auto forward_level = [&]() {
        if (point.contains("forward"))
            return point["forward"].get<double>();
        if (point.contains("spot"))
            return point["spot"].get<double>() * carry;
        throw ParseError("config: transform point needs 'spot' or 'forward'");
    };
    if (from == to)
        return ChartMapAtPoint::identity(chart_by_name(from, unit));
    if (from == "spot_vol" && to == "forward_vol")
        return ChartMapAtPoint::spot_to_forward(carry, u);
    if (from == "forward_vol" && to == "spot_vol")
        return ChartMapAtPoint::spot_to_forward(carry, u).inverse();
    if (from == "forward_vol" && to == "log_forward_vol")
        return ChartMapAtPoint::forward_to_log_forward(forward_level(), u);
    if (from == "log_forward_vol" && to == "forward_vol")
        return ChartMapAtPoint::forward_to_log_forward(forward_level(), u).inverse();
    if (from == "spot_vol" && to == "log_forward_vol")
        return ChartMapAtPoint::spot_to_forward(carry, u)
            .then(ChartMapAtPoint::forward_to_log_forward(forward_level(), u));
    if (from == "log_forward_vol" && to == "spot_vol")
        return ChartMapAtPoint::spot_to_forward(carry, u)
            .then(ChartMapAtPoint::forward_to_log_forward(forward_level(), u))
            .inverse();
    throw ParseError("config: unsupported transform from '" + from + "' to '" + to + "'");
}

} // namespace

json transform(const json& config) {
    const VolUnit unit = parse_vol_unit(config);
    const std::string object = config.at("object").get<std::string>();
    const std::string from = config.at("from").get<std::string>();
    const std::string to = config.at("to").get<std::string>();
    const ChartMapAtPoint map =
        map_between(from, to, config.value("point", json::object()), unit);

    json out;
    out["from"] = from;
    out["to"] = to;
    if (object == "gradient") {
        Gradient grad(map.source(), vector_from_json(config.at("values"), "values"));
        out["values"] = vector_to_json(transform_gradient(grad, map).values);
    } else if (object == "move") {
        TangentMove move(map.source(), vector_from_json(config.at("values"), "values"));
        out["values"] = vector_to_json(transform_move(move, map).delta);
    } else if (object == "quadratic_form") {
        const FormKind kind = config.value("kind", std::string("hessian_target")) == "penalty"
                                  ? FormKind::penalty
                                  : FormKind::hessian_target;
        QuadraticForm q(map.source(), matrix_from_json(config.at("values"), "values"), kind);
        out["values"] = matrix_to_json(transform_quadratic_form(q, map).matrix());
    } else if (object == "connection") {
        const Connection conn = connection_from_json(config.at("values"), map.source());
        out["values"] = connection_to_json(transform_connection(conn, map));
    } else {
        throw ParseError("config: transform object must be gradient, move, quadratic_form or "
                         "connection");
    }
    return out;
}

MarketSeries series_from_config(const json& config) {
    if (config.contains("path")) {
        SeriesSchema schema;
        schema.vol_unit = parse_vol_unit(config);
        if (config.contains("delimiter"))
            schema.delimiter = config["delimiter"].get<std::string>().at(0);
        return load_market_series(config["path"].get<std::string>(), schema);
    }
    if (config.contains("synthetic")) {
        const json& s = config["synthetic"];
        SynthConfig synth;
        synth.vol_unit = parse_vol_unit(s, parse_vol_unit(config));
        synth.start_date = s.value("start_date", synth.start_date);
        synth.steps = static_cast<int>(get_num_or(s, "steps", synth.steps));
        synth.dt = get_num_or(s, "dt", synth.dt);
        synth.spot0 = get_num_or(s, "spot0", synth.spot0);
        synth.vol0 = get_num_or(s, "vol0", synth.vol0);
        synth.r_dom = get_num_or(s, "r_dom", synth.r_dom);
        synth.r_for = get_num_or(s, "r_for", synth.r_for);
        synth.vol_of_vol = get_num_or(s, "vol_of_vol", synth.vol_of_vol);
        synth.rr25 = get_num_or(s, "rr25", 0.0);
        synth.bf25 = get_num_or(s, "bf25", 0.0);
        synth.with_smile_columns = s.value("with_smile", false);
        const uint64_t seed = s.value("seed", 0ULL);
        return synthesize_series(seed, synth);
    }
    throw ParseError("config: series needs 'path' or 'synthetic'");
}

json backtest_pnl(const MarketSeries& series, const json& config, const std::string& out_dir) {
    const BarrierSpec instrument = parse_barrier(config.at("instrument"));
    PnlBacktestConfig bt;
    bt.bumps = parse_bumps(config);
    bt.eta = get_num_or(config, "eta", 0.0);
    if (config.contains("predictors")) {
        bt.with_bs_taylor = bt.with_vv_revaluation = bt.with_connection = false;
        for (const auto& p : config["predictors"]) {
            const std::string name = p.get<std::string>();
            if (name == "bs_taylor")
                bt.with_bs_taylor = true;
            else if (name == "vv_revaluation")
                bt.with_vv_revaluation = true;
            else if (name == "connection")
                bt.with_connection = true;
            else
                throw ParseError("config: unknown predictor '" + name + "'");
        }
    }
    PredictorReport report = run_pnl_backtest(series, instrument, bt);
    report.config_echo = config.dump();
    if (!out_dir.empty())
        emit_pnl_report(report, out_dir);

    json out;
    out["steps"] = report.benchmark.size();
    out["stats"] = json::object();
    for (size_t p = 0; p < report.stats.size(); ++p) {
        json s;
        s["mae"] = report.stats[p].mae;
        s["rmse"] = report.stats[p].rmse;
        s["pearson"] = report.stats[p].pearson;
        out["stats"][report.names[p]] = s;
    }
    if (!out_dir.empty())
        out["files"] = {out_dir + "/increments.csv", out_dir + "/summary.txt",
                        out_dir + "/histograms.csv"};
    return out;
}

json backtest_cost(const MarketSeries& series, const json& config, const std::string& out_dir) {
    const BarrierSpec instrument = parse_barrier(config.at("instrument"));
    CostBacktestConfig bt;
    bt.hedges = parse_hedges(config);
    bt.notional = get_num_or(config, "notional", 1.0);
    bt.rebalance_every = static_cast<int>(get_num_or(config, "rebalance_every", 1));
    bt.stop_delta = get_num_or(config, "stop_delta", 0.0);
    bt.stop_vega = get_num_or(config, "stop_vega", 0.0);
    if (config.contains("trigger"))
        bt.trigger = get_num(config, "trigger");
    bt.unit_block = get_num_or(config, "unit_block", 1e6);
    bt.bumps = parse_bumps(config);
    CostReport report = run_cost_backtest(series, instrument, bt);
    report.config_echo = config.dump();
    if (!out_dir.empty())
        emit_cost_report(report, out_dir);

    json out;
    out["rebalances"] = report.dates.size();
    out["initial_premium"] = report.initial_premium;
    out["total_cost"] = report.total_cost;
    out["fraction_of_premium"] = report.fraction_of_premium;
    if (!out_dir.empty())
        out["files"] = {out_dir + "/costs.csv", out_dir + "/summary.txt",
                        out_dir + "/histograms.csv"};
    return out;
}

json reconstruct_metric_run(const json& config, const std::string& out_dir) {
    const VolUnit unit = parse_vol_unit(config);
    const Chart chart = chart_by_name(config.value("chart", "spot_vol"), unit);

    ConnectionGridField field = [&]() {
        if (config.contains("connection_grid"))
            return load_connection_grid(config["connection_grid"].get<std::string>(), chart);
        if (config.contains("grid") && config.contains("hedges")) {
            const json& gj = config["grid"];
            GridSpec grid(chart,
                          {gj.at("origin")[0].get<double>(), gj.at("origin")[1].get<double>()},
                          {gj.at("spacing")[0].get<double>(), gj.at("spacing")[1].get<double>()},
                          gj.at("n")[0].get<int>(), gj.at("n")[1].get<int>());
            const MarketSnapshot ref = parse_market(config, unit);
            const BarrierSpec book = parse_barrier(config.at("instrument"));
            PenaltyField pf = liquidity_field(config, ref, book, parse_hedges(config),
                                              get_num_or(config, "notional", 1.0),
                                              get_num_or(config, "unit_block", 1e6),
                                              parse_bumps(config), nullptr, nullptr, nullptr);
            const double rel = get_num_or(config, "fd_rel", 1e-4);
            std::vector<std::array<Matrix, 2>> coeffs;
            coeffs.reserve(grid.nodes());
            for (int i = 0; i < grid.n0; ++i)
                for (int j = 0; j < grid.n1; ++j) {
                    const Vector x = grid.point(i, j);
                    Vector h(2);
                    h << rel * std::max(std::abs(x[0]), 1.0),
                        rel * std::max(std::abs(x[1]), 1.0);
                    const auto dg = g_ell_derivatives_fd(pf, x, h);
                    const auto c = covgreeks::detail::levi_civita_raw(pf(x), dg,
                                                                      defaults::kPdTol);
                    coeffs.push_back({c[0], c[1]});
                }
            return ConnectionGridField(grid, std::move(coeffs));
        }
        throw ParseError("config: reconstruct-metric needs 'connection_grid' or "
                         "'grid' + 'hedges'");
    }();

    Matrix anchor = config.contains("anchor")
                        ? matrix_from_json(config["anchor"], "anchor")
                        : Matrix(Matrix::Identity(2, 2));
    int ai = field.grid.n0 / 2, aj = field.grid.n1 / 2;
    if (config.contains("anchor_node")) {
        ai = config["anchor_node"][0].get<int>();
        aj = config["anchor_node"][1].get<int>();
    }
    ReconstructionResult result = reconstruct_metric(field, anchor, ai, aj);
    if (config.contains("spd_floor")) {
        const double floor = get_num(config, "spd_floor");
        for (auto& f : result.field.forms)
            f = spd_project_matrix(f, floor);
    }
    const PdeResidualReport check = metric_pde_residual(result.field, field);

    json out;
    out["nodes"] = field.grid.nodes();
    out["residual_rms"] = result.residual_rms;
    out["residual_norm"] = result.residual_norm;
    out["pde_residual_max"] = check.max_residual;
    out["pde_residual_rms"] = check.rms_residual;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        const std::string path = out_dir + "/reconstructed_metric.csv";
        save_form_grid(result.field, path);
        out["files"] = {path};
    }
    return out;
}

} // namespace covgreeks::driver
