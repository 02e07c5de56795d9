#include "covgreeks/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

namespace covgreeks {

// Howard Hinnant's civil-from-days / days-from-civil algorithms.
int64_t days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<int64_t>(doe) - 719468;
}

std::string civil_from_days(int64_t z) {
    z += 719468;
    const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int64_t y = static_cast<int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02u",
                  static_cast<long long>(y + (m <= 2)), m, d);
    return buf;
}

int64_t parse_date(const std::string& iso) {
    int y = 0;
    unsigned m = 0, d = 0;
    if (std::sscanf(iso.c_str(), "%d-%u-%u", &y, &m, &d) != 3 || m < 1 || m > 12 || d < 1 ||
        d > 31)
        throw ParseError("invalid date '" + iso + "' (expected yyyy-mm-dd)");
    return days_from_civil(y, m, d);
}

double year_fraction(int64_t from, int64_t to, DayCount dc) {
    const double days = static_cast<double>(to - from);
    return dc == DayCount::act365 ? days / 365.0 : days / 360.0;
}

MarketSnapshot MarketSeries::snapshot(size_t i) const {
    const MarketRow& r = rows.at(i);
    return MarketSnapshot(r.spot, r.vol, r.r_dom, r.r_for, vol_unit);
}

SmilePillars MarketSeries::pillars(size_t i, double expiry) const {
    const MarketRow& r = rows.at(i);
    const double rr = r.rr25.value_or(0.0);
    const double bf = r.bf25.value_or(0.0);
    return SmilePillars::from_rr_bf(expiry, r.vol, rr, bf);
}

void MarketSeries::validate() const {
    for (size_t i = 0; i < rows.size(); ++i) {
        const MarketRow& r = rows[i];
        if (!(r.spot > 0.0) || !(r.vol > 0.0))
            throw InvalidInputError("market series row " + std::to_string(i) + " (" + r.date +
                                    "): spot and vol must be strictly positive");
        if (i > 0 && rows[i].serial <= rows[i - 1].serial)
            throw InvalidInputError("market series row " + std::to_string(i) + " (" + r.date +
                                    "): dates must be strictly increasing");
    }
}

MarketSeries load_market_series(const std::string& path, const SeriesSchema& schema) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open market series file '" + path + "'");
    MarketSeries series;
    series.vol_unit = schema.vol_unit;
    std::string line;
    int line_no = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#')
            continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, schema.delimiter))
            cells.push_back(cell);
        if (!saw_header && !cells.empty() && cells[0] == "date") {
            saw_header = true;
            continue;
        }
        if (cells.size() != 5 && cells.size() != 7)
            throw ParseError("series file '" + path + "' line " + std::to_string(line_no) +
                             ": expected 5 or 7 columns, found " + std::to_string(cells.size()));
        MarketRow row;
        try {
            row.date = cells[0];
            row.serial = parse_date(cells[0]);
            row.spot = std::stod(cells[1]);
            row.vol = std::stod(cells[2]);
            row.r_dom = std::stod(cells[3]);
            row.r_for = std::stod(cells[4]);
            if (cells.size() == 7) {
                row.rr25 = std::stod(cells[5]);
                row.bf25 = std::stod(cells[6]);
            }
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception& e) {
            throw ParseError("series file '" + path + "' line " + std::to_string(line_no) +
                             ": " + e.what());
        }
        if (!(row.spot > 0.0))
            throw ParseError("series file '" + path + "' line " + std::to_string(line_no) +
                             ": spot must be > 0 (row rejected)");
        if (!(row.vol > 0.0))
            throw ParseError("series file '" + path + "' line " + std::to_string(line_no) +
                             ": sigma_atm must be > 0 (row rejected)");
        if (!series.rows.empty() && row.serial <= series.rows.back().serial)
            throw ParseError("series file '" + path + "' line " + std::to_string(line_no) +
                             ": dates must be strictly increasing (row rejected)");
        series.rows.push_back(std::move(row));
    }
    if (series.rows.empty())
        throw ParseError("series file '" + path + "' contains no data rows");
    return series;
}

namespace {

void write_double(std::ostream& os, double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << buf;
}

} // namespace

void save_market_series(const MarketSeries& series, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write series file '" + path + "'");
    const bool smile = !series.rows.empty() && series.rows.front().rr25.has_value();
    out << "date,spot,sigma_atm,r_d,r_f" << (smile ? ",rr25,bf25" : "") << "\n";
    for (const auto& r : series.rows) {
        out << r.date << ",";
        write_double(out, r.spot);
        out << ",";
        write_double(out, r.vol);
        out << ",";
        write_double(out, r.r_dom);
        out << ",";
        write_double(out, r.r_for);
        if (smile) {
            out << ",";
            write_double(out, r.rr25.value_or(0.0));
            out << ",";
            write_double(out, r.bf25.value_or(0.0));
        }
        out << "\n";
    }
}

MarketSeries synthesize_series(uint64_t seed, const SynthConfig& config) {
    if (config.steps < 1 || !(config.dt > 0.0))
        throw InvalidInputError("synthesize_series: steps must be >= 1 and dt > 0");
    if (!(config.spot0 > 0.0) || !(config.vol0 > 0.0))
        throw InvalidInputError("synthesize_series: spot0 and vol0 must be > 0");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    MarketSeries series;
    series.vol_unit = config.vol_unit;
    const int64_t start = parse_date(config.start_date);
    const double mu = config.r_dom - config.r_for;
    const double sq_dt = std::sqrt(config.dt);

    double log_s = std::log(config.spot0);
    double log_v = std::log(config.vol0);
    for (int n = 0; n <= config.steps; ++n) {
        MarketRow row;
        row.serial = start + n;
        row.date = civil_from_days(row.serial);
        row.spot = std::exp(log_s);
        row.vol = std::exp(log_v);
        row.r_dom = config.r_dom;
        row.r_for = config.r_for;
        if (config.with_smile_columns) {
            row.rr25 = config.rr25;
            row.bf25 = config.bf25;
        }
        series.rows.push_back(std::move(row));
        if (n == config.steps)
            break;
        const double sigma = std::exp(log_v) * (config.vol_unit == VolUnit::points ? 0.01 : 1.0);
        log_s += (mu - 0.5 * sigma * sigma) * config.dt + sigma * sq_dt * normal(rng);
        if (config.vol_of_vol > 0.0) {
            const double xi = config.vol_of_vol;
            log_v += -0.5 * xi * xi * config.dt + xi * sq_dt * normal(rng);
        }
    }
    series.validate();
    return series;
}

PredictorStats error_stats(const std::vector<double>& predicted,
                           const std::vector<double>& actual) {
    if (predicted.size() != actual.size())
        throw DimensionError("error_stats: series lengths differ");
    const size_t n = actual.size();
    if (n < 2)
        throw InvalidInputError("error_stats: need at least two observations");
    double mae = 0.0, mse = 0.0, mean_p = 0.0, mean_a = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double e = predicted[i] - actual[i];
        mae += std::abs(e);
        mse += e * e;
        mean_p += predicted[i];
        mean_a += actual[i];
    }
    mae /= n;
    mse /= n;
    mean_p /= n;
    mean_a /= n;
    double cov = 0.0, var_p = 0.0, var_a = 0.0;
    for (size_t i = 0; i < n; ++i) {
        cov += (predicted[i] - mean_p) * (actual[i] - mean_a);
        var_p += (predicted[i] - mean_p) * (predicted[i] - mean_p);
        var_a += (actual[i] - mean_a) * (actual[i] - mean_a);
    }
    if (!(var_a > 0.0) || !(var_p > 0.0))
        throw NumericError("error_stats: Pearson correlation undefined for a constant series");
    return PredictorStats{mae, std::sqrt(mse), cov / std::sqrt(var_p * var_a)};
}

namespace {

// Remaining maturity and knock state along the path.
struct PathState {
    double expiry0;
    bool knocked = false;
};

double uic_path_price(const BarrierSpec& spec, const MarketSnapshot& mkt, double remaining,
                      bool knocked) {
    if (knocked)
        return bs_greeks(VanillaSpec(OptionType::call, spec.strike, remaining), mkt).price;
    return reiner_rubinstein_uic(BarrierSpec(spec.strike, spec.barrier, remaining), mkt);
}

GreekBundle uic_path_greeks(const BarrierSpec& spec, const MarketSnapshot& mkt, double remaining,
                            bool knocked, const FdBumps& bumps) {
    if (!knocked)
        return uic_greeks(BarrierSpec(spec.strike, spec.barrier, remaining), mkt, bumps);
    // After a knock the book is the plain vanilla call.
    return bs_greeks(VanillaSpec(OptionType::call, spec.strike, remaining), mkt);
}

// Finite-difference greeks of a fixed-strike vanilla, on the same stencil as
// the VV targets so baseline and target discretize identically.
GreekBundle vanilla_greeks_fd(const VanillaSpec& spec, const MarketSnapshot& mkt,
                              const FdBumps& bumps) {
    const double hS = bumps.spot_step(mkt);
    const double hV = bumps.vol_step(mkt);
    auto price = [&](double s, double v) {
        return bs_greeks(spec, MarketSnapshot(s, v, mkt.r_dom, mkt.r_for, mkt.vol_unit)).price;
    };
    GreekBundle out = bs_greeks(spec, mkt);
    const double f00 = price(mkt.spot, mkt.vol);
    out.gamma = (price(mkt.spot + hS, mkt.vol) - 2.0 * f00 + price(mkt.spot - hS, mkt.vol)) /
                (hS * hS);
    out.volga = (price(mkt.spot, mkt.vol + hV) - 2.0 * f00 + price(mkt.spot, mkt.vol - hV)) /
                (hV * hV);
    out.vanna = (price(mkt.spot + hS, mkt.vol + hV) - price(mkt.spot + hS, mkt.vol - hV) -
                 price(mkt.spot - hS, mkt.vol + hV) + price(mkt.spot - hS, mkt.vol - hV)) /
                (4.0 * hS * hV);
    return out;
}

} // namespace

PredictorReport run_pnl_backtest(const MarketSeries& series, const BarrierSpec& instrument,
                                 const PnlBacktestConfig& config) {
    if (series.rows.size() < 2)
        throw InvalidInputError("run_pnl_backtest: series must have at least two rows");
    series.validate();
    const Chart chart = Chart::spot_vol(vol_unit_label(series.vol_unit));
    PredictorReport report;
    if (config.with_bs_taylor)
        report.names.push_back("bs_taylor");
    if (config.with_vv_revaluation)
        report.names.push_back("vv_revaluation");
    if (config.with_connection)
        report.names.push_back("connection");
    report.increments.assign(report.names.size(), {});

    const int64_t t0 = series.rows.front().serial;
    bool knocked = false;
    for (size_t n = 0; n + 1 < series.rows.size(); ++n) {
        const MarketRow& row = series.rows[n];
        const MarketRow& next = series.rows[n + 1];
        const double rem_n = instrument.expiry - year_fraction(t0, row.serial, config.day_count);
        const double rem_m = instrument.expiry - year_fraction(t0, next.serial, config.day_count);
        if (rem_m <= 0.0)
            break;
        knocked = knocked || row.spot >= instrument.barrier;
        const bool knocked_next = knocked || next.spot >= instrument.barrier;

        try {
            const MarketSnapshot mkt = series.snapshot(n);
            const MarketSnapshot mkt_next = series.snapshot(n + 1);
            const double v_n = uic_path_price(instrument, mkt, rem_n, knocked);
            const double v_m = uic_path_price(instrument, mkt_next, rem_m, knocked_next);
            report.benchmark.push_back(v_m - v_n);
            report.dates.push_back(next.date);

            const double ds = next.spot - row.spot;
            const double dv = next.vol - row.vol;
            Vector move(2);
            move << ds, dv;
            const TangentMove dx(chart, move);

            size_t slot = 0;
            GreekBundle greeks;
            bool have_greeks = false;
            auto need_greeks = [&]() {
                if (!have_greeks) {
                    greeks = uic_path_greeks(instrument, mkt, rem_n, knocked, config.bumps);
                    have_greeks = true;
                }
                return greeks;
            };

            if (config.with_bs_taylor) {
                const GreekBundle g = need_greeks();
                report.increments[slot++].push_back(
                    quadratic_predictor(g.gradient(chart), g.hessian(chart), dx));
            }
            if (config.with_vv_revaluation) {
                // Revalue under the new market with the maturity frozen at
                // t_n: like the other predictors this responds to (dS,
                // dsigma) only.
                const BarrierSpec at_n(instrument.strike, instrument.barrier, rem_n);
                const double vv_n =
                    vanna_volga_price(at_n, mkt, series.pillars(n, rem_n), config.bumps);
                const double vv_m = vanna_volga_price(at_n, mkt_next,
                                                      series.pillars(n + 1, rem_n),
                                                      config.bumps);
                report.increments[slot++].push_back(vv_m - vv_n);
            }
            if (config.with_connection) {
                const GreekBundle g = need_greeks();
                const auto instruments = vv_calibration_instruments(
                    mkt, series.pillars(n, rem_n), rem_n, config.bumps);
                CalibrationOptions opts;
                opts.eta = config.eta;
                const CalibrationResult fit = calibrate_connection(instruments, opts);

                const QuadraticForm adjusted =
                    covariant_hessian(g.hessian(chart), fit.connection, g.gradient(chart));
                report.increments[slot++].push_back(
                    quadratic_predictor(g.gradient(chart), adjusted, dx));
            }
        } catch (const std::exception& e) {
            throw NumericError("run_pnl_backtest: failure at " + next.date + ": " + e.what());
        }
    }
    if (report.benchmark.size() >= 2)
        for (size_t p = 0; p < report.names.size(); ++p) {
            try {
                report.stats.push_back(error_stats(report.increments[p], report.benchmark));
            } catch (const NumericError&) {
                // Degenerate (constant) series: report the errors and leave
                // the correlation undefined.
                PredictorStats s;
                double mae = 0.0, mse = 0.0;
                for (size_t i = 0; i < report.benchmark.size(); ++i) {
                    const double e = report.increments[p][i] - report.benchmark[i];
                    mae += std::abs(e);
                    mse += e * e;
                }
                s.mae = mae / report.benchmark.size();
                s.rmse = std::sqrt(mse / report.benchmark.size());
                s.pearson = std::numeric_limits<double>::quiet_NaN();
                report.stats.push_back(s);
            }
        }
    return report;
}

std::vector<CalibrationInstrument> vv_calibration_instruments(const MarketSnapshot& mkt,
                                                              const SmilePillars& pillars,
                                                              double expiry,
                                                              const FdBumps& bumps) {
    const Chart chart = Chart::spot_vol(vol_unit_label(mkt.vol_unit));
    // Strikes frozen at this state; baselines use the same stencil as the VV
    // targets so a flat smile calibrates to an exactly zero connection.
    const double k_atm = mkt.forward(expiry);
    const VanillaSpec leg_call(OptionType::call, k_atm, expiry);
    const VanillaSpec leg_put(OptionType::put, k_atm, expiry);
    const double k_25c = strike_from_delta(mkt, expiry, 0.25, OptionType::call, pillars.vol_25c);
    const VanillaSpec call25(OptionType::call, k_25c, expiry);

    auto bundle_sum = [](const GreekBundle& a, const GreekBundle& b) {
        GreekBundle s = a;
        s.price += b.price;
        s.delta += b.delta;
        s.vega += b.vega;
        s.gamma += b.gamma;
        s.vanna += b.vanna;
        s.volga += b.volga;
        return s;
    };
    const GreekBundle strad_base = bundle_sum(vanilla_greeks_fd(leg_call, mkt, bumps),
                                              vanilla_greeks_fd(leg_put, mkt, bumps));
    const GreekBundle c25_base = vanilla_greeks_fd(call25, mkt, bumps);

    const QuadraticForm strad_target =
        QuadraticForm(chart,
                      vv_target_hessian(leg_call, mkt, pillars, bumps).matrix() +
                          vv_target_hessian(leg_put, mkt, pillars, bumps).matrix(),
                      FormKind::hessian_target);
    const QuadraticForm c25_target = vv_target_hessian(call25, mkt, pillars, bumps);

    std::vector<CalibrationInstrument> instruments;
    instruments.emplace_back(strad_base.gradient(chart), strad_base.hessian(chart),
                             strad_target);
    instruments.emplace_back(c25_base.gradient(chart), c25_base.hessian(chart), c25_target);
    return instruments;
}

namespace {

// Vega is premium per vol in `from` units; rescale to per vol in `to` units.
double vega_unit_factor(VolUnit from, VolUnit to) {
    if (from == to)
        return 1.0;
    return from == VolUnit::points ? 100.0 : 0.01;
}

} // namespace

GreekBundle hedge_leg_greeks(const HedgeLeg& leg, const MarketSnapshot& mkt) {
    switch (leg.role) {
    case HedgeRole::spot: {
        GreekBundle g;
        g.price = mkt.spot;
        g.delta = 1.0;
        return g;
    }
    case HedgeRole::atm_straddle:
        return straddle_greeks(mkt, leg.tenor);
    case HedgeRole::call25: {
        const double k = strike_from_delta(mkt, leg.tenor, 0.25, OptionType::call, mkt.vol);
        return bs_greeks(VanillaSpec(OptionType::call, k, leg.tenor), mkt);
    }
    }
    throw InvalidInputError("hedge_leg_greeks: unknown role");
}

HedgeInstrumentSpec materialize_hedge_leg(const HedgeLeg& leg, const MarketSnapshot& mkt,
                                          double block) {
    double qv = 0.0; // quote-vega per unit notional, per width vol unit
    if (leg.width_kind == WidthKind::vol) {
        if (leg.quote_vega) {
            qv = *leg.quote_vega;
        } else {
            if (leg.role == HedgeRole::spot)
                throw InvalidInputError("hedge leg '" + leg.name +
                                        "': spot legs need a price width");
            qv = hedge_leg_greeks(leg, mkt).vega *
                 vega_unit_factor(mkt.vol_unit, leg.width_vol_unit);
        }
    }
    HedgeInstrumentSpec spec;
    spec.name = leg.name;
    spec.unit = "block";
    spec.width_kind = leg.width_kind;
    spec.quote_vega = qv * block;
    spec.half_width =
        leg.width_kind == WidthKind::price ? leg.half_width * block : leg.half_width;
    spec.clip = (leg.tiers.empty() ? leg.clip : leg.tiers.front().clip) / block;
    if (!leg.tiers.empty()) {
        std::vector<double> plateaus, transitions, widths;
        for (const auto& row : leg.tiers) {
            const double s_unit =
                leg.width_kind == WidthKind::vol ? row.half_width * qv : row.half_width;
            plateaus.push_back(lambda_from_width_clip(s_unit * block, row.clip / block));
        }
        for (size_t j = 0; j + 1 < leg.tiers.size(); ++j) {
            transitions.push_back(leg.tiers[j].breakpoint / block);
            widths.push_back(
                leg.tiers[j].omega.value_or(leg.omega_frac * leg.tiers[j].breakpoint) / block);
        }
        spec.tiers = TierSpec(std::move(plateaus), std::move(transitions), std::move(widths));
    }
    return spec;
}

CostReport run_cost_backtest(const MarketSeries& series, const BarrierSpec& instrument,
                             const CostBacktestConfig& config) {
    if (series.rows.size() < 2)
        throw InvalidInputError("run_cost_backtest: series must have at least two rows");
    if (config.hedges.empty())
        throw InvalidInputError("run_cost_backtest: no hedge legs configured");
    if (config.rebalance_every < 1)
        throw InvalidInputError("run_cost_backtest: rebalance_every must be >= 1");
    series.validate();

    const double block = config.unit_block;
    if (!(block > 0.0))
        throw InvalidInputError("run_cost_backtest: unit_block must be > 0");
    const int m = static_cast<int>(config.hedges.size());

    CostReport report;
    for (const auto& leg : config.hedges)
        report.instruments.push_back(leg.name);

    const Chart chart = Chart::spot_vol(vol_unit_label(series.vol_unit));
    const int64_t t0 = series.rows.front().serial;
    report.initial_premium =
        reiner_rubinstein_uic(instrument, series.snapshot(0)) * config.notional;

    bool knocked = false;
    double cum = 0.0;
    size_t last_hedge = 0;
    for (size_t n = config.rebalance_every; n < series.rows.size();
         n += config.rebalance_every) {
        const MarketRow& row = series.rows[last_hedge];
        const MarketRow& next = series.rows[n];
        const double rem = instrument.expiry - year_fraction(t0, row.serial, config.day_count);
        if (rem <= 0.0)
            break;
        knocked = knocked || row.spot >= instrument.barrier;

        try {
            const MarketSnapshot mkt = series.snapshot(last_hedge);
            const GreekBundle book = uic_path_greeks(instrument, mkt, rem, knocked, config.bumps);
            const double delta_book = config.notional * book.delta;
            const double vega_book = config.notional * book.vega;
            if (std::abs(delta_book) < config.stop_delta &&
                std::abs(vega_book) < config.stop_vega)
                break; // greeks decayed below the noise floors

            // Each rebalance date is its own liquidity bucket: widths are
            // converted at this state and Lambda held fixed for the step.
            std::vector<HedgeInstrumentSpec> specs;
            for (const auto& leg : config.hedges)
                specs.push_back(materialize_hedge_leg(leg, mkt, block));
            const ImpactMatrix lambda = build_impact_matrix(specs, next.date);

            // Exposure rows: delta and vega delivered per block of each hedge.
            Matrix b(2, m);
            for (int r = 0; r < m; ++r) {
                const GreekBundle g = hedge_leg_greeks(config.hedges[r], mkt);
                b(0, r) = g.delta * block;
                b(1, r) = g.vega * block;
            }

            Vector dx(2);
            dx << next.spot - row.spot, next.vol - row.vol;

            Matrix j_e(2, 2);
            j_e << book.gamma, book.vanna, book.vanna, book.volga;
            j_e *= config.notional;

            if (config.trigger) {
                const HedgeResponse resp = build_hedge_response(lambda, ExposureSpec(b, j_e));
                const FactorPenalty g_ell = pullback_penalty(resp, lambda, chart);
                const StatePoint x_now(chart, (Vector(2) << next.spot, next.vol).finished());
                const StatePoint x_last(chart, (Vector(2) << row.spot, row.vol).finished());
                if (!rebalance_trigger(x_now, x_last, g_ell, *config.trigger))
                    continue;
            }

            const Vector c = -(j_e * dx);
            const Vector dq = least_cost_trade(lambda, b, c);

            double cost = 0.0;
            for (int r = 0; r < m; ++r) {
                if (specs[r].tiers)
                    cost += tiered_cost(dq[r], *specs[r].tiers);
                else
                    cost += 0.5 * lambda.lambda(r, r) * dq[r] * dq[r];
            }

            cum += cost;
            report.dates.push_back(next.date);
            report.trades.push_back(dq);
            report.step_cost.push_back(cost);
            report.cumulative.push_back(cum);
            last_hedge = n;
        } catch (const std::exception& e) {
            throw NumericError("run_cost_backtest: failure at " + next.date + ": " + e.what());
        }
    }
    report.total_cost = cum;
    report.fraction_of_premium =
        report.initial_premium != 0.0 ? cum / report.initial_premium : 0.0;
    return report;
}

// --- reports ---------------------------------------------------------------------

namespace {

std::ofstream open_out(const std::string& dir, const std::string& name) {
    std::filesystem::create_directories(dir);
    const std::string path = dir + "/" + name;
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write report file '" + path + "'");
    return out;
}

void write_histogram(std::ofstream& out, const std::string& label,
                     const std::vector<double>& values) {
    if (values.empty())
        return;
    const Histogram h = histogram(values);
    for (size_t b = 0; b + 1 < h.edges.size(); ++b) {
        out << label << ",";
        write_double(out, h.edges[b]);
        out << ",";
        write_double(out, h.edges[b + 1]);
        out << "," << h.counts[b] << "\n";
    }
}

} // namespace

Histogram histogram(const std::vector<double>& values, int bins) {
    if (bins < 1)
        throw InvalidInputError("histogram: need at least one bin");
    Histogram h;
    if (values.empty())
        return h;
    double lo = *std::min_element(values.begin(), values.end());
    double hi = *std::max_element(values.begin(), values.end());
    if (lo == hi)
        hi = lo + 1.0;
    h.edges.resize(bins + 1);
    for (int b = 0; b <= bins; ++b)
        h.edges[b] = lo + (hi - lo) * b / bins;
    h.counts.assign(bins, 0);
    for (double v : values) {
        int b = static_cast<int>((v - lo) / (hi - lo) * bins);
        b = std::clamp(b, 0, bins - 1);
        ++h.counts[b];
    }
    return h;
}

void emit_pnl_report(const PredictorReport& report, const std::string& out_dir) {
    {
        std::ofstream out = open_out(out_dir, "increments.csv");
        out << "date,benchmark";
        for (const auto& name : report.names)
            out << "," << name;
        out << "\n";
        for (size_t i = 0; i < report.benchmark.size(); ++i) {
            out << report.dates[i] << ",";
            write_double(out, report.benchmark[i]);
            for (size_t p = 0; p < report.names.size(); ++p) {
                out << ",";
                write_double(out, report.increments[p][i]);
            }
            out << "\n";
        }
    }
    {
        std::ofstream out = open_out(out_dir, "summary.txt");
        out << "report: pnl_backtest\n";
        out << "steps: " << report.benchmark.size() << "\n";
        for (size_t p = 0; p < report.stats.size(); ++p) {
            out << report.names[p] << ".mae: ";
            write_double(out, report.stats[p].mae);
            out << "\n" << report.names[p] << ".rmse: ";
            write_double(out, report.stats[p].rmse);
            out << "\n" << report.names[p] << ".pearson: ";
            write_double(out, report.stats[p].pearson);
            out << "\n";
        }
        if (!report.config_echo.empty())
            out << "config: " << report.config_echo << "\n";
    }
    {
        std::ofstream out = open_out(out_dir, "histograms.csv");
        out << "series,bin_lo,bin_hi,count\n";
        write_histogram(out, "benchmark", report.benchmark);
        for (size_t p = 0; p < report.names.size(); ++p)
            write_histogram(out, report.names[p], report.increments[p]);
    }
}

void emit_cost_report(const CostReport& report, const std::string& out_dir) {
    {
        std::ofstream out = open_out(out_dir, "costs.csv");
        out << "date";
        for (const auto& name : report.instruments)
            out << ",dq_" << name;
        out << ",cost,cumulative\n";
        for (size_t i = 0; i < report.dates.size(); ++i) {
            out << report.dates[i];
            for (int r = 0; r < report.trades[i].size(); ++r) {
                out << ",";
                write_double(out, report.trades[i][r]);
            }
            out << ",";
            write_double(out, report.step_cost[i]);
            out << ",";
            write_double(out, report.cumulative[i]);
            out << "\n";
        }
    }
    {
        std::ofstream out = open_out(out_dir, "summary.txt");
        out << "report: cost_backtest\n";
        out << "rebalances: " << report.dates.size() << "\n";
        out << "initial_premium: ";
        write_double(out, report.initial_premium);
        out << "\ntotal_cost: ";
        write_double(out, report.total_cost);
        out << "\nfraction_of_premium: ";
        write_double(out, report.fraction_of_premium);
        out << "\n";
        if (!report.config_echo.empty())
            out << "config: " << report.config_echo << "\n";
    }
    {
        std::ofstream out = open_out(out_dir, "histograms.csv");
        out << "series,bin_lo,bin_hi,count\n";
        write_histogram(out, "cost", report.step_cost);
        for (size_t r = 0; r < report.instruments.size(); ++r) {
            std::vector<double> abs_trades;
            for (const auto& t : report.trades)
                abs_trades.push_back(std::abs(t[r]));
            write_histogram(out, "abs_dq_" + report.instruments[r], abs_trades);
        }
    }
}

} // namespace covgreeks
