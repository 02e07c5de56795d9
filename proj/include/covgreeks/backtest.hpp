#pragma once
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "covgreeks/calibration.hpp"
#include "covgreeks/liquidity.hpp"
#include "covgreeks/pricing.hpp"

namespace covgreeks {

// Calendar helpers (proleptic Gregorian).
int64_t days_from_civil(int year, unsigned month, unsigned day);
std::string civil_from_days(int64_t serial);
int64_t parse_date(const std::string& iso); // yyyy-mm-dd
enum class DayCount { act365, act360 };
double year_fraction(int64_t from, int64_t to, DayCount dc = DayCount::act365);

struct MarketRow {
    std::string date;
    int64_t serial = 0;
    double spot = 0.0;
    double vol = 0.0;
    double r_dom = 0.0;
    double r_for = 0.0;
    std::optional<double> rr25;
    std::optional<double> bf25;
};

struct MarketSeries {
    VolUnit vol_unit = VolUnit::points;
    std::vector<MarketRow> rows;

    MarketSnapshot snapshot(size_t i) const;
    /// Pillars at row i for the given expiry; flat smile when the rr/bf
    /// columns are absent.
    SmilePillars pillars(size_t i, double expiry) const;
    void validate() const;
};

struct SeriesSchema {
    char delimiter = ',';
    VolUnit vol_unit = VolUnit::points;
};

/// Parse and validate a delimited series file with columns
/// date,spot,sigma_atm,r_d,r_f[,rr25,bf25]. Rows violating the invariants are
/// reported with their line numbers.
MarketSeries load_market_series(const std::string& path, const SeriesSchema& schema = {});
void save_market_series(const MarketSeries& series, const std::string& path);

struct SynthConfig {
    std::string start_date = "2024-01-02";
    int steps = 250;
    double dt = 1.0 / 365.0; // calendar daily steps under ACT/365
    double spot0 = 1.0;
    double vol0 = 9.0; // in vol_unit
    double r_dom = 0.02;
    double r_for = 0.01;
    double vol_of_vol = 0.0; // annualized lognormal vol of the vol path
    double rr25 = 0.0;
    double bf25 = 0.0;
    bool with_smile_columns = false;
    VolUnit vol_unit = VolUnit::points;
};

/// Reproducible GBM spot path (drift r_d - r_f) with a lognormal vol path.
MarketSeries synthesize_series(uint64_t seed, const SynthConfig& config);

// --- one-step P&L replay -------------------------------------------------------

struct PredictorStats {
    double mae = 0.0;
    double rmse = 0.0;
    double pearson = 0.0;
};

PredictorStats error_stats(const std::vector<double>& predicted,
                           const std::vector<double>& actual);

struct PnlBacktestConfig {
    FdBumps bumps;
    bool with_bs_taylor = true;
    bool with_vv_revaluation = true;
    bool with_connection = true;
    double eta = 0.0; // ridge weight for the per-step calibration
    DayCount day_count = DayCount::act365;
};

struct PredictorReport {
    std::vector<std::string> dates;  // step end dates
    std::vector<double> benchmark;   // closed-form one-step increments
    std::vector<std::string> names;
    std::vector<std::vector<double>> increments; // per predictor
    std::vector<PredictorStats> stats;           // vs the benchmark
    std::string config_echo;
};

/// Replay daily one-step predictors for an up-and-in call along the series.
/// The benchmark is the closed-form revaluation increment; predictors use
/// (dS, dsigma) only.
PredictorReport run_pnl_backtest(const MarketSeries& series, const BarrierSpec& instrument,
                                 const PnlBacktestConfig& config = {});

/// Default calibration set at one state: the ATM-forward straddle and the
/// 25-delta call with finite-difference baselines and VV target Hessians on
/// the same stencil.
std::vector<CalibrationInstrument> vv_calibration_instruments(const MarketSnapshot& mkt,
                                                              const SmilePillars& pillars,
                                                              double expiry,
                                                              const FdBumps& bumps = {});

// --- hedge-cost replay -----------------------------------------------------------

enum class HedgeRole { spot, atm_straddle, call25 };

/// One tier row as quoted: upper breakpoint of the tier, representative clip
/// and half-width (price per unit, or vol in width_vol_unit).
struct TierRow {
    double breakpoint = 0.0; // trade size where the next tier starts
    double clip = 0.0;
    double half_width = 0.0;
    std::optional<double> omega; // logistic smoothing width; default is
                                 // omega_frac * breakpoint
};

struct HedgeLeg {
    std::string name;
    HedgeRole role = HedgeRole::spot;
    double tenor = 1.0; // hedge-option tenor in years
    WidthKind width_kind = WidthKind::price;
    double half_width = 0.0; // per unit notional
    double clip = 0.0;       // notional units
    /// Premium per unit notional per width vol unit. When absent for a vol
    /// width, the quote-vega is computed from the leg's BS vega at each
    /// rebalance bucket.
    std::optional<double> quote_vega;
    VolUnit width_vol_unit = VolUnit::points; // unit of the vol widths quoted
    std::vector<TierRow> tiers;               // empty = flat (non-tiered)
    double omega_frac = 0.1;
};

struct CostBacktestConfig {
    std::vector<HedgeLeg> hedges;
    double notional = 1.0;
    int rebalance_every = 1;    // rows between rebalances (5 ~ weekly)
    double stop_delta = 0.0;    // halt when |Delta_book| and |Vega_book| are
    double stop_vega = 0.0;     // both below these floors
    std::optional<double> trigger; // optional liquidity-cost trigger L_trig
    double unit_block = 1e6;    // trade-unit block for internal rescaling
    FdBumps bumps;
    DayCount day_count = DayCount::act365;
};

struct CostReport {
    std::vector<std::string> dates;
    std::vector<std::string> instruments;
    std::vector<Vector> trades; // per date, in unit blocks
    std::vector<double> step_cost;
    std::vector<double> cumulative;
    double initial_premium = 0.0; // premium x notional at the first date
    double total_cost = 0.0;
    double fraction_of_premium = 0.0;
    std::string config_echo;
};

/// Replay least-cost hedging of the barrier book along the series and
/// accumulate execution costs (tiered when tiers are present, else flat).
CostReport run_cost_backtest(const MarketSeries& series, const BarrierSpec& instrument,
                             const CostBacktestConfig& config);

/// Price/delta/vega of one hedge leg per unit notional at a state.
GreekBundle hedge_leg_greeks(const HedgeLeg& leg, const MarketSnapshot& mkt);

/// Quoted widths -> per-block impact inputs, converting vol widths with the
/// leg's quote-vega (computed from the market when not supplied).
HedgeInstrumentSpec materialize_hedge_leg(const HedgeLeg& leg, const MarketSnapshot& mkt,
                                          double block);

// --- reports ---------------------------------------------------------------------

void emit_pnl_report(const PredictorReport& report, const std::string& out_dir);
void emit_cost_report(const CostReport& report, const std::string& out_dir);

/// Histogram bin counts (fixed bin count over [min, max]).
struct Histogram {
    std::vector<double> edges; // bins + 1 entries
    std::vector<int> counts;
};
Histogram histogram(const std::vector<double>& values, int bins = 20);

} // namespace covgreeks
