#pragma once
#include <string>

#include <json.hpp>

#include "covgreeks/backtest.hpp"

// JSON-config entry points behind the C API and the CLI. Config grammars are
// documented in the README.
namespace covgreeks::driver {

using json = nlohmann::json;

json greeks(const json& config);
json calibrate(const json& config);
json adjusted_greeks(const json& config);
json liquidity_report(const json& config);
json transform(const json& config);
json reconstruct_metric_run(const json& config, const std::string& out_dir);

MarketSeries series_from_config(const json& config);
json backtest_pnl(const MarketSeries& series, const json& config, const std::string& out_dir);
json backtest_cost(const MarketSeries& series, const json& config, const std::string& out_dir);

// Shared parsing helpers.
VolUnit parse_vol_unit(const json& j, VolUnit fallback = VolUnit::points);
MarketSnapshot parse_market(const json& j, VolUnit unit);
BarrierSpec parse_barrier(const json& j);
FdBumps parse_bumps(const json& j);
std::vector<HedgeLeg> parse_hedges(const json& j);

} // namespace covgreeks::driver
