#pragma once
#include <optional>
#include <string>

#include "covgreeks/geometry.hpp"

namespace covgreeks {

enum class OptionType { call, put };
enum class VolUnit { points, decimal };

inline double vol_to_decimal(double vol, VolUnit unit) {
    return unit == VolUnit::points ? vol / 100.0 : vol;
}
inline std::string vol_unit_label(VolUnit unit) {
    return unit == VolUnit::points ? "vol_pt" : "vol_dec";
}

/// Market state for pricing: spot, ATM vol (in vol_unit), continuously
/// compounded domestic and foreign rates.
struct MarketSnapshot {
    double spot;
    double vol;
    double r_dom;
    double r_for;
    VolUnit vol_unit = VolUnit::points;

    MarketSnapshot(double s, double v, double rd, double rf,
                   VolUnit unit = VolUnit::points);

    double vol_decimal() const { return vol_to_decimal(vol, vol_unit); }
    double forward(double expiry) const;
};

struct VanillaSpec {
    OptionType type;
    double strike;
    double expiry; // years

    VanillaSpec(OptionType t, double k, double T);
};

/// Up-and-in call.
struct BarrierSpec {
    double strike;
    double barrier;
    double expiry;

    BarrierSpec(double k, double b, double T);
};

/// Three smile pillars at a common expiry: market vols for the ATM straddle
/// and the 25-delta call/put, in the same unit as the snapshot vol.
struct SmilePillars {
    double expiry;
    double vol_atm;
    double vol_25c;
    double vol_25p;

    SmilePillars(double T, double atm, double c25, double p25);
    /// atm + bf +/- rr/2 quoting.
    static SmilePillars from_rr_bf(double expiry, double atm, double rr25, double bf25);
};

/// Price plus first/second-order sensitivities. Vol sensitivities are per the
/// snapshot's vol unit. rr01/bf01 are filled only by the smile-state helpers.
struct GreekBundle {
    double price = 0.0;
    double delta = 0.0;
    double vega = 0.0;
    double gamma = 0.0;
    double vanna = 0.0;
    double volga = 0.0;
    std::optional<double> rr01;
    std::optional<double> bf01;
    bool degenerate = false; // expiry reached: intrinsic value, no second order

    Gradient gradient(const Chart& chart) const;        // (delta, vega)
    QuadraticForm hessian(const Chart& chart) const;    // [[gamma, vanna], [vanna, volga]]
};

struct FdBumps {
    double spot_rel = 1e-4; // h_S = spot_rel * S
    double vol = 1e-2;      // vol points (scaled to the unit in use)

    double spot_step(const MarketSnapshot& mkt) const { return spot_rel * mkt.spot; }
    double vol_step(const MarketSnapshot& mkt) const {
        return mkt.vol_unit == VolUnit::points ? vol : vol / 100.0;
    }
};

double norm_pdf(double x);
double norm_cdf(double x);
double norm_ppf(double p);

/// Garman-Kohlhagen closed form with analytic Greeks.
GreekBundle bs_greeks(const VanillaSpec& spec, const MarketSnapshot& mkt);

/// ATM-forward straddle (call + put struck at the forward).
GreekBundle straddle_greeks(const MarketSnapshot& mkt, double expiry);

/// Strike with the given signed spot delta at the supplied vol (snapshot unit).
double strike_from_delta(const MarketSnapshot& mkt, double expiry, double target_delta,
                         OptionType type, double vol);

/// Reiner-Rubinstein closed form for the up-and-in call under flat vol.
/// Degenerates to the vanilla price when the barrier is at or below spot.
double reiner_rubinstein_uic(const BarrierSpec& spec, const MarketSnapshot& mkt);

/// Central finite-difference Greeks of the barrier closed form.
GreekBundle uic_greeks(const BarrierSpec& spec, const MarketSnapshot& mkt,
                       const FdBumps& bumps = {});

/// Vanna-Volga corrected price: exact-match three-pillar weights on
/// (Vega, Vanna, Volga), correction = sum of weights times (market - base)
/// pillar values.
double vanna_volga_price(const VanillaSpec& spec, const MarketSnapshot& mkt,
                         const SmilePillars& pillars);
double vanna_volga_price(const BarrierSpec& spec, const MarketSnapshot& mkt,
                         const SmilePillars& pillars, const FdBumps& bumps = {});

/// Central finite-difference Hessian of the VV price in the quoting chart
/// (S, sigma); pillar vols ride additively on the bumped ATM vol.
QuadraticForm vv_target_hessian(const VanillaSpec& spec, const MarketSnapshot& mkt,
                                const SmilePillars& pillars, const FdBumps& bumps = {});
QuadraticForm vv_target_hessian(const BarrierSpec& spec, const MarketSnapshot& mkt,
                                const SmilePillars& pillars, const FdBumps& bumps = {});

} // namespace covgreeks
