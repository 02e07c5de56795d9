#include "covgreeks/pricing.hpp"

#include <array>
#include <cmath>
#include <functional>

namespace covgreeks {

namespace {
constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kInvSqrt2Pi = 0.3989422804014327;
} // namespace

double norm_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double norm_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

// Acklam's rational approximation with one Halley refinement.
double norm_ppf(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw InvalidInputError("norm_ppf: probability must lie in (0, 1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double e = norm_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

MarketSnapshot::MarketSnapshot(double s, double v, double rd, double rf, VolUnit unit)
    : spot(s), vol(v), r_dom(rd), r_for(rf), vol_unit(unit) {
    if (!(spot > 0.0) || !std::isfinite(spot))
        throw InvalidInputError("MarketSnapshot: spot must be strictly positive");
    if (!(vol > 0.0) || !std::isfinite(vol))
        throw InvalidInputError("MarketSnapshot: vol must be strictly positive");
    if (!std::isfinite(r_dom) || !std::isfinite(r_for))
        throw InvalidInputError("MarketSnapshot: rates must be finite");
}

double MarketSnapshot::forward(double expiry) const {
    return spot * std::exp((r_dom - r_for) * expiry);
}

VanillaSpec::VanillaSpec(OptionType t, double k, double T) : type(t), strike(k), expiry(T) {
    if (!(strike > 0.0) || !std::isfinite(strike))
        throw InvalidInputError("VanillaSpec: strike must be strictly positive");
    if (!std::isfinite(expiry))
        throw InvalidInputError("VanillaSpec: expiry must be finite");
}

BarrierSpec::BarrierSpec(double k, double b, double T) : strike(k), barrier(b), expiry(T) {
    if (!(strike > 0.0) || !(barrier > 0.0))
        throw InvalidInputError("BarrierSpec: strike and barrier must be strictly positive");
    if (!std::isfinite(expiry))
        throw InvalidInputError("BarrierSpec: expiry must be finite");
}

SmilePillars::SmilePillars(double T, double atm, double c25, double p25)
    : expiry(T), vol_atm(atm), vol_25c(c25), vol_25p(p25) {
    if (!(vol_atm > 0.0 && vol_25c > 0.0 && vol_25p > 0.0))
        throw InvalidInputError("SmilePillars: pillar vols must be strictly positive");
    if (!(expiry > 0.0))
        throw InvalidInputError("SmilePillars: expiry must be positive");
}

SmilePillars SmilePillars::from_rr_bf(double expiry, double atm, double rr25, double bf25) {
    return SmilePillars(expiry, atm, atm + bf25 + 0.5 * rr25, atm + bf25 - 0.5 * rr25);
}

Gradient GreekBundle::gradient(const Chart& chart) const {
    Vector v(2);
    v << delta, vega;
    return Gradient(chart, v);
}

QuadraticForm GreekBundle::hessian(const Chart& chart) const {
    Matrix h(2, 2);
    h << gamma, vanna, vanna, volga;
    return QuadraticForm(chart, h, FormKind::hessian_target);
}

GreekBundle bs_greeks(const VanillaSpec& spec, const MarketSnapshot& mkt) {
    const double phi = spec.type == OptionType::call ? 1.0 : -1.0;
    GreekBundle out;
    if (spec.expiry <= 0.0) {
        out.price = std::max(phi * (mkt.spot - spec.strike), 0.0);
        out.delta = (phi * (mkt.spot - spec.strike) > 0.0) ? phi : 0.0;
        out.degenerate = true;
        return out;
    }
    const double sigma = mkt.vol_decimal();
    const double T = spec.expiry;
    const double sqT = std::sqrt(T);
    const double df_f = std::exp(-mkt.r_for * T);
    const double df_d = std::exp(-mkt.r_dom * T);
    const double d1 =
        (std::log(mkt.spot / spec.strike) + (mkt.r_dom - mkt.r_for + 0.5 * sigma * sigma) * T) /
        (sigma * sqT);
    const double d2 = d1 - sigma * sqT;

    out.price = phi * (mkt.spot * df_f * norm_cdf(phi * d1) -
                       spec.strike * df_d * norm_cdf(phi * d2));
    out.delta = phi * df_f * norm_cdf(phi * d1);
    const double vega_dec = mkt.spot * df_f * norm_pdf(d1) * sqT;
    out.gamma = df_f * norm_pdf(d1) / (mkt.spot * sigma * sqT);
    const double vanna_dec = -df_f * norm_pdf(d1) * d2 / sigma;
    const double volga_dec = vega_dec * d1 * d2 / sigma;
    const double u = mkt.vol_unit == VolUnit::points ? 0.01 : 1.0; // d sigma_dec / d coord
    out.vega = vega_dec * u;
    out.vanna = vanna_dec * u;
    out.volga = volga_dec * u * u;
    return out;
}

GreekBundle straddle_greeks(const MarketSnapshot& mkt, double expiry) {
    const double k_atm = mkt.forward(expiry);
    const GreekBundle c = bs_greeks(VanillaSpec(OptionType::call, k_atm, expiry), mkt);
    const GreekBundle p = bs_greeks(VanillaSpec(OptionType::put, k_atm, expiry), mkt);
    GreekBundle out;
    out.price = c.price + p.price;
    out.delta = c.delta + p.delta;
    out.vega = c.vega + p.vega;
    out.gamma = c.gamma + p.gamma;
    out.vanna = c.vanna + p.vanna;
    out.volga = c.volga + p.volga;
    out.degenerate = c.degenerate;
    return out;
}

double strike_from_delta(const MarketSnapshot& mkt, double expiry, double target_delta,
                         OptionType type, double vol) {
    const double phi = type == OptionType::call ? 1.0 : -1.0;
    if (!(phi * target_delta > 0.0))
        throw InvalidInputError("strike_from_delta: delta sign must match the option type");
    const double sigma = vol_to_decimal(vol, mkt.vol_unit);
    const double df_f = std::exp(-mkt.r_for * expiry);
    const double p = phi * target_delta / df_f;
    if (!(p > 0.0 && p < 1.0))
        throw InvalidInputError("strike_from_delta: unattainable delta for these inputs");
    const double d1 = phi * norm_ppf(p);
    const double fwd = mkt.spot * std::exp((mkt.r_dom - mkt.r_for) * expiry);
    return fwd * std::exp(-d1 * sigma * std::sqrt(expiry) + 0.5 * sigma * sigma * expiry);
}

double reiner_rubinstein_uic(const BarrierSpec& spec, const MarketSnapshot& mkt) {
    // Barrier at or below spot: already knocked in, plain vanilla.
    if (spec.barrier <= mkt.spot)
        return bs_greeks(VanillaSpec(OptionType::call, spec.strike, spec.expiry), mkt).price;
    if (spec.expiry <= 0.0)
        return 0.0; // never touched and no time left
    const double S = mkt.spot, K = spec.strike, H = spec.barrier, T = spec.expiry;
    const double sigma = mkt.vol_decimal();
    const double r = mkt.r_dom;
    const double b = mkt.r_dom - mkt.r_for;
    const double sqT = std::sqrt(T);
    const double v2 = sigma * sigma;
    const double mu = (b - 0.5 * v2) / v2;
    const double dfc = std::exp((b - r) * T); // carry discount on S terms
    const double dfr = std::exp(-r * T);

    const double x1 = std::log(S / K) / (sigma * sqT) + (1.0 + mu) * sigma * sqT;
    const double x2 = std::log(S / H) / (sigma * sqT) + (1.0 + mu) * sigma * sqT;
    const double y1 = std::log(H * H / (S * K)) / (sigma * sqT) + (1.0 + mu) * sigma * sqT;
    const double y2 = std::log(H / S) / (sigma * sqT) + (1.0 + mu) * sigma * sqT;
    const double pw1 = std::pow(H / S, 2.0 * (mu + 1.0));
    const double pw0 = std::pow(H / S, 2.0 * mu);

    const auto A_of = [&](double x) {
        return S * dfc * norm_cdf(x) - K * dfr * norm_cdf(x - sigma * sqT);
    };
    // eta = -1 for an upper barrier.
    const auto CD_of = [&](double y) {
        return S * dfc * pw1 * norm_cdf(-y) - K * dfr * pw0 * norm_cdf(-(y - sigma * sqT));
    };

    if (K >= H)
        return A_of(x1); // payoff region lies above the barrier: vanilla
    return A_of(x2) - CD_of(y1) + CD_of(y2);
}

namespace {

// Second-order greeks of an (S, vol) price function by central differences.
GreekBundle fd_bundle(const std::function<double(double, double)>& price_at,
                      const MarketSnapshot& mkt, const FdBumps& bumps) {
    const double hS = bumps.spot_step(mkt);
    const double hV = bumps.vol_step(mkt);
    const double f00 = price_at(mkt.spot, mkt.vol);
    const double fpS = price_at(mkt.spot + hS, mkt.vol);
    const double fmS = price_at(mkt.spot - hS, mkt.vol);
    const double fpV = price_at(mkt.spot, mkt.vol + hV);
    const double fmV = price_at(mkt.spot, mkt.vol - hV);
    const double fpp = price_at(mkt.spot + hS, mkt.vol + hV);
    const double fpm = price_at(mkt.spot + hS, mkt.vol - hV);
    const double fmp = price_at(mkt.spot - hS, mkt.vol + hV);
    const double fmm = price_at(mkt.spot - hS, mkt.vol - hV);

    GreekBundle out;
    out.price = f00;
    out.delta = (fpS - fmS) / (2.0 * hS);
    out.vega = (fpV - fmV) / (2.0 * hV);
    out.gamma = (fpS - 2.0 * f00 + fmS) / (hS * hS);
    out.volga = (fpV - 2.0 * f00 + fmV) / (hV * hV);
    out.vanna = (fpp - fpm - fmp + fmm) / (4.0 * hS * hV);
    if (!std::isfinite(out.gamma) || !std::isfinite(out.vanna) || !std::isfinite(out.volga) ||
        !std::isfinite(out.delta) || !std::isfinite(out.vega))
        throw NumericError("finite-difference greeks are not finite");
    return out;
}

struct PillarQuote {
    VanillaSpec spec;
    double market_vol;
    bool straddle;
};

std::array<PillarQuote, 3> build_pillars(const MarketSnapshot& mkt, const SmilePillars& pillars) {
    const double k_atm = mkt.forward(pillars.expiry);
    const double k_25c =
        strike_from_delta(mkt, pillars.expiry, 0.25, OptionType::call, pillars.vol_25c);
    const double k_25p =
        strike_from_delta(mkt, pillars.expiry, -0.25, OptionType::put, pillars.vol_25p);
    return {PillarQuote{VanillaSpec(OptionType::call, k_atm, pillars.expiry), pillars.vol_atm,
                        true},
            PillarQuote{VanillaSpec(OptionType::call, k_25c, pillars.expiry), pillars.vol_25c,
                        false},
            PillarQuote{VanillaSpec(OptionType::put, k_25p, pillars.expiry), pillars.vol_25p,
                        false}};
}

GreekBundle pillar_greeks(const PillarQuote& q, const MarketSnapshot& mkt) {
    if (q.straddle)
        return straddle_greeks(mkt, q.spec.expiry);
    return bs_greeks(q.spec, mkt);
}

double pillar_price(const PillarQuote& q, const MarketSnapshot& mkt, double vol) {
    MarketSnapshot bumped(mkt.spot, vol, mkt.r_dom, mkt.r_for, mkt.vol_unit);
    return pillar_greeks(q, bumped).price;
}

// Exact-match VV correction for a target with the given base price and
// base-vol (vega, vanna, volga).
double vv_correction(const MarketSnapshot& mkt, const SmilePillars& pillars, double t_vega,
                     double t_vanna, double t_volga) {
    const auto quotes = build_pillars(mkt, pillars);
    Matrix A(3, 3);
    Vector rhs(3);
    for (int r = 0; r < 3; ++r) {
        const GreekBundle g = pillar_greeks(quotes[r], mkt);
        A(0, r) = g.vega;
        A(1, r) = g.vanna;
        A(2, r) = g.volga;
    }
    rhs << t_vega, t_vanna, t_volga;
    Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const double smin = svd.singularValues().minCoeff();
    const double smax = svd.singularValues().maxCoeff();
    if (smin <= 0.0 || smax / smin > defaults::kCondLimit)
        throw SingularError("vanna_volga_price: pillars do not span (singular vega/vanna/volga "
                            "system)");
    const Vector w = svd.solve(rhs);
    double corr = 0.0;
    for (int r = 0; r < 3; ++r)
        corr += w[r] * (pillar_price(quotes[r], mkt, quotes[r].market_vol) -
                        pillar_price(quotes[r], mkt, mkt.vol));
    return corr;
}

} // namespace

GreekBundle uic_greeks(const BarrierSpec& spec, const MarketSnapshot& mkt, const FdBumps& bumps) {
    auto price_at = [&](double s, double v) {
        return reiner_rubinstein_uic(spec, MarketSnapshot(s, v, mkt.r_dom, mkt.r_for,
                                                          mkt.vol_unit));
    };
    return fd_bundle(price_at, mkt, bumps);
}

double vanna_volga_price(const VanillaSpec& spec, const MarketSnapshot& mkt,
                         const SmilePillars& pillars) {
    const GreekBundle base = bs_greeks(spec, mkt);
    return base.price + vv_correction(mkt, pillars, base.vega, base.vanna, base.volga);
}

double vanna_volga_price(const BarrierSpec& spec, const MarketSnapshot& mkt,
                         const SmilePillars& pillars, const FdBumps& bumps) {
    const GreekBundle base = uic_greeks(spec, mkt, bumps);
    return base.price + vv_correction(mkt, pillars, base.vega, base.vanna, base.volga);
}

namespace {

template <typename PriceFn>
QuadraticForm vv_hessian_impl(const MarketSnapshot& mkt, const SmilePillars& pillars,
                              const FdBumps& bumps, PriceFn&& vv_price_at) {
    if (!(bumps.spot_rel > 0.0) || !(bumps.vol > 0.0))
        throw InvalidInputError("vv_target_hessian: bumps must be positive");
    // Pillar vols ride additively on the ATM coordinate so a flat smile stays
    // flat at every stencil node.
    const double off_atm = pillars.vol_atm - mkt.vol;
    const double off_c = pillars.vol_25c - mkt.vol;
    const double off_p = pillars.vol_25p - mkt.vol;
    auto price_at = [&](double s, double v) {
        MarketSnapshot m(s, v, mkt.r_dom, mkt.r_for, mkt.vol_unit);
        SmilePillars p(pillars.expiry, v + off_atm, v + off_c, v + off_p);
        return vv_price_at(m, p);
    };
    const GreekBundle fd = fd_bundle(price_at, mkt, bumps);
    Matrix h(2, 2);
    h << fd.gamma, fd.vanna, fd.vanna, fd.volga;
    if (!h.allFinite())
        throw NumericError("vv_target_hessian: non-finite finite differences "
                           "(discontinuity inside the bump stencil?)");
    return QuadraticForm(Chart::spot_vol(vol_unit_label(mkt.vol_unit)), h,
                         FormKind::hessian_target);
}

} // namespace

QuadraticForm vv_target_hessian(const VanillaSpec& spec, const MarketSnapshot& mkt,
                                const SmilePillars& pillars, const FdBumps& bumps) {
    return vv_hessian_impl(mkt, pillars, bumps,
                           [&](const MarketSnapshot& m, const SmilePillars& p) {
                               return vanna_volga_price(spec, m, p);
                           });
}

QuadraticForm vv_target_hessian(const BarrierSpec& spec, const MarketSnapshot& mkt,
                                const SmilePillars& pillars, const FdBumps& bumps) {
    return vv_hessian_impl(mkt, pillars, bumps,
                           [&](const MarketSnapshot& m, const SmilePillars& p) {
                               return vanna_volga_price(spec, m, p, bumps);
                           });
}

} // namespace covgreeks
