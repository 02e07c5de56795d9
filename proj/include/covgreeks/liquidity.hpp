#pragma once
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "covgreeks/geometry.hpp"

namespace covgreeks {

/// Smooth tiered impact profile: plateau coefficients joined by logistic
/// blends at the transition levels.
struct TierSpec {
    std::vector<double> plateaus;    // lambda^(j), J values, > 0
    std::vector<double> transitions; // c_j, J-1 values, strictly increasing
    std::vector<double> widths;      // omega_j > 0, J-1 values

    TierSpec(std::vector<double> plateaus_, std::vector<double> transitions_,
             std::vector<double> widths_);
};

enum class WidthKind { price, vol };

/// Quoted liquidity of one hedge instrument: a half-spread (price per unit,
/// or vol half-width plus the quote-vega conversion) and a representative
/// clip, with an optional tiered profile for size-dependent impact.
struct HedgeInstrumentSpec {
    std::string name;
    std::string unit = "notional";
    WidthKind width_kind = WidthKind::price;
    double half_width = 0.0;  // s^price per unit, or s^vol in vol units
    double quote_vega = 0.0;  // premium per unit per vol unit; used when width_kind == vol
    double clip = 0.0;        // Q_r > 0, trade units
    std::optional<TierSpec> tiers;

    void validate() const;
    /// Price half-spread per unit after the vol-width conversion.
    double price_half_spread() const;
};

/// Symmetric trade-cost matrix Lambda, premium per squared trade unit.
struct ImpactMatrix {
    Matrix lambda;
    std::vector<std::string> units;
    std::string bucket;

    ImpactMatrix(Matrix lam, std::vector<std::string> units_ = {}, std::string bucket_ = "");
    int size() const { return static_cast<int>(lambda.rows()); }
    bool positive_definite(double tol = defaults::kPdTol) const;

    /// Express trades in blocks of `unit_size` (e.g. 1e6 for MM units):
    /// lambda scales by unit_size^2 so quadratic costs are unchanged.
    ImpactMatrix rescaled_units(double unit_size) const;
};

/// Local hedge response delta-q = M delta-x, rows in trade units per
/// coordinate unit.
struct HedgeResponse {
    Matrix m; // m x d

    explicit HedgeResponse(Matrix m_);
    int instruments() const { return static_cast<int>(m.rows()); }
    int factors() const { return static_cast<int>(m.cols()); }
};

/// Controlled-exposure data for the least-cost rule: B delta-q = c restores
/// the exposures whose drift is J_E delta-x.
struct ExposureSpec {
    Matrix b;   // p x m, exposure per trade unit
    Matrix j_e; // p x d, exposure drift per factor

    ExposureSpec(Matrix b_, Matrix j_e_);
};

/// Factor-space execution-cost penalty g = M' Lambda M.
struct FactorPenalty {
    QuadraticForm form;
    std::string bucket;

    FactorPenalty(QuadraticForm f, std::string bucket_ = "");
    const Matrix& matrix() const { return form.matrix(); }
    const Chart& chart() const { return form.chart(); }
    int dim() const { return form.dim(); }
};

// --- width / clip calibration ------------------------------------------------

/// s^price per unit = s^vol * quote-vega per unit.
double half_spread_from_vol_width(double vol_half_width, double quote_vega_per_unit);

/// lambda = 2 s / Q for a per-unit half-spread.
double lambda_from_width_clip(double price_half_spread_per_unit, double clip);

/// lambda = 2 s_clip / Q^2 when the half-spread is quoted for the full clip.
double lambda_from_clip_width(double price_half_spread_per_clip, double clip);

/// Effective tiered coefficient lambda(|q|).
double tiered_lambda(double trade_size, const TierSpec& tiers);

/// 1/2 lambda(|q|) q^2.
double tiered_cost(double trade_size, const TierSpec& tiers);

/// Diagonal impact matrix from quoted widths and clips. Tiered instruments
/// are frozen at `tier_reference` times their tier-1 clip (default 1.0).
ImpactMatrix build_impact_matrix(const std::vector<HedgeInstrumentSpec>& instruments,
                                 const std::string& bucket = "", double tier_reference = 1.0);

// --- least-cost hedging -------------------------------------------------------

/// Minimum-cost trade restoring B dq = c (KKT closed form).
Vector least_cost_trade(const ImpactMatrix& lambda, const Matrix& b, const Vector& c,
                        double cond_limit = defaults::kCondLimit);

/// M = -Lambda^-1 B' (B Lambda^-1 B')^-1 J_E.
HedgeResponse build_hedge_response(const ImpactMatrix& lambda, const ExposureSpec& exposures,
                                   double cond_limit = defaults::kCondLimit);

/// g = M' Lambda M as a chart-bound penalty form.
FactorPenalty pullback_penalty(const HedgeResponse& response, const ImpactMatrix& lambda,
                               const Chart& chart, const std::string& bucket = "");

// --- penalty derivatives and the induced connection ---------------------------

/// Analytic d_i g = (d_i M)' Lambda M + M' (d_i Lambda) M + M' Lambda (d_i M).
std::vector<Matrix> g_ell_derivatives(const Matrix& m, const std::vector<Matrix>& dm,
                                      const Matrix& lambda, const std::vector<Matrix>& dlambda);

using PenaltyField = std::function<Matrix(const Vector&)>;

/// Central finite differences of a penalty field at x0.
std::vector<Matrix> g_ell_derivatives_fd(const PenaltyField& field, const Vector& x0,
                                         const Vector& steps);

/// Levi-Civita coefficients C^k_ij = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij).
Connection levi_civita(const FactorPenalty& g, const std::vector<Matrix>& dg,
                       double pd_tol = defaults::kPdTol);

/// Levi-Civita of a penalty field at a state, with FD derivatives.
Connection levi_civita_field(const PenaltyField& field, const StatePoint& x,
                             const Vector& fd_steps, double pd_tol = defaults::kPdTol);

// --- energies, triggers, schedules --------------------------------------------

/// 1/2 sum (x_{n+1} - x_n)' g(x_n) (x_{n+1} - x_n).
double execution_energy(const std::vector<StatePoint>& path, const PenaltyField& field);

struct CostSplit {
    std::vector<TangentMove> steps;
    double energy;
};

/// Prop-style equal split of a move under a frozen penalty: N equal steps,
/// energy (1/2N) ||dx||_g^2.
CostSplit equal_cost_split(const TangentMove& move, const FactorPenalty& g, int n_steps);

/// Fires when 1/2 (x - x_last)' g(x_last) (x - x_last) >= threshold.
bool rebalance_trigger(const StatePoint& x, const StatePoint& x_last, const FactorPenalty& g,
                       double threshold);

struct WhitenedMoves {
    Matrix r; // g = R' R, upper triangular
    std::vector<Vector> moves;
};

/// Whitened displacements u = R (x - x0) with ||u||^2 = (x - x0)' g (x - x0).
WhitenedMoves whiten_displacement(const FactorPenalty& g, const std::vector<TangentMove>& moves);

/// Fixed-step RK4 integration of the geodesic equation of the penalty field,
/// from x0 with initial velocity v0, over t in [0, 1].
std::vector<StatePoint> geodesic_integrate(const PenaltyField& field, const StatePoint& x0,
                                           const Vector& v0, int steps,
                                           const Vector& fd_steps = Vector());

/// g + eps * g0 with g0 a fixed SPD baseline.
FactorPenalty regularize_penalty(const FactorPenalty& g, double eps, const FactorPenalty& g0);

namespace detail {
/// Levi-Civita kernel on raw matrices (shared by grids and the geodesic
/// integrator).
std::vector<Matrix> levi_civita_raw(const Matrix& g, const std::vector<Matrix>& dg,
                                    double pd_tol);
} // namespace detail

} // namespace covgreeks
