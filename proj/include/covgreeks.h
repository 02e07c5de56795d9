/* C API for the covgreeks library: connection-adjusted option Greeks,
 * execution-cost penalties and hedging backtests.
 *
 * Conventions:
 *   - every function returns a cvg_status; CVG_OK (0) means success;
 *   - on failure, cvg_last_error() returns a thread-local message;
 *   - matrices are row-major double arrays; a connection of dimension d is
 *     d slices of d*d entries (slice k holds C^k_ij);
 *   - JSON-config entry points take UTF-8 strings and return newly allocated
 *     strings to be released with cvg_string_free().
 */
#ifndef COVGREEKS_H
#define COVGREEKS_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cvg_status {
    CVG_OK = 0,
    CVG_ERR_INVALID_ARGUMENT = 1,
    CVG_ERR_CHART_MISMATCH = 2,
    CVG_ERR_DIMENSION_MISMATCH = 3,
    CVG_ERR_SINGULAR = 4,
    CVG_ERR_NOT_POSITIVE_DEFINITE = 5,
    CVG_ERR_CONDITIONING = 6,
    CVG_ERR_NUMERIC = 7,
    CVG_ERR_IO = 8,
    CVG_ERR_PARSE = 9,
    CVG_ERR_UNKNOWN = 10
} cvg_status;

const char* cvg_version(void);
const char* cvg_status_name(cvg_status status);
/* Message of the last failure on this thread; empty string if none. */
const char* cvg_last_error(void);
void cvg_string_free(char* str);

/* ---- pricing ------------------------------------------------------------ */

typedef struct cvg_greeks {
    double price;
    double delta;
    double vega;
    double gamma;
    double vanna;
    double volga;
    int degenerate;
} cvg_greeks;

/* vol_in_points != 0: vol quoted in vol points (9.0 = 9%), vol sensitivities
 * per vol point; otherwise decimal. */
cvg_status cvg_bs_greeks(int is_call, double strike, double expiry, double spot, double vol,
                         double r_dom, double r_for, int vol_in_points, cvg_greeks* out);
cvg_status cvg_uic_price(double strike, double barrier, double expiry, double spot, double vol,
                         double r_dom, double r_for, int vol_in_points, double* out);
cvg_status cvg_uic_greeks(double strike, double barrier, double expiry, double spot, double vol,
                          double r_dom, double r_for, int vol_in_points, double bump_spot_rel,
                          double bump_vol, cvg_greeks* out);

/* Pillar vols quoted as (atm, 25d call, 25d put) in the same unit as vol. */
cvg_status cvg_vanna_volga_price(int is_call, double strike, double expiry, double spot,
                                 double vol, double r_dom, double r_for, int vol_in_points,
                                 double pillar_atm, double pillar_25c, double pillar_25p,
                                 double* out);
cvg_status cvg_vv_target_hessian(int is_call, double strike, double expiry, double spot,
                                 double vol, double r_dom, double r_for, int vol_in_points,
                                 double pillar_atm, double pillar_25c, double pillar_25p,
                                 double bump_spot_rel, double bump_vol, double out_h[4]);

/* ---- local geometry (dimension d, plain arrays) -------------------------- */

cvg_status cvg_covariant_hessian(int d, const double* hessian, const double* connection,
                                 const double* gradient, double* out);
cvg_status cvg_quadratic_predictor(int d, const double* gradient, const double* quad,
                                   const double* move, const double* penalty_or_null,
                                   double* out);
/* jacobian holds dx^i/dy^a (source w.r.t. target); second holds
 * d2 x^m/dy dy as d slices of d*d, may be NULL for a linear map. */
cvg_status cvg_transform_gradient(int d, const double* gradient, const double* jacobian,
                                  double* out);
cvg_status cvg_transform_quadratic(int d, const double* quad, const double* jacobian,
                                   double* out);
cvg_status cvg_transform_connection(int d, const double* connection, const double* jacobian,
                                    const double* second_or_null, double* out);

/* ---- calibration ---------------------------------------------------------- */

cvg_status cvg_solve_two_instrument(const double design[4], const double rhs[2],
                                    double out_coeffs[2]);
/* weights may be NULL (all ones). eta = 0 gives the minimum-norm solution. */
cvg_status cvg_solve_ridge(int m, int d, const double* design, const double* rhs,
                           const double* weights, double eta, double* out_u, double* out_rho,
                           double* out_rho_min);

/* ---- liquidity ------------------------------------------------------------- */

cvg_status cvg_half_spread_from_vol_width(double vol_half_width, double quote_vega_per_unit,
                                          double* out);
cvg_status cvg_lambda_from_width_clip(double price_half_spread_per_unit, double clip,
                                      double* out);
/* Tiered impact: n plateaus, n-1 transitions and smoothing widths. */
cvg_status cvg_tiered_lambda(double trade_size, int n_tiers, const double* plateaus,
                             const double* transitions, const double* widths, double* out);
cvg_status cvg_least_cost_trade(int m, int p, const double* lambda, const double* b,
                                const double* c, double* out_dq);
cvg_status cvg_hedge_response(int m, int p, int d, const double* lambda, const double* b,
                              const double* j_e, double* out_m);
cvg_status cvg_pullback_penalty(int m, int d, const double* response, const double* lambda,
                                double* out_g);
cvg_status cvg_levi_civita(int d, const double* g, const double* dg, double* out_connection);

/* ---- book ------------------------------------------------------------------- */

cvg_status cvg_portfolio_cost(int n_deals, int m, const double* weights, const double* trades,
                              const double* lambda, double* out_total, double* out_net);
cvg_status cvg_incremental_liquidity_charge(int m, const double* book_trade,
                                            const double* deal_trade, const double* lambda,
                                            double* out);
cvg_status cvg_wealth_step(int m, double wealth, const double* position, const double* prices,
                           const double* next_prices, const double* next_position,
                           const double* lambda, double* out);

/* ---- market series and JSON-config runs -------------------------------------- */

typedef struct cvg_series cvg_series;

cvg_status cvg_series_load(const char* path, const char* options_json_or_null,
                           cvg_series** out);
cvg_status cvg_series_synthesize(const char* config_json, cvg_series** out);
int cvg_series_length(const cvg_series* series);
cvg_status cvg_series_save(const cvg_series* series, const char* path);
void cvg_series_free(cvg_series* series);

/* Config grammars are documented in the README. out_json receives a newly
 * allocated summary string (cvg_string_free). out_dir may be NULL or empty to
 * skip file output where supported. */
cvg_status cvg_run_greeks(const char* config_json, char** out_json);
cvg_status cvg_run_calibrate(const char* config_json, char** out_json);
cvg_status cvg_run_adjusted_greeks(const char* config_json, char** out_json);
cvg_status cvg_run_liquidity(const char* config_json, char** out_json);
cvg_status cvg_run_transform(const char* config_json, char** out_json);
cvg_status cvg_run_backtest_pnl(const cvg_series* series, const char* config_json,
                                const char* out_dir, char** out_json);
cvg_status cvg_run_backtest_cost(const cvg_series* series, const char* config_json,
                                 const char* out_dir, char** out_json);
cvg_status cvg_run_reconstruct_metric(const char* config_json, const char* out_dir,
                                      char** out_json);

#ifdef __cplusplus
}
#endif

#endif /* COVGREEKS_H */
