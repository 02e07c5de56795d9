#pragma once
#include <utility>
#include <vector>

#include "covgreeks/geometry.hpp"

namespace covgreeks {

/// One calibration instrument: baseline gradient and Hessian plus the target
/// quadratic form it should reproduce, with a nonnegative weight.
struct CalibrationInstrument {
    Gradient gradient;
    QuadraticForm baseline_hessian;
    QuadraticForm target_hessian;
    double weight = 1.0;

    CalibrationInstrument(Gradient g, QuadraticForm baseline, QuadraticForm target,
                          double w = 1.0);
};

using IndexPair = std::pair<int, int>; // unordered (i, j), stored i <= j

struct RidgeSolution {
    Vector u;
    double rho;     // ||G u - b||_W at the returned u
    double rho_min; // minimal achievable residual (eta = 0)
};

struct CalibrationOptions {
    double eta = 0.0;              // ridge weight; 0 engages minimum-norm least squares
    std::vector<double> weights;   // per-instrument W; empty = all ones
    std::vector<IndexPair> pairs;  // (i, j) components to fit; empty = all i <= j
    double svd_tol = defaults::kSvdTol;
};

struct CalibrationResult {
    Connection connection;
    // Diagnostics per fitted pair, aligned with `pairs`.
    std::vector<IndexPair> pairs;
    std::vector<double> rho;
    std::vector<double> rho_min;
    double normal_matrix_condition = 0.0; // cond of G' W G + eta I
};

/// Design matrix (rows of gradients) and right-hand side b_r = V_ij,r - H*_ij,r
/// for one quadratic component.
std::pair<Matrix, Vector> build_calibration_system(
    const std::vector<CalibrationInstrument>& instruments, const IndexPair& ij);

/// Closed-form two-instrument, two-factor solve. G rows are (Delta_r, Vega_r).
std::pair<double, double> solve_two_instrument(const Matrix& design, const Vector& rhs,
                                               double tol = defaults::kSvdTol);

/// Weighted ridge least squares; eta = 0 gives the minimum-norm solution.
RidgeSolution solve_ridge(const Matrix& design, const Vector& rhs,
                          const std::vector<double>& weights = {}, double eta = 0.0,
                          double svd_tol = defaults::kSvdTol);

/// Fit C^k_ij for every requested component from the stacked instruments.
CalibrationResult calibrate_connection(const std::vector<CalibrationInstrument>& instruments,
                                       const CalibrationOptions& options = {});

struct EmpiricalFit {
    QuadraticForm target;
    double intercept;
    double condition;
};

/// Least-squares fit of 1/2 H_ij dx^i dx^j (plus an intercept nuisance) to
/// one-step P&L residuals.
EmpiricalFit fit_empirical_target(const std::vector<TangentMove>& moves,
                                  const std::vector<double>& residuals,
                                  double cond_limit = defaults::kCondLimit);

} // namespace covgreeks
