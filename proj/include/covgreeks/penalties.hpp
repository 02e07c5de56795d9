#pragma once
#include <vector>

#include "covgreeks/liquidity.hpp"

namespace covgreeks {

/// One stress direction with weight; when `normalize` is set the covector is
/// normalized in the g0-norm of the stress move before entering g_gap.
struct StressMove {
    TangentMove direction;
    double weight = 1.0;
    bool normalize = false;

    StressMove(TangentMove d, double w = 1.0, bool norm = false);
};

/// Jacobian of controlled quantities (xVA sensitivities, margin drivers,
/// hedge prices) with a PSD weight matrix.
struct SensitivityBlock {
    Matrix j_y; // p x d
    Matrix w_y; // p x p, PSD

    SensitivityBlock(Matrix j, Matrix w);
};

/// Inverse-covariance (Mahalanobis) penalty with shrinkage toward the scaled
/// identity and an eigenvalue floor.
FactorPenalty covariance_penalty(const QuadraticForm& covariance, double shrinkage = 0.0,
                                 double eigen_floor = 0.0);

/// g_gap = sum_s w_s l^(s) l^(s)' with l^(s) = g0 dx^(s).
FactorPenalty gap_penalty(const std::vector<StressMove>& stresses, const FactorPenalty& g0);

/// g = J_Y' W_Y J_Y.
FactorPenalty sensitivity_penalty(const SensitivityBlock& block, const Chart& chart);

/// g_eff = sum_a eta_a g_a, eta_a >= 0.
FactorPenalty combine_penalties(const std::vector<std::pair<double, FactorPenalty>>& terms);

/// Ratio (dx' g_num dx) / (dx' g_den dx) on a reference move; reported to help
/// a user choose unit-conversion weights, never applied automatically.
double penalty_match_ratio(const FactorPenalty& numerator, const FactorPenalty& denominator,
                           const TangentMove& reference);

} // namespace covgreeks
