#include "covgreeks/penalties.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace covgreeks {

StressMove::StressMove(TangentMove d, double w, bool norm)
    : direction(std::move(d)), weight(w), normalize(norm) {
    if (!std::isfinite(weight) || weight < 0.0)
        throw InvalidInputError("StressMove: weight must be finite and >= 0");
}

SensitivityBlock::SensitivityBlock(Matrix j, Matrix w) : j_y(std::move(j)), w_y(std::move(w)) {
    if (w_y.rows() != w_y.cols() || w_y.rows() != j_y.rows())
        throw DimensionError("SensitivityBlock: W_Y must be square with one row per "
                             "controlled quantity");
    Eigen::SelfAdjointEigenSolver<Matrix> es(w_y, Eigen::EigenvaluesOnly);
    const double norm = es.eigenvalues().cwiseAbs().maxCoeff();
    if (es.eigenvalues().minCoeff() < -defaults::kPsdTol * std::max(norm, 1.0))
        throw NotPositiveDefiniteError("SensitivityBlock: W_Y must be positive semidefinite");
}

FactorPenalty covariance_penalty(const QuadraticForm& covariance, double shrinkage,
                                 double eigen_floor) {
    if (shrinkage < 0.0 || shrinkage > 1.0)
        throw InvalidInputError("covariance_penalty: shrinkage must lie in [0, 1]");
    if (eigen_floor < 0.0)
        throw InvalidInputError("covariance_penalty: eigen floor must be >= 0");
    const int d = covariance.dim();
    const Matrix& xi = covariance.matrix();
    Matrix shrunk = (1.0 - shrinkage) * xi +
                    shrinkage * (xi.trace() / d) * Matrix::Identity(d, d);

    Eigen::SelfAdjointEigenSolver<Matrix> es(shrunk);
    Vector evals = es.eigenvalues();
    const double lmax = evals.maxCoeff();
    const double floor = eigen_floor * lmax;
    if (!(floor > 0.0)) {
        const double tol = defaults::kPsdTol * std::max(std::abs(lmax), 1.0);
        if (evals.minCoeff() < -tol)
            throw NotPositiveDefiniteError("covariance_penalty: covariance has a negative "
                                           "eigenvalue; use shrinkage or an eigen floor");
        if (evals.minCoeff() <= 0.0)
            throw SingularError("covariance_penalty: covariance is singular; use a positive "
                                "eigen floor");
    }
    Vector inv(d);
    for (int i = 0; i < d; ++i)
        inv[i] = 1.0 / std::max(evals[i], floor);
    Matrix g = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
    return FactorPenalty(QuadraticForm(covariance.chart(), std::move(g), FormKind::penalty));
}

FactorPenalty gap_penalty(const std::vector<StressMove>& stresses, const FactorPenalty& g0) {
    const Matrix& g0m = g0.matrix();
    {
        Eigen::SelfAdjointEigenSolver<Matrix> es(g0m, Eigen::EigenvaluesOnly);
        if (!(es.eigenvalues().minCoeff() >
              defaults::kPdTol * std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 0.0)))
            throw NotPositiveDefiniteError("gap_penalty: reference metric must be positive "
                                           "definite");
    }
    const int d = g0.dim();
    Matrix g = Matrix::Zero(d, d);
    for (const auto& stress : stresses) {
        require_same_chart(stress.direction.chart, g0.chart(), "gap_penalty", "stress",
                           "reference metric");
        Vector l = g0m * stress.direction.delta;
        if (stress.normalize) {
            const double norm2 = stress.direction.delta.dot(l);
            if (!(norm2 > 0.0))
                throw InvalidInputError("gap_penalty: cannot normalize a zero stress move");
            l /= std::sqrt(norm2);
        }
        g += stress.weight * l * l.transpose();
    }
    return FactorPenalty(QuadraticForm(g0.chart(), std::move(g), FormKind::penalty));
}

FactorPenalty sensitivity_penalty(const SensitivityBlock& block, const Chart& chart) {
    if (block.j_y.cols() != chart.dim())
        throw DimensionError("sensitivity_penalty: J_Y columns must match the chart dimension");
    Matrix g = block.j_y.transpose() * block.w_y * block.j_y;
    return FactorPenalty(QuadraticForm(chart, 0.5 * (g + g.transpose()), FormKind::penalty));
}

FactorPenalty combine_penalties(const std::vector<std::pair<double, FactorPenalty>>& terms) {
    if (terms.empty())
        throw InvalidInputError("combine_penalties: no terms");
    const Chart chart = terms.front().second.chart();
    const int d = chart.dim();
    Matrix g = Matrix::Zero(d, d);
    for (const auto& [eta, term] : terms) {
        if (eta < 0.0)
            throw InvalidInputError("combine_penalties: weights must be >= 0");
        require_same_chart(chart, term.chart(), "combine_penalties", "first term", "term");
        g += eta * term.matrix();
    }
    return FactorPenalty(QuadraticForm(chart, std::move(g), FormKind::penalty),
                         terms.front().second.bucket);
}

double penalty_match_ratio(const FactorPenalty& numerator, const FactorPenalty& denominator,
                           const TangentMove& reference) {
    require_same_chart(numerator.chart(), denominator.chart(), "penalty_match_ratio",
                       "numerator", "denominator");
    require_same_chart(numerator.chart(), reference.chart, "penalty_match_ratio", "numerator",
                       "reference move");
    const double den = reference.delta.dot(denominator.matrix() * reference.delta);
    if (!(den > 0.0))
        throw InvalidInputError("penalty_match_ratio: reference move has zero denominator "
                                "penalty");
    return reference.delta.dot(numerator.matrix() * reference.delta) / den;
}

} // namespace covgreeks
