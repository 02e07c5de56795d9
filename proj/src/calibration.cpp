#include "covgreeks/calibration.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>

namespace covgreeks {

CalibrationInstrument::CalibrationInstrument(Gradient g, QuadraticForm baseline,
                                             QuadraticForm target, double w)
    : gradient(std::move(g)), baseline_hessian(std::move(baseline)),
      target_hessian(std::move(target)), weight(w) {
    require_same_chart(gradient.chart, baseline_hessian.chart(), "CalibrationInstrument",
                       "gradient", "baseline hessian");
    require_same_chart(gradient.chart, target_hessian.chart(), "CalibrationInstrument",
                       "gradient", "target hessian");
    if (!(weight >= 0.0) || !std::isfinite(weight))
        throw InvalidInputError("CalibrationInstrument: weight must be finite and >= 0");
}

std::pair<Matrix, Vector> build_calibration_system(
    const std::vector<CalibrationInstrument>& instruments, const IndexPair& ij) {
    if (instruments.empty())
        throw InvalidInputError("build_calibration_system: need at least one instrument");
    const Chart& chart = instruments.front().gradient.chart;
    const int d = chart.dim();
    const int i = ij.first, j = ij.second;
    if (i < 0 || j < 0 || i >= d || j >= d)
        throw InvalidInputError("build_calibration_system: component index out of range");
    const int m = static_cast<int>(instruments.size());
    Matrix design(m, d);
    Vector rhs(m);
    for (int r = 0; r < m; ++r) {
        require_same_chart(chart, instruments[r].gradient.chart, "build_calibration_system",
                           "first instrument", "instrument " + std::to_string(r));
        design.row(r) = instruments[r].gradient.values.transpose();
        rhs[r] = instruments[r].baseline_hessian.matrix()(i, j) -
                 instruments[r].target_hessian.matrix()(i, j);
    }
    return {std::move(design), std::move(rhs)};
}

std::pair<double, double> solve_two_instrument(const Matrix& design, const Vector& rhs,
                                               double tol) {
    if (design.rows() != 2 || design.cols() != 2 || rhs.size() != 2)
        throw DimensionError("solve_two_instrument: expects a 2x2 design and 2-vector rhs");
    const double det = design(0, 0) * design(1, 1) - design(1, 0) * design(0, 1);
    const double scale = design.cwiseAbs().maxCoeff();
    if (std::abs(det) <= tol * std::max(scale * scale, 1e-300))
        throw SingularError("solve_two_instrument: calibration gradients are collinear "
                            "(determinant " +
                            std::to_string(det) + ")");
    const double c_s = (rhs[0] * design(1, 1) - rhs[1] * design(0, 1)) / det;
    const double c_v = (design(0, 0) * rhs[1] - design(1, 0) * rhs[0]) / det;
    return {c_s, c_v};
}

RidgeSolution solve_ridge(const Matrix& design, const Vector& rhs,
                          const std::vector<double>& weights, double eta, double svd_tol) {
    const int m = static_cast<int>(design.rows());
    const int d = static_cast<int>(design.cols());
    if (rhs.size() != m)
        throw DimensionError("solve_ridge: rhs length does not match design rows");
    if (eta < 0.0)
        throw InvalidInputError("solve_ridge: eta must be >= 0");
    Vector w = Vector::Ones(m);
    if (!weights.empty()) {
        if (static_cast<int>(weights.size()) != m)
            throw DimensionError("solve_ridge: weight count does not match design rows");
        for (int r = 0; r < m; ++r) {
            if (weights[r] < 0.0)
                throw InvalidInputError("solve_ridge: weights must be >= 0");
            w[r] = weights[r];
        }
    }
    if (w.maxCoeff() <= 0.0)
        throw InvalidInputError("solve_ridge: all weights are zero");

    // ||a||_W^2 = a' W a, so rows are scaled by sqrt(W).
    const Vector sw = w.cwiseSqrt();
    const Matrix gw = sw.asDiagonal() * design;
    const Vector bw = sw.cwiseProduct(rhs);

    Eigen::JacobiSVD<Matrix> svd(gw, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double smax = svd.singularValues().size() ? svd.singularValues().maxCoeff() : 0.0;

    RidgeSolution out;
    if (eta > 0.0) {
        const Matrix normal = design.transpose() * w.asDiagonal() * design +
                              eta * Matrix::Identity(d, d);
        out.u = normal.ldlt().solve(design.transpose() * w.cwiseProduct(rhs).matrix());
    } else {
        // Minimum-norm least squares via thresholded SVD pseudoinverse.
        Vector coeff = svd.matrixU().transpose() * bw;
        for (int k = 0; k < svd.singularValues().size(); ++k) {
            const double s = svd.singularValues()[k];
            coeff[k] = (s > svd_tol * smax) ? coeff[k] / s : 0.0;
        }
        out.u = svd.matrixV() * coeff;
    }
    out.rho = (sw.cwiseProduct(design * out.u - rhs)).norm();

    // rho_min: residual of the unregularized least-squares problem.
    Vector coeff = svd.matrixU().transpose() * bw;
    Vector fitted = Vector::Zero(m);
    for (int k = 0; k < svd.singularValues().size(); ++k) {
        const double s = svd.singularValues()[k];
        if (s > svd_tol * smax)
            fitted += coeff[k] * svd.matrixU().col(k);
    }
    out.rho_min = (bw - fitted).norm();
    return out;
}

CalibrationResult calibrate_connection(const std::vector<CalibrationInstrument>& instruments,
                                       const CalibrationOptions& options) {
    if (instruments.empty())
        throw InvalidInputError("calibrate_connection: need at least one instrument");
    const Chart chart = instruments.front().gradient.chart;
    const int d = chart.dim();

    std::vector<IndexPair> pairs = options.pairs;
    if (pairs.empty())
        for (int i = 0; i < d; ++i)
            for (int j = i; j < d; ++j)
                pairs.emplace_back(i, j);

    std::vector<double> weights = options.weights;
    if (weights.empty())
        for (const auto& inst : instruments)
            weights.push_back(inst.weight);

    // All components share the same design matrix, so it is built once.
    Matrix design = build_calibration_system(instruments, pairs.front()).first;
    const int m = static_cast<int>(instruments.size());
    auto rhs_for = [&](const IndexPair& ij) {
        Vector b(m);
        for (int r = 0; r < m; ++r)
            b[r] = instruments[r].baseline_hessian.matrix()(ij.first, ij.second) -
                   instruments[r].target_hessian.matrix()(ij.first, ij.second);
        return b;
    };

    std::vector<Matrix> coeffs(d, Matrix::Zero(d, d));
    CalibrationResult result{Connection::zero(chart), pairs, {}, {}, 0.0};
    for (const auto& ij : pairs) {
        const Vector b = rhs_for(ij);
        RidgeSolution sol = solve_ridge(design, b, weights, options.eta, options.svd_tol);
        result.rho.push_back(sol.rho);
        result.rho_min.push_back(sol.rho_min);
        for (int k = 0; k < d; ++k) {
            coeffs[k](ij.first, ij.second) = sol.u[k];
            coeffs[k](ij.second, ij.first) = sol.u[k];
        }
    }
    {
        Vector w = Vector::Ones(instruments.size());
        for (size_t r = 0; r < weights.size(); ++r)
            w[r] = weights[r];
        Matrix normal = design.transpose() * w.asDiagonal() * design +
                        options.eta * Matrix::Identity(d, d);
        Eigen::SelfAdjointEigenSolver<Matrix> es(normal, Eigen::EigenvaluesOnly);
        const double lmin = es.eigenvalues().minCoeff();
        const double lmax = es.eigenvalues().maxCoeff();
        result.normal_matrix_condition = lmin > 0.0 ? lmax / lmin : INFINITY;
    }
    result.connection = Connection(chart, std::move(coeffs));
    return result;
}

EmpiricalFit fit_empirical_target(const std::vector<TangentMove>& moves,
                                  const std::vector<double>& residuals, double cond_limit) {
    if (moves.size() != residuals.size())
        throw DimensionError("fit_empirical_target: moves and residuals differ in length");
    if (moves.empty())
        throw InvalidInputError("fit_empirical_target: empty sample");
    const Chart chart = moves.front().chart;
    const int d = chart.dim();
    const int n_quad = d * (d + 1) / 2;
    const int n = static_cast<int>(moves.size());
    if (n < n_quad + 1)
        throw InvalidInputError("fit_empirical_target: need at least " +
                                std::to_string(n_quad + 1) + " samples for dimension " +
                                std::to_string(d));

    // Columns: 1/2 dx_i^2 for the diagonal, dx_i dx_j for i < j, then the
    // intercept nuisance.
    Matrix design(n, n_quad + 1);
    Vector rhs(n);
    for (int r = 0; r < n; ++r) {
        require_same_chart(chart, moves[r].chart, "fit_empirical_target", "first move",
                           "move " + std::to_string(r));
        const Vector& dx = moves[r].delta;
        int c = 0;
        for (int i = 0; i < d; ++i)
            for (int j = i; j < d; ++j)
                design(r, c++) = (i == j) ? 0.5 * dx[i] * dx[i] : dx[i] * dx[j];
        design(r, n_quad) = 1.0;
        rhs[r] = residuals[r];
    }

    Eigen::JacobiSVD<Matrix> svd(design, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double smax = svd.singularValues().maxCoeff();
    const double smin = svd.singularValues().minCoeff();
    const double cond = smin > 0.0 ? smax / smin : INFINITY;
    if (!(cond < cond_limit))
        throw ConditioningError("fit_empirical_target: quadratic design is rank deficient "
                                "(condition " +
                                std::to_string(cond) + "); vary the sample moves");
    const Vector theta = svd.solve(rhs);

    Matrix h = Matrix::Zero(d, d);
    int c = 0;
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) {
            h(i, j) = theta[c];
            h(j, i) = theta[c];
            ++c;
        }
    return EmpiricalFit{QuadraticForm(chart, std::move(h), FormKind::hessian_target),
                        theta[n_quad], cond};
}

} // namespace covgreeks
