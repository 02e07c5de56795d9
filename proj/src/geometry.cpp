#include "covgreeks/geometry.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <set>
#include <sstream>

namespace covgreeks {

namespace {

double max_abs(const Matrix& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

// Enforce exact symmetry; reject if the relative asymmetry is too large.
Matrix symmetrize_checked(Matrix m, double tol, const std::string& what) {
    if (m.rows() != m.cols())
        throw DimensionError(what + ": matrix is " + std::to_string(m.rows()) + "x" +
                             std::to_string(m.cols()) + ", expected square");
    const double scale = max_abs(m);
    const double asym = max_abs(m - m.transpose());
    if (scale > 0.0 && asym > tol * scale)
        throw InvalidInputError(what + ": relative asymmetry " + std::to_string(asym / scale) +
                                " exceeds tolerance " + std::to_string(tol));
    for (int i = 0; i < m.rows(); ++i)
        for (int j = i + 1; j < m.cols(); ++j) {
            const double v = 0.5 * (m(i, j) + m(j, i));
            m(i, j) = v;
            m(j, i) = v;
        }
    return m;
}

} // namespace

Chart::Chart(std::string id, std::vector<std::string> coords, std::vector<std::string> units,
             int tradable)
    : id_(std::move(id)), coords_(std::move(coords)), units_(std::move(units)),
      tradable_(tradable) {
    if (coords_.empty())
        throw InvalidInputError("Chart '" + id_ + "': dimension must be >= 1");
    if (units_.empty())
        units_.assign(coords_.size(), "");
    if (units_.size() != coords_.size())
        throw InvalidInputError("Chart '" + id_ + "': units/coords length mismatch");
    std::set<std::string> seen(coords_.begin(), coords_.end());
    if (seen.size() != coords_.size())
        throw InvalidInputError("Chart '" + id_ + "': coordinate labels must be unique");
    if (tradable_ >= dim())
        throw InvalidInputError("Chart '" + id_ + "': tradable index out of range");
}

bool Chart::same(const Chart& other) const {
    return id_ == other.id_ && coords_ == other.coords_;
}

Chart Chart::spot_vol(const std::string& vol_unit) {
    return Chart("spot_vol", {"S", "sigma"}, {"price", vol_unit}, 0);
}
Chart Chart::forward_vol(const std::string& vol_unit) {
    return Chart("forward_vol", {"F", "sigma"}, {"price", vol_unit}, 0);
}
Chart Chart::log_forward_vol(const std::string& vol_unit) {
    return Chart("log_forward_vol", {"z", "sigma"}, {"log_price", vol_unit}, -1);
}
Chart Chart::smile_state(const std::string& vol_unit) {
    return Chart("smile_state", {"S", "sigma", "RR", "BF"},
                 {"price", vol_unit, vol_unit, vol_unit}, 0);
}

void require_same_chart(const Chart& a, const Chart& b, const std::string& op,
                        const std::string& what_a, const std::string& what_b) {
    if (!a.same(b))
        throw ChartMismatchError(op + ": " + what_a + " is on chart '" + a.id() + "' but " +
                                 what_b + " is on chart '" + b.id() + "'");
}

StatePoint::StatePoint(Chart c, Vector v) : chart(std::move(c)), values(std::move(v)) {
    if (values.size() != chart.dim())
        throw DimensionError("StatePoint: " + std::to_string(values.size()) +
                             " values for chart '" + chart.id() + "' of dimension " +
                             std::to_string(chart.dim()));
    for (int i = 0; i < chart.dim(); ++i) {
        if (!std::isfinite(values[i]))
            throw InvalidInputError("StatePoint: non-finite coordinate " + chart.coord(i));
        if (chart.requires_positive(i) && values[i] <= 0.0)
            throw InvalidInputError("StatePoint: coordinate " + chart.coord(i) +
                                    " must be strictly positive");
    }
}

TangentMove::TangentMove(Chart c, Vector d) : chart(std::move(c)), delta(std::move(d)) {
    if (delta.size() != chart.dim())
        throw DimensionError("TangentMove: " + std::to_string(delta.size()) +
                             " components for chart '" + chart.id() + "' of dimension " +
                             std::to_string(chart.dim()));
}

Gradient::Gradient(Chart c, Vector v) : chart(std::move(c)), values(std::move(v)) {
    if (values.size() != chart.dim())
        throw DimensionError("Gradient: " + std::to_string(values.size()) +
                             " entries for chart '" + chart.id() + "' of dimension " +
                             std::to_string(chart.dim()));
    if (!values.allFinite())
        throw InvalidInputError("Gradient: entries must be finite");
}

QuadraticForm::QuadraticForm(Chart chart, Matrix m, FormKind kind, double symmetry_tol,
                             double psd_tol)
    : chart_(std::move(chart)), matrix_(symmetrize_checked(std::move(m), symmetry_tol,
                                                           "QuadraticForm")),
      kind_(kind) {
    if (matrix_.rows() != chart_.dim())
        throw DimensionError("QuadraticForm: matrix dimension " + std::to_string(matrix_.rows()) +
                             " does not match chart '" + chart_.id() + "' dimension " +
                             std::to_string(chart_.dim()));
    if (!matrix_.allFinite())
        throw InvalidInputError("QuadraticForm: entries must be finite");
    if (kind_ == FormKind::penalty) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(matrix_, Eigen::EigenvaluesOnly);
        const double norm = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 0.0);
        if (es.eigenvalues().minCoeff() < -psd_tol * norm)
            throw NotPositiveDefiniteError(
                "QuadraticForm: penalty form has eigenvalue " +
                std::to_string(es.eigenvalues().minCoeff()) + ", not positive semidefinite");
    }
}

double QuadraticForm::operator()(const Vector& dx) const {
    if (dx.size() != matrix_.rows())
        throw DimensionError("QuadraticForm: displacement dimension mismatch");
    return dx.dot(matrix_ * dx);
}

QuadraticForm QuadraticForm::zero(const Chart& chart, FormKind kind) {
    return QuadraticForm(chart, Matrix::Zero(chart.dim(), chart.dim()), kind);
}

Connection::Connection(Chart chart, std::vector<Matrix> coeffs, double symmetry_tol)
    : chart_(std::move(chart)), coeffs_(std::move(coeffs)) {
    if (static_cast<int>(coeffs_.size()) != chart_.dim())
        throw DimensionError("Connection: " + std::to_string(coeffs_.size()) +
                             " coefficient slices for chart '" + chart_.id() +
                             "' of dimension " + std::to_string(chart_.dim()));
    for (auto& slice : coeffs_)
        slice = symmetrize_checked(std::move(slice), symmetry_tol, "Connection");
    for (const auto& slice : coeffs_)
        if (slice.rows() != chart_.dim())
            throw DimensionError("Connection: slice dimension mismatch");
}

double Connection::max_abs() const {
    double m = 0.0;
    for (const auto& slice : coeffs_)
        m = std::max(m, slice.size() ? slice.cwiseAbs().maxCoeff() : 0.0);
    return m;
}

Connection Connection::zero(const Chart& chart) {
    return Connection(chart, std::vector<Matrix>(chart.dim(),
                                                 Matrix::Zero(chart.dim(), chart.dim())));
}

ChartMapAtPoint::ChartMapAtPoint(Chart source, Chart target, Matrix jacobian,
                                 std::vector<Matrix> second, double cond_limit)
    : source_(std::move(source)), target_(std::move(target)), jacobian_(std::move(jacobian)),
      second_(std::move(second)) {
    const int d = source_.dim();
    if (target_.dim() != d)
        throw DimensionError("ChartMapAtPoint: source and target dimension differ");
    if (jacobian_.rows() != d || jacobian_.cols() != d)
        throw DimensionError("ChartMapAtPoint: jacobian must be " + std::to_string(d) + "x" +
                             std::to_string(d));
    if (second_.empty())
        second_.assign(d, Matrix::Zero(d, d));
    if (static_cast<int>(second_.size()) != d)
        throw DimensionError("ChartMapAtPoint: need one second-derivative slice per coordinate");
    for (auto& slice : second_)
        slice = symmetrize_checked(std::move(slice), defaults::kSymmetryTol,
                                   "ChartMapAtPoint second derivatives");

    Eigen::JacobiSVD<Matrix> svd(jacobian_);
    const double smin = svd.singularValues().minCoeff();
    const double smax = svd.singularValues().maxCoeff();
    if (smin <= 0.0 || smax / smin > cond_limit)
        throw SingularError("ChartMapAtPoint: jacobian is singular or badly conditioned "
                            "(condition " +
                            std::to_string(smin > 0 ? smax / smin : INFINITY) + ")");
    inv_jac_ = jacobian_.inverse();
}

ChartMapAtPoint ChartMapAtPoint::inverse() const {
    const int d = source_.dim();
    // d2y^a/dx^i dx^j = -K_am S^m_bg J^b_i... assembled from the forward data:
    // differentiate y(x(y)) = y twice.
    std::vector<Matrix> second_inv(d, Matrix::Zero(d, d));
    for (int a = 0; a < d; ++a) {
        Matrix s = Matrix::Zero(d, d);
        for (int m = 0; m < d; ++m)
            s += inv_jac_(a, m) * second_[m];
        // s is in target (y) indices; pull both lower indices back to x.
        second_inv[a] = -(inv_jac_.transpose() * s * inv_jac_);
    }
    return ChartMapAtPoint(target_, source_, inv_jac_, std::move(second_inv));
}

ChartMapAtPoint ChartMapAtPoint::then(const ChartMapAtPoint& next) const {
    if (!target_.same(next.source_))
        throw ChartMismatchError("ChartMapAtPoint::then: this map targets '" + target_.id() +
                                 "' but next starts at '" + next.source_.id() + "'");
    const int d = source_.dim();
    // x(y(w)): dx/dw = (dx/dy)(dy/dw); the second derivative chains both terms.
    Matrix jac = jacobian_ * next.jacobian_;
    std::vector<Matrix> second_comp(d, Matrix::Zero(d, d));
    for (int m = 0; m < d; ++m) {
        Matrix s = next.jacobian_.transpose() * second_[m] * next.jacobian_;
        for (int i = 0; i < d; ++i)
            s += jacobian_(m, i) * next.second_[i];
        second_comp[m] = s;
    }
    return ChartMapAtPoint(source_, next.target_, std::move(jac), std::move(second_comp));
}

ChartMapAtPoint ChartMapAtPoint::identity(const Chart& chart) {
    const int d = chart.dim();
    return ChartMapAtPoint(chart, chart, Matrix::Identity(d, d), {});
}

ChartMapAtPoint ChartMapAtPoint::spot_to_forward(double carry, const std::string& vol_unit) {
    if (!(carry > 0.0) || !std::isfinite(carry))
        throw InvalidInputError("spot_to_forward: carry factor must be positive and finite");
    Matrix jac = Matrix::Identity(2, 2);
    jac(0, 0) = 1.0 / carry; // dS/dF with F = S * carry
    return ChartMapAtPoint(Chart::spot_vol(vol_unit), Chart::forward_vol(vol_unit), jac, {});
}

ChartMapAtPoint ChartMapAtPoint::forward_to_log_forward(double forward,
                                                        const std::string& vol_unit) {
    if (!(forward > 0.0) || !std::isfinite(forward))
        throw InvalidInputError("forward_to_log_forward: forward must be positive");
    Matrix jac = Matrix::Identity(2, 2);
    jac(0, 0) = forward; // dF/dz = F
    std::vector<Matrix> second(2, Matrix::Zero(2, 2));
    second[0](0, 0) = forward; // d2F/dz2 = F
    return ChartMapAtPoint(Chart::forward_vol(vol_unit), Chart::log_forward_vol(vol_unit),
                           jac, std::move(second));
}

// --- operations ------------------------------------------------------------

QuadraticForm covariant_hessian(const QuadraticForm& hess, const Connection& conn,
                                const Gradient& grad) {
    require_same_chart(hess.chart(), conn.chart(), "covariant_hessian", "hessian", "connection");
    require_same_chart(hess.chart(), grad.chart, "covariant_hessian", "hessian", "gradient");
    const int d = hess.dim();
    Matrix adjusted = hess.matrix();
    for (int k = 0; k < d; ++k)
        adjusted -= grad.values[k] * conn.lower(k);
    return QuadraticForm(hess.chart(), std::move(adjusted), FormKind::hessian_target);
}

double quadratic_predictor(const Gradient& grad, const QuadraticForm& quad,
                           const TangentMove& move,
                           const std::optional<QuadraticForm>& penalty) {
    require_same_chart(grad.chart, quad.chart(), "quadratic_predictor", "gradient", "form");
    require_same_chart(grad.chart, move.chart, "quadratic_predictor", "gradient", "move");
    double p = grad.values.dot(move.delta) + 0.5 * quad(move.delta);
    if (penalty) {
        require_same_chart(grad.chart, penalty->chart(), "quadratic_predictor", "gradient",
                           "penalty");
        if (penalty->kind() != FormKind::penalty)
            throw InvalidInputError("quadratic_predictor: penalty form must have kind=penalty");
        p -= 0.5 * (*penalty)(move.delta);
    }
    return p;
}

Gradient transform_gradient(const Gradient& grad, const ChartMapAtPoint& map) {
    require_same_chart(grad.chart, map.source(), "transform_gradient", "gradient", "map source");
    return Gradient(map.target(), map.jacobian().transpose() * grad.values);
}

TangentMove transform_move(const TangentMove& move, const ChartMapAtPoint& map) {
    require_same_chart(move.chart, map.source(), "transform_move", "move", "map source");
    return TangentMove(map.target(), map.inverse_jacobian() * move.delta);
}

QuadraticForm transform_quadratic_form(const QuadraticForm& q, const ChartMapAtPoint& map) {
    require_same_chart(q.chart(), map.source(), "transform_quadratic_form", "form",
                       "map source");
    return QuadraticForm(map.target(), map.jacobian().transpose() * q.matrix() * map.jacobian(),
                         q.kind());
}

Connection transform_connection(const Connection& conn, const ChartMapAtPoint& map) {
    require_same_chart(conn.chart(), map.source(), "transform_connection", "connection",
                       "map source");
    const int d = conn.dim();
    const Matrix& jac = map.jacobian();      // dx/dy
    const Matrix& inv = map.inverse_jacobian(); // dy/dx
    std::vector<Matrix> out(d, Matrix::Zero(d, d));
    for (int a = 0; a < d; ++a) {
        Matrix s = Matrix::Zero(d, d);
        for (int m = 0; m < d; ++m)
            s += inv(a, m) * (jac.transpose() * conn.lower(m) * jac + map.second()[m]);
        out[a] = s;
    }
    return Connection(map.target(), std::move(out));
}

QuadraticForm transform_ordinary_hessian(const QuadraticForm& hess, const Gradient& grad,
                                         const ChartMapAtPoint& map) {
    require_same_chart(hess.chart(), map.source(), "transform_ordinary_hessian", "hessian",
                       "map source");
    require_same_chart(grad.chart, map.source(), "transform_ordinary_hessian", "gradient",
                       "map source");
    Matrix out = map.jacobian().transpose() * hess.matrix() * map.jacobian();
    for (int k = 0; k < hess.dim(); ++k)
        out += grad.values[k] * map.second()[k];
    return QuadraticForm(map.target(), std::move(out), hess.kind());
}

double predictor_invariance_residual(const Gradient& grad, const QuadraticForm& hess,
                                     const Connection& conn, const TangentMove& move,
                                     const ChartMapAtPoint& map) {
    const QuadraticForm adjusted = covariant_hessian(hess, conn, grad);
    const double p_src = quadratic_predictor(grad, adjusted, move);

    const Gradient grad_t = transform_gradient(grad, map);
    const QuadraticForm adjusted_t = transform_quadratic_form(adjusted, map);
    const TangentMove move_t = transform_move(move, map);
    const double p_tgt = quadratic_predictor(grad_t, adjusted_t, move_t);
    return std::abs(p_src - p_tgt);
}

DriftAdjustment generator_drift_adjustment(const Gradient& drift, const QuadraticForm& covariance,
                                           const Connection& conn,
                                           const std::optional<StatePoint>& state, double r_dom,
                                           double r_for) {
    require_same_chart(drift.chart, covariance.chart(), "generator_drift_adjustment", "drift",
                       "covariance");
    require_same_chart(drift.chart, conn.chart(), "generator_drift_adjustment", "drift",
                       "connection");
    const int d = drift.chart.dim();
    {
        Eigen::SelfAdjointEigenSolver<Matrix> es(covariance.matrix(), Eigen::EigenvaluesOnly);
        const double norm = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 0.0);
        if (es.eigenvalues().minCoeff() < -defaults::kPsdTol * std::max(norm, 1.0))
            throw NotPositiveDefiniteError(
                "generator_drift_adjustment: covariance is not positive semidefinite");
    }
    Vector adjusted(d);
    for (int k = 0; k < d; ++k)
        adjusted[k] = drift.values[k] -
                      0.5 * (covariance.matrix().cwiseProduct(conn.lower(k))).sum();

    DriftAdjustment result{Gradient(drift.chart, adjusted), std::nullopt};
    if (state) {
        require_same_chart(drift.chart, state->chart, "generator_drift_adjustment", "drift",
                           "state");
        const int s = state->chart.tradable();
        if (s >= 0)
            result.fx_residual = adjusted[s] - (r_dom - r_for) * state->values[s];
    }
    return result;
}

} // namespace covgreeks
