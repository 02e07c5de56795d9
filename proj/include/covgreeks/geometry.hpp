#pragma once
#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "covgreeks/errors.hpp"

namespace covgreeks {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

namespace defaults {
// Relative asymmetry above which a quadratic form is rejected instead of
// silently symmetrized.
inline constexpr double kSymmetryTol = 1e-8;
// min eigenvalue >= -kPsdTol * ||A|| for penalty forms.
inline constexpr double kPsdTol = 1e-10;
// min eigenvalue > kPdTol * ||A|| before a matrix counts as positive definite.
inline constexpr double kPdTol = 1e-12;
// Condition-number ceiling for linear solves against user inputs.
inline constexpr double kCondLimit = 1e12;
// Relative singular-value cutoff for minimum-norm least squares.
inline constexpr double kSvdTol = 1e-12;
} // namespace defaults

/// A local coordinate system: ordered coordinate labels plus per-coordinate
/// unit labels. Coordinates with unit "price" must stay strictly positive and
/// are candidates for the tradable-coordinate annotation used by the
/// generator drift diagnostic.
class Chart {
public:
    Chart(std::string id, std::vector<std::string> coords,
          std::vector<std::string> units = {}, int tradable = -1);

    const std::string& id() const { return id_; }
    int dim() const { return static_cast<int>(coords_.size()); }
    const std::vector<std::string>& coords() const { return coords_; }
    const std::string& coord(int i) const { return coords_.at(i); }
    const std::string& unit(int i) const { return units_.at(i); }
    bool requires_positive(int i) const { return units_.at(i) == "price"; }
    /// Index of the coordinate that is a tradable price, or -1.
    int tradable() const { return tradable_; }

    bool same(const Chart& other) const;

    // Common charts for the FX two-factor block. vol_unit is "vol_pt" or
    // "vol_dec" and only labels the sigma coordinate.
    static Chart spot_vol(const std::string& vol_unit = "vol_pt");
    static Chart forward_vol(const std::string& vol_unit = "vol_pt");
    static Chart log_forward_vol(const std::string& vol_unit = "vol_pt");
    static Chart smile_state(const std::string& vol_unit = "vol_pt");

private:
    std::string id_;
    std::vector<std::string> coords_;
    std::vector<std::string> units_;
    int tradable_;
};

void require_same_chart(const Chart& a, const Chart& b, const std::string& op,
                        const std::string& what_a, const std::string& what_b);

/// Market state expressed in a chart.
struct StatePoint {
    Chart chart;
    Vector values;

    StatePoint(Chart c, Vector v);
};

/// Tangent displacement delta-x at some base state.
struct TangentMove {
    Chart chart;
    Vector delta;

    TangentMove(Chart c, Vector d);
};

/// First derivatives V_i of a scalar value function (or any covector, e.g. a
/// drift in the generator diagnostic).
struct Gradient {
    Chart chart;
    Vector values;

    Gradient(Chart c, Vector v);
};

enum class FormKind { hessian_target, penalty };

/// Symmetric d x d coefficient matrix bound to a chart. hessian_target forms
/// carry second-order P&L coefficients and may be indefinite; penalty forms
/// must be positive semidefinite.
class QuadraticForm {
public:
    QuadraticForm(Chart chart, Matrix m, FormKind kind,
                  double symmetry_tol = defaults::kSymmetryTol,
                  double psd_tol = defaults::kPsdTol);

    const Chart& chart() const { return chart_; }
    const Matrix& matrix() const { return matrix_; }
    FormKind kind() const { return kind_; }
    int dim() const { return static_cast<int>(matrix_.rows()); }

    double operator()(const Vector& dx) const; // dx' A dx

    static QuadraticForm zero(const Chart& chart, FormKind kind);

private:
    Chart chart_;
    Matrix matrix_;
    FormKind kind_;
};

/// Torsion-free affine connection coefficients C^k_{ij}. Stored per upper
/// index k as a d x d matrix, exactly symmetric in (i, j).
class Connection {
public:
    Connection(Chart chart, std::vector<Matrix> coeffs,
               double symmetry_tol = defaults::kSymmetryTol);

    const Chart& chart() const { return chart_; }
    int dim() const { return static_cast<int>(coeffs_.size()); }
    double coeff(int k, int i, int j) const { return coeffs_.at(k)(i, j); }
    const Matrix& lower(int k) const { return coeffs_.at(k); }
    const std::vector<Matrix>& coeffs() const { return coeffs_; }

    double max_abs() const;

    static Connection zero(const Chart& chart);

private:
    Chart chart_;
    std::vector<Matrix> coeffs_;
};

/// Point-local data of a smooth chart change y = y(x): the map stores the
/// inverse-map derivatives jacobian(i, a) = dx^i/dy^a and
/// second[m](b, g) = d2 x^m / dy^b dy^g evaluated at the base state.
class ChartMapAtPoint {
public:
    ChartMapAtPoint(Chart source, Chart target, Matrix jacobian,
                    std::vector<Matrix> second,
                    double cond_limit = defaults::kCondLimit);

    const Chart& source() const { return source_; }
    const Chart& target() const { return target_; }
    const Matrix& jacobian() const { return jacobian_; }          // dx/dy
    const Matrix& inverse_jacobian() const { return inv_jac_; }   // dy/dx
    const std::vector<Matrix>& second() const { return second_; } // d2x/dy dy

    ChartMapAtPoint inverse() const;
    /// Composition with a following map (this: x->y, then next: y->w).
    ChartMapAtPoint then(const ChartMapAtPoint& next) const;

    static ChartMapAtPoint identity(const Chart& chart);
    /// (S, sigma) -> (F, sigma) with F = S * carry, carry frozen over the
    /// horizon (carry = exp((r_d - r_f) * tau)).
    static ChartMapAtPoint spot_to_forward(double carry,
                                           const std::string& vol_unit = "vol_pt");
    /// (F, sigma) -> (z, sigma) with z = log F, evaluated at forward level F.
    static ChartMapAtPoint forward_to_log_forward(double forward,
                                                  const std::string& vol_unit = "vol_pt");

private:
    Chart source_;
    Chart target_;
    Matrix jacobian_;
    Matrix inv_jac_;
    std::vector<Matrix> second_;
};

// --- operations ------------------------------------------------------------

/// Covariant Hessian: H~_ij = V_ij - sum_k C^k_ij V_k.
QuadraticForm covariant_hessian(const QuadraticForm& hess, const Connection& conn,
                                const Gradient& grad);

/// Local quadratic predictor V_i dx^i + 1/2 H_ij dx^i dx^j, minus
/// 1/2 dx' g_eff dx when a penalty is supplied.
double quadratic_predictor(const Gradient& grad, const QuadraticForm& quad,
                           const TangentMove& move,
                           const std::optional<QuadraticForm>& penalty = std::nullopt);

Gradient transform_gradient(const Gradient& grad, const ChartMapAtPoint& map);
TangentMove transform_move(const TangentMove& move, const ChartMapAtPoint& map);
QuadraticForm transform_quadratic_form(const QuadraticForm& q, const ChartMapAtPoint& map);
Connection transform_connection(const Connection& conn, const ChartMapAtPoint& map);

/// Ordinary (non-tensorial) Hessian transport: picks up the second-derivative
/// term V_ab = J'HJ + sum_k (d2 x^k/dy dy) V_k.
QuadraticForm transform_ordinary_hessian(const QuadraticForm& hess, const Gradient& grad,
                                         const ChartMapAtPoint& map);

/// |predictor in the source chart - predictor in the target chart| after
/// transporting gradient, covariant Hessian and move consistently.
double predictor_invariance_residual(const Gradient& grad, const QuadraticForm& hess,
                                     const Connection& conn, const TangentMove& move,
                                     const ChartMapAtPoint& map);

struct DriftAdjustment {
    Gradient adjusted_drift; // b^k - 1/2 a^ij C^k_ij
    /// Martingale residual of the tradable coordinate, b~^S - (r_d - r_f) S,
    /// when the chart tags one and rates were supplied.
    std::optional<double> fx_residual;
};

DriftAdjustment generator_drift_adjustment(const Gradient& drift, const QuadraticForm& covariance,
                                           const Connection& conn,
                                           const std::optional<StatePoint>& state = std::nullopt,
                                           double r_dom = 0.0, double r_for = 0.0);

} // namespace covgreeks
