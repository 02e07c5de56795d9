#pragma once
#include <array>
#include <string>
#include <vector>

#include "covgreeks/geometry.hpp"

namespace covgreeks {

/// Uniform rectangular grid over a two-coordinate chart. Node (i, j) sits at
/// origin + (i * spacing0, j * spacing1); storage is row-major in i.
struct GridSpec {
    Chart chart;
    std::array<double, 2> origin;
    std::array<double, 2> spacing;
    int n0 = 0;
    int n1 = 0;

    GridSpec(Chart c, std::array<double, 2> origin_, std::array<double, 2> spacing_, int n0_,
             int n1_);
    int nodes() const { return n0 * n1; }
    int index(int i, int j) const { return i * n1 + j; }
    Vector point(int i, int j) const;
};

/// Symmetric 2x2 form per grid node.
struct FormGridField {
    GridSpec grid;
    std::vector<Matrix> forms;

    FormGridField(GridSpec g, std::vector<Matrix> f);
};

/// Connection coefficients per grid node (two lower-index slices).
struct ConnectionGridField {
    GridSpec grid;
    std::vector<std::array<Matrix, 2>> coeffs;

    ConnectionGridField(GridSpec g, std::vector<std::array<Matrix, 2>> c);
};

struct PdeResidualReport {
    std::vector<double> node_residuals; // Frobenius norm over (k, i, j) per node
    double max_residual = 0.0;
    double rms_residual = 0.0;
};

/// Residual of d_k g_ij = C^l_ki g_lj + C^l_kj g_il with finite-difference
/// derivatives (central interior, second-order one-sided at the boundary).
PdeResidualReport metric_pde_residual(const FormGridField& g, const ConnectionGridField& conn);

struct ReconstructionResult {
    FormGridField field;
    double residual_rms = 0.0;  // per-equation RMS of the least-squares system
    double residual_norm = 0.0; // global residual norm
};

/// Least-squares solve of the discretized compatibility system with the form
/// at the anchor node held fixed.
ReconstructionResult reconstruct_metric(const ConnectionGridField& conn, const Matrix& anchor,
                                        int anchor_i, int anchor_j);

/// Eigenvalue clipping onto the SPD cone: eigenvalues floored at
/// floor_rel * max(|eigenvalues|, scale).
QuadraticForm spd_project(const QuadraticForm& form, double floor_rel, double scale = 1.0);
Matrix spd_project_matrix(const Matrix& symmetric, double floor_rel, double scale = 1.0);

/// Scale factor alpha = L0^2 / (v0' g v0) making ||v0||_g = L0.
double anchor_scale_factor(const Matrix& g, const Vector& v0, double l0);
QuadraticForm anchor_scale(const QuadraticForm& form, const TangentMove& v0, double l0);
FormGridField anchor_scale(const FormGridField& field, int node_i, int node_j,
                           const TangentMove& v0, double l0);

/// Observed convergence order between residuals at spacing h and h/ratio.
double convergence_order(double coarse_residual, double fine_residual, double ratio = 2.0);

// Grid-field file formats (delimited text, one node per row):
//   forms:       x0,x1,g00,g01,g11
//   connections: x0,x1,c0_00,c0_01,c0_11,c1_00,c1_01,c1_11
FormGridField load_form_grid(const std::string& path, const Chart& chart);
ConnectionGridField load_connection_grid(const std::string& path, const Chart& chart);
void save_form_grid(const FormGridField& field, const std::string& path);
void save_connection_grid(const ConnectionGridField& field, const std::string& path);

} // namespace covgreeks
