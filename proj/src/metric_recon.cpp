#include "covgreeks/metric_recon.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>
#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace covgreeks {

namespace {

constexpr int kSymComponents = 3; // (00), (01), (11)
const std::array<std::pair<int, int>, 3> kPairs = {{{0, 0}, {0, 1}, {1, 1}}};

void check_form(const Matrix& f, const char* what) {
    if (f.rows() != 2 || f.cols() != 2)
        throw DimensionError(std::string(what) + ": grid fields hold 2x2 matrices");
}

// One-dimensional derivative stencil along an axis: central in the interior,
// second-order one-sided at the edges. Returns offsets and coefficients.
struct Stencil {
    std::array<int, 3> offset;
    std::array<double, 3> coeff;
};

Stencil stencil_for(int i, int n, double h) {
    if (n < 3)
        throw InvalidInputError("grid too small for finite differences (need >= 3 nodes per "
                                "axis)");
    if (i == 0)
        return {{0, 1, 2}, {-1.5 / h, 2.0 / h, -0.5 / h}};
    if (i == n - 1)
        return {{0, -1, -2}, {1.5 / h, -2.0 / h, 0.5 / h}};
    return {{-1, 0, 1}, {-0.5 / h, 0.0, 0.5 / h}};
}

} // namespace

GridSpec::GridSpec(Chart c, std::array<double, 2> origin_, std::array<double, 2> spacing_,
                   int n0_, int n1_)
    : chart(std::move(c)), origin(origin_), spacing(spacing_), n0(n0_), n1(n1_) {
    if (chart.dim() != 2)
        throw InvalidInputError("GridSpec: grid fields require a two-coordinate chart");
    if (n0 < 1 || n1 < 1)
        throw InvalidInputError("GridSpec: need at least one node per axis");
    if (!(spacing[0] > 0.0) || !(spacing[1] > 0.0))
        throw InvalidInputError("GridSpec: spacings must be > 0");
}

Vector GridSpec::point(int i, int j) const {
    Vector p(2);
    p << origin[0] + i * spacing[0], origin[1] + j * spacing[1];
    return p;
}

FormGridField::FormGridField(GridSpec g, std::vector<Matrix> f)
    : grid(std::move(g)), forms(std::move(f)) {
    if (static_cast<int>(forms.size()) != grid.nodes())
        throw DimensionError("FormGridField: one form per grid node required");
    for (const auto& m : forms)
        check_form(m, "FormGridField");
}

ConnectionGridField::ConnectionGridField(GridSpec g, std::vector<std::array<Matrix, 2>> c)
    : grid(std::move(g)), coeffs(std::move(c)) {
    if (static_cast<int>(coeffs.size()) != grid.nodes())
        throw DimensionError("ConnectionGridField: one connection per grid node required");
    for (const auto& slices : coeffs)
        for (const auto& m : slices)
            check_form(m, "ConnectionGridField");
}

PdeResidualReport metric_pde_residual(const FormGridField& g, const ConnectionGridField& conn) {
    const GridSpec& grid = g.grid;
    if (grid.n0 != conn.grid.n0 || grid.n1 != conn.grid.n1)
        throw DimensionError("metric_pde_residual: fields are not co-located");
    if (grid.n0 < 3 || grid.n1 < 3)
        throw InvalidInputError("metric_pde_residual: grid too small for central differences "
                                "(< 3 nodes per axis)");

    PdeResidualReport report;
    report.node_residuals.resize(grid.nodes(), 0.0);
    double sumsq = 0.0;
    for (int i = 0; i < grid.n0; ++i)
        for (int j = 0; j < grid.n1; ++j) {
            const int node = grid.index(i, j);
            const auto& c = conn.coeffs[node];
            double node_sq = 0.0;
            for (int k = 0; k < 2; ++k) {
                // d_k g by the axis stencil.
                Matrix dkg = Matrix::Zero(2, 2);
                const Stencil st = (k == 0) ? stencil_for(i, grid.n0, grid.spacing[0])
                                            : stencil_for(j, grid.n1, grid.spacing[1]);
                for (int t = 0; t < 3; ++t) {
                    const int ii = (k == 0) ? i + st.offset[t] : i;
                    const int jj = (k == 1) ? j + st.offset[t] : j;
                    dkg += st.coeff[t] * g.forms[grid.index(ii, jj)];
                }
                const Matrix& gm = g.forms[node];
                for (const auto& [a, b] : kPairs) {
                    double rhs = 0.0;
                    for (int l = 0; l < 2; ++l)
                        rhs += c[l](k, a) * gm(l, b) + c[l](k, b) * gm(a, l);
                    const double r = dkg(a, b) - rhs;
                    node_sq += r * r;
                }
            }
            report.node_residuals[node] = std::sqrt(node_sq);
            sumsq += node_sq;
            report.max_residual = std::max(report.max_residual, report.node_residuals[node]);
        }
    report.rms_residual = std::sqrt(sumsq / (grid.nodes() * 2 * kSymComponents));
    return report;
}

ReconstructionResult reconstruct_metric(const ConnectionGridField& conn, const Matrix& anchor,
                                        int anchor_i, int anchor_j) {
    const GridSpec& grid = conn.grid;
    if (grid.n0 < 3 || grid.n1 < 3)
        throw InvalidInputError("reconstruct_metric: grid too small (< 3 nodes per axis)");
    if (anchor_i < 0 || anchor_i >= grid.n0 || anchor_j < 0 || anchor_j >= grid.n1)
        throw InvalidInputError("reconstruct_metric: anchor node outside the grid");
    check_form(anchor, "reconstruct_metric anchor");
    {
        Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (anchor + anchor.transpose()),
                                                 Eigen::EigenvaluesOnly);
        if (!(es.eigenvalues().minCoeff() > 0.0))
            throw NotPositiveDefiniteError("reconstruct_metric: anchor form must be symmetric "
                                           "positive definite");
    }

    const int nodes = grid.nodes();
    const int anchor_node = grid.index(anchor_i, anchor_j);
    // Unknowns: 3 symmetric components per node, anchor node eliminated.
    auto var_index = [&](int node, int comp) -> int {
        if (node == anchor_node)
            return -1;
        const int shifted = node < anchor_node ? node : node - 1;
        return shifted * kSymComponents + comp;
    };
    const int n_unknowns = (nodes - 1) * kSymComponents;
    const std::array<double, 3> anchor_vals = {anchor(0, 0), 0.5 * (anchor(0, 1) + anchor(1, 0)),
                                               anchor(1, 1)};

    std::vector<Eigen::Triplet<double>> triplets;
    std::vector<double> rhs;
    int row = 0;
    auto add_entry = [&](int node, int a, int b, double coeff) {
        // (a, b) unordered component of g at `node` with coefficient `coeff`.
        const int comp = (a == b) ? (a == 0 ? 0 : 2) : 1;
        const int var = var_index(node, comp);
        if (var < 0)
            rhs[row] -= coeff * anchor_vals[comp];
        else
            triplets.emplace_back(row, var, coeff);
    };

    for (int i = 0; i < grid.n0; ++i)
        for (int j = 0; j < grid.n1; ++j) {
            const int node = grid.index(i, j);
            const auto& c = conn.coeffs[node];
            for (int k = 0; k < 2; ++k) {
                const Stencil st = (k == 0) ? stencil_for(i, grid.n0, grid.spacing[0])
                                            : stencil_for(j, grid.n1, grid.spacing[1]);
                for (const auto& [a, b] : kPairs) {
                    rhs.push_back(0.0);
                    // d_k g_ab - C^l_ka g_lb - C^l_kb g_al = 0
                    for (int t = 0; t < 3; ++t) {
                        if (st.coeff[t] == 0.0)
                            continue;
                        const int ii = (k == 0) ? i + st.offset[t] : i;
                        const int jj = (k == 1) ? j + st.offset[t] : j;
                        add_entry(grid.index(ii, jj), a, b, st.coeff[t]);
                    }
                    for (int l = 0; l < 2; ++l) {
                        add_entry(node, l, b, -c[l](k, a));
                        add_entry(node, a, l, -c[l](k, b));
                    }
                    ++row;
                }
            }
        }

    Eigen::SparseMatrix<double> a_mat(row, n_unknowns);
    a_mat.setFromTriplets(triplets.begin(), triplets.end());
    Eigen::Map<const Vector> b_vec(rhs.data(), row);

    // Normal equations with diagonal (column-norm) scaling.
    Vector x(n_unknowns);
    {
        Eigen::SparseMatrix<double> gram = Eigen::SparseMatrix<double>(a_mat.transpose()) * a_mat;
        Vector scale_diag(n_unknowns);
        for (int k = 0; k < n_unknowns; ++k) {
            const double dk = gram.coeff(k, k);
            scale_diag[k] = dk > 0.0 ? 1.0 / std::sqrt(dk) : 1.0;
        }
        Eigen::SparseMatrix<double> scaled =
            scale_diag.asDiagonal() * gram * scale_diag.asDiagonal();
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(scaled);
        if (solver.info() != Eigen::Success)
            throw SingularError("reconstruct_metric: normal system is singular; the anchor "
                                "does not pin the solution");
        const Vector atb = a_mat.transpose() * b_vec;
        const Vector y = solver.solve(scale_diag.asDiagonal() * atb);
        if (solver.info() != Eigen::Success)
            throw SingularError("reconstruct_metric: normal-equation solve failed");
        x = scale_diag.cwiseProduct(y);
    }

    std::vector<Matrix> forms(nodes, Matrix::Zero(2, 2));
    for (int node = 0; node < nodes; ++node) {
        std::array<double, 3> vals;
        if (node == anchor_node) {
            vals = anchor_vals;
        } else {
            for (int compo = 0; compo < kSymComponents; ++compo)
                vals[compo] = x[var_index(node, compo)];
        }
        forms[node] << vals[0], vals[1], vals[1], vals[2];
    }

    const Vector resid = a_mat * x - b_vec;
    ReconstructionResult out{FormGridField(grid, std::move(forms)), 0.0, resid.norm()};
    out.residual_rms = resid.norm() / std::sqrt(static_cast<double>(row));
    return out;
}

Matrix spd_project_matrix(const Matrix& symmetric, double floor_rel, double scale) {
    if (floor_rel < 0.0 || scale < 0.0)
        throw InvalidInputError("spd_project: floor and scale must be >= 0");
    const Matrix sym = 0.5 * (symmetric + symmetric.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    Vector evals = es.eigenvalues();
    const double mag = std::max(evals.cwiseAbs().maxCoeff(), scale);
    const double floor = floor_rel * mag;
    for (int i = 0; i < evals.size(); ++i)
        evals[i] = std::max(evals[i], floor);
    return es.eigenvectors() * evals.asDiagonal() * es.eigenvectors().transpose();
}

QuadraticForm spd_project(const QuadraticForm& form, double floor_rel, double scale) {
    return QuadraticForm(form.chart(), spd_project_matrix(form.matrix(), floor_rel, scale),
                         form.kind());
}

double anchor_scale_factor(const Matrix& g, const Vector& v0, double l0) {
    if (!(l0 > 0.0))
        throw InvalidInputError("anchor_scale: L0 must be > 0");
    const double denom = v0.dot(g * v0);
    if (!(denom > 0.0))
        throw InvalidInputError("anchor_scale: degenerate reference direction (v0' g v0 <= 0)");
    return l0 * l0 / denom;
}

QuadraticForm anchor_scale(const QuadraticForm& form, const TangentMove& v0, double l0) {
    require_same_chart(form.chart(), v0.chart, "anchor_scale", "form", "reference move");
    const double alpha = anchor_scale_factor(form.matrix(), v0.delta, l0);
    return QuadraticForm(form.chart(), alpha * form.matrix(), form.kind());
}

FormGridField anchor_scale(const FormGridField& field, int node_i, int node_j,
                           const TangentMove& v0, double l0) {
    const double alpha =
        anchor_scale_factor(field.forms[field.grid.index(node_i, node_j)], v0.delta, l0);
    std::vector<Matrix> scaled;
    scaled.reserve(field.forms.size());
    for (const auto& f : field.forms)
        scaled.push_back(alpha * f);
    return FormGridField(field.grid, std::move(scaled));
}

double convergence_order(double coarse_residual, double fine_residual, double ratio) {
    if (!(coarse_residual > 0.0) || !(fine_residual > 0.0) || !(ratio > 1.0))
        throw InvalidInputError("convergence_order: residuals must be > 0 and ratio > 1");
    return std::log(coarse_residual / fine_residual) / std::log(ratio);
}

// --- grid file I/O -----------------------------------------------------------

namespace {

std::vector<std::vector<double>> read_rows(const std::string& path, size_t n_cols) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open grid file '" + path + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#' || (line_no == 1 && std::isalpha(line[0])))
            continue; // header or comment
        std::stringstream ss(line);
        std::vector<double> row;
        std::string cell;
        while (std::getline(ss, cell, ','))
            row.push_back(std::stod(cell));
        if (row.size() != n_cols)
            throw ParseError("grid file '" + path + "' line " + std::to_string(line_no) +
                             ": expected " + std::to_string(n_cols) + " columns, found " +
                             std::to_string(row.size()));
        rows.push_back(std::move(row));
    }
    if (rows.empty())
        throw ParseError("grid file '" + path + "' contains no data rows");
    return rows;
}

GridSpec infer_grid(const std::vector<std::vector<double>>& rows, const Chart& chart,
                    std::vector<int>& order) {
    std::map<double, int> xs, ys;
    for (const auto& r : rows) {
        xs.emplace(r[0], 0);
        ys.emplace(r[1], 0);
    }
    int k = 0;
    for (auto& [v, idx] : xs)
        idx = k++;
    k = 0;
    for (auto& [v, idx] : ys)
        idx = k++;
    const int n0 = static_cast<int>(xs.size());
    const int n1 = static_cast<int>(ys.size());
    if (static_cast<int>(rows.size()) != n0 * n1)
        throw ParseError("grid file does not form a complete rectangular lattice");

    auto spacing_of = [](const std::map<double, int>& axis) {
        if (axis.size() < 2)
            return 1.0;
        auto it = axis.begin();
        const double first = it->first;
        const double second = std::next(it)->first;
        const double h = second - first;
        double prev = first;
        for (++it; it != axis.end(); ++it) {
            if (std::abs((it->first - prev) - h) > 1e-9 * std::max(std::abs(h), 1.0))
                throw ParseError("grid file axis is not uniformly spaced");
            prev = it->first;
        }
        return h;
    };
    GridSpec grid(chart, {xs.begin()->first, ys.begin()->first},
                  {spacing_of(xs), spacing_of(ys)}, n0, n1);
    order.assign(rows.size(), 0);
    for (size_t r = 0; r < rows.size(); ++r)
        order[r] = grid.index(xs.at(rows[r][0]), ys.at(rows[r][1]));
    return grid;
}

} // namespace

FormGridField load_form_grid(const std::string& path, const Chart& chart) {
    const auto rows = read_rows(path, 5);
    std::vector<int> order;
    GridSpec grid = infer_grid(rows, chart, order);
    std::vector<Matrix> forms(grid.nodes(), Matrix::Zero(2, 2));
    for (size_t r = 0; r < rows.size(); ++r) {
        Matrix f(2, 2);
        f << rows[r][2], rows[r][3], rows[r][3], rows[r][4];
        forms[order[r]] = f;
    }
    return FormGridField(std::move(grid), std::move(forms));
}

ConnectionGridField load_connection_grid(const std::string& path, const Chart& chart) {
    const auto rows = read_rows(path, 8);
    std::vector<int> order;
    GridSpec grid = infer_grid(rows, chart, order);
    std::vector<std::array<Matrix, 2>> coeffs(grid.nodes(),
                                              {Matrix::Zero(2, 2), Matrix::Zero(2, 2)});
    for (size_t r = 0; r < rows.size(); ++r) {
        Matrix c0(2, 2), c1(2, 2);
        c0 << rows[r][2], rows[r][3], rows[r][3], rows[r][4];
        c1 << rows[r][5], rows[r][6], rows[r][6], rows[r][7];
        coeffs[order[r]] = {c0, c1};
    }
    return ConnectionGridField(std::move(grid), std::move(coeffs));
}

namespace {
void write_header_and_rows(std::ofstream& out, const std::string& header,
                           const GridSpec& grid,
                           const std::function<void(std::ofstream&, int)>& row_writer) {
    out.precision(17);
    out << header << "\n";
    for (int i = 0; i < grid.n0; ++i)
        for (int j = 0; j < grid.n1; ++j) {
            const Vector p = grid.point(i, j);
            out << p[0] << "," << p[1];
            row_writer(out, grid.index(i, j));
            out << "\n";
        }
}
} // namespace

void save_form_grid(const FormGridField& field, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write grid file '" + path + "'");
    write_header_and_rows(out, "x0,x1,g00,g01,g11", field.grid, [&](std::ofstream& os, int n) {
        const Matrix& f = field.forms[n];
        os << "," << f(0, 0) << "," << f(0, 1) << "," << f(1, 1);
    });
}

void save_connection_grid(const ConnectionGridField& field, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write grid file '" + path + "'");
    write_header_and_rows(out, "x0,x1,c0_00,c0_01,c0_11,c1_00,c1_01,c1_11", field.grid,
                          [&](std::ofstream& os, int n) {
                              const auto& c = field.coeffs[n];
                              os << "," << c[0](0, 0) << "," << c[0](0, 1) << "," << c[0](1, 1)
                                 << "," << c[1](0, 0) << "," << c[1](0, 1) << "," << c[1](1, 1);
                          });
}

} // namespace covgreeks
