#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "covgreeks/liquidity.hpp"
#include "covgreeks/metric_recon.hpp"
#include "helpers.hpp"

using namespace covgreeks;
using namespace covgreeks::testing;

namespace {

Chart chart2() { return Chart::spot_vol(); }

// g = diag(exp(sigma), 1) with its analytic Levi-Civita coefficients:
// C^S_{S sigma} = 1/2 and C^sigma_{SS} = -exp(sigma)/2.
Matrix exp_metric(double sigma) {
    Matrix g(2, 2);
    g << std::exp(sigma), 0.0, 0.0, 1.0;
    return g;
}

std::array<Matrix, 2> exp_metric_connection(double sigma) {
    Matrix c_s = Matrix::Zero(2, 2);
    c_s(0, 1) = 0.5;
    c_s(1, 0) = 0.5;
    Matrix c_v = Matrix::Zero(2, 2);
    c_v(0, 0) = -0.5 * std::exp(sigma);
    return {c_s, c_v};
}

GridSpec make_grid(int n, double h) {
    return GridSpec(chart2(), {0.8, 0.1}, {h, h}, n, n);
}

FormGridField exp_metric_field(int n, double h) {
    GridSpec grid = make_grid(n, h);
    std::vector<Matrix> forms;
    for (int i = 0; i < grid.n0; ++i)
        for (int j = 0; j < grid.n1; ++j)
            forms.push_back(exp_metric(grid.point(i, j)[1]));
    return FormGridField(std::move(grid), std::move(forms));
}

ConnectionGridField exp_metric_connection_field(int n, double h) {
    GridSpec grid = make_grid(n, h);
    std::vector<std::array<Matrix, 2>> coeffs;
    for (int i = 0; i < grid.n0; ++i)
        for (int j = 0; j < grid.n1; ++j)
            coeffs.push_back(exp_metric_connection(grid.point(i, j)[1]));
    return ConnectionGridField(std::move(grid), std::move(coeffs));
}

// Torsion-free connection with traceful curvature: no compatible metric
// exists (the holonomy has a skew, non-orthogonal part).
ConnectionGridField nonmetrizable_field(int n, double h) {
    GridSpec grid = make_grid(n, h);
    std::vector<std::array<Matrix, 2>> coeffs;
    for (int i = 0; i < grid.n0; ++i)
        for (int j = 0; j < grid.n1; ++j) {
            Matrix c_s = Matrix::Zero(2, 2);
            Matrix c_v = Matrix::Zero(2, 2);
            c_v(1, 1) = grid.point(i, j)[0]; // C^sigma_{sigma sigma} = S
            coeffs.push_back({c_s, c_v});
        }
    return ConnectionGridField(std::move(grid), std::move(coeffs));
}

double max_rel_error(const FormGridField& got, const FormGridField& expected) {
    double worst = 0.0;
    for (int node = 0; node < got.grid.nodes(); ++node)
        worst = std::max(worst, max_rel_diff(got.forms[node], expected.forms[node]));
    return worst;
}

} // namespace

TEST_SUITE("metric_recon.residual") {
    TEST_CASE("constant metric with zero connection") {
        GridSpec grid = make_grid(11, 0.01);
        std::vector<Matrix> forms(grid.nodes(), random_spd(2));
        std::vector<std::array<Matrix, 2>> zeros(
            grid.nodes(), {Matrix::Zero(2, 2), Matrix::Zero(2, 2)});
        const auto report = metric_pde_residual(FormGridField(grid, forms),
                                                ConnectionGridField(grid, zeros));
        CHECK(report.max_residual < 1e-12);
    }

    TEST_CASE("compatible pair has O(h^2) residual") {
        const auto coarse = metric_pde_residual(exp_metric_field(41, 1e-2),
                                                exp_metric_connection_field(41, 1e-2));
        CHECK(coarse.max_residual < 1e-4);
        const auto fine = metric_pde_residual(exp_metric_field(81, 0.5e-2),
                                              exp_metric_connection_field(81, 0.5e-2));
        CHECK(convergence_order(coarse.max_residual, fine.max_residual) >= 1.5);
    }

    TEST_CASE("non-metrizable connection resists refinement") {
        // Reconstruct the best-fit metric, then check its compatibility
        // residual does not shrink at the compatible-pair rate.
        const auto recon_c =
            reconstruct_metric(nonmetrizable_field(21, 2e-2), Matrix::Identity(2, 2), 10, 10);
        const auto res_c = metric_pde_residual(recon_c.field, nonmetrizable_field(21, 2e-2));
        const auto recon_f =
            reconstruct_metric(nonmetrizable_field(41, 1e-2), Matrix::Identity(2, 2), 20, 20);
        const auto res_f = metric_pde_residual(recon_f.field, nonmetrizable_field(41, 1e-2));
        CHECK(res_c.max_residual > 1e-3);
        CHECK(convergence_order(res_c.max_residual, res_f.max_residual) < 1.5);
    }

    TEST_CASE("tiny grids are rejected") {
        GridSpec grid(chart2(), {1.0, 1.0}, {0.1, 0.1}, 2, 2);
        std::vector<Matrix> forms(4, Matrix::Identity(2, 2));
        std::vector<std::array<Matrix, 2>> zeros(4, {Matrix::Zero(2, 2), Matrix::Zero(2, 2)});
        CHECK_THROWS_AS(metric_pde_residual(FormGridField(grid, forms),
                                            ConnectionGridField(grid, zeros)),
                        InvalidInputError);
    }
}

TEST_SUITE("metric_recon.reconstruct") {
    TEST_CASE("zero connection reproduces the anchor everywhere") {
        GridSpec grid = make_grid(9, 0.05);
        std::vector<std::array<Matrix, 2>> zeros(
            grid.nodes(), {Matrix::Zero(2, 2), Matrix::Zero(2, 2)});
        const Matrix anchor = random_spd(2);
        const auto result =
            reconstruct_metric(ConnectionGridField(grid, zeros), anchor, 4, 4);
        for (const auto& f : result.field.forms)
            CHECK(max_rel_diff(f, anchor) < 1e-10);
        CHECK(result.residual_rms < 1e-10);
    }

    TEST_CASE("recovers the exponential metric from its connection") {
        const int n = 41;
        const double h = 1e-2;
        const auto conn = exp_metric_connection_field(n, h);
        const auto truth = exp_metric_field(n, h);
        const int anchor_node = n / 2;
        const Matrix anchor =
            exp_metric(conn.grid.point(anchor_node, anchor_node)[1]);
        const auto result = reconstruct_metric(conn, anchor, anchor_node, anchor_node);
        CHECK(max_rel_error(result.field, truth) < 1e-4);
    }

    TEST_CASE("reconstruction is linear in the anchor") {
        const int n = 15;
        const double h = 1e-2;
        const auto conn = exp_metric_connection_field(n, h);
        const Matrix anchor = exp_metric(conn.grid.point(7, 7)[1]);
        const double alpha = 2.75;
        const auto base = reconstruct_metric(conn, anchor, 7, 7);
        const auto scaled = reconstruct_metric(conn, Matrix(alpha * anchor), 7, 7);
        double worst = 0.0;
        for (int node = 0; node < conn.grid.nodes(); ++node)
            worst = std::max(worst, max_rel_diff(scaled.field.forms[node],
                                                 Matrix(alpha * base.field.forms[node])));
        CHECK(worst < 1e-9);
    }

    TEST_CASE("anchor must be symmetric positive definite") {
        const auto conn = exp_metric_connection_field(5, 0.01);
        Matrix bad(2, 2);
        bad << 1.0, 0.0, 0.0, -1.0;
        CHECK_THROWS_AS(reconstruct_metric(conn, bad, 2, 2), NotPositiveDefiniteError);
    }
}

TEST_SUITE("metric_recon.spd") {
    TEST_CASE("already SPD is unchanged") {
        const Matrix g = random_spd(2);
        CHECK(max_rel_diff(spd_project_matrix(g, 1e-6), g) < 1e-12);
    }

    TEST_CASE("indefinite hand example") {
        Matrix m(2, 2);
        m << 1.0, 0.0, 0.0, -1.0;
        const Matrix p = spd_project_matrix(m, 1e-6);
        CHECK(p(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(p(1, 1) == doctest::Approx(1e-6).epsilon(1e-9));
    }

    TEST_CASE("zero matrix becomes the scaled identity floor") {
        const Matrix p = spd_project_matrix(Matrix::Zero(2, 2), 1e-6, 1.0);
        CHECK(max_rel_diff(p, Matrix(1e-6 * Matrix::Identity(2, 2))) < 1e-10);
    }

    TEST_CASE("idempotent and eigenvalue order preserving") {
        const Matrix m = random_symmetric(3);
        Chart c3("p3", {"a", "b", "c"});
        const QuadraticForm once =
            spd_project(QuadraticForm(c3, m, FormKind::hessian_target), 1e-5);
        const QuadraticForm twice = spd_project(once, 1e-5);
        CHECK(max_rel_diff(once.matrix(), twice.matrix()) < 1e-12);

        Eigen::SelfAdjointEigenSolver<Matrix> before(m);
        Eigen::SelfAdjointEigenSolver<Matrix> after(once.matrix());
        for (int i = 1; i < 3; ++i)
            CHECK(after.eigenvalues()[i] >= after.eigenvalues()[i - 1] - 1e-14);
        CHECK(after.eigenvalues().minCoeff() > 0.0);
    }
}

TEST_SUITE("metric_recon.anchor") {
    TEST_CASE("hand scale factor") {
        CHECK(anchor_scale_factor(Matrix::Identity(2, 2),
                                  (Vector(2) << 1.0, 0.0).finished(), 2.0) ==
              doctest::Approx(4.0).epsilon(1e-14));
    }

    TEST_CASE("re-anchoring with the achieved length is the identity") {
        const Matrix g = random_spd(2);
        const TangentMove v(chart2(), random_vector(2));
        const double l0 = 1.3;
        const QuadraticForm scaled =
            anchor_scale(QuadraticForm(chart2(), g, FormKind::penalty), v, l0);
        CHECK(v.delta.dot(scaled.matrix() * v.delta) == doctest::Approx(l0 * l0).epsilon(1e-12));
        const QuadraticForm again = anchor_scale(scaled, v, l0);
        CHECK(max_rel_diff(again.matrix(), scaled.matrix()) < 1e-12);
    }

    TEST_CASE("rescaled metrics share their Levi-Civita connection") {
        PenaltyField field = [](const Vector& x) {
            Matrix g(2, 2);
            g << std::exp(x[1]), 0.1, 0.1, 1.0 + 0.2 * x[0];
            return g;
        };
        const double alpha = 5.5;
        PenaltyField scaled = [&](const Vector& x) { return Matrix(alpha * field(x)); };
        const StatePoint x0(chart2(), (Vector(2) << 1.0, 0.4).finished());
        const Connection c1 = levi_civita_field(field, x0, Vector::Constant(2, 1e-6));
        const Connection c2 = levi_civita_field(scaled, x0, Vector::Constant(2, 1e-6));
        // Finite differencing limits the agreement here; the exact-input
        // invariance at 1e-12 is covered in the liquidity suite.
        for (int k = 0; k < 2; ++k)
            CHECK(max_rel_diff(c1.lower(k), c2.lower(k)) < 1e-9);
    }

    TEST_CASE("degenerate directions are rejected") {
        Matrix g(2, 2);
        g << 1.0, 0.0, 0.0, 0.0;
        CHECK_THROWS_AS(anchor_scale_factor(g, (Vector(2) << 0.0, 1.0).finished(), 1.0),
                        InvalidInputError);
    }
}

TEST_SUITE("metric_recon.identities") {
    TEST_CASE("vanna projection identity") {
        // Matching the mixed target entry is the same linear statement as
        // the contracted connection equation, as an exact identity.
        for (int trial = 0; trial < 50; ++trial) {
            const Matrix h_bar = random_symmetric(2);
            const Connection c(chart2(), random_symmetric_slices(2));
            const Gradient v(chart2(), random_vector(2));
            const double contracted =
                c.coeff(0, 0, 1) * v.values[0] + c.coeff(1, 0, 1) * v.values[1];
            const double target_sv = h_bar(0, 1) - contracted;
            const QuadraticForm adj = covariant_hessian(
                QuadraticForm(chart2(), h_bar, FormKind::hessian_target), c, v);
            CHECK(std::abs(adj.matrix()(0, 1) - target_sv) < 1e-12);
        }
    }

    TEST_CASE("separable diagonal metric generates no mixed coefficients") {
        PenaltyField field = [](const Vector& x) {
            Matrix g(2, 2);
            g << 1.0 + 0.5 * x[0] * x[0], 0.0, 0.0, 2.0 + std::sin(x[1]);
            return g;
        };
        const Connection c = levi_civita_field(
            field, StatePoint(chart2(), (Vector(2) << 1.1, 0.7).finished()),
            Vector::Constant(2, 1e-6));
        CHECK(std::abs(c.coeff(0, 0, 1)) < 1e-8);
        CHECK(std::abs(c.coeff(1, 0, 1)) < 1e-8);
    }
}

TEST_SUITE("metric_recon.io") {
    TEST_CASE("grid files round trip") {
        const auto dir = std::filesystem::temp_directory_path() / "covgreeks_grid_test";
        std::filesystem::create_directories(dir);
        const auto form_path = (dir / "forms.csv").string();
        const auto conn_path = (dir / "conn.csv").string();

        const auto forms = exp_metric_field(7, 0.02);
        save_form_grid(forms, form_path);
        const auto forms_back = load_form_grid(form_path, chart2());
        CHECK(forms_back.grid.n0 == 7);
        CHECK(forms_back.grid.spacing[0] == doctest::Approx(0.02).epsilon(1e-12));
        for (int node = 0; node < forms.grid.nodes(); ++node)
            CHECK(max_rel_diff(forms.forms[node], forms_back.forms[node]) < 1e-15);

        const auto conn = exp_metric_connection_field(7, 0.02);
        save_connection_grid(conn, conn_path);
        const auto conn_back = load_connection_grid(conn_path, chart2());
        for (int node = 0; node < conn.grid.nodes(); ++node)
            for (int k = 0; k < 2; ++k)
                CHECK(max_rel_diff(conn.coeffs[node][k], conn_back.coeffs[node][k]) < 1e-15);
    }

    TEST_CASE("missing files and ragged rows are reported") {
        CHECK_THROWS_AS(load_form_grid("/nonexistent/grid.csv", chart2()), IoError);
    }
}
