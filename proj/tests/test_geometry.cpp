#include <doctest.h>

#include "covgreeks/geometry.hpp"
#include "helpers.hpp"

using namespace covgreeks;
using namespace covgreeks::testing;

namespace {

Chart chart2() { return Chart::spot_vol(); }

Gradient grad2(double a, double b) {
    Vector v(2);
    v << a, b;
    return Gradient(chart2(), v);
}

TangentMove move2(double a, double b) {
    Vector v(2);
    v << a, b;
    return TangentMove(chart2(), v);
}

QuadraticForm form2(double ss, double sv, double vv,
                    FormKind kind = FormKind::hessian_target) {
    Matrix m(2, 2);
    m << ss, sv, sv, vv;
    return QuadraticForm(chart2(), m, kind);
}

// 1-D forward / log-forward charts for the coordinate-change examples.
Chart fwd1() { return Chart("fwd1", {"F"}, {"price"}); }
Chart logf1() { return Chart("logf1", {"z"}, {"log_price"}); }

ChartMapAtPoint fwd_to_log_1d(double f) {
    Matrix jac(1, 1);
    jac << f; // dF/dz = F
    std::vector<Matrix> second{Matrix::Constant(1, 1, f)};
    return ChartMapAtPoint(fwd1(), logf1(), jac, second);
}

} // namespace

TEST_SUITE("geometry.types") {
    TEST_CASE("chart invariants") {
        CHECK_THROWS_AS(Chart("bad", {}), InvalidInputError);
        CHECK_THROWS_AS(Chart("dup", {"S", "S"}), InvalidInputError);
        CHECK(Chart::spot_vol().tradable() == 0);
        CHECK(Chart::log_forward_vol().tradable() == -1);
        CHECK(Chart::smile_state().dim() == 4);
    }

    TEST_CASE("state point positivity") {
        Vector v(2);
        v << 1.0, 9.0;
        CHECK_NOTHROW(StatePoint(chart2(), v));
        v << -1.0, 9.0;
        CHECK_THROWS_AS(StatePoint(chart2(), v), InvalidInputError);
        CHECK_THROWS_AS(StatePoint(chart2(), Vector::Ones(3)), DimensionError);
    }

    TEST_CASE("quadratic form symmetrization") {
        Matrix m(2, 2);
        m << 1.0, 0.5 + 1e-10, 0.5, 2.0;
        QuadraticForm q(chart2(), m, FormKind::hessian_target);
        CHECK(q.matrix()(0, 1) == q.matrix()(1, 0)); // exact after repair

        m(0, 1) = 0.5 + 1e-6; // beyond the 1e-8 relative tolerance
        CHECK_THROWS_AS(QuadraticForm(chart2(), m, FormKind::hessian_target),
                        InvalidInputError);
    }

    TEST_CASE("penalty forms must be PSD") {
        CHECK_THROWS_AS(form2(1.0, 0.0, -1.0, FormKind::penalty), NotPositiveDefiniteError);
        CHECK_NOTHROW(form2(1.0, 0.2, 1.0, FormKind::penalty));
        // Indefinite is fine for hessian targets.
        CHECK_NOTHROW(form2(1.0, 0.0, -1.0));
    }

    TEST_CASE("connection storage is exactly torsion free") {
        auto slices = random_symmetric_slices(3);
        slices[1](2, 0) += 1e-11; // tiny asymmetry gets repaired exactly
        Chart c3("c3", {"a", "b", "c"});
        Connection conn(c3, slices);
        for (int k = 0; k < 3; ++k)
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j)
                    CHECK(conn.coeff(k, i, j) == conn.coeff(k, j, i));

        slices[0](0, 1) += 1.0;
        CHECK_THROWS_AS(Connection(c3, slices), InvalidInputError);
    }

    TEST_CASE("chart map rejects singular jacobians") {
        Matrix jac = Matrix::Zero(2, 2);
        jac(0, 0) = 1.0;
        CHECK_THROWS_AS(ChartMapAtPoint(chart2(), Chart::forward_vol(), jac, {}),
                        SingularError);
    }
}

TEST_SUITE("geometry.covariant_hessian") {
    TEST_CASE("zero connection is the identity") {
        const QuadraticForm h = form2(0.03, -0.01, 0.2);
        const Gradient v = grad2(0.5, 0.2);
        const QuadraticForm adj = covariant_hessian(h, Connection::zero(chart2()), v);
        CHECK(max_rel_diff(adj.matrix(), h.matrix()) == 0.0);
    }

    TEST_CASE("matching condition reproduces the target") {
        // Solve C^k_ij V_k = V_ij - H*_ij with a rank-one construction
        // C^k_ij = V_k (V_ij - H*_ij) / |V|^2, then verify the adjusted
        // Hessian equals the target entrywise.
        const QuadraticForm h = form2(0.03, -0.01, 0.2);
        const QuadraticForm target = form2(-0.05, 0.04, 0.11);
        const Gradient v = grad2(0.5, 0.2);
        const double v2 = v.values.squaredNorm();
        std::vector<Matrix> slices;
        for (int k = 0; k < 2; ++k)
            slices.push_back((v.values[k] / v2) * (h.matrix() - target.matrix()));
        const Connection conn(chart2(), slices);
        const QuadraticForm adj = covariant_hessian(h, conn, v);
        CHECK(max_rel_diff(adj.matrix(), target.matrix()) < 1e-14);
    }

    TEST_CASE("hand contraction in d=2") {
        // V = (0.5, 0.2), V_SS = 0.03, C^S_SS = 0.1, C^sigma_SS = 0.4:
        // adjusted SS entry is 0.03 - 0.05 - 0.08 = -0.10.
        std::vector<Matrix> slices(2, Matrix::Zero(2, 2));
        slices[0](0, 0) = 0.1;
        slices[1](0, 0) = 0.4;
        const Connection conn(chart2(), slices);
        const QuadraticForm adj =
            covariant_hessian(form2(0.03, 0.0, 0.0), conn, grad2(0.5, 0.2));
        CHECK(adj.matrix()(0, 0) == doctest::Approx(-0.10).epsilon(1e-12));
    }

    TEST_CASE("chart mismatch names the offender") {
        const QuadraticForm h = form2(0.03, -0.01, 0.2);
        const Gradient v(Chart::forward_vol(), random_vector(2));
        CHECK_THROWS_WITH_AS(covariant_hessian(h, Connection::zero(chart2()), v),
                             doctest::Contains("gradient"), ChartMismatchError);
    }

    TEST_CASE("linear in the (hessian, gradient) pair") {
        const Connection conn(chart2(), random_symmetric_slices(2));
        const QuadraticForm h1 = form2(0.3, 0.1, -0.4), h2 = form2(-0.2, 0.05, 0.6);
        const Gradient v1 = grad2(0.5, -0.7), v2 = grad2(-0.1, 0.9);
        const double a = 1.7, b = -0.6;

        const Matrix lhs = covariant_hessian(
                               QuadraticForm(chart2(),
                                             a * h1.matrix() + b * h2.matrix(),
                                             FormKind::hessian_target),
                               conn, Gradient(chart2(), a * v1.values + b * v2.values))
                               .matrix();
        const Matrix rhs = a * covariant_hessian(h1, conn, v1).matrix() +
                           b * covariant_hessian(h2, conn, v2).matrix();
        CHECK(max_rel_diff(lhs, rhs) < 1e-13);
    }
}

TEST_SUITE("geometry.predictor") {
    TEST_CASE("zero move gives zero") {
        CHECK(quadratic_predictor(grad2(1.0, 2.0), form2(0.3, 0.1, 0.2), move2(0.0, 0.0)) ==
              0.0);
    }

    TEST_CASE("pure first order") {
        CHECK(quadratic_predictor(grad2(1.0, 2.0), form2(0.0, 0.0, 0.0), move2(0.1, 0.2)) ==
              doctest::Approx(0.5).epsilon(1e-14));
    }

    TEST_CASE("penalty equal to the quadratic term cancels it") {
        const QuadraticForm q = form2(1.0, 0.2, 0.7, FormKind::penalty);
        const QuadraticForm h = form2(1.0, 0.2, 0.7);
        const double p = quadratic_predictor(grad2(0.0, 0.0), h, move2(0.3, -0.4), q);
        CHECK(p == doctest::Approx(0.0).epsilon(1e-15));
    }

    TEST_CASE("linear in gradient and quadratic form") {
        const TangentMove dx = move2(0.12, -0.07);
        const QuadraticForm h1 = form2(0.3, 0.1, -0.4), h2 = form2(-0.2, 0.0, 0.6);
        const Gradient g1 = grad2(0.4, -0.3), g2 = grad2(-1.0, 0.8);
        const double a = 2.5, b = -1.25;
        const double lhs = quadratic_predictor(
            Gradient(chart2(), a * g1.values + b * g2.values),
            QuadraticForm(chart2(), a * h1.matrix() + b * h2.matrix(),
                          FormKind::hessian_target),
            dx);
        const double rhs = a * quadratic_predictor(g1, h1, dx) +
                           b * quadratic_predictor(g2, h2, dx);
        CHECK(rel_diff(lhs, rhs) < 1e-14);
    }

    TEST_CASE("penalty kind is enforced") {
        CHECK_THROWS_AS(quadratic_predictor(grad2(0, 0), form2(1, 0, 1), move2(1, 1),
                                            form2(1, 0, 1)),
                        InvalidInputError);
    }
}

TEST_SUITE("geometry.transforms") {
    TEST_CASE("identity map leaves everything unchanged") {
        const auto map = ChartMapAtPoint::identity(chart2());
        const Gradient g = grad2(0.3, -0.8);
        CHECK((transform_gradient(g, map).values - g.values).cwiseAbs().maxCoeff() == 0.0);
        const QuadraticForm q = form2(1.0, 0.2, 0.4);
        CHECK(max_rel_diff(transform_quadratic_form(q, map).matrix(), q.matrix()) == 0.0);
    }

    TEST_CASE("1-D log-forward gradient: V_z = F V_F") {
        const double f = 2.0;
        const Gradient vf(fwd1(), Vector::Constant(1, 3.0));
        const Gradient vz = transform_gradient(vf, fwd_to_log_1d(f));
        CHECK(vz.values[0] == doctest::Approx(6.0).epsilon(1e-14));
    }

    TEST_CASE("permutation jacobian permutes the entries") {
        Chart src("p2", {"a", "b"});
        Chart dst("q2", {"u", "v"});
        Matrix jac(2, 2);
        jac << 0, 1, 1, 0;
        ChartMapAtPoint map(src, dst, jac, {});
        const Gradient g(src, (Vector(2) << 3.0, -5.0).finished());
        const Vector t = transform_gradient(g, map).values;
        CHECK(t[0] == -5.0);
        CHECK(t[1] == 3.0);
    }

    TEST_CASE("log-forward block transport of a quadratic target") {
        const double f = 1.37;
        const auto map = ChartMapAtPoint::forward_to_log_forward(f);
        Matrix h(2, 2);
        h << 0.4, -0.13, -0.13, 0.7;
        const QuadraticForm src(Chart::forward_vol(), h, FormKind::hessian_target);
        const Matrix t = transform_quadratic_form(src, map).matrix();
        CHECK(t(0, 0) == doctest::Approx(f * f * h(0, 0)).epsilon(1e-13));
        CHECK(t(0, 1) == doctest::Approx(f * h(0, 1)).epsilon(1e-13));
        CHECK(t(1, 1) == doctest::Approx(h(1, 1)).epsilon(1e-13));
    }

    TEST_CASE("scaling jacobian scales a form by c^2") {
        Chart src("s2", {"a", "b"});
        Chart dst("t2", {"u", "v"});
        const double c = 1.8;
        ChartMapAtPoint map(src, dst, c * Matrix::Identity(2, 2), {});
        const Matrix h = random_symmetric(2);
        const QuadraticForm q(src, h, FormKind::hessian_target);
        CHECK(max_rel_diff(transform_quadratic_form(q, map).matrix(), Matrix(c * c * h)) <
              1e-14);
    }

    TEST_CASE("1-D log-forward connection coefficient") {
        // C^F_FF = 0.3 at F = 2 becomes F C^F_FF + 1 = 1.6.
        const Connection src(fwd1(), {Matrix::Constant(1, 1, 0.3)});
        const Connection dst = transform_connection(src, fwd_to_log_1d(2.0));
        CHECK(dst.coeff(0, 0, 0) == doctest::Approx(1.6).epsilon(1e-13));
    }

    TEST_CASE("2-D log-forward connection components") {
        const double f = 1.23;
        const auto map = ChartMapAtPoint::forward_to_log_forward(f);
        auto slices = random_symmetric_slices(2);
        const Connection src(Chart::forward_vol(), slices);
        const Connection dst = transform_connection(src, map);
        // C^sigma_zz = F^2 C^sigma_FF and C^z_sigmasigma = C^F_sigmasigma / F.
        CHECK(dst.coeff(1, 0, 0) ==
              doctest::Approx(f * f * src.coeff(1, 0, 0)).epsilon(1e-12));
        CHECK(dst.coeff(0, 1, 1) == doctest::Approx(src.coeff(0, 1, 1) / f).epsilon(1e-12));
        // And the z-block picks up the inhomogeneous +1 term.
        CHECK(dst.coeff(0, 0, 0) ==
              doctest::Approx(f * src.coeff(0, 0, 0) + 1.0).epsilon(1e-12));
    }

    TEST_CASE("zero connection stays zero under a linear map") {
        Chart src("l2", {"a", "b"});
        Chart dst("m2", {"u", "v"});
        ChartMapAtPoint map(src, dst, random_invertible(2), {});
        const Connection dst_conn = transform_connection(Connection::zero(src), map);
        CHECK(dst_conn.max_abs() == 0.0);
    }

    TEST_CASE("inverse and composition round trips") {
        const double f = 1.41;
        const auto fwd = ChartMapAtPoint::spot_to_forward(1.02);
        const auto log = ChartMapAtPoint::forward_to_log_forward(f);
        const auto chain = fwd.then(log);
        const auto back = chain.inverse();

        const Gradient g(Chart::spot_vol(), random_vector(2));
        const Gradient round = transform_gradient(transform_gradient(g, chain), back);
        CHECK((round.values - g.values).cwiseAbs().maxCoeff() < 1e-13);

        const Connection c(Chart::spot_vol(), random_symmetric_slices(2));
        const Connection round_c = transform_connection(transform_connection(c, chain), back);
        for (int k = 0; k < 2; ++k)
            CHECK(max_rel_diff(round_c.lower(k), c.lower(k)) < 1e-12);
    }
}

TEST_SUITE("geometry.invariance") {
    TEST_CASE("identity map residual is zero") {
        const double r = predictor_invariance_residual(
            grad2(0.4, -0.2), form2(0.3, 0.05, 0.6),
            Connection(chart2(), random_symmetric_slices(2)), move2(0.01, 0.5),
            ChartMapAtPoint::identity(chart2()));
        CHECK(r < 1e-15);
    }

    TEST_CASE("log-forward chart, random 2-D inputs") {
        for (int trial = 0; trial < 100; ++trial) {
            const double f = uniform(0.5, 3.0);
            const auto map = ChartMapAtPoint::forward_to_log_forward(f);
            const Gradient g(Chart::forward_vol(), random_vector(2));
            const QuadraticForm h(Chart::forward_vol(), random_symmetric(2),
                                  FormKind::hessian_target);
            const Connection c(Chart::forward_vol(), random_symmetric_slices(2));
            const TangentMove dx(Chart::forward_vol(), random_vector(2, -0.1, 0.1));
            const double p = quadratic_predictor(g, covariant_hessian(h, c, g), dx);
            CHECK(predictor_invariance_residual(g, h, c, dx, map) <=
                  1e-10 * (1.0 + std::abs(p)));
        }
    }

    TEST_CASE("adjusted coefficients differ while the scalar agrees") {
        const double f = 2.0; // F != 1 so the zz coefficient differs
        const auto map = ChartMapAtPoint::forward_to_log_forward(f);
        const Gradient g(Chart::forward_vol(), (Vector(2) << 0.7, 0.2).finished());
        const QuadraticForm h(Chart::forward_vol(), random_symmetric(2),
                              FormKind::hessian_target);
        const Connection c(Chart::forward_vol(), random_symmetric_slices(2));
        const QuadraticForm adj = covariant_hessian(h, c, g);
        const QuadraticForm adj_t = transform_quadratic_form(adj, map);
        CHECK(adj_t.matrix()(0, 0) ==
              doctest::Approx(f * f * adj.matrix()(0, 0)).epsilon(1e-12));
        CHECK(std::abs(adj_t.matrix()(0, 0) - adj.matrix()(0, 0)) > 1e-6);
        const TangentMove dx(Chart::forward_vol(), random_vector(2, -0.2, 0.2));
        CHECK(predictor_invariance_residual(g, h, c, dx, map) < 1e-12);
    }

    TEST_CASE("ordinary Hessian is not tensorial (1-D witness)") {
        const double f = 2.0, vf = 3.0, vff = 0.4;
        const Gradient g(fwd1(), Vector::Constant(1, vf));
        const QuadraticForm h(fwd1(), Matrix::Constant(1, 1, vff), FormKind::hessian_target);
        const auto map = fwd_to_log_1d(f);
        const double vzz = transform_ordinary_hessian(h, g, map).matrix()(0, 0);
        CHECK(vzz - f * f * vff == doctest::Approx(f * vf).epsilon(1e-13)); // extra term F V_F
        CHECK(std::abs(vzz - f * f * vff) > 1.0);
    }

    TEST_CASE("covariant Hessian transforms tensorially (random charts)") {
        for (int trial = 0; trial < 50; ++trial) {
            const int d = 3;
            Chart src("src3", {"a", "b", "c"});
            Chart dst("dst3", {"u", "v", "w"});
            ChartMapAtPoint map(src, dst, random_invertible(d), random_symmetric_slices(d));

            const Gradient g(src, random_vector(d));
            const QuadraticForm h(src, random_symmetric(d), FormKind::hessian_target);
            const Connection c(src, random_symmetric_slices(d));

            const Matrix lhs =
                transform_quadratic_form(covariant_hessian(h, c, g), map).matrix();
            const Matrix rhs = covariant_hessian(transform_ordinary_hessian(h, g, map),
                                                 transform_connection(c, map),
                                                 transform_gradient(g, map))
                                   .matrix();
            CHECK(max_rel_diff(lhs, rhs) < 1e-10);
        }
    }
}

TEST_SUITE("geometry.generator") {
    TEST_CASE("zero connection returns the drift") {
        const QuadraticForm a = form2(1.0, 0.1, 0.5, FormKind::penalty);
        const auto out =
            generator_drift_adjustment(grad2(0.3, -0.2), a, Connection::zero(chart2()));
        CHECK(out.adjusted_drift.values[0] == 0.3);
        CHECK(out.adjusted_drift.values[1] == -0.2);
        CHECK(!out.fx_residual.has_value());
    }

    TEST_CASE("identity covariance with diagonal connection") {
        // a = I and C^k_ij = delta_ij c^k gives b^k - (d/2) c^k.
        const int d = 3;
        Chart c3("g3", {"a", "b", "c"});
        const Vector ck = random_vector(d);
        std::vector<Matrix> slices;
        for (int k = 0; k < d; ++k)
            slices.push_back(ck[k] * Matrix::Identity(d, d));
        const Connection conn(c3, slices);
        const Gradient b(c3, random_vector(d));
        const QuadraticForm a(c3, Matrix::Identity(d, d), FormKind::penalty);
        const auto out = generator_drift_adjustment(b, a, conn);
        for (int k = 0; k < d; ++k)
            CHECK(out.adjusted_drift.values[k] ==
                  doctest::Approx(b.values[k] - 0.5 * d * ck[k]).epsilon(1e-13));
    }

    TEST_CASE("fx martingale residual vanishes for a tuned drift") {
        const double s = 1.2, rd = 0.03, rf = 0.01;
        const Connection conn(chart2(), random_symmetric_slices(2));
        const QuadraticForm a(chart2(), random_spd(2), FormKind::penalty);
        // Tune b so the adjusted tradable drift is exactly (rd - rf) S.
        Vector b = Vector::Zero(2);
        b[0] = (rd - rf) * s + 0.5 * (a.matrix().cwiseProduct(conn.lower(0))).sum();
        const StatePoint x(chart2(), (Vector(2) << s, 9.0).finished());
        const auto out = generator_drift_adjustment(Gradient(chart2(), b), a, conn, x, rd, rf);
        REQUIRE(out.fx_residual.has_value());
        CHECK(std::abs(*out.fx_residual) < 1e-14);
    }

    TEST_CASE("non-PSD covariance is rejected") {
        CHECK_THROWS_AS(generator_drift_adjustment(grad2(0, 0), form2(1.0, 0.0, -1.0),
                                                   Connection::zero(chart2())),
                        NotPositiveDefiniteError);
    }
}
