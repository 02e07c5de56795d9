#include <doctest.h>

#include "covgreeks/penalties.hpp"
#include "helpers.hpp"

using namespace covgreeks;
using namespace covgreeks::testing;

namespace {

Chart chart2() { return Chart::spot_vol(); }

FactorPenalty penalty2(const Matrix& g) {
    return FactorPenalty(QuadraticForm(chart2(), g, FormKind::penalty));
}

QuadraticForm covar(const Matrix& m) {
    return QuadraticForm(chart2(), m, FormKind::penalty);
}

} // namespace

TEST_SUITE("penalties.covariance") {
    TEST_CASE("identity covariance inverts to the identity") {
        const FactorPenalty g = covariance_penalty(covar(Matrix::Identity(2, 2)));
        CHECK(max_rel_diff(g.matrix(), Matrix::Identity(2, 2)) < 1e-14);
    }

    TEST_CASE("diagonal hand inverse") {
        Matrix xi(2, 2);
        xi << 4.0, 0.0, 0.0, 1.0;
        const FactorPenalty g = covariance_penalty(covar(xi));
        CHECK(g.matrix()(0, 0) == doctest::Approx(0.25).epsilon(1e-14));
        CHECK(g.matrix()(1, 1) == doctest::Approx(1.0).epsilon(1e-14));
    }

    TEST_CASE("eigen floor caps the inverse of a singular covariance") {
        Matrix xi(2, 2);
        xi << 1.0, 1.0, 1.0, 1.0; // rank one, lambda_max = 2
        const double eps = 1e-4;
        const FactorPenalty g = covariance_penalty(covar(xi), 0.0, eps);
        Eigen::SelfAdjointEigenSolver<Matrix> es(g.matrix());
        CHECK(es.eigenvalues().minCoeff() > 0.0);
        CHECK(es.eigenvalues().maxCoeff() <= 1.0 / (eps * 2.0) * (1 + 1e-12));
    }

    TEST_CASE("inverse property on a PD covariance") {
        const Matrix xi = random_spd(3);
        Chart c3("c3", {"a", "b", "c"});
        const FactorPenalty g =
            covariance_penalty(QuadraticForm(c3, xi, FormKind::penalty));
        CHECK(max_rel_diff(Matrix(g.matrix() * xi), Matrix::Identity(3, 3)) < 1e-10);
    }

    TEST_CASE("shrinkage interpolates toward the scaled identity") {
        const Matrix xi = random_spd(2);
        const FactorPenalty g = covariance_penalty(covar(xi), 1.0, 0.0);
        const double target = xi.trace() / 2.0;
        CHECK(max_rel_diff(g.matrix(), Matrix(Matrix::Identity(2, 2) / target)) < 1e-12);
    }

    TEST_CASE("singular covariance without regularization is an error") {
        Matrix xi(2, 2);
        xi << 1.0, 1.0, 1.0, 1.0;
        CHECK_THROWS_AS(covariance_penalty(covar(xi), 0.0, 0.0), SingularError);
    }
}

TEST_SUITE("penalties.gap") {
    TEST_CASE("single stress is rank one") {
        const FactorPenalty g0 = penalty2(Matrix::Identity(2, 2));
        const StressMove stress(TangentMove(chart2(), random_vector(2)), 1.0, false);
        const FactorPenalty g = gap_penalty({stress}, g0);
        Eigen::SelfAdjointEigenSolver<Matrix> es(g.matrix());
        CHECK(es.eigenvalues()[0] < 1e-12 * es.eigenvalues()[1]);
    }

    TEST_CASE("orthogonal moves collect no penalty") {
        const FactorPenalty g0 = penalty2(Matrix::Identity(2, 2));
        const Vector dir = (Vector(2) << 1.0, 0.0).finished();
        const FactorPenalty g = gap_penalty({StressMove(TangentMove(chart2(), dir))}, g0);
        const Vector perp = (Vector(2) << 0.0, 1.0).finished();
        CHECK(perp.dot(g.matrix() * perp) < 1e-15);
    }

    TEST_CASE("hand value for a joint spot-vol stress") {
        // l = g0 dx = dx under the identity, penalty = (l . dx)^2
        //   = (0.02^2 + 0.003^2)^2.
        const FactorPenalty g0 = penalty2(Matrix::Identity(2, 2));
        const Vector stress = (Vector(2) << 0.02, 0.003).finished();
        const FactorPenalty g = gap_penalty({StressMove(TangentMove(chart2(), stress))}, g0);
        const double expected = std::pow(0.02 * 0.02 + 0.003 * 0.003, 2);
        CHECK(stress.dot(g.matrix() * stress) == doctest::Approx(expected).epsilon(1e-12));
        CHECK(expected == doctest::Approx(1.67281e-7).epsilon(1e-5));
    }

    TEST_CASE("penalty identity for weighted stress sets") {
        const FactorPenalty g0 = penalty2(random_spd(2));
        std::vector<StressMove> stresses;
        for (int s = 0; s < 4; ++s)
            stresses.emplace_back(TangentMove(chart2(), random_vector(2)),
                                  uniform(0.0, 2.0), false);
        const FactorPenalty g = gap_penalty(stresses, g0);
        for (int trial = 0; trial < 20; ++trial) {
            const Vector dx = random_vector(2);
            double expected = 0.0;
            for (const auto& s : stresses) {
                const Vector l = g0.matrix() * s.direction.delta;
                expected += s.weight * std::pow(l.dot(dx), 2);
            }
            CHECK(rel_diff(dx.dot(g.matrix() * dx), expected) < 1e-12);
        }
    }

    TEST_CASE("normalization uses the g0 norm of the stress") {
        const FactorPenalty g0 = penalty2(random_spd(2));
        const Vector dir = random_vector(2);
        const FactorPenalty raw =
            gap_penalty({StressMove(TangentMove(chart2(), dir), 1.0, false)}, g0);
        const FactorPenalty normed =
            gap_penalty({StressMove(TangentMove(chart2(), dir), 1.0, true)}, g0);
        const double norm2 = dir.dot(g0.matrix() * dir);
        CHECK(max_rel_diff(raw.matrix(), Matrix(norm2 * normed.matrix())) < 1e-12);
    }
}

TEST_SUITE("penalties.sensitivity") {
    TEST_CASE("zero jacobian gives the zero penalty") {
        const FactorPenalty g =
            sensitivity_penalty(SensitivityBlock(Matrix::Zero(3, 2), Matrix::Identity(3, 3)),
                                chart2());
        CHECK(g.matrix().cwiseAbs().maxCoeff() == 0.0);
    }

    TEST_CASE("orthonormal rows with identity weights give a projector") {
        Matrix j(2, 2);
        j << 1.0, 0.0, 0.0, 1.0;
        const FactorPenalty g =
            sensitivity_penalty(SensitivityBlock(j, Matrix::Identity(2, 2)), chart2());
        Eigen::SelfAdjointEigenSolver<Matrix> es(g.matrix());
        for (int i = 0; i < 2; ++i)
            CHECK(std::abs(es.eigenvalues()[i] - 1.0) < 1e-14);
    }

    TEST_CASE("rank equals the rank of the weighted jacobian") {
        Chart c4("c4", {"a", "b", "c", "d"});
        Matrix j = random_matrix(3, 4);
        j.row(2) = j.row(0) + j.row(1); // rank 2
        const FactorPenalty g = sensitivity_penalty(
            SensitivityBlock(j, Matrix::Identity(3, 3)), c4);
        Eigen::JacobiSVD<Matrix> svd(g.matrix());
        int rank = 0;
        for (int i = 0; i < svd.singularValues().size(); ++i)
            if (svd.singularValues()[i] > 1e-10 * svd.singularValues().maxCoeff())
                ++rank;
        Eigen::JacobiSVD<Matrix> svd_j(j);
        int rank_j = 0;
        for (int i = 0; i < svd_j.singularValues().size(); ++i)
            if (svd_j.singularValues()[i] > 1e-10 * svd_j.singularValues().maxCoeff())
                ++rank_j;
        CHECK(rank == rank_j);
        CHECK(rank == 2);
    }

    TEST_CASE("indefinite weights are rejected") {
        Matrix w(2, 2);
        w << 1.0, 0.0, 0.0, -1.0;
        CHECK_THROWS_AS(SensitivityBlock(random_matrix(2, 2), w), NotPositiveDefiniteError);
    }
}

TEST_SUITE("penalties.combine") {
    TEST_CASE("single unit-weight term is the identity map") {
        const Matrix g = random_spd(2);
        const FactorPenalty out = combine_penalties({{1.0, penalty2(g)}});
        CHECK(max_rel_diff(out.matrix(), g) == 0.0);
    }

    TEST_CASE("zero weight drops a term") {
        const Matrix g1 = random_spd(2);
        const Matrix g2 = random_spd(2);
        const FactorPenalty out =
            combine_penalties({{1.0, penalty2(g1)}, {0.0, penalty2(g2)}});
        CHECK(max_rel_diff(out.matrix(), g1) < 1e-14);
    }

    TEST_CASE("PSD closure under random nonnegative weights") {
        for (int trial = 0; trial < 20; ++trial) {
            const FactorPenalty out = combine_penalties(
                {{uniform(0.0, 3.0), penalty2(random_spd(2))},
                 {uniform(0.0, 3.0), penalty2(random_spd(2))}});
            Eigen::SelfAdjointEigenSolver<Matrix> es(out.matrix());
            CHECK(es.eigenvalues().minCoeff() >=
                  -1e-10 * es.eigenvalues().cwiseAbs().maxCoeff());
        }
    }

    TEST_CASE("linear in each weight") {
        const Matrix g1 = random_spd(2), g2 = random_spd(2);
        const double eta = 1.7;
        const FactorPenalty a = combine_penalties({{eta, penalty2(g1)}, {1.0, penalty2(g2)}});
        const FactorPenalty b = combine_penalties({{1.0, penalty2(g1)}, {1.0, penalty2(g2)}});
        CHECK(max_rel_diff(Matrix(a.matrix() - b.matrix()), Matrix((eta - 1.0) * g1)) < 1e-12);
    }

    TEST_CASE("negative weights are rejected") {
        CHECK_THROWS_AS(combine_penalties({{-0.1, penalty2(random_spd(2))}}),
                        InvalidInputError);
    }

    TEST_CASE("match ratio is reported, not applied") {
        const Matrix g1 = random_spd(2), g2 = random_spd(2);
        const TangentMove ref(chart2(), random_vector(2));
        const double ratio = penalty_match_ratio(penalty2(g1), penalty2(g2), ref);
        CHECK(ratio == doctest::Approx(ref.delta.dot(g1 * ref.delta) /
                                       ref.delta.dot(g2 * ref.delta))
                           .epsilon(1e-13));
    }
}
