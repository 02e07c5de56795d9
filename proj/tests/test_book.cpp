#include <doctest.h>

#include "covgreeks/book.hpp"
#include "helpers.hpp"

using namespace covgreeks;
using namespace covgreeks::testing;

namespace {

Chart chart2() { return Chart::spot_vol(); }

ImpactMatrix identity_lambda(int m) { return ImpactMatrix(Matrix::Identity(m, m)); }

} // namespace

TEST_SUITE("book.netting") {
    TEST_CASE("perfect offset has zero cost and a negative cross term") {
        const Vector q = random_vector(3);
        std::vector<DealHedge> deals = {DealHedge("long", 1.0, q),
                                        DealHedge("short", 1.0, Vector(-q))};
        const auto report = portfolio_cost(deals, identity_lambda(3));
        CHECK(report.total_cost == doctest::Approx(0.0).epsilon(1e-15));
        CHECK(report.net_trade.cwiseAbs().maxCoeff() < 1e-15);
        REQUIRE(report.cross_terms.size() == 1);
        const double own_sum = report.own_terms[0] + report.own_terms[1];
        CHECK(std::get<2>(report.cross_terms[0]) ==
              doctest::Approx(-own_sum).epsilon(1e-13));
    }

    TEST_CASE("single deal has no cross terms") {
        const Vector q = random_vector(2);
        const double w = 1.7;
        const auto report = portfolio_cost({DealHedge("solo", w, q)}, identity_lambda(2));
        CHECK(report.cross_terms.empty());
        CHECK(report.total_cost == doctest::Approx(0.5 * w * w * q.squaredNorm()).epsilon(1e-13));
    }

    TEST_CASE("reinforcing deals: hand decomposition") {
        const Vector q = (Vector(2) << 1.0, 0.0).finished();
        const auto report = portfolio_cost(
            {DealHedge("a", 1.0, q), DealHedge("b", 1.0, q)}, identity_lambda(2));
        CHECK(report.total_cost == doctest::Approx(2.0).epsilon(1e-14));
        CHECK(report.own_terms[0] == doctest::Approx(0.5).epsilon(1e-14));
        CHECK(report.own_terms[1] == doctest::Approx(0.5).epsilon(1e-14));
        CHECK(std::get<2>(report.cross_terms[0]) == doctest::Approx(1.0).epsilon(1e-14));
    }

    TEST_CASE("decomposition identity on random books") {
        for (int trial = 0; trial < 20; ++trial) {
            const int m = 3;
            const int n = 2 + static_cast<int>(uniform(0.0, 18.0));
            const ImpactMatrix lambda(random_spd(m));
            std::vector<DealHedge> deals;
            for (int nu = 0; nu < n; ++nu)
                deals.emplace_back("d" + std::to_string(nu), uniform(-2.0, 2.0),
                                   random_vector(m));
            const auto report = portfolio_cost(deals, lambda);
            double sum = 0.0;
            for (double own : report.own_terms)
                sum += own;
            for (const auto& [nu, mu, term] : report.cross_terms)
                sum += term;
            CHECK(rel_diff(report.total_cost, sum) < 1e-12);
        }
    }

    TEST_CASE("quadratic non-additivity witness") {
        const Vector q = random_vector(2);
        const ImpactMatrix lambda(random_spd(2));
        const auto reinforcing = portfolio_cost(
            {DealHedge("a", 1.0, q), DealHedge("b", 1.0, q)}, lambda);
        const auto standalone = portfolio_cost({DealHedge("a", 1.0, q)}, lambda);
        CHECK(reinforcing.total_cost > 2.0 * standalone.total_cost + 1e-12);
        const auto offsetting = portfolio_cost(
            {DealHedge("a", 1.0, q), DealHedge("b", 1.0, Vector(-0.9 * q))}, lambda);
        CHECK(offsetting.total_cost < 2.0 * standalone.total_cost);
    }
}

TEST_SUITE("book.curvature") {
    TEST_CASE("single unit-weight deal matches the deal-level adjustment") {
        const Connection conn(chart2(), random_symmetric_slices(2));
        const Gradient g(chart2(), random_vector(2));
        const QuadraticForm h(chart2(), random_symmetric(2), FormKind::hessian_target);
        const QuadraticForm book =
            portfolio_covariant_hessian({DealCurvature(1.0, g, h)}, conn);
        const QuadraticForm deal = covariant_hessian(h, conn, g);
        CHECK(max_rel_diff(book.matrix(), deal.matrix()) == 0.0);
    }

    TEST_CASE("opposite deals cancel") {
        const Connection conn(chart2(), random_symmetric_slices(2));
        const Gradient g(chart2(), random_vector(2));
        const QuadraticForm h(chart2(), random_symmetric(2), FormKind::hessian_target);
        const Gradient gm(chart2(), Vector(-g.values));
        const QuadraticForm hm(chart2(), Matrix(-h.matrix()), FormKind::hessian_target);
        const QuadraticForm book = portfolio_covariant_hessian(
            {DealCurvature(1.0, g, h), DealCurvature(1.0, gm, hm)}, conn);
        CHECK(book.matrix().cwiseAbs().maxCoeff() < 1e-15);
    }

    TEST_CASE("sum-then-adjust equals adjust-then-sum") {
        const Connection conn(chart2(), random_symmetric_slices(2));
        std::vector<DealCurvature> deals;
        for (int nu = 0; nu < 3; ++nu)
            deals.emplace_back(uniform(-2.0, 2.0), Gradient(chart2(), random_vector(2)),
                               QuadraticForm(chart2(), random_symmetric(2),
                                             FormKind::hessian_target));
        const Matrix aggregated = portfolio_covariant_hessian(deals, conn).matrix();
        Matrix per_deal = Matrix::Zero(2, 2);
        for (const auto& deal : deals)
            per_deal +=
                deal.weight * covariant_hessian(deal.hessian, conn, deal.gradient).matrix();
        CHECK(max_rel_diff(aggregated, per_deal) < 1e-12);
    }
}

TEST_SUITE("book.incremental") {
    TEST_CASE("empty book reduces to the standalone cost") {
        const Vector d0 = random_vector(2);
        const ImpactMatrix lambda(random_spd(2));
        CHECK(incremental_liquidity_charge(Vector::Zero(2), d0, lambda) ==
              doctest::Approx(0.5 * d0.dot(lambda.lambda * d0)).epsilon(1e-13));
    }

    TEST_CASE("a flattening deal earns a negative charge") {
        const Vector q = random_vector(2);
        const ImpactMatrix lambda(random_spd(2));
        const double charge = incremental_liquidity_charge(q, Vector(-q), lambda);
        CHECK(charge == doctest::Approx(-0.5 * q.dot(lambda.lambda * q)).epsilon(1e-13));
        CHECK(charge < 0.0);
    }

    TEST_CASE("hand value") {
        const Vector pi = (Vector(2) << 1.0, 0.0).finished();
        CHECK(incremental_liquidity_charge(pi, pi, identity_lambda(2)) ==
              doctest::Approx(1.5).epsilon(1e-14));
    }

    TEST_CASE("consistency with the quadratic cost difference") {
        for (int trial = 0; trial < 20; ++trial) {
            const ImpactMatrix lambda(random_spd(3));
            const Vector pi = random_vector(3), d0 = random_vector(3);
            auto kappa = [&](const Vector& q) { return 0.5 * q.dot(lambda.lambda * q); };
            CHECK(rel_diff(incremental_liquidity_charge(pi, d0, lambda),
                           kappa(pi + d0) - kappa(pi)) < 1e-12);
        }
    }
}

TEST_SUITE("book.wealth") {
    TEST_CASE("no rebalance and no move leaves wealth unchanged") {
        const Vector q = random_vector(2), p = random_vector(2);
        CHECK(wealth_step(10.0, q, p, p, q, identity_lambda(2)) == 10.0);
    }

    TEST_CASE("round trips at fixed prices always cost money") {
        const Vector q = random_vector(2);
        const Vector bump = random_vector(2);
        const Vector p = random_vector(2);
        const ImpactMatrix lambda(random_spd(2));
        double y = 5.0;
        y = wealth_step(y, q, p, p, Vector(q + bump), lambda);
        y = wealth_step(y, Vector(q + bump), p, p, q, lambda);
        CHECK(y < 5.0 - 1e-12);
        CHECK(y == doctest::Approx(5.0 - bump.dot(lambda.lambda * bump)).epsilon(1e-12));
    }

    TEST_CASE("zero impact matrix gives the frictionless recursion") {
        const Vector q = random_vector(2);
        const Vector p0 = random_vector(2), p1 = random_vector(2);
        const ImpactMatrix zero(Matrix::Zero(2, 2));
        CHECK(wealth_step(1.0, q, p0, p1, Vector(random_vector(2)), zero) ==
              doctest::Approx(1.0 + q.dot(p1 - p0)).epsilon(1e-13));
    }

    TEST_CASE("telescoping over a path") {
        const int n_steps = 12;
        const int m = 2;
        const ImpactMatrix lambda(random_spd(m));
        std::vector<Vector> prices, positions;
        for (int n = 0; n <= n_steps; ++n) {
            prices.push_back(random_vector(m, 0.5, 2.0));
            positions.push_back(random_vector(m));
        }
        double y = 0.0;
        double gain = 0.0, kappa_sum = 0.0;
        for (int n = 0; n < n_steps; ++n) {
            y = wealth_step(y, positions[n], prices[n], prices[n + 1], positions[n + 1],
                            lambda);
            gain += positions[n].dot(prices[n + 1] - prices[n]);
            const Vector dq = positions[n + 1] - positions[n];
            kappa_sum += 0.5 * dq.dot(lambda.lambda * dq);
        }
        CHECK(std::abs(y - (gain - kappa_sum)) < 1e-10);
    }
}
