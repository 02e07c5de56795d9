#include "covgreeks/book.hpp"

#include <cmath>

namespace covgreeks {

DealHedge::DealHedge(std::string id_, double w, Vector t)
    : id(std::move(id_)), weight(w), trade(std::move(t)) {
    if (!std::isfinite(weight) || !trade.allFinite())
        throw InvalidInputError("DealHedge '" + id + "': entries must be finite");
}

PortfolioCostReport portfolio_cost(const std::vector<DealHedge>& deals,
                                   const ImpactMatrix& lambda) {
    const int m = lambda.size();
    PortfolioCostReport report;
    report.net_trade = Vector::Zero(m);
    for (const auto& deal : deals) {
        if (deal.trade.size() != m)
            throw DimensionError("portfolio_cost: deal '" + deal.id + "' has " +
                                 std::to_string(deal.trade.size()) + " trade entries, expected " +
                                 std::to_string(m));
        report.net_trade += deal.weight * deal.trade;
    }
    report.total_cost = 0.5 * report.net_trade.dot(lambda.lambda * report.net_trade);
    const int n = static_cast<int>(deals.size());
    for (int nu = 0; nu < n; ++nu) {
        const Vector wq = deals[nu].weight * deals[nu].trade;
        report.own_terms.push_back(0.5 * wq.dot(lambda.lambda * wq));
        for (int mu = nu + 1; mu < n; ++mu)
            report.cross_terms.emplace_back(
                nu, mu, wq.dot(lambda.lambda * (deals[mu].weight * deals[mu].trade)));
    }
    return report;
}

DealCurvature::DealCurvature(double w, Gradient g, QuadraticForm h)
    : weight(w), gradient(std::move(g)), hessian(std::move(h)) {
    require_same_chart(gradient.chart, hessian.chart(), "DealCurvature", "gradient", "hessian");
}

QuadraticForm portfolio_covariant_hessian(const std::vector<DealCurvature>& deals,
                                          const Connection& conn) {
    if (deals.empty())
        throw InvalidInputError("portfolio_covariant_hessian: empty book");
    const Chart chart = conn.chart();
    const int d = chart.dim();
    Matrix agg_h = Matrix::Zero(d, d);
    Vector agg_v = Vector::Zero(d);
    for (const auto& deal : deals) {
        require_same_chart(chart, deal.gradient.chart, "portfolio_covariant_hessian",
                           "connection", "deal gradient");
        agg_h += deal.weight * deal.hessian.matrix();
        agg_v += deal.weight * deal.gradient.values;
    }
    return covariant_hessian(QuadraticForm(chart, std::move(agg_h), FormKind::hessian_target),
                             conn, Gradient(chart, std::move(agg_v)));
}

double incremental_liquidity_charge(const Vector& book_trade, const Vector& deal_trade,
                                    const ImpactMatrix& lambda) {
    if (book_trade.size() != lambda.size() || deal_trade.size() != lambda.size())
        throw DimensionError("incremental_liquidity_charge: trade dimension mismatch");
    return deal_trade.dot(lambda.lambda * book_trade) +
           0.5 * deal_trade.dot(lambda.lambda * deal_trade);
}

double wealth_step(double wealth, const Vector& position, const Vector& prices,
                   const Vector& next_prices, const Vector& next_position,
                   const ImpactMatrix& next_lambda) {
    const int m = next_lambda.size();
    if (position.size() != m || prices.size() != m || next_prices.size() != m ||
        next_position.size() != m)
        throw DimensionError("wealth_step: vector dimension mismatch");
    const Vector rebalance = next_position - position;
    const double kappa = 0.5 * rebalance.dot(next_lambda.lambda * rebalance);
    return wealth + position.dot(next_prices - prices) - kappa;
}

} // namespace covgreeks
