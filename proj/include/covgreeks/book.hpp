#pragma once
#include <string>
#include <tuple>
#include <vector>

#include "covgreeks/liquidity.hpp"

namespace covgreeks {

/// One deal's hedge trade with its book weight.
struct DealHedge {
    std::string id;
    double weight = 1.0;
    Vector trade; // delta-q, m trade units

    DealHedge(std::string id_, double w, Vector t);
};

struct PortfolioCostReport {
    Vector net_trade;                                  // sum w_nu dq_nu
    double total_cost;                                 // 1/2 dq' Lambda dq
    std::vector<double> own_terms;                     // 1/2 w^2 dq' Lambda dq per deal
    std::vector<std::tuple<int, int, double>> cross_terms; // (nu, mu, term), nu < mu
};

/// Net the book trade and decompose the quadratic cost into own and cross
/// terms (the mechanical source of internal crossing).
PortfolioCostReport portfolio_cost(const std::vector<DealHedge>& deals,
                                   const ImpactMatrix& lambda);

struct DealCurvature {
    double weight;
    Gradient gradient;
    QuadraticForm hessian;

    DealCurvature(double w, Gradient g, QuadraticForm h);
};

/// Weighted sum of per-deal covariant Hessians under one book-level
/// connection; equal to adjusting the aggregated (gradient, Hessian) pair.
QuadraticForm portfolio_covariant_hessian(const std::vector<DealCurvature>& deals,
                                          const Connection& conn);

/// kappa(pi + d0) - kappa(pi) = dq_d0' Lambda dq_pi + 1/2 dq_d0' Lambda dq_d0.
double incremental_liquidity_charge(const Vector& book_trade, const Vector& deal_trade,
                                    const ImpactMatrix& lambda);

/// One step of the self-financing wealth recursion with the excess execution
/// cost paid on the rebalance.
double wealth_step(double wealth, const Vector& position, const Vector& prices,
                   const Vector& next_prices, const Vector& next_position,
                   const ImpactMatrix& next_lambda);

} // namespace covgreeks
