#include "covgreeks/liquidity.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>

namespace covgreeks {

namespace {

void check_psd_penalty(const Matrix& g, const std::string& what) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(g, Eigen::EigenvaluesOnly);
    const double norm = es.eigenvalues().cwiseAbs().maxCoeff();
    if (es.eigenvalues().minCoeff() < -defaults::kPsdTol * std::max(norm, 1.0))
        throw NotPositiveDefiniteError(what + ": matrix is not positive semidefinite");
}

double min_eigenvalue(const Matrix& g) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(g, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

double spectral_norm(const Matrix& g) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(g, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

} // namespace

TierSpec::TierSpec(std::vector<double> plateaus_, std::vector<double> transitions_,
                   std::vector<double> widths_)
    : plateaus(std::move(plateaus_)), transitions(std::move(transitions_)),
      widths(std::move(widths_)) {
    if (plateaus.empty())
        throw InvalidInputError("TierSpec: need at least one plateau");
    if (transitions.size() + 1 != plateaus.size() || widths.size() != transitions.size())
        throw InvalidInputError("TierSpec: need J plateaus, J-1 transitions and J-1 widths");
    for (double p : plateaus)
        if (!(p > 0.0))
            throw InvalidInputError("TierSpec: plateaus must be > 0");
    for (size_t j = 1; j < transitions.size(); ++j)
        if (!(transitions[j] > transitions[j - 1]))
            throw InvalidInputError("TierSpec: transitions must be strictly increasing");
    for (double w : widths)
        if (!(w > 0.0))
            throw InvalidInputError("TierSpec: smoothing widths must be > 0");
}

void HedgeInstrumentSpec::validate() const {
    if (!(clip > 0.0))
        throw InvalidInputError("HedgeInstrumentSpec '" + name + "': clip must be > 0");
    if (half_width < 0.0)
        throw InvalidInputError("HedgeInstrumentSpec '" + name + "': width must be >= 0");
    if (width_kind == WidthKind::vol && quote_vega < 0.0)
        throw InvalidInputError("HedgeInstrumentSpec '" + name + "': quote-vega must be >= 0");
}

double HedgeInstrumentSpec::price_half_spread() const {
    return width_kind == WidthKind::vol ? half_spread_from_vol_width(half_width, quote_vega)
                                        : half_width;
}

ImpactMatrix::ImpactMatrix(Matrix lam, std::vector<std::string> units_, std::string bucket_)
    : lambda(std::move(lam)), units(std::move(units_)), bucket(std::move(bucket_)) {
    if (lambda.rows() != lambda.cols())
        throw DimensionError("ImpactMatrix: matrix must be square");
    const double scale = lambda.size() ? lambda.cwiseAbs().maxCoeff() : 0.0;
    if (scale > 0.0 &&
        (lambda - lambda.transpose()).cwiseAbs().maxCoeff() > defaults::kSymmetryTol * scale)
        throw InvalidInputError("ImpactMatrix: matrix must be symmetric");
    lambda = 0.5 * (lambda + lambda.transpose()).eval();
    check_psd_penalty(lambda, "ImpactMatrix");
    if (units.empty())
        units.assign(lambda.rows(), "notional");
}

bool ImpactMatrix::positive_definite(double tol) const {
    return min_eigenvalue(lambda) > tol * std::max(spectral_norm(lambda), 0.0);
}

ImpactMatrix ImpactMatrix::rescaled_units(double unit_size) const {
    if (!(unit_size > 0.0))
        throw InvalidInputError("ImpactMatrix: unit size must be > 0");
    return ImpactMatrix(lambda * (unit_size * unit_size), units, bucket);
}

HedgeResponse::HedgeResponse(Matrix m_) : m(std::move(m_)) {
    if (!m.allFinite())
        throw InvalidInputError("HedgeResponse: entries must be finite");
}

ExposureSpec::ExposureSpec(Matrix b_, Matrix j_e_) : b(std::move(b_)), j_e(std::move(j_e_)) {
    if (b.rows() != j_e.rows())
        throw DimensionError("ExposureSpec: B and J_E must have the same number of "
                             "controlled exposures");
}

FactorPenalty::FactorPenalty(QuadraticForm f, std::string bucket_)
    : form(std::move(f)), bucket(std::move(bucket_)) {
    if (form.kind() != FormKind::penalty)
        throw InvalidInputError("FactorPenalty: underlying form must have kind=penalty");
}

double half_spread_from_vol_width(double vol_half_width, double quote_vega_per_unit) {
    if (vol_half_width < 0.0 || quote_vega_per_unit < 0.0)
        throw InvalidInputError("half_spread_from_vol_width: inputs must be >= 0");
    return vol_half_width * quote_vega_per_unit;
}

double lambda_from_width_clip(double price_half_spread_per_unit, double clip) {
    if (!(clip > 0.0))
        throw InvalidInputError("lambda_from_width_clip: clip must be > 0");
    return 2.0 * price_half_spread_per_unit / clip;
}

double lambda_from_clip_width(double price_half_spread_per_clip, double clip) {
    if (!(clip > 0.0))
        throw InvalidInputError("lambda_from_clip_width: clip must be > 0");
    return 2.0 * price_half_spread_per_clip / (clip * clip);
}

double tiered_lambda(double trade_size, const TierSpec& tiers) {
    const double q = std::abs(trade_size);
    double lam = tiers.plateaus.front();
    for (size_t j = 1; j < tiers.plateaus.size(); ++j) {
        const double step = tiers.plateaus[j] - tiers.plateaus[j - 1];
        const double s = 1.0 / (1.0 + std::exp(-(q - tiers.transitions[j - 1]) /
                                               tiers.widths[j - 1]));
        lam += step * s;
    }
    return lam;
}

double tiered_cost(double trade_size, const TierSpec& tiers) {
    return 0.5 * tiered_lambda(trade_size, tiers) * trade_size * trade_size;
}

ImpactMatrix build_impact_matrix(const std::vector<HedgeInstrumentSpec>& instruments,
                                 const std::string& bucket, double tier_reference) {
    if (instruments.empty())
        throw InvalidInputError("build_impact_matrix: no instruments");
    const int m = static_cast<int>(instruments.size());
    Matrix lam = Matrix::Zero(m, m);
    std::vector<std::string> units;
    for (int r = 0; r < m; ++r) {
        const auto& inst = instruments[r];
        inst.validate();
        if (inst.tiers) {
            // Tiered lambda is a trade-size rule; freeze at a reference size
            // (a multiple of the tier-1 clip) before using it as a matrix.
            lam(r, r) = tiered_lambda(tier_reference * inst.clip, *inst.tiers);
        } else {
            lam(r, r) = lambda_from_width_clip(inst.price_half_spread(), inst.clip);
        }
        units.push_back(inst.unit);
    }
    return ImpactMatrix(std::move(lam), std::move(units), bucket);
}

namespace {

// Shared KKT kernel: returns (Lambda^-1 B', (B Lambda^-1 B')^-1 applied).
struct KktPieces {
    Matrix lam_inv_bt; // m x p
    Eigen::CompleteOrthogonalDecomposition<Matrix> gram; // of B Lambda^-1 B'
};

KktPieces kkt_pieces(const ImpactMatrix& lambda, const Matrix& b, double cond_limit) {
    const int m = lambda.size();
    if (b.cols() != m)
        throw DimensionError("least-cost hedge: B has " + std::to_string(b.cols()) +
                             " columns but Lambda is " + std::to_string(m) + "x" +
                             std::to_string(m));
    if (!lambda.positive_definite())
        throw NotPositiveDefiniteError("least-cost hedge: Lambda must be positive definite");
    Eigen::LLT<Matrix> llt(lambda.lambda);
    if (llt.info() != Eigen::Success)
        throw NotPositiveDefiniteError("least-cost hedge: Cholesky of Lambda failed");
    Matrix lam_inv_bt = llt.solve(b.transpose());
    Matrix gram = b * lam_inv_bt; // B Lambda^-1 B'
    {
        Eigen::JacobiSVD<Matrix> svd(gram);
        const double smin = svd.singularValues().minCoeff();
        const double smax = svd.singularValues().maxCoeff();
        if (smin > 0.0 && smax / smin > cond_limit)
            throw ConditioningError(
                "least-cost hedge: B Lambda^-1 B' is ill-conditioned (condition " +
                std::to_string(smax / smin) +
                "); add a hedge instrument, regularize Lambda or relax the constraints");
    }
    KktPieces out{std::move(lam_inv_bt), Eigen::CompleteOrthogonalDecomposition<Matrix>()};
    out.gram.compute(gram);
    return out;
}

} // namespace

Vector least_cost_trade(const ImpactMatrix& lambda, const Matrix& b, const Vector& c,
                        double cond_limit) {
    if (c.size() != b.rows())
        throw DimensionError("least_cost_trade: constraint vector length does not match B rows");
    KktPieces kkt = kkt_pieces(lambda, b, cond_limit);
    return kkt.lam_inv_bt * kkt.gram.solve(c);
}

HedgeResponse build_hedge_response(const ImpactMatrix& lambda, const ExposureSpec& exposures,
                                   double cond_limit) {
    KktPieces kkt = kkt_pieces(lambda, exposures.b, cond_limit);
    return HedgeResponse(-kkt.lam_inv_bt * kkt.gram.solve(exposures.j_e));
}

FactorPenalty pullback_penalty(const HedgeResponse& response, const ImpactMatrix& lambda,
                               const Chart& chart, const std::string& bucket) {
    if (response.instruments() != lambda.size())
        throw DimensionError("pullback_penalty: hedge response has " +
                             std::to_string(response.instruments()) +
                             " instruments but Lambda is " + std::to_string(lambda.size()) +
                             "x" + std::to_string(lambda.size()));
    Matrix g = response.m.transpose() * lambda.lambda * response.m;
    return FactorPenalty(QuadraticForm(chart, std::move(g), FormKind::penalty), bucket);
}

std::vector<Matrix> g_ell_derivatives(const Matrix& m, const std::vector<Matrix>& dm,
                                      const Matrix& lambda, const std::vector<Matrix>& dlambda) {
    const int d = static_cast<int>(m.cols());
    if (static_cast<int>(dm.size()) != d)
        throw DimensionError("g_ell_derivatives: need one dM slice per coordinate");
    if (!dlambda.empty() && static_cast<int>(dlambda.size()) != d)
        throw DimensionError("g_ell_derivatives: need one dLambda slice per coordinate "
                             "(or none)");
    std::vector<Matrix> out;
    out.reserve(d);
    for (int i = 0; i < d; ++i) {
        Matrix di = dm[i].transpose() * lambda * m + m.transpose() * lambda * dm[i];
        if (!dlambda.empty())
            di += m.transpose() * dlambda[i] * m;
        out.push_back(0.5 * (di + di.transpose()));
    }
    return out;
}

std::vector<Matrix> g_ell_derivatives_fd(const PenaltyField& field, const Vector& x0,
                                         const Vector& steps) {
    const int d = static_cast<int>(x0.size());
    if (steps.size() != d)
        throw DimensionError("g_ell_derivatives_fd: need one step per coordinate");
    for (int i = 0; i < d; ++i)
        if (!(steps[i] > 0.0))
            throw InvalidInputError("g_ell_derivatives_fd: steps must be > 0");
    std::vector<Matrix> out;
    out.reserve(d);
    for (int i = 0; i < d; ++i) {
        Vector xp = x0, xm = x0;
        xp[i] += steps[i];
        xm[i] -= steps[i];
        Matrix di = (field(xp) - field(xm)) / (2.0 * steps[i]);
        out.push_back(0.5 * (di + di.transpose()));
    }
    return out;
}

namespace detail {

// Levi-Civita on raw matrices; shared with the geodesic integrator and grids.
std::vector<Matrix> levi_civita_raw(const Matrix& g, const std::vector<Matrix>& dg,
                                    double pd_tol) {
    const int d = static_cast<int>(g.rows());
    if (static_cast<int>(dg.size()) != d)
        throw DimensionError("levi_civita: need one derivative slice per coordinate");
    const double norm = spectral_norm(g);
    if (!(min_eigenvalue(g) > pd_tol * std::max(norm, 0.0)))
        throw NotPositiveDefiniteError("levi_civita: penalty is singular on this block; "
                                       "apply regularize_penalty first");
    const Matrix ginv = g.inverse();
    std::vector<Matrix> coeffs(d, Matrix::Zero(d, d));
    for (int k = 0; k < d; ++k)
        for (int i = 0; i < d; ++i)
            for (int j = i; j < d; ++j) {
                double sum = 0.0;
                for (int l = 0; l < d; ++l)
                    sum += ginv(k, l) * (dg[i](j, l) + dg[j](i, l) - dg[l](i, j));
                coeffs[k](i, j) = 0.5 * sum;
                coeffs[k](j, i) = coeffs[k](i, j);
            }
    return coeffs;
}

} // namespace detail

Connection levi_civita(const FactorPenalty& g, const std::vector<Matrix>& dg, double pd_tol) {
    return Connection(g.chart(), detail::levi_civita_raw(g.matrix(), dg, pd_tol));
}

Connection levi_civita_field(const PenaltyField& field, const StatePoint& x,
                             const Vector& fd_steps, double pd_tol) {
    const Matrix g = field(x.values);
    const auto dg = g_ell_derivatives_fd(field, x.values, fd_steps);
    return Connection(x.chart, detail::levi_civita_raw(g, dg, pd_tol));
}

double execution_energy(const std::vector<StatePoint>& path, const PenaltyField& field) {
    if (path.size() < 2)
        throw InvalidInputError("execution_energy: need at least two states");
    const Chart& chart = path.front().chart;
    double energy = 0.0;
    for (size_t n = 0; n + 1 < path.size(); ++n) {
        require_same_chart(chart, path[n + 1].chart, "execution_energy", "first state",
                           "state " + std::to_string(n + 1));
        const Vector dx = path[n + 1].values - path[n].values;
        energy += 0.5 * dx.dot(field(path[n].values) * dx);
    }
    return energy;
}

CostSplit equal_cost_split(const TangentMove& move, const FactorPenalty& g, int n_steps) {
    if (n_steps < 1)
        throw InvalidInputError("equal_cost_split: need at least one step");
    require_same_chart(move.chart, g.chart(), "equal_cost_split", "move", "penalty");
    CostSplit out;
    const Vector step = move.delta / n_steps;
    out.steps.assign(n_steps, TangentMove(move.chart, step));
    out.energy = 0.5 / n_steps * move.delta.dot(g.matrix() * move.delta);
    return out;
}

bool rebalance_trigger(const StatePoint& x, const StatePoint& x_last, const FactorPenalty& g,
                       double threshold) {
    require_same_chart(x.chart, x_last.chart, "rebalance_trigger", "state", "last hedge state");
    require_same_chart(x.chart, g.chart(), "rebalance_trigger", "state", "penalty");
    if (!(threshold > 0.0))
        throw InvalidInputError("rebalance_trigger: threshold must be > 0");
    const Vector dx = x.values - x_last.values;
    return 0.5 * dx.dot(g.matrix() * dx) >= threshold;
}

WhitenedMoves whiten_displacement(const FactorPenalty& g, const std::vector<TangentMove>& moves) {
    const Matrix& gm = g.matrix();
    if (!(min_eigenvalue(gm) > defaults::kPdTol * std::max(spectral_norm(gm), 0.0)))
        throw NotPositiveDefiniteError("whiten_displacement: penalty must be positive definite");
    Eigen::LLT<Matrix> llt(gm);
    if (llt.info() != Eigen::Success)
        throw NotPositiveDefiniteError("whiten_displacement: Cholesky failed");
    WhitenedMoves out;
    out.r = llt.matrixL().transpose(); // g = R' R with R upper triangular
    for (const auto& mv : moves) {
        require_same_chart(mv.chart, g.chart(), "whiten_displacement", "move", "penalty");
        out.moves.push_back(out.r * mv.delta);
    }
    return out;
}

std::vector<StatePoint> geodesic_integrate(const PenaltyField& field, const StatePoint& x0,
                                           const Vector& v0, int steps, const Vector& fd_steps) {
    if (steps < 1)
        throw InvalidInputError("geodesic_integrate: need at least one step");
    const int d = x0.chart.dim();
    if (v0.size() != d)
        throw DimensionError("geodesic_integrate: velocity dimension mismatch");
    Vector h = fd_steps;
    if (h.size() == 0) {
        h.resize(d);
        for (int i = 0; i < d; ++i)
            h[i] = 1e-4 * std::max(std::abs(x0.values[i]), 1.0);
    }

    auto acceleration = [&](const Vector& x, const Vector& v) {
        Matrix g = field(x);
        std::vector<Matrix> dg = g_ell_derivatives_fd(field, x, h);
        std::vector<Matrix> c;
        try {
            c = detail::levi_civita_raw(g, dg, defaults::kPdTol);
        } catch (const NotPositiveDefiniteError&) {
            std::string loc = "(";
            for (int i = 0; i < d; ++i)
                loc += std::to_string(x[i]) + (i + 1 < d ? ", " : ")");
            throw NumericError("geodesic_integrate: metric singular at " + loc);
        }
        Vector a(d);
        for (int k = 0; k < d; ++k)
            a[k] = -v.dot(c[k] * v);
        return a;
    };

    std::vector<StatePoint> path;
    path.reserve(steps + 1);
    path.push_back(x0);
    Vector x = x0.values, v = v0;
    const double dt = 1.0 / steps;
    for (int n = 0; n < steps; ++n) {
        const Vector k1x = v, k1v = acceleration(x, v);
        const Vector k2x = v + 0.5 * dt * k1v,
                     k2v = acceleration(x + 0.5 * dt * k1x, v + 0.5 * dt * k1v);
        const Vector k3x = v + 0.5 * dt * k2v,
                     k3v = acceleration(x + 0.5 * dt * k2x, v + 0.5 * dt * k2v);
        const Vector k4x = v + dt * k3v, k4v = acceleration(x + dt * k3x, v + dt * k3v);
        x += dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        path.emplace_back(x0.chart, x);
    }
    return path;
}

FactorPenalty regularize_penalty(const FactorPenalty& g, double eps, const FactorPenalty& g0) {
    if (!(eps > 0.0))
        throw InvalidInputError("regularize_penalty: eps must be > 0");
    require_same_chart(g.chart(), g0.chart(), "regularize_penalty", "penalty", "baseline");
    const Matrix& base = g0.matrix();
    if (!(min_eigenvalue(base) > defaults::kPdTol * std::max(spectral_norm(base), 0.0)))
        throw NotPositiveDefiniteError("regularize_penalty: baseline must be positive definite");
    return FactorPenalty(QuadraticForm(g.chart(), g.matrix() + eps * base, FormKind::penalty),
                         g.bucket);
}

} // namespace covgreeks
