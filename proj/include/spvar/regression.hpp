#pragma once

#include <spvar/core.hpp>
#include <spvar/var_model.hpp>

#include <cmath>
#include <optional>
#include <vector>

namespace spvar {

/// Response and lagged predictor matrices for a VAR(L) regression.
/// Row r corresponds to time t = L + r; predictor column (l - 1) * k + j
/// holds X_j(t - l).
struct LaggedDesign
{
    Matrix predictors; // N x kL
    Matrix responses;  // N x k
    Index k = 0;
    Index lags = 0;

    Index n_effective() const noexcept { return responses.rows(); }
    Index n_predictors() const noexcept { return predictors.cols(); }
};

inline LaggedDesign make_lagged_design(const TimeSeriesPanel& panel, Index lags)
{
    if (lags < 1) throw ValidationError("lag order must be at least 1");
    if (panel.has_missing())
        throw PreprocessingRequiredError("panel has missing values; interpolate before fitting");
    const Index T = panel.n_times(), k = panel.n_series();
    if (T <= lags) throw InsufficientDataError("need more than L observations to fit a VAR(L)");
    const Index n = T - lags;
    LaggedDesign d;
    d.k = k;
    d.lags = lags;
    d.responses = panel.values().bottomRows(n);
    d.predictors.resize(n, k * lags);
    for (Index l = 1; l <= lags; ++l) d.predictors.middleCols((l - 1) * k, k) = panel.values().middleRows(lags - l, n);
    return d;
}

/// Sufficient statistics of the per-response least-squares problems:
/// gram = X^T X / N and column i of xty = X^T Y_i / N.
struct GramSystem
{
    Matrix gram;
    Matrix xty;
    Index n_effective = 0;
    Index k = 0;
    Index lags = 0;

    Index n_predictors() const noexcept { return gram.rows(); }
    Index n_responses() const noexcept { return xty.cols(); }
    Index predictor_source(Index flat) const noexcept { return flat % k; }
    Index predictor_lag(Index flat) const noexcept { return flat / k + 1; }
    static Index flat_index(Index source, Index lag, Index k) noexcept { return (lag - 1) * k + source; }
};

/// Gram system of design rows [begin, begin + count).
inline GramSystem gram_from_rows(const LaggedDesign& d, Index begin, Index count)
{
    if (begin < 0 || count < 1 || begin + count > d.n_effective())
        throw ShapeError("design row range out of bounds");
    const Index p = d.n_predictors();
    const double inv_n = 1.0 / static_cast<double>(count);
    GramSystem g;
    g.k = d.k;
    g.lags = d.lags;
    g.n_effective = count;
    auto x = d.predictors.middleRows(begin, count);
    Matrix lower = Matrix::Zero(p, p);
    lower.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose(), inv_n);
    g.gram = lower.selfadjointView<Eigen::Lower>();
    g.xty.noalias() = x.transpose() * d.responses.middleRows(begin, count);
    g.xty *= inv_n;
    return g;
}

inline GramSystem build_gram(const LaggedDesign& d) { return gram_from_rows(d, 0, d.n_effective()); }

inline GramSystem build_gram(const TimeSeriesPanel& panel, Index lags)
{
    return build_gram(make_lagged_design(panel, lags));
}

/// Whitelist of predictors a response may use.
class PredictorMask
{
public:
    PredictorMask() = default;
    explicit PredictorMask(std::vector<bool> allowed) : allowed_(std::move(allowed)) {}

    static PredictorMask full(Index p) { return PredictorMask(std::vector<bool>(static_cast<std::size_t>(p), true)); }
    static PredictorMask none(Index p) { return PredictorMask(std::vector<bool>(static_cast<std::size_t>(p), false)); }

    Index size() const noexcept { return static_cast<Index>(allowed_.size()); }
    bool operator[](Index j) const { return allowed_[static_cast<std::size_t>(j)]; }
    void set(Index j, bool v) { allowed_[static_cast<std::size_t>(j)] = v; }
    const std::vector<bool>& allowed() const noexcept { return allowed_; }

    Index count() const
    {
        Index n = 0;
        for (bool b : allowed_) n += b;
        return n;
    }
    bool is_full() const { return count() == size(); }

    std::vector<Index> indices() const
    {
        std::vector<Index> out;
        for (Index j = 0; j < size(); ++j)
            if (allowed_[static_cast<std::size_t>(j)]) out.push_back(j);
        return out;
    }

    bool subset_of(const PredictorMask& other) const
    {
        if (other.size() != size()) return false;
        for (Index j = 0; j < size(); ++j)
            if ((*this)[j] && !other[j]) return false;
        return true;
    }

    friend bool operator==(const PredictorMask&, const PredictorMask&) = default;

private:
    std::vector<bool> allowed_;
};

struct LassoSolution
{
    Vector beta;
    double lambda = 0.0;
    int iterations = 0;
    double kkt_residual = 0.0;
    double objective = 0.0;
    std::vector<double> objective_trace; // per sweep, when requested
};

struct LassoOptions
{
    double tol = 1e-7;
    int max_iter = 10000;
    std::optional<Vector> warm_start;
    bool record_objective = false;
};

namespace detail {

inline void check_response(const GramSystem& g, Index response)
{
    if (response < 0 || response >= g.n_responses()) throw ValidationError("response id out of range");
}

inline void check_mask(const GramSystem& g, const PredictorMask& mask)
{
    if (mask.size() != g.n_predictors()) throw ShapeError("mask length differs from predictor count");
}

inline double soft_threshold(double z, double t) noexcept
{
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

/// Cyclic coordinate descent on  -2 b^T g + b^T G b + lambda |b|_1  over an
/// index subset. Keeps the partial residual r = g - G b current on the
/// allowed coordinates so one update costs O(|allowed|).
class CoordinateSolver
{
public:
    CoordinateSolver(const Matrix& gram, const Eigen::Ref<const Vector>& xty, const PredictorMask& mask,
                     bool warn_degenerate = true)
        : gram_(gram), xty_(xty), beta_(Vector::Zero(gram.rows())), resid_(xty)
    {
        const Index p = gram.rows();
        full_ = true;
        for (Index j = 0; j < p; ++j) {
            if (!mask[j]) {
                full_ = false;
                continue;
            }
            if (gram(j, j) <= 0.0) {
                if (xty(j) != 0.0)
                    throw DegeneratePredictorError("predictor " + std::to_string(j) +
                                                   " has zero variance but nonzero cross-product");
                if (warn_degenerate) warn("dropping zero-variance predictor " + std::to_string(j));
                full_ = false;
                continue;
            }
            allowed_.push_back(j);
        }
    }

    const Vector& beta() const noexcept { return beta_; }
    const std::vector<Index>& allowed() const noexcept { return allowed_; }

    void set_beta(const Vector& b)
    {
        if (b.size() != beta_.size()) throw ShapeError("warm start has wrong length");
        beta_.setZero();
        for (Index j : allowed_) beta_(j) = b(j);
        refresh_residual();
    }

    /// Exact recomputation of the residual from the current iterate.
    void refresh_residual()
    {
        if (full_) {
            resid_ = xty_;
            for (Index m : allowed_)
                if (beta_(m) != 0.0) resid_.noalias() -= gram_.col(m) * beta_(m);
            return;
        }
        for (Index j : allowed_) resid_(j) = xty_(j);
        for (Index m : allowed_) {
            if (beta_(m) == 0.0) continue;
            const double* col = gram_.col(m).data();
            for (Index j : allowed_) resid_(j) -= col[j] * beta_(m);
        }
    }

    double objective(double lambda) const
    {
        double quad = 0.0, lin = 0.0, l1 = 0.0;
        for (Index j : allowed_) {
            if (beta_(j) == 0.0) continue;
            lin += beta_(j) * xty_(j);
            l1 += std::abs(beta_(j));
            for (Index m : allowed_)
                if (beta_(m) != 0.0) quad += beta_(j) * gram_(j, m) * beta_(m);
        }
        return -2.0 * lin + quad + lambda * l1;
    }

    /// Max subgradient-condition violation; refreshes the residual first.
    double kkt(double lambda)
    {
        refresh_residual();
        double worst = 0.0;
        for (Index j : allowed_) {
            const double grad = -2.0 * resid_(j);
            double v;
            if (beta_(j) > 0.0) v = std::abs(grad + lambda);
            else if (beta_(j) < 0.0) v = std::abs(grad - lambda);
            else v = std::max(0.0, std::abs(grad) - lambda);
            worst = std::max(worst, v);
        }
        return worst;
    }

    struct Outcome
    {
        int iterations = 0;
        bool converged = false;
        double kkt = 0.0;
    };

    Outcome solve(double lambda, double tol, int max_iter, std::vector<double>* trace = nullptr)
    {
        Outcome out;
        const double half = lambda / 2.0;
        std::vector<Index> active;
        while (out.iterations < max_iter) {
            const double change = sweep(allowed_, half);
            ++out.iterations;
            if (trace) trace->push_back(objective(lambda));
            if (change < tol) {
                out.kkt = kkt(lambda);
                if (out.kkt <= tol || change == 0.0) {
                    out.converged = true;
                    return out;
                }
                continue;
            }
            active.clear();
            for (Index j : allowed_)
                if (beta_(j) != 0.0) active.push_back(j);
            while (out.iterations < max_iter) {
                const double c = sweep(active, half);
                ++out.iterations;
                if (trace) trace->push_back(objective(lambda));
                if (c < tol) break;
            }
        }
        out.kkt = kkt(lambda);
        return out;
    }

private:
    double sweep(const std::vector<Index>& coords, double half_lambda)
    {
        double max_change = 0.0;
        for (Index j : coords) {
            const double gjj = gram_(j, j);
            const double old = beta_(j);
            const double z = resid_(j) + gjj * old;
            const double updated = soft_threshold(z, half_lambda) / gjj;
            const double delta = updated - old;
            if (delta == 0.0) continue;
            beta_(j) = updated;
            if (full_) {
                resid_.noalias() -= gram_.col(j) * delta;
            } else {
                const double* col = gram_.col(j).data();
                for (Index m : allowed_) resid_(m) -= col[m] * delta;
            }
            max_change = std::max(max_change, std::abs(delta));
        }
        return max_change;
    }

    const Matrix& gram_;
    Eigen::Ref<const Vector> xty_;
    Vector beta_;
    Vector resid_;
    std::vector<Index> allowed_;
    bool full_ = true;
};

} // namespace detail

/// 2 * max |xty_i[j]| over allowed j: the smallest penalty at which the
/// masked solution is identically zero.
inline double lambda_max(const GramSystem& g, Index response, const PredictorMask& mask)
{
    detail::check_response(g, response);
    detail::check_mask(g, mask);
    double m = -1.0;
    for (Index j = 0; j < mask.size(); ++j)
        if (mask[j]) m = std::max(m, std::abs(g.xty(j, response)));
    if (m < 0.0) throw EmptyMaskError("mask allows no predictors");
    return 2.0 * m;
}

/// Geometric grid from lmax down to ratio * lmax.
inline std::vector<double> lambda_grid(double lmax, int n_values = 50, double ratio = 0.01)
{
    if (n_values < 1) throw ValidationError("lambda grid needs at least one value");
    if (!(ratio > 0.0 && ratio < 1.0)) throw ValidationError("lambda grid ratio must be in (0, 1)");
    std::vector<double> grid;
    if (!(lmax > 0.0)) return grid;
    grid.reserve(static_cast<std::size_t>(n_values));
    for (int i = 0; i < n_values; ++i) {
        const double f = n_values == 1 ? 0.0 : static_cast<double>(i) / (n_values - 1);
        grid.push_back(lmax * std::pow(ratio, f));
    }
    return grid;
}

inline double lasso_objective(const GramSystem& g, Index response, const Vector& beta, double lambda)
{
    const auto gamma = g.xty.col(response);
    return -2.0 * beta.dot(gamma) + beta.dot(g.gram * beta) + lambda * beta.lpNorm<1>();
}

/// Subgradient optimality violation of beta for the masked problem.
inline double kkt_residual(const GramSystem& g, Index response, const Vector& beta, double lambda,
                           const PredictorMask& mask)
{
    detail::check_response(g, response);
    detail::check_mask(g, mask);
    if (beta.size() != g.n_predictors()) throw ShapeError("beta length differs from predictor count");
    const Vector grad = 2.0 * (g.gram * beta - g.xty.col(response));
    double worst = 0.0;
    for (Index j = 0; j < mask.size(); ++j) {
        if (!mask[j]) continue;
        double v;
        if (beta(j) > 0.0) v = std::abs(grad(j) + lambda);
        else if (beta(j) < 0.0) v = std::abs(grad(j) - lambda);
        else v = std::max(0.0, std::abs(grad(j)) - lambda);
        worst = std::max(worst, v);
    }
    return worst;
}

/// Unpenalized least squares restricted to `support` (other coefficients 0).
/// A tiny ridge is added when the restricted Gram matrix is singular.
inline Vector least_squares_on_support(const GramSystem& g, Index response, const std::vector<Index>& support)
{
    detail::check_response(g, response);
    Vector beta = Vector::Zero(g.n_predictors());
    if (support.empty()) return beta;
    const Index s = static_cast<Index>(support.size());
    Matrix sub(s, s);
    Vector rhs(s);
    for (Index a = 0; a < s; ++a) {
        rhs(a) = g.xty(support[a], response);
        for (Index b = 0; b < s; ++b) sub(a, b) = g.gram(support[a], support[b]);
    }
    Eigen::LDLT<Matrix> ldlt(sub);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 1e-12 * std::max(1.0, ldlt.vectorD().maxCoeff())) {
        const double ridge = 1e-8 * std::max(1.0, sub.diagonal().mean());
        sub.diagonal().array() += ridge;
        ldlt.compute(sub);
    }
    const Vector coef = ldlt.solve(rhs);
    for (Index a = 0; a < s; ++a) beta(support[a]) = coef(a);
    return beta;
}

/// Masked l1-penalized least squares for one response by cyclic coordinate
/// descent in flat-index order. Out-of-mask coordinates are exactly zero.
inline LassoSolution lasso_cd(const GramSystem& g, Index response, const PredictorMask& mask, double lambda,
                              const LassoOptions& opts = {})
{
    detail::check_response(g, response);
    detail::check_mask(g, mask);
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be finite and >= 0");
    if (!(opts.tol > 0.0)) throw ValidationError("solver tolerance must be positive");
    if (opts.max_iter < 1) throw ValidationError("max_iter must be at least 1");

    detail::CoordinateSolver solver(g.gram, g.xty.col(response), mask);
    if (opts.warm_start) solver.set_beta(*opts.warm_start);

    LassoSolution sol;
    sol.lambda = lambda;
    auto outcome = solver.solve(lambda, opts.tol, opts.max_iter,
                                opts.record_objective ? &sol.objective_trace : nullptr);
    if (!outcome.converged)
        throw ConvergenceError("coordinate descent did not converge within " + std::to_string(opts.max_iter) +
                                   " sweeps",
                               outcome.kkt, solver.beta());
    sol.beta = solver.beta();
    sol.iterations = outcome.iterations;
    sol.kkt_residual = outcome.kkt;
    sol.objective = solver.objective(lambda);
    return sol;
}

} // namespace spvar
