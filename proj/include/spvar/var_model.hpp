#pragma once

#include <spvar/core.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace spvar {

/// T x k panel of observations. Row t holds the k series at time index
/// times[t]; columns are labeled by unique series ids.
class TimeSeriesPanel
{
public:
    TimeSeriesPanel() = default;

    explicit TimeSeriesPanel(Matrix values,
                             std::vector<std::string> series_ids = {},
                             std::optional<BoolMatrix> missing = std::nullopt,
                             std::vector<std::int64_t> times = {})
        : values_(std::move(values)), ids_(std::move(series_ids)),
          missing_(std::move(missing)), times_(std::move(times))
    {
        if (values_.rows() < 1 || values_.cols() < 1)
            throw ShapeError("panel needs at least one row and one series");
        if (ids_.empty()) {
            ids_.reserve(values_.cols());
            for (Index j = 0; j < values_.cols(); ++j) ids_.push_back("X" + std::to_string(j + 1));
        }
        if (static_cast<Index>(ids_.size()) != values_.cols())
            throw ShapeError("series id count does not match column count");
        if (std::set<std::string>(ids_.begin(), ids_.end()).size() != ids_.size())
            throw ValidationError("series ids must be unique");
        if (missing_) {
            if (missing_->rows() != values_.rows() || missing_->cols() != values_.cols())
                throw ShapeError("missing mask shape differs from values");
            if (!missing_->any()) missing_.reset();
        }
        if (times_.empty()) {
            times_.resize(values_.rows());
            for (Index t = 0; t < values_.rows(); ++t) times_[t] = t;
        }
        if (static_cast<Index>(times_.size()) != values_.rows())
            throw ShapeError("time index length does not match row count");
    }

    Index n_times() const noexcept { return values_.rows(); }
    Index n_series() const noexcept { return values_.cols(); }
    const Matrix& values() const noexcept { return values_; }
    const std::vector<std::string>& series_ids() const noexcept { return ids_; }
    const std::vector<std::int64_t>& times() const noexcept { return times_; }
    const std::optional<BoolMatrix>& missing_mask() const noexcept { return missing_; }
    bool has_missing() const noexcept { return missing_.has_value(); }
    bool is_missing(Index t, Index j) const { return missing_ && (*missing_)(t, j); }

    /// Rows [begin, begin + count), keeping ids and time index.
    TimeSeriesPanel slice(Index begin, Index count) const
    {
        if (begin < 0 || count < 1 || begin + count > n_times())
            throw ShapeError("panel slice out of range");
        std::optional<BoolMatrix> m;
        if (missing_) m = missing_->middleRows(begin, count);
        return TimeSeriesPanel(values_.middleRows(begin, count), ids_, std::move(m),
                               {times_.begin() + begin, times_.begin() + begin + count});
    }

    /// Append rows (e.g. forecasts) continuing the integer time index.
    TimeSeriesPanel extended(const Matrix& rows) const
    {
        if (rows.cols() != n_series()) throw ShapeError("appended rows have wrong width");
        Matrix v(n_times() + rows.rows(), n_series());
        v << values_, rows;
        std::vector<std::int64_t> t = times_;
        for (Index r = 0; r < rows.rows(); ++r) t.push_back(times_.back() + 1 + r);
        std::optional<BoolMatrix> m;
        if (missing_) {
            BoolMatrix mm = BoolMatrix::Constant(v.rows(), v.cols(), false);
            mm.topRows(n_times()) = *missing_;
            m = std::move(mm);
        }
        return TimeSeriesPanel(std::move(v), ids_, std::move(m), std::move(t));
    }

private:
    Matrix values_;
    std::vector<std::string> ids_;
    std::optional<BoolMatrix> missing_;
    std::vector<std::int64_t> times_;
};

/// A_1..A_L. Entry (j, i) of A_l is the lag-l coefficient from component i
/// to component j.
class TransitionStack
{
public:
    TransitionStack() = default;

    explicit TransitionStack(std::vector<Matrix> matrices) : mats_(std::move(matrices))
    {
        if (mats_.empty()) throw ShapeError("transition stack needs at least one lag");
        const Index k = mats_.front().rows();
        if (k < 1) throw ShapeError("transition matrices must be non-empty");
        for (const auto& a : mats_)
            if (a.rows() != k || a.cols() != k)
                throw ShapeError("transition matrices must be square with identical dimension");
    }

    static TransitionStack zeros(Index k, Index lags)
    {
        return TransitionStack(std::vector<Matrix>(static_cast<std::size_t>(lags), Matrix::Zero(k, k)));
    }

    Index lags() const noexcept { return static_cast<Index>(mats_.size()); }
    Index dim() const noexcept { return mats_.empty() ? 0 : mats_.front().rows(); }
    const Matrix& operator[](Index lag0) const { return mats_.at(static_cast<std::size_t>(lag0)); }
    Matrix& operator[](Index lag0) { return mats_.at(static_cast<std::size_t>(lag0)); }
    const std::vector<Matrix>& matrices() const noexcept { return mats_; }

    /// kL x kL companion matrix [A_1 ... A_L; I 0].
    Matrix companion() const
    {
        const Index k = dim(), L = lags();
        Matrix c = Matrix::Zero(k * L, k * L);
        for (Index l = 0; l < L; ++l) c.block(0, l * k, k, k) = mats_[l];
        if (L > 1) c.block(k, 0, k * (L - 1), k * (L - 1)).setIdentity();
        return c;
    }

    /// Horizontal concatenation [A_1 ... A_L] (k x kL).
    Matrix stacked() const
    {
        const Index k = dim(), L = lags();
        Matrix s(k, k * L);
        for (Index l = 0; l < L; ++l) s.middleCols(l * k, k) = mats_[l];
        return s;
    }

    Index nonzeros() const
    {
        Index n = 0;
        for (const auto& a : mats_) n += (a.array() != 0.0).count();
        return n;
    }

private:
    std::vector<Matrix> mats_;
};

/// Diagonal error covariance.
struct NoiseSpec
{
    Vector variances;

    NoiseSpec() = default;
    explicit NoiseSpec(Vector v) : variances(std::move(v))
    {
        if (variances.size() < 1) throw ShapeError("noise spec needs at least one variance");
        if ((variances.array() <= 0.0).any() || !variances.allFinite())
            throw ValidationError("noise variances must be positive and finite");
    }
    static NoiseSpec identity(Index k) { return NoiseSpec(Vector::Ones(k)); }
};

struct VarProcess
{
    TransitionStack transition;
    NoiseSpec noise;

    VarProcess() = default;
    VarProcess(TransitionStack a, NoiseSpec n) : transition(std::move(a)), noise(std::move(n))
    {
        if (noise.variances.size() != transition.dim())
            throw ShapeError("noise dimension differs from transition dimension");
    }
    Index dim() const noexcept { return transition.dim(); }
    Index lags() const noexcept { return transition.lags(); }
};

/// Largest eigenvalue modulus of the companion matrix. The process is
/// stable iff the result is < 1.
inline double companion_spectral_radius(const TransitionStack& stack)
{
    if (stack.lags() < 1) throw ShapeError("empty transition stack");
    const Matrix c = stack.lags() == 1 ? stack[0] : stack.companion();
    if (c.isZero(0.0)) return 0.0;
    Eigen::EigenSolver<Matrix> es(c, /*computeEigenvectors=*/false);
    if (es.info() != Eigen::Success)
        throw ConvergenceError("companion eigenvalue computation failed", 0.0);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

struct SimulateOptions
{
    Index burn_in = 500;
    bool allow_unstable = false;
};

/// Draws n_obs rows of X(t) = sum_l A_l X(t-l) + e(t), e(t) ~ N(0, diag(noise)),
/// after discarding burn_in steps started from the zero state.
inline TimeSeriesPanel simulate(const VarProcess& process, Index n_obs, std::uint64_t seed,
                                const SimulateOptions& opts = {})
{
    if (n_obs < 1) throw ValidationError("n_obs must be at least 1");
    if (opts.burn_in < 0) throw ValidationError("burn_in must be nonnegative");
    const double radius = companion_spectral_radius(process.transition);
    if (radius >= 1.0 && !opts.allow_unstable)
        throw StabilityError("process is not stable: companion spectral radius " + std::to_string(radius));
    if (radius >= 0.99 && radius < 1.0)
        warn("companion spectral radius " + std::to_string(radius) + " is close to 1; burn-in may be too short");

    const Index k = process.dim(), L = process.lags();
    const Index total = opts.burn_in + n_obs;
    const Vector sd = process.noise.variances.cwiseSqrt();
    const Matrix stacked = process.transition.stacked();

    Rng rng = make_rng(seed, "simulate");
    std::normal_distribution<double> normal(0.0, 1.0);

    // Ring of the last L states, most recent first when read as lagged().
    Matrix history = Matrix::Zero(k, L);
    Vector lagged(k * L);
    Matrix out(n_obs, k);
    Index head = 0; // column holding X(t-1)
    for (Index t = 0; t < total; ++t) {
        for (Index l = 0; l < L; ++l) lagged.segment(l * k, k) = history.col((head + l) % L);
        Vector x = stacked * lagged;
        for (Index j = 0; j < k; ++j) x(j) += sd(j) * normal(rng);
        head = (head + L - 1) % L;
        history.col(head) = x;
        if (t >= opts.burn_in) out.row(t - opts.burn_in) = x.transpose();
    }
    return TimeSeriesPanel(std::move(out));
}

/// Lag-0 covariance of the stationary process: top-left k x k block of the
/// fixed point V = C V C^T + E, computed with the doubling recursion
/// V <- V + C V C^T, C <- C^2 which reaches the same fixed point.
inline Matrix stationary_covariance(const VarProcess& process, double tol = 1e-12, int max_iter = 200)
{
    if (companion_spectral_radius(process.transition) >= 1.0)
        throw StabilityError("stationary covariance requires a stable process");
    const Index k = process.dim(), L = process.lags();
    Matrix c = process.transition.companion();
    Matrix v = Matrix::Zero(k * L, k * L);
    v.topLeftCorner(k, k) = process.noise.variances.asDiagonal();
    double change = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        Matrix inc = c * v * c.transpose();
        change = inc.cwiseAbs().maxCoeff();
        v += inc;
        c = c * c;
        if (change < tol * std::max(1.0, v.cwiseAbs().maxCoeff())) {
            Matrix out = v.topLeftCorner(k, k);
            return (out + out.transpose()) / 2.0;
        }
    }
    throw ConvergenceError("stationary covariance did not converge", change);
}

/// Recursive plug-in forecast of the next `horizon` rows after the panel.
inline Matrix forecast(const TimeSeriesPanel& panel, const TransitionStack& stack, Index horizon)
{
    const Index k = stack.dim(), L = stack.lags();
    if (panel.n_series() != k) throw ShapeError("panel width differs from transition dimension");
    if (horizon < 1) throw ValidationError("forecast horizon must be at least 1");
    if (panel.n_times() < L) throw InsufficientDataError("panel shorter than the lag order");
    if (panel.has_missing()) throw PreprocessingRequiredError("panel has missing values; interpolate first");

    // Row r of `path` is X~(T - L + r); forecasts are appended below.
    Matrix path(L + horizon, k);
    path.topRows(L) = panel.values().bottomRows(L);
    for (Index h = 0; h < horizon; ++h) {
        Vector next = Vector::Zero(k);
        for (Index l = 1; l <= L; ++l) next.noalias() += stack[l - 1] * path.row(L + h - l).transpose();
        path.row(L + h) = next.transpose();
    }
    return path.bottomRows(horizon);
}

} // namespace spvar
