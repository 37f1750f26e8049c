#pragma once

#include <spvar/core.hpp>
#include <spvar/metrics.hpp>
#include <spvar/two_step.hpp>
#include <spvar/var_model.hpp>

#include <Eigen/QR>

#include <cmath>
#include <optional>
#include <vector>

namespace spvar {

// ---------------------------------------------------------------------------
// Missing values
// ---------------------------------------------------------------------------

struct InterpolateOptions
{
    double max_missing_fraction = 0.1;
    bool strict = false; ///< error instead of warning above the cap
};

/// Linear interpolation across interior gaps; leading and trailing gaps
/// take the nearest observed value.
inline std::vector<double> interpolate_missing(const std::vector<std::optional<double>>& series,
                                               const InterpolateOptions& opts = {})
{
    const std::size_t n = series.size();
    std::vector<std::size_t> observed;
    for (std::size_t t = 0; t < n; ++t)
        if (series[t]) observed.push_back(t);
    if (observed.empty()) throw DomainError("series has no observed values");
    const double frac = 1.0 - static_cast<double>(observed.size()) / static_cast<double>(n);
    if (frac > opts.max_missing_fraction) {
        const std::string msg = "missing fraction " + std::to_string(frac) + " exceeds cap " +
                                std::to_string(opts.max_missing_fraction);
        if (opts.strict) throw ValidationError(msg);
        warn(msg);
    }

    std::vector<double> out(n);
    for (std::size_t t = 0; t < observed.front(); ++t) out[t] = *series[observed.front()];
    for (std::size_t t = observed.back(); t < n; ++t) out[t] = *series[observed.back()];
    for (std::size_t a = 0; a + 1 < observed.size(); ++a) {
        const std::size_t lo = observed[a], hi = observed[a + 1];
        const double ylo = *series[lo], yhi = *series[hi];
        out[lo] = ylo;
        for (std::size_t t = lo + 1; t < hi; ++t) {
            const double w = static_cast<double>(t - lo) / static_cast<double>(hi - lo);
            out[t] = ylo + w * (yhi - ylo);
        }
    }
    return out;
}

/// Column-wise interpolation of a panel; the result has no missing mask.
inline TimeSeriesPanel interpolate_panel(const TimeSeriesPanel& panel, const InterpolateOptions& opts = {})
{
    if (!panel.has_missing()) return panel;
    Matrix v = panel.values();
    for (Index j = 0; j < panel.n_series(); ++j) {
        std::vector<std::optional<double>> col(static_cast<std::size_t>(panel.n_times()));
        for (Index t = 0; t < panel.n_times(); ++t)
            if (!panel.is_missing(t, j)) col[static_cast<std::size_t>(t)] = v(t, j);
        std::vector<double> filled;
        try {
            filled = interpolate_missing(col, opts);
        } catch (const Error& e) {
            throw ValidationError("series " + panel.series_ids()[static_cast<std::size_t>(j)] + ": " + e.what());
        }
        for (Index t = 0; t < panel.n_times(); ++t) v(t, j) = filled[static_cast<std::size_t>(t)];
    }
    return TimeSeriesPanel(std::move(v), panel.series_ids(), std::nullopt, panel.times());
}

// ---------------------------------------------------------------------------
// Cubic B-spline detrending
// ---------------------------------------------------------------------------

/// Clamped cubic B-spline basis on [lo, hi] with equally spaced interior knots.
class CubicSplineBasis
{
public:
    static constexpr int degree = 3;

    CubicSplineBasis() = default;
    CubicSplineBasis(double lo, double hi, Index n_interior) : lo_(lo), hi_(hi)
    {
        if (!(hi > lo)) throw ValidationError("spline domain must have positive length");
        if (n_interior < 0) throw ValidationError("interior knot count must be nonnegative");
        for (int i = 0; i <= degree; ++i) knots_.push_back(lo);
        for (Index i = 1; i <= n_interior; ++i)
            knots_.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_interior + 1));
        for (int i = 0; i <= degree; ++i) knots_.push_back(hi);
    }

    Index size() const noexcept { return static_cast<Index>(knots_.size()) - degree - 1; }
    Index interior_knots() const noexcept { return size() - degree - 1; }
    double lo() const noexcept { return lo_; }
    double hi() const noexcept { return hi_; }

    /// All basis functions at x (x is clamped to the domain).
    Vector evaluate(double x) const
    {
        x = std::clamp(x, lo_, hi_);
        const Index n = size();
        // Knot span s with knots[s] <= x < knots[s+1]; the right end uses the last span.
        Index s = degree;
        while (s < n - 1 && x >= knots_[static_cast<std::size_t>(s + 1)]) ++s;
        double basis[degree + 1], left[degree + 1], right[degree + 1];
        basis[0] = 1.0;
        for (int j = 1; j <= degree; ++j) {
            left[j] = x - knots_[static_cast<std::size_t>(s + 1 - j)];
            right[j] = knots_[static_cast<std::size_t>(s + j)] - x;
            double saved = 0.0;
            for (int r = 0; r < j; ++r) {
                const double tmp = basis[r] / (right[r + 1] + left[j - r]);
                basis[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            basis[j] = saved;
        }
        Vector out = Vector::Zero(n);
        for (int r = 0; r <= degree; ++r) out(s - degree + r) = basis[r];
        return out;
    }

    Matrix design(Index n_points) const
    {
        Matrix b(n_points, size());
        for (Index t = 0; t < n_points; ++t) b.row(t) = evaluate(static_cast<double>(t)).transpose();
        return b;
    }

private:
    double lo_ = 0.0, hi_ = 1.0;
    std::vector<double> knots_;
};

struct DetrendResult
{
    Vector residual;
    Vector fitted;
    Index knot_count = 0;
    CubicSplineBasis basis;
    Vector coefficients;

    /// Frozen trend at (possibly out-of-sample) time position t.
    double trend_at(double t) const { return basis.evaluate(t).dot(coefficients); }
};

/// Least-squares cubic B-spline fit to log(series) over t = 0..n-1 with
/// knots_per_year equally spaced interior knots per samples_per_year steps.
inline DetrendResult spline_detrend(const std::vector<double>& series, Index knots_per_year = 4,
                                    Index samples_per_year = 365)
{
    if (knots_per_year < 1 || samples_per_year < 1) throw ValidationError("knot and sampling rates must be positive");
    const Index n = static_cast<Index>(series.size());
    const double span = static_cast<double>(samples_per_year) / static_cast<double>(knots_per_year);
    if (static_cast<double>(n) < 4.0 * span)
        throw InsufficientDataError("series needs at least four knot spans (" + std::to_string(4.0 * span) + " samples)");
    Vector y(n);
    for (Index t = 0; t < n; ++t) {
        const double v = series[static_cast<std::size_t>(t)];
        if (!(v > 0.0)) throw DomainError("nonpositive value at index " + std::to_string(t) + "; log undefined");
        y(t) = std::log(v);
    }
    const Index segments = std::max<Index>(1, static_cast<Index>(std::llround(static_cast<double>(n - 1) / span)));
    DetrendResult r;
    r.basis = CubicSplineBasis(0.0, static_cast<double>(n - 1), segments - 1);
    r.knot_count = r.basis.interior_knots();
    const Matrix b = r.basis.design(n);
    r.coefficients = b.colPivHouseholderQr().solve(y);
    r.fitted = b * r.coefficients;
    r.residual = y - r.fitted;
    return r;
}

// ---------------------------------------------------------------------------
// Lag order by rolling-origin cross-validation
// ---------------------------------------------------------------------------

struct OrderSelection
{
    Index lags = 1;
    std::vector<double> mean_mse; ///< per candidate L = 1..L_max
};

/// Splits the panel into n_folds + 1 consecutive blocks; fold f trains on
/// blocks [0, f) and scores one-step forecasts on block f. Returns the L
/// with the smallest mean MSE; near-ties (relative 1e-9) go to the smaller L.
inline OrderSelection select_order_cv(const TimeSeriesPanel& panel, Index max_lags, Index n_folds,
                                      const SelectionConfig& fit, std::uint64_t seed, std::size_t threads = 1)
{
    if (max_lags < 1) throw ValidationError("L_max must be at least 1");
    if (n_folds < 1) throw ValidationError("need at least one fold");
    OrderSelection out;
    if (max_lags == 1) {
        out.lags = 1;
        return out;
    }
    const Index block = panel.n_times() / (n_folds + 1);
    if (block < 2 * max_lags + 2)
        throw InsufficientDataError("panel too short for " + std::to_string(n_folds) + " folds at L_max = " +
                                    std::to_string(max_lags));

    out.mean_mse.assign(static_cast<std::size_t>(max_lags), 0.0);
    for (Index f = 1; f <= n_folds; ++f) {
        const TimeSeriesPanel train = panel.slice(0, f * block);
        const Index test_len = f == n_folds ? panel.n_times() - f * block : block;
        const TimeSeriesPanel test = panel.slice(f * block, test_len);
        for (Index L = 1; L <= max_lags; ++L) {
            const FitResult r = full_fit(train, nullptr, L, fit, derive_seed(seed, "cv", static_cast<std::uint64_t>(f)), threads);
            out.mean_mse[static_cast<std::size_t>(L - 1)] += forecast_mse(train, test, r.stack, 1) / static_cast<double>(n_folds);
        }
    }
    out.lags = 1;
    double best = out.mean_mse[0];
    for (Index L = 2; L <= max_lags; ++L) {
        const double m = out.mean_mse[static_cast<std::size_t>(L - 1)];
        if (m < best - 1e-9 * std::abs(best)) {
            best = m;
            out.lags = L;
        }
    }
    return out;
}

} // namespace spvar
