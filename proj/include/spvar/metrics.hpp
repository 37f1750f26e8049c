#pragma once

#include <spvar/core.hpp>
#include <spvar/two_step.hpp>
#include <spvar/var_model.hpp>

#include <algorithm>
#include <numeric>
#include <vector>

namespace spvar {

/// Candidate coefficients are indexed target * kL + (lag - 1) * k + source,
/// which is the row-major layout of FitResult::scores.
inline Index candidate_index(Index target, Index source, Index lag, Index k, Index lags)
{
    return target * k * lags + (lag - 1) * k + source;
}

/// Indicator vector (k^2 L entries) of the edges in `es`.
inline std::vector<bool> support_indicator(const EdgeSet& es, Index k, Index lags)
{
    std::vector<bool> s(static_cast<std::size_t>(k * k * lags), false);
    for (const auto& e : es.edges) {
        if (e.source < 0 || e.source >= k || e.target < 0 || e.target >= k || e.lag < 1 || e.lag > lags)
            throw ShapeError("edge outside the k x k x L candidate set");
        s[static_cast<std::size_t>(candidate_index(e.target, e.source, e.lag, k, lags))] = true;
    }
    return s;
}

/// Flattens a k x kL score matrix into candidate order.
inline Vector flatten_scores(const Matrix& scores)
{
    Vector v(scores.size());
    Index n = 0;
    for (Index r = 0; r < scores.rows(); ++r)
        for (Index c = 0; c < scores.cols(); ++c) v(n++) = scores(r, c);
    return v;
}

/// Probability that a random true edge outscores a random non-edge, ties
/// counting one half. Computed from midranks (Mann-Whitney).
inline double auroc(const Vector& scores, const EdgeSet& truth, Index k, Index lags)
{
    const Index n = k * k * lags;
    if (scores.size() != n) throw ShapeError("score vector must have k^2 L entries");
    if (!scores.allFinite()) throw ValidationError("scores must be finite");
    const auto is_edge = support_indicator(truth, k, lags);
    const auto n_pos = static_cast<double>(std::count(is_edge.begin(), is_edge.end(), true));
    const double n_neg = static_cast<double>(n) - n_pos;
    if (n_pos == 0.0 || n_neg == 0.0) throw UndefinedMetricError("AUROC needs at least one edge and one non-edge");

    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(), [&](Index a, Index b) { return scores(a) < scores(b); });
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores(order[j + 1]) == scores(order[i])) ++j;
        const double midrank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t m = i; m <= j; ++m)
            if (is_edge[static_cast<std::size_t>(order[m])]) rank_sum += midrank;
        i = j + 1;
    }
    return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

inline double auroc(const Matrix& scores, const EdgeSet& truth, Index lags)
{
    return auroc(flatten_scores(scores), truth, scores.rows(), lags);
}

struct FpFn
{
    double fp_fraction = 0.0;
    double fn_fraction = 0.0;
};

/// FP normalized by the number of true non-edges, FN by the number of true
/// edges, over all k^2 L candidates.
inline FpFn fp_fn_fractions(const EdgeSet& selected, const EdgeSet& truth, Index k, Index lags)
{
    const auto sel = support_indicator(selected, k, lags);
    const auto tru = support_indicator(truth, k, lags);
    double fp = 0, fn = 0, pos = 0;
    for (std::size_t i = 0; i < sel.size(); ++i) {
        pos += tru[i];
        fp += sel[i] && !tru[i];
        fn += !sel[i] && tru[i];
    }
    if (pos == 0) throw UndefinedMetricError("FN fraction undefined without true edges");
    const double neg = static_cast<double>(sel.size()) - pos;
    return {neg > 0 ? fp / neg : 0.0, fn / pos};
}

/// ||A - A_hat||_F / ||A||_F over the stacked lags.
inline double rel_frobenius_error(const TransitionStack& estimated, const TransitionStack& truth)
{
    if (estimated.dim() != truth.dim() || estimated.lags() != truth.lags())
        throw ShapeError("stacks differ in shape");
    double num = 0.0, den = 0.0;
    for (Index l = 0; l < truth.lags(); ++l) {
        num += (estimated[l] - truth[l]).squaredNorm();
        den += truth[l].squaredNorm();
    }
    if (den == 0.0) throw UndefinedMetricError("relative error undefined for an all-zero truth");
    return std::sqrt(num / den);
}

/// Rolling-origin h-step forecast MSE. For every origin o with
/// o + horizon <= test length, history is train followed by test rows
/// [0, o); the forecast of test row o + horizon - 1 is scored.
inline double forecast_mse(const TimeSeriesPanel& train, const TimeSeriesPanel& test, const TransitionStack& stack,
                           Index horizon)
{
    if (horizon < 1) throw ValidationError("horizon must be at least 1");
    if (train.n_series() != test.n_series() || train.series_ids() != test.series_ids())
        throw ShapeError("train and test panels have different series");
    if (test.times().front() != train.times().back() + 1)
        throw ValidationError("test panel must begin immediately after the training panel");
    if (test.n_times() < horizon) throw InsufficientDataError("test panel shorter than the horizon");
    if (train.n_times() < stack.lags()) throw InsufficientDataError("training panel shorter than the lag order");
    if (train.has_missing() || test.has_missing()) throw PreprocessingRequiredError("panels have missing values");

    const Index k = stack.dim(), L = stack.lags();
    if (k != train.n_series()) throw ShapeError("stack dimension differs from panel width");
    Matrix all(train.n_times() + test.n_times(), k);
    all << train.values(), test.values();
    const Index offset = train.n_times();

    double sse = 0.0;
    Index count = 0;
    Matrix path(L + horizon, k);
    for (Index o = 0; o + horizon <= test.n_times(); ++o) {
        path.topRows(L) = all.middleRows(offset + o - L, L);
        for (Index h = 0; h < horizon; ++h) {
            Vector next = Vector::Zero(k);
            for (Index l = 1; l <= L; ++l) next.noalias() += stack[l - 1] * path.row(L + h - l).transpose();
            path.row(L + h) = next.transpose();
        }
        sse += (path.row(L + horizon - 1) - all.row(offset + o + horizon - 1)).squaredNorm();
        count += k;
    }
    return sse / static_cast<double>(count);
}

} // namespace spvar
