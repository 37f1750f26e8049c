#pragma once

#include <spvar/core.hpp>
#include <spvar/regression.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

namespace spvar {

/// Subsampling-based support estimation.
///
/// Each subsample is a contiguous block of `subsample_length` time steps
/// (serial dependence rules out iid row resampling). On every block the
/// lasso path is traced over a decreasing lambda grid with warm starts. A
/// path stops contributing once more than `max_selected` predictors are
/// active; from then on the last admissible active set is carried forward.
/// The frequency of a predictor is the maximum over the grid of its
/// selection rate across blocks.
struct StabilityConfig
{
    int n_subsamples = 100;
    Index subsample_length = 0;     ///< in time steps; 0 means floor(N / 2)
    double threshold = 0.75;
    std::vector<double> lambda_grid; ///< empty: per-response default grid
    int n_lambda = 50;
    double lambda_ratio = 0.01;
    /// Cap q on the number of active predictors per path; 0 derives it from
    /// q^2 <= E[V] (2 threshold - 1) p with p = kL.
    Index max_selected = 0;
    double expected_false_selections = 1.0;
    double tol = 1e-7;
    int max_iter = 10000;

    void validate(Index n_effective, Index lags) const
    {
        if (n_subsamples < 1) throw ValidationError("stability selection needs at least one subsample");
        if (!(threshold > 0.5 && threshold <= 1.0)) throw ValidationError("stability threshold must be in (0.5, 1]");
        const Index len = effective_length(n_effective);
        if (len <= lags)
            throw InsufficientDataError("subsample length " + std::to_string(len) +
                                        " must exceed the lag order");
        if (len >= n_effective) throw ValidationError("subsample length must be smaller than N");
        for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
            if (!(lambda_grid[i] > 0.0)) throw ValidationError("lambda grid values must be positive");
            if (i > 0 && !(lambda_grid[i] < lambda_grid[i - 1]))
                throw ValidationError("lambda grid must be strictly decreasing");
        }
        if (!(expected_false_selections > 0.0)) throw ValidationError("expected_false_selections must be positive");
        if (!(tol > 0.0) || max_iter < 1) throw ValidationError("invalid solver settings");
    }

    Index effective_length(Index n_effective) const
    {
        return subsample_length > 0 ? subsample_length : n_effective / 2;
    }

    Index path_cap(Index n_predictors) const
    {
        if (max_selected > 0) return max_selected;
        const double q = std::sqrt(expected_false_selections * (2.0 * threshold - 1.0) * static_cast<double>(n_predictors));
        return std::max<Index>(1, static_cast<Index>(std::floor(q)));
    }
};

/// Per-predictor selection frequencies in [0, 1].
struct FrequencyMatrix
{
    Vector freq;
};

struct StabilityTask
{
    Index response = 0;
    PredictorMask mask;
};

/// Block start offsets (in design rows) shared by every response fitted
/// with the same seed.
inline std::vector<Index> stability_block_starts(Index n_effective, Index block_rows, int n_blocks, std::uint64_t seed)
{
    Rng rng = make_rng(seed, "stability-blocks");
    std::uniform_int_distribution<Index> pick(0, n_effective - block_rows);
    std::vector<Index> starts(static_cast<std::size_t>(n_blocks));
    for (auto& s : starts) s = pick(rng);
    return starts;
}

/// Selection frequencies for several responses at once. Every block Gram
/// system is built once and shared by all responses; per-response counts are
/// integers so the result does not depend on `threads`.
inline std::vector<FrequencyMatrix> selection_frequencies(const LaggedDesign& design,
                                                          const std::vector<StabilityTask>& tasks,
                                                          const StabilityConfig& cfg, std::uint64_t seed,
                                                          std::size_t threads = 1)
{
    const Index n = design.n_effective(), p = design.n_predictors();
    cfg.validate(n, design.lags);
    const Index block_rows = cfg.effective_length(n) - design.lags;
    for (const auto& t : tasks) {
        if (t.mask.size() != p) throw ShapeError("mask length differs from predictor count");
        if (t.response < 0 || t.response >= design.k) throw ValidationError("response id out of range");
    }

    // Common lambda grid per response anchored at the full-data lambda_max.
    const GramSystem full = build_gram(design);
    std::vector<std::vector<double>> grids(tasks.size());
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        if (!cfg.lambda_grid.empty()) grids[t] = cfg.lambda_grid;
        else if (tasks[t].mask.count() > 0)
            grids[t] = lambda_grid(lambda_max(full, tasks[t].response, tasks[t].mask), cfg.n_lambda, cfg.lambda_ratio);
    }
    const Index cap = cfg.path_cap(p);

    std::vector<Eigen::MatrixXi> counts(tasks.size());
    for (std::size_t t = 0; t < tasks.size(); ++t)
        counts[t] = Eigen::MatrixXi::Zero(static_cast<Index>(grids[t].size()), p);

    const auto starts = stability_block_starts(n, block_rows, cfg.n_subsamples, seed);
    for (Index start : starts) {
        const GramSystem block = gram_from_rows(design, start, block_rows);
        parallel_for(tasks.size(), threads, [&](std::size_t t) {
            const auto& grid = grids[t];
            if (grid.empty()) return;
            detail::CoordinateSolver solver(block.gram, block.xty.col(tasks[t].response), tasks[t].mask, false);
            std::vector<Index> last;
            std::size_t m = 0;
            for (; m < grid.size(); ++m) {
                auto out = solver.solve(grid[m], cfg.tol, cfg.max_iter);
                if (!out.converged)
                    throw ConvergenceError("stability path for component " + std::to_string(tasks[t].response) +
                                               " did not converge",
                                           out.kkt, solver.beta());
                std::vector<Index> active;
                for (Index j : solver.allowed())
                    if (solver.beta()(j) != 0.0) active.push_back(j);
                if (static_cast<Index>(active.size()) > cap) break;
                last = std::move(active);
                for (Index j : last) counts[t](static_cast<Index>(m), j) += 1;
            }
            for (; m < grid.size(); ++m)
                for (Index j : last) counts[t](static_cast<Index>(m), j) += 1;
        });
    }

    std::vector<FrequencyMatrix> out(tasks.size());
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        out[t].freq = Vector::Zero(p);
        if (counts[t].rows() == 0) continue;
        out[t].freq = counts[t].colwise().maxCoeff().transpose().cast<double>() / static_cast<double>(cfg.n_subsamples);
    }
    return out;
}

/// Single-response convenience wrapper.
inline FrequencyMatrix selection_frequencies(const TimeSeriesPanel& panel, Index response, const PredictorMask& mask,
                                             Index lags, const StabilityConfig& cfg, std::uint64_t seed)
{
    const LaggedDesign d = make_lagged_design(panel, lags);
    return selection_frequencies(d, {StabilityTask{response, mask}}, cfg, seed).front();
}

/// Indices whose frequency reaches the threshold.
inline std::vector<Index> select(const FrequencyMatrix& f, double threshold)
{
    if (!(threshold > 0.0 && threshold <= 1.0)) throw ValidationError("selection threshold must be in (0, 1]");
    std::vector<Index> out;
    for (Index j = 0; j < f.freq.size(); ++j)
        if (f.freq(j) >= threshold) out.push_back(j);
    return out;
}

} // namespace spvar
