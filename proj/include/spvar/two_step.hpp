#pragma once

#include <spvar/core.hpp>
#include <spvar/regression.hpp>
#include <spvar/spatial.hpp>
#include <spvar/stability.hpp>
#include <spvar/var_model.hpp>

#include <algorithm>
#include <chrono>
#include <map>
#include <numeric>
#include <optional>
#include <variant>
#include <vector>

namespace spvar {

// ---------------------------------------------------------------------------
// Node sampling
// ---------------------------------------------------------------------------

struct BernoulliDesign
{
    std::vector<double> theta; ///< inclusion probability per node, in (0, 1]
};

struct SrsDesign
{
    Index n = 0;
};

struct StratifiedDesign
{
    std::vector<int> strata; ///< stratum label per node
    Index total = 0;
};

using SamplingDesign = std::variant<BernoulliDesign, SrsDesign, StratifiedDesign>;

inline void validate_design(const SamplingDesign& design, Index k)
{
    std::visit(
        [k](const auto& d) {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, BernoulliDesign>) {
                if (static_cast<Index>(d.theta.size()) != k)
                    throw ShapeError("bernoulli design needs one probability per node");
                for (double t : d.theta)
                    if (!(t > 0.0 && t <= 1.0)) throw ValidationError("inclusion probabilities must lie in (0, 1]");
            } else if constexpr (std::is_same_v<T, SrsDesign>) {
                if (d.n < 1 || d.n > k) throw ValidationError("srs sample size must be in [1, k]");
            } else {
                if (static_cast<Index>(d.strata.size()) != k) throw ShapeError("stratified design needs one label per node");
                if (d.total < 1 || d.total > k) throw ValidationError("stratified total must be in [1, k]");
            }
        },
        design);
}

/// Proportional allocation of `total` units over strata of the given sizes
/// with largest-remainder rounding. Ties in the remainder go to the earlier
/// stratum; no stratum receives more than its size.
inline std::vector<Index> stratified_allocation(const std::vector<Index>& sizes, Index total)
{
    const Index k = std::accumulate(sizes.begin(), sizes.end(), Index{0});
    if (k < 1 || total < 0 || total > k) throw ValidationError("invalid stratified allocation request");
    const std::size_t h = sizes.size();
    std::vector<Index> alloc(h);
    std::vector<double> rem(h);
    Index assigned = 0;
    for (std::size_t s = 0; s < h; ++s) {
        const double exact = static_cast<double>(total) * static_cast<double>(sizes[s]) / static_cast<double>(k);
        alloc[s] = std::min(sizes[s], static_cast<Index>(std::floor(exact)));
        rem[s] = exact - static_cast<double>(alloc[s]);
        assigned += alloc[s];
    }
    std::vector<std::size_t> order(h);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
    while (assigned < total) {
        bool progressed = false;
        for (std::size_t s : order) {
            if (assigned == total) break;
            if (alloc[s] < sizes[s]) {
                ++alloc[s];
                ++assigned;
                progressed = true;
            }
        }
        if (!progressed) break;
    }
    return alloc;
}

/// Draws the Step-1 node sample. Returned indices are sorted.
inline std::vector<Index> sample_nodes(const SamplingDesign& design, Index k, std::uint64_t seed)
{
    validate_design(design, k);
    Rng rng = make_rng(seed, "sample-nodes");
    std::vector<Index> out;

    if (const auto* b = std::get_if<BernoulliDesign>(&design)) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int attempt = 0; attempt < 100 && out.empty(); ++attempt)
            for (Index i = 0; i < k; ++i)
                if (u(rng) < b->theta[static_cast<std::size_t>(i)]) out.push_back(i);
        if (out.empty()) throw EmptySampleError("bernoulli design produced an empty sample 100 times");
        return out;
    }

    auto draw_from = [&rng](std::vector<Index> pool, Index n, std::vector<Index>& dest) {
        // Partial Fisher-Yates.
        for (Index i = 0; i < n; ++i) {
            std::uniform_int_distribution<Index> pick(i, static_cast<Index>(pool.size()) - 1);
            std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
            dest.push_back(pool[static_cast<std::size_t>(i)]);
        }
    };

    if (const auto* s = std::get_if<SrsDesign>(&design)) {
        std::vector<Index> all(static_cast<std::size_t>(k));
        std::iota(all.begin(), all.end(), Index{0});
        draw_from(std::move(all), s->n, out);
    } else {
        const auto& st = std::get<StratifiedDesign>(design);
        std::map<int, std::vector<Index>> members;
        std::vector<int> label_order;
        for (Index i = 0; i < k; ++i) {
            const int lab = st.strata[static_cast<std::size_t>(i)];
            if (!members.count(lab)) label_order.push_back(lab);
            members[lab].push_back(i);
        }
        std::vector<Index> sizes;
        for (int lab : label_order) sizes.push_back(static_cast<Index>(members[lab].size()));
        const auto alloc = stratified_allocation(sizes, st.total);
        for (std::size_t h = 0; h < label_order.size(); ++h) draw_from(members[label_order[h]], alloc[h], out);
    }
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// Edges and fit results
// ---------------------------------------------------------------------------

struct Edge
{
    Index source = 0;
    Index target = 0;
    Index lag = 1;
    double coefficient = 0.0;
    double distance = 0.0;
};

struct EdgeSet
{
    std::vector<Edge> edges;

    std::size_t size() const noexcept { return edges.size(); }
    bool empty() const noexcept { return edges.empty(); }
};

/// Nonzero entries of a transition stack as edges, ordered by
/// (target, lag, source).
inline EdgeSet edges_from_stack(const TransitionStack& stack, const SpatialLayout* layout = nullptr)
{
    EdgeSet es;
    const Index k = stack.dim();
    for (Index target = 0; target < k; ++target)
        for (Index l = 1; l <= stack.lags(); ++l)
            for (Index source = 0; source < k; ++source) {
                const double c = stack[l - 1](target, source);
                if (c == 0.0) continue;
                es.edges.push_back({source, target, l, c, layout ? layout->distance(target, source) : 0.0});
            }
    return es;
}

inline TransitionStack stack_from_edges(const EdgeSet& es, Index k, Index lags)
{
    TransitionStack s = TransitionStack::zeros(k, lags);
    for (const auto& e : es.edges) {
        if (e.source < 0 || e.source >= k || e.target < 0 || e.target >= k || e.lag < 1 || e.lag > lags)
            throw ShapeError("edge endpoint or lag out of range");
        s[e.lag - 1](e.target, e.source) = e.coefficient;
    }
    return s;
}

/// Step 1.3: largest distance between two distinct nodes joined by an
/// estimated edge. std::nullopt signals that no such edge exists.
inline std::optional<double> estimate_radius(const EdgeSet& es)
{
    std::optional<double> r;
    for (const auto& e : es.edges) {
        if (e.source == e.target) continue;
        r = std::max(r.value_or(0.0), e.distance);
    }
    return r;
}

/// Allows predictor (source j, lag l) for `target` iff d(target, j) <= rho.
inline PredictorMask build_distance_mask(const SpatialLayout& layout, double rho, Index lags, Index target)
{
    if (!(rho >= 0.0)) throw ValidationError("radius must be nonnegative");
    const Index k = layout.size();
    if (target < 0 || target >= k) throw ValidationError("target out of range");
    std::vector<bool> allowed(static_cast<std::size_t>(k * lags));
    for (Index l = 1; l <= lags; ++l)
        for (Index j = 0; j < k; ++j)
            allowed[static_cast<std::size_t>(GramSystem::flat_index(j, l, k))] = layout.distance(target, j) <= rho;
    return PredictorMask(std::move(allowed));
}

/// How coefficients and supports are chosen per component.
struct SelectionConfig
{
    enum class Kind { stability, fixed_lambda };
    /// Per-coefficient evidence reported in FitResult::scores.
    /// frequency: stability selection frequency (|beta| under fixed_lambda);
    /// coefficient: |beta| of the final estimate; path: entry lambda on the
    /// full-sample lasso path over lambda_max of the unmasked component.
    enum class Score { frequency, coefficient, path };
    Kind kind = Kind::stability;
    Score score = Score::frequency;
    StabilityConfig stability;
    /// fixed_lambda: absolute penalty if set, otherwise lambda_ratio times the
    /// unmasked lambda_max of the component (so masked and unmasked fits of
    /// the same component share the same penalty).
    std::optional<double> lambda;
    double lambda_ratio = 0.1;
    LassoOptions solver;
};

enum class RhoSource { unbounded, estimated, known, upper_bound, fallback };

inline std::string to_string(RhoSource s)
{
    switch (s) {
    case RhoSource::unbounded: return "unbounded";
    case RhoSource::estimated: return "estimated";
    case RhoSource::known: return "known";
    case RhoSource::upper_bound: return "upper_bound";
    case RhoSource::fallback: return "fallback_rho_max";
    }
    return "unknown";
}

struct ComponentDiagnostics
{
    Index component = 0;
    Index n_allowed = 0;
    Index n_selected = 0;
    int iterations = 0;
    double kkt_residual = 0.0;
    double lambda = 0.0;
};

struct PhaseTimings
{
    double step1_sec = 0.0;
    double step2_sec = 0.0;
};

struct FitResult
{
    TransitionStack stack;
    /// Row = target component, column = flat predictor (lag, source).
    /// Selection frequency (stability) or |beta| (fixed lambda).
    Matrix scores;
    std::optional<double> rho_hat;
    RhoSource rho_source = RhoSource::unbounded;
    EdgeSet edges;
    EdgeSet step1_edges;
    std::vector<Index> sampled_nodes;
    PhaseTimings timings;
    std::vector<ComponentDiagnostics> diagnostics;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct ComponentFit
{
    Vector beta;
    Vector scores;
    ComponentDiagnostics diag;
};

/// Largest grid lambda (relative to `lmax_ref`) at which each allowed
/// predictor is active on the warm-started full-sample path; 0 if never.
inline Vector path_scores(const GramSystem& g, Index response, const PredictorMask& mask, double lmax_ref,
                          const StabilityConfig& cfg)
{
    Vector out = Vector::Zero(g.n_predictors());
    if (mask.count() == 0 || !(lmax_ref > 0.0)) return out;
    const double lmax = lambda_max(g, response, mask);
    if (!(lmax > 0.0)) return out;
    CoordinateSolver solver(g.gram, g.xty.col(response), mask, false);
    for (double lam : lambda_grid(lmax, cfg.n_lambda, cfg.lambda_ratio)) {
        const auto res = solver.solve(lam, cfg.tol, cfg.max_iter);
        if (!res.converged)
            throw ConvergenceError("lasso path for component " + std::to_string(response) + " did not converge", res.kkt,
                                   solver.beta());
        for (Index j : solver.allowed())
            if (solver.beta()(j) != 0.0 && out(j) == 0.0) out(j) = lam / lmax_ref;
    }
    return out;
}

inline void apply_score(ComponentFit& f, const SelectionConfig& sel, const GramSystem& full, Index component,
                        const PredictorMask& mask)
{
    if (sel.score == SelectionConfig::Score::coefficient) f.scores = f.beta.cwiseAbs();
    else if (sel.score == SelectionConfig::Score::path)
        f.scores = path_scores(full, component, mask, lambda_max(full, component, PredictorMask::full(full.n_predictors())),
                               sel.stability);
}

/// Fits each listed component with its mask. Randomness comes only from
/// (seed, label), so a component's result does not depend on which other
/// components are fitted alongside it.
inline std::vector<ComponentFit> fit_components(const LaggedDesign& design, const std::vector<Index>& components,
                                                const std::vector<PredictorMask>& masks, const SelectionConfig& sel,
                                                std::uint64_t seed, std::string_view label, std::size_t threads)
{
    const std::size_t n = components.size();
    std::vector<ComponentFit> out(n);
    const GramSystem full = build_gram(design);
    const Index p = full.n_predictors();
    const PredictorMask everything = PredictorMask::full(p);

    if (sel.kind == SelectionConfig::Kind::stability) {
        std::vector<StabilityTask> tasks;
        tasks.reserve(n);
        for (std::size_t c = 0; c < n; ++c) tasks.push_back({components[c], masks[c]});
        const auto freqs = selection_frequencies(design, tasks, sel.stability, derive_seed(seed, label), threads);
        parallel_for(n, threads, [&](std::size_t c) {
            auto support = select(freqs[c], sel.stability.threshold);
            std::erase_if(support, [&](Index j) { return !masks[c][j]; });
            auto& f = out[c];
            f.beta = least_squares_on_support(full, components[c], support);
            f.scores = freqs[c].freq;
            apply_score(f, sel, full, components[c], masks[c]);
            f.diag.component = components[c];
            f.diag.n_allowed = masks[c].count();
            f.diag.n_selected = static_cast<Index>(support.size());
        });
        return out;
    }

    parallel_for(n, threads, [&](std::size_t c) {
        auto& f = out[c];
        const Index i = components[c];
        f.diag.component = i;
        f.diag.n_allowed = masks[c].count();
        double lambda = 0.0;
        if (sel.lambda) lambda = *sel.lambda;
        else lambda = sel.lambda_ratio * lambda_max(full, i, everything);
        if (f.diag.n_allowed == 0 || lambda_max(full, i, everything) == 0.0) {
            f.beta = Vector::Zero(p);
        } else {
            LassoSolution sol;
            try {
                sol = lasso_cd(full, i, masks[c], lambda, sel.solver);
            } catch (const ConvergenceError& e) {
                throw ConvergenceError("component " + std::to_string(i) + ": " + e.what(), e.residual(),
                                       e.last_iterate());
            }
            f.beta = sol.beta;
            f.diag.iterations = sol.iterations;
            f.diag.kkt_residual = sol.kkt_residual;
        }
        f.diag.lambda = lambda;
        f.diag.n_selected = (f.beta.array() != 0.0).count();
        f.scores = f.beta.cwiseAbs();
        apply_score(f, sel, full, i, masks[c]);
    });
    return out;
}

inline void check_inputs(const TimeSeriesPanel& panel, const SpatialLayout& layout, Index lags)
{
    if (panel.n_series() != layout.size())
        throw ShapeError("panel has " + std::to_string(panel.n_series()) + " series but layout has " +
                         std::to_string(layout.size()) + " nodes");
    if (lags < 1) throw ValidationError("lag order must be at least 1");
}

/// Fit all k components under per-component masks into a FitResult.
inline FitResult fit_all(const LaggedDesign& design, const SpatialLayout* layout,
                         const std::vector<PredictorMask>& masks, const SelectionConfig& sel, std::uint64_t seed,
                         std::size_t threads)
{
    const Index k = design.k, L = design.lags;
    std::vector<Index> comps(static_cast<std::size_t>(k));
    std::iota(comps.begin(), comps.end(), Index{0});
    const auto fits = fit_components(design, comps, masks, sel, seed, "fit", threads);

    FitResult r;
    r.stack = TransitionStack::zeros(k, L);
    r.scores = Matrix::Zero(k, k * L);
    for (Index i = 0; i < k; ++i) {
        const auto& f = fits[static_cast<std::size_t>(i)];
        r.scores.row(i) = f.scores.transpose();
        for (Index flat = 0; flat < k * L; ++flat)
            r.stack[flat / k](i, flat % k) = f.beta(flat);
        r.diagnostics.push_back(f.diag);
    }
    r.edges = edges_from_stack(r.stack, layout);
    return r;
}

} // namespace detail

/// Step 1.2: regress each sampled node on all kL lagged predictors and
/// report its estimated incoming edges.
inline EdgeSet step1_estimate_edges(const LaggedDesign& design, const SpatialLayout& layout,
                                    const std::vector<Index>& sampled, const SelectionConfig& sel,
                                    std::uint64_t seed, std::size_t threads = 1)
{
    if (sampled.empty()) throw EmptySampleError("step 1 needs at least one sampled node");
    const Index k = design.k, p = design.n_predictors();
    if (layout.size() != k) throw ShapeError("layout size differs from panel width");
    for (Index i : sampled)
        if (i < 0 || i >= k) throw ValidationError("sampled node out of range");
    std::vector<PredictorMask> masks(sampled.size(), PredictorMask::full(p));
    const auto fits = detail::fit_components(design, sampled, masks, sel, seed, "step1", threads);
    EdgeSet es;
    for (std::size_t c = 0; c < sampled.size(); ++c) {
        const Index target = sampled[c];
        for (Index flat = 0; flat < p; ++flat) {
            const double coef = fits[c].beta(flat);
            if (coef == 0.0) continue;
            const Index source = flat % k;
            es.edges.push_back({source, target, flat / k + 1, coef, layout.distance(target, source)});
        }
    }
    return es;
}

inline EdgeSet step1_estimate_edges(const TimeSeriesPanel& panel, const SpatialLayout& layout,
                                    const std::vector<Index>& sampled, Index lags, const SelectionConfig& sel,
                                    std::uint64_t seed, std::size_t threads = 1)
{
    detail::check_inputs(panel, layout, lags);
    return step1_estimate_edges(make_lagged_design(panel, lags), layout, sampled, sel, seed, threads);
}

/// Step 2: all k components restricted to sources within distance rho.
inline FitResult step2_fit(const LaggedDesign& design, const SpatialLayout& layout, double rho,
                           const SelectionConfig& sel, std::uint64_t seed, std::size_t threads = 1)
{
    if (!(rho >= 0.0)) throw ValidationError("radius must be nonnegative");
    const auto t0 = detail::Clock::now();
    std::vector<PredictorMask> masks;
    masks.reserve(static_cast<std::size_t>(design.k));
    for (Index i = 0; i < design.k; ++i) masks.push_back(build_distance_mask(layout, rho, design.lags, i));
    FitResult r = detail::fit_all(design, &layout, masks, sel, seed, threads);
    r.rho_hat = rho;
    r.rho_source = RhoSource::known;
    r.timings.step2_sec = detail::seconds_since(t0);
    return r;
}

inline FitResult step2_fit(const TimeSeriesPanel& panel, const SpatialLayout& layout, double rho, Index lags,
                           const SelectionConfig& sel, std::uint64_t seed, std::size_t threads = 1)
{
    detail::check_inputs(panel, layout, lags);
    const auto t0 = detail::Clock::now();
    const auto design = make_lagged_design(panel, lags);
    FitResult r = step2_fit(design, layout, rho, sel, seed, threads);
    r.timings.step2_sec = detail::seconds_since(t0);
    return r;
}

/// Plain l1-penalized least squares over all kL predictors per component.
/// Without a layout, edge distances are reported as 0.
inline FitResult full_fit(const TimeSeriesPanel& panel, const SpatialLayout* layout, Index lags,
                          const SelectionConfig& sel, std::uint64_t seed, std::size_t threads = 1)
{
    if (layout) detail::check_inputs(panel, *layout, lags);
    const auto t0 = detail::Clock::now();
    const auto design = make_lagged_design(panel, lags);
    std::vector<PredictorMask> masks(static_cast<std::size_t>(design.k), PredictorMask::full(design.n_predictors()));
    FitResult r = detail::fit_all(design, layout, masks, sel, seed, threads);
    r.rho_source = RhoSource::unbounded;
    r.timings.step2_sec = detail::seconds_since(t0);
    return r;
}

inline FitResult full_fit(const TimeSeriesPanel& panel, const SpatialLayout& layout, Index lags,
                          const SelectionConfig& sel, std::uint64_t seed, std::size_t threads = 1)
{
    return full_fit(panel, &layout, lags, sel, seed, threads);
}

enum class RhoMode { estimate, known, upper_bound };

/// Step 1 only feeds a maximum distance, so a single spurious long edge
/// inflates the radius. Its default selection is stricter than Step 2's.
inline SelectionConfig step1_defaults()
{
    SelectionConfig s;
    s.stability.threshold = 0.9;
    s.stability.expected_false_selections = 0.2;
    return s;
}

struct TwoStepConfig
{
    SamplingDesign design = SrsDesign{1};
    Index lags = 1;
    SelectionConfig step1 = step1_defaults();
    SelectionConfig step2;
    RhoMode rho_mode = RhoMode::estimate;
    double rho = 0.0;           ///< used by known / upper_bound
    double rho_inflation = 1.0; ///< multiplies the Step-1 estimate
    std::size_t threads = 1;
};

/// The full two-step procedure. With a known or bounded radius Step 1 is
/// skipped. An empty Step-1 edge set falls back to rho_max with a warning.
inline FitResult two_step(const TimeSeriesPanel& panel, const SpatialLayout& layout, const TwoStepConfig& cfg,
                          std::uint64_t seed)
{
    detail::check_inputs(panel, layout, cfg.lags);
    if (!(cfg.rho_inflation >= 1.0)) throw ValidationError("rho inflation factor must be >= 1");
    const auto t0 = detail::Clock::now();
    const auto design = make_lagged_design(panel, cfg.lags);

    if (cfg.rho_mode != RhoMode::estimate) {
        if (!(cfg.rho >= 0.0)) throw ValidationError("radius must be nonnegative");
        FitResult r = step2_fit(design, layout, cfg.rho, cfg.step2, seed, cfg.threads);
        r.rho_source = cfg.rho_mode == RhoMode::known ? RhoSource::known : RhoSource::upper_bound;
        r.timings.step2_sec = detail::seconds_since(t0);
        return r;
    }

    std::vector<Index> sampled = sample_nodes(cfg.design, layout.size(), seed);
    EdgeSet step1 = step1_estimate_edges(design, layout, sampled, cfg.step1, seed, cfg.threads);
    const double step1_sec = detail::seconds_since(t0);

    double rho;
    RhoSource source = RhoSource::estimated;
    if (auto est = estimate_radius(step1)) {
        rho = std::min(*est * cfg.rho_inflation, layout.rho_max());
    } else {
        warn("step 1 found no edges between distinct nodes; falling back to rho_max = " +
             std::to_string(layout.rho_max()) + " (plain lasso)");
        rho = layout.rho_max();
        source = RhoSource::fallback;
    }

    const auto t1 = detail::Clock::now();
    FitResult r = step2_fit(design, layout, rho, cfg.step2, seed, cfg.threads);
    r.timings.step2_sec = detail::seconds_since(t1);
    r.timings.step1_sec = step1_sec;
    r.rho_source = source;
    r.sampled_nodes = std::move(sampled);
    r.step1_edges = std::move(step1);
    return r;
}

} // namespace spvar
