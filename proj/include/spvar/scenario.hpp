#pragma once

#include <spvar/core.hpp>
#include <spvar/spatial.hpp>
#include <spvar/two_step.hpp>
#include <spvar/var_model.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

namespace spvar {

struct LayoutSpec
{
    enum class Kind { uniform_square, gaussian_clusters };
    Kind kind = Kind::gaussian_clusters;
    Index k = 100;          ///< uniform_square: number of nodes
    Index n_centers = 5;    ///< gaussian_clusters: neighborhoods; uniform_square: 0 = max(1, k / 20)
    Index per_cluster = 20; ///< gaussian_clusters
    double spread = 0.1;    ///< standard deviation of each Gaussian neighborhood
    double side = 1.0;      ///< side length of the square holding the centers

    Index node_count() const { return kind == Kind::uniform_square ? k : n_centers * per_cluster; }

    void validate() const
    {
        if (!(side > 0.0)) throw ValidationError("square side length must be positive");
        if (kind == Kind::uniform_square) {
            if (k < 1) throw ValidationError("uniform layout needs at least one node");
            if (n_centers < 0) throw ValidationError("center count must be nonnegative");
        } else {
            if (n_centers < 1 || per_cluster < 1) throw ValidationError("cluster counts must be >= 1");
            if (!(spread > 0.0)) throw ValidationError("cluster spread must be positive");
        }
    }
};

struct GeneratedLayout
{
    SpatialLayout layout;
    std::vector<int> labels; ///< neighborhood per node
};

/// Spatial positions for a synthetic scenario. Gaussian clusters label
/// nodes by their cluster; uniform layouts label nodes by the nearest of
/// n_centers uniformly drawn centers.
inline GeneratedLayout gen_layout(const LayoutSpec& spec, std::uint64_t seed)
{
    spec.validate();
    Rng rng = make_rng(seed, "layout");
    std::uniform_real_distribution<double> unif(0.0, spec.side);
    std::normal_distribution<double> normal(0.0, 1.0);
    GeneratedLayout out;

    if (spec.kind == LayoutSpec::Kind::gaussian_clusters) {
        const Index k = spec.n_centers * spec.per_cluster;
        Matrix pos(k, 2);
        Index row = 0;
        for (Index c = 0; c < spec.n_centers; ++c) {
            const double cx = unif(rng), cy = unif(rng);
            for (Index m = 0; m < spec.per_cluster; ++m, ++row) {
                pos(row, 0) = cx + spec.spread * normal(rng);
                pos(row, 1) = cy + spec.spread * normal(rng);
                out.labels.push_back(static_cast<int>(c));
            }
        }
        out.layout = SpatialLayout(std::move(pos));
        return out;
    }

    const Index k = spec.k;
    const Index centers = spec.n_centers > 0 ? spec.n_centers : std::max<Index>(1, k / 20);
    Matrix pos(k, 2);
    for (Index i = 0; i < k; ++i) {
        pos(i, 0) = unif(rng);
        pos(i, 1) = unif(rng);
    }
    Matrix ctr(centers, 2);
    for (Index c = 0; c < centers; ++c) {
        ctr(c, 0) = unif(rng);
        ctr(c, 1) = unif(rng);
    }
    for (Index i = 0; i < k; ++i) {
        Index best = 0;
        (ctr.rowwise() - pos.row(i)).rowwise().squaredNorm().minCoeff(&best);
        out.labels.push_back(static_cast<int>(best));
    }
    out.layout = SpatialLayout(std::move(pos));
    return out;
}

/// Empirical q-quantile of the k(k-1)/2 pairwise distances using the
/// nearest-rank rule: the ceil(q n)-th smallest distance.
inline double quantile_radius(const SpatialLayout& layout, double q)
{
    if (!(q > 0.0 && q < 1.0)) throw ValidationError("quantile must lie in (0, 1)");
    const Index k = layout.size();
    if (k < 2) throw ValidationError("quantile radius needs at least two nodes");
    std::vector<double> d;
    d.reserve(static_cast<std::size_t>(k * (k - 1) / 2));
    for (Index i = 0; i < k; ++i)
        for (Index j = i + 1; j < k; ++j) d.push_back(layout.distance(i, j));
    const auto n = static_cast<double>(d.size());
    auto rank = static_cast<std::size_t>(std::ceil(q * n));
    rank = std::clamp<std::size_t>(rank, 1, d.size());
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(rank - 1), d.end());
    return d[rank - 1];
}

struct SparsitySpec
{
    double density = 0.02;
    double within_fraction = 0.9;
    double between_quantile = 0.3;
    double coef_low = 0.2;
    double coef_high = 0.8;
    double target_spectral_radius = 0.9;
    double noise_variance = 1.0;

    void validate(Index k) const
    {
        if (!(density > 0.0 && density <= 1.0)) throw ValidationError("density must lie in (0, 1]");
        if (density * static_cast<double>(k * k) < 1.0) throw ValidationError("density * k^2 must be at least 1");
        if (!(within_fraction >= 0.0 && within_fraction <= 1.0)) throw ValidationError("within fraction must lie in [0, 1]");
        if (!(between_quantile > 0.0 && between_quantile < 1.0)) throw ValidationError("between quantile must lie in (0, 1)");
        if (!(coef_low > 0.0 && coef_low <= coef_high)) throw ValidationError("coefficient range must be positive and ordered");
        if (!(target_spectral_radius > 0.0 && target_spectral_radius < 1.0))
            throw ValidationError("target spectral radius must lie in (0, 1)");
        if (!(noise_variance > 0.0)) throw ValidationError("noise variance must be positive");
    }
};

/// Ground truth of a synthetic world.
struct ScenarioTruth
{
    VarProcess process;
    SpatialLayout layout;
    std::vector<int> labels;
    EdgeSet support;
    double rho_true = 0.0;
    double beta_min = 0.0;
    std::uint64_t seed = 0;
};

/// Sparse transition matrices with neighborhood structure: a fraction of
/// edges joins nodes sharing a label, the rest join different labels at
/// distance <= quantile_radius(between_quantile). All lags are rescaled
/// (A_l <- c^l A_l) so the companion spectral radius hits the target.
inline ScenarioTruth gen_transition(const SpatialLayout& layout, const std::vector<int>& labels,
                                    const SparsitySpec& spec, Index lags, std::uint64_t seed)
{
    const Index k = layout.size();
    spec.validate(k);
    if (lags < 1) throw ValidationError("lag order must be at least 1");
    if (static_cast<Index>(labels.size()) != k) throw ShapeError("one label per node required");

    struct Triple
    {
        Index target, source, lag;
    };
    const double between_radius = k >= 2 ? quantile_radius(layout, spec.between_quantile) : 0.0;
    std::vector<Triple> within_pool, between_pool;
    for (Index t = 0; t < k; ++t)
        for (Index s = 0; s < k; ++s)
            for (Index l = 1; l <= lags; ++l) {
                if (labels[static_cast<std::size_t>(t)] == labels[static_cast<std::size_t>(s)])
                    within_pool.push_back({t, s, l});
                else if (layout.distance(t, s) <= between_radius)
                    between_pool.push_back({t, s, l});
            }

    const auto n_edges = static_cast<Index>(std::llround(spec.density * static_cast<double>(k * k)));
    const auto n_within = static_cast<Index>(std::llround(spec.within_fraction * static_cast<double>(n_edges)));
    const Index n_between = n_edges - n_within;
    if (n_within > static_cast<Index>(within_pool.size()))
        throw ConstraintInfeasibleError("not enough within-neighborhood pairs for " + std::to_string(n_within) + " edges");
    if (n_between > static_cast<Index>(between_pool.size()))
        throw ConstraintInfeasibleError("not enough between-neighborhood pairs within the " +
                                        std::to_string(spec.between_quantile) + " distance quantile");

    for (int attempt = 0; attempt < 50; ++attempt) {
        Rng rng = make_rng(seed, "transition", static_cast<std::uint64_t>(attempt));
        std::uniform_real_distribution<double> mag(spec.coef_low, spec.coef_high);
        std::bernoulli_distribution flip(0.5);

        TransitionStack stack = TransitionStack::zeros(k, lags);
        auto draw = [&](std::vector<Triple> pool, Index count) {
            for (Index i = 0; i < count; ++i) {
                std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), pool.size() - 1);
                std::swap(pool[static_cast<std::size_t>(i)], pool[pick(rng)]);
                const auto& tr = pool[static_cast<std::size_t>(i)];
                const double m = mag(rng);
                stack[tr.lag - 1](tr.target, tr.source) = flip(rng) ? m : -m;
            }
        };
        draw(within_pool, n_within);
        draw(between_pool, n_between);

        const double raw = companion_spectral_radius(stack);
        if (!(raw > 1e-8)) continue; // nilpotent draw cannot be rescaled
        // The companion radius is homogeneous: scaling A_l by c^l scales it by c.
        const double c = spec.target_spectral_radius / raw;
        double scale = 1.0;
        for (Index l = 0; l < lags; ++l) {
            scale *= c;
            stack[l] *= scale;
        }

        ScenarioTruth truth;
        truth.support = edges_from_stack(stack, &layout);
        truth.rho_true = 0.0;
        truth.beta_min = std::numeric_limits<double>::infinity();
        for (const auto& e : truth.support.edges) {
            truth.rho_true = std::max(truth.rho_true, e.distance);
            truth.beta_min = std::min(truth.beta_min, std::abs(e.coefficient));
        }
        truth.process = VarProcess(std::move(stack), NoiseSpec(Vector::Constant(k, spec.noise_variance)));
        truth.layout = layout;
        truth.labels = labels;
        truth.seed = seed;
        return truth;
    }
    throw ConstraintInfeasibleError("could not draw a transition matrix with nonzero spectral radius");
}

} // namespace spvar
