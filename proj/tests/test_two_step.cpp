#include "helpers.hpp"

#include <set>

using namespace spvar;
using testing_util::line_layout;

TEST(Sampling, BernoulliAllOnesIsEveryNode)
{
    const auto s = sample_nodes(BernoulliDesign{std::vector<double>(7, 1.0)}, 7, 3);
    EXPECT_EQ(s, (std::vector<Index>{0, 1, 2, 3, 4, 5, 6}));
}

TEST(Sampling, SrsDistinctAndDeterministic)
{
    const auto a = sample_nodes(SrsDesign{5}, 10, 4);
    EXPECT_EQ(a.size(), 5u);
    EXPECT_EQ(std::set<Index>(a.begin(), a.end()).size(), 5u);
    EXPECT_EQ(a, sample_nodes(SrsDesign{5}, 10, 4));
}

TEST(Sampling, StratifiedLargestRemainder)
{
    // Shares 45.2%, 22.6%, 15.6%, 9.1%, 5.5%, 2.0% of 1000 series.
    const std::vector<Index> sizes{452, 226, 156, 91, 55, 20};
    EXPECT_EQ(stratified_allocation(sizes, 20), (std::vector<Index>{9, 5, 3, 2, 1, 0}));
    std::vector<int> strata;
    for (std::size_t h = 0; h < sizes.size(); ++h) strata.insert(strata.end(), static_cast<std::size_t>(sizes[h]), int(h));
    const auto s = sample_nodes(StratifiedDesign{strata, 20}, 1000, 5);
    EXPECT_EQ(s.size(), 20u);
    std::vector<int> per(6, 0);
    for (Index i : s) ++per[static_cast<std::size_t>(strata[static_cast<std::size_t>(i)])];
    EXPECT_EQ(per, (std::vector<int>{9, 5, 3, 2, 1, 0}));
}

TEST(Sampling, InvalidDesigns)
{
    EXPECT_THROW(sample_nodes(SrsDesign{11}, 10, 1), ValidationError);
    EXPECT_THROW(sample_nodes(BernoulliDesign{std::vector<double>(3, 0.0)}, 3, 1), ValidationError);
    EXPECT_THROW(sample_nodes(BernoulliDesign{std::vector<double>(2, 0.5)}, 3, 1), ShapeError);
    EXPECT_THROW(sample_nodes(BernoulliDesign{std::vector<double>(3, 1e-300)}, 3, 1), EmptySampleError);
}

TEST(Radius, Examples)
{
    EdgeSet es;
    es.edges.push_back({0, 1, 1, 0.5, 3.0});
    EXPECT_EQ(*estimate_radius(es), 3.0);
    es.edges = {{0, 1, 1, 0.5, 1.0}, {1, 2, 1, 0.5, 2.5}, {2, 0, 1, 0.5, 0.3}};
    EXPECT_EQ(*estimate_radius(es), 2.5);
    EXPECT_FALSE(estimate_radius(EdgeSet{}).has_value());
    es.edges = {{1, 1, 1, 0.5, 0.0}};
    EXPECT_FALSE(estimate_radius(es).has_value());
}

TEST(DistanceMask, CollinearExample)
{
    Matrix p(3, 1);
    p << 0.0, 1.0, 5.0;
    const SpatialLayout layout(p, Metric::euclidean);
    const auto m = build_distance_mask(layout, 1.0, 2, 1);
    EXPECT_EQ(m.count(), 4);
    EXPECT_EQ(m.allowed(), (std::vector<bool>{true, true, false, true, true, false}));
    EXPECT_EQ(m.count(), layout.ball_count(1, 1.0) * 2);
    EXPECT_TRUE(build_distance_mask(layout, layout.rho_max(), 2, 0).is_full());
    EXPECT_EQ(build_distance_mask(layout, 0.0, 2, 2).indices(), (std::vector<Index>{2, 5}));
    EXPECT_TRUE(build_distance_mask(layout, 1.0, 2, 0).subset_of(build_distance_mask(layout, 4.0, 2, 0)));
}

namespace {

struct Toy
{
    TimeSeriesPanel panel;
    SpatialLayout layout;
};

/// Chain of k nodes on a line; each node is driven by itself and its left
/// neighbour.
Toy chain(Index k, Index n, std::uint64_t seed)
{
    Matrix a = Matrix::Zero(k, k);
    for (Index i = 0; i < k; ++i) {
        a(i, i) = 0.4;
        if (i > 0) a(i, i - 1) = 0.4;
    }
    return {simulate(VarProcess(TransitionStack({a}), NoiseSpec::identity(k)), n, seed), line_layout(k)};
}

} // namespace

TEST(Step2, RhoAtMaxEqualsFullFit)
{
    const Toy t = chain(8, 120, 2);
    for (auto kind : {SelectionConfig::Kind::stability, SelectionConfig::Kind::fixed_lambda}) {
        SelectionConfig sel;
        sel.kind = kind;
        sel.stability.n_subsamples = 30;
        const auto full = full_fit(t.panel, t.layout, 2, sel, 5);
        const auto masked = step2_fit(t.panel, t.layout, t.layout.rho_max(), 2, sel, 5);
        for (Index l = 0; l < 2; ++l) EXPECT_LT((full.stack[l] - masked.stack[l]).cwiseAbs().maxCoeff(), 1e-6);
        TwoStepConfig cfg;
        cfg.lags = 2;
        cfg.step2 = sel;
        cfg.rho_mode = RhoMode::known;
        cfg.rho = t.layout.rho_max() * 2;
        const auto known = two_step(t.panel, t.layout, cfg, 5);
        for (Index l = 0; l < 2; ++l) EXPECT_LT((full.stack[l] - known.stack[l]).cwiseAbs().maxCoeff(), 1e-6);
        EXPECT_EQ(known.rho_source, RhoSource::known);
    }
}

TEST(Step2, AllowedCountsAndSupportContainment)
{
    const Toy t = chain(8, 120, 3);
    SelectionConfig sel;
    sel.stability.n_subsamples = 30;
    const auto r = step2_fit(t.panel, t.layout, 1.0, 2, sel, 1);
    for (Index i = 0; i < 8; ++i) EXPECT_EQ(r.diagnostics[static_cast<std::size_t>(i)].n_allowed, t.layout.ball_count(i, 1.0) * 2);
    for (const auto& e : r.edges.edges) EXPECT_LE(e.distance, 1.0);
    EXPECT_EQ(static_cast<Index>(r.edges.size()), r.stack.nonzeros());
}

TEST(Step2, RhoZeroOnDiagonalProcessKeepsSelfEdges)
{
    int ok = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const Index k = 5;
        Matrix a = 0.7 * Matrix::Identity(k, k);
        const auto panel = simulate(VarProcess(TransitionStack({a}), NoiseSpec::identity(k)), 300, seed);
        const auto r = step2_fit(panel, line_layout(k), 0.0, 1, SelectionConfig{}, seed);
        bool good = r.edges.size() == static_cast<std::size_t>(k);
        for (const auto& e : r.edges.edges) good = good && e.source == e.target;
        ok += good;
    }
    EXPECT_GE(ok, 19);
}

TEST(Step1, HugeLambdaGivesNoEdges)
{
    const Toy t = chain(6, 100, 1);
    SelectionConfig sel;
    sel.kind = SelectionConfig::Kind::fixed_lambda;
    sel.lambda = 1e6;
    std::vector<Index> all{0, 1, 2, 3, 4, 5};
    EXPECT_TRUE(step1_estimate_edges(t.panel, t.layout, all, 1, sel, 1).empty());
}

TEST(Step1, StrongTwoNodeProcessRecovered)
{
    Matrix a(2, 2);
    a << 0.8, 0.0, 0.6, 0.3;
    const SpatialLayout layout = line_layout(2);
    SelectionConfig sel;
    sel.kind = SelectionConfig::Kind::fixed_lambda;
    sel.lambda_ratio = 0.1;
    int ok = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto panel = simulate(VarProcess(TransitionStack({a}), NoiseSpec::identity(2)), 2000, seed);
        const auto es = step1_estimate_edges(panel, layout, {0, 1}, 1, sel, seed);
        std::set<std::pair<Index, Index>> got;
        for (const auto& e : es.edges) got.insert({e.source, e.target});
        ok += got == std::set<std::pair<Index, Index>>{{0, 0}, {0, 1}, {1, 1}};
    }
    EXPECT_GE(ok, 19);
}

TEST(Step1, NodeWithoutIncomingEdgesStaysEmpty)
{
    // Node 0 is white noise; nodes 1..3 depend on their neighbours.
    Matrix a = Matrix::Zero(4, 4);
    a(1, 0) = 0.6;
    a(2, 1) = 0.6;
    a(3, 2) = 0.6;
    a(3, 3) = 0.3;
    int ok = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto panel = simulate(VarProcess(TransitionStack({a}), NoiseSpec::identity(4)), 500, seed);
        ok += step1_estimate_edges(panel, line_layout(4), {0}, 1, SelectionConfig{}, seed).empty();
    }
    EXPECT_GE(ok, 19);
}

TEST(TwoStep, EmptyStepOneFallsBackToRhoMax)
{
    testing_util::WarningCapture w;
    const Index k = 4;
    const auto panel = simulate(VarProcess(TransitionStack::zeros(k, 1), NoiseSpec::identity(k)), 200, 1);
    TwoStepConfig cfg;
    cfg.design = SrsDesign{2};
    cfg.step1.kind = SelectionConfig::Kind::fixed_lambda;
    cfg.step1.lambda = 1e6;
    const auto r = two_step(panel, line_layout(k), cfg, 1);
    EXPECT_EQ(r.rho_source, RhoSource::fallback);
    EXPECT_DOUBLE_EQ(*r.rho_hat, 3.0);
    EXPECT_FALSE(w.messages.empty());
}

TEST(TwoStep, EstimatedRadiusBoundedAndDeterministic)
{
    const Toy t = chain(10, 200, 6);
    TwoStepConfig cfg;
    cfg.design = SrsDesign{5};
    cfg.step1.stability.n_subsamples = 40;
    cfg.step2.stability.n_subsamples = 40;
    const auto a = two_step(t.panel, t.layout, cfg, 12);
    cfg.threads = 3;
    const auto b = two_step(t.panel, t.layout, cfg, 12);
    ASSERT_TRUE(a.rho_hat.has_value());
    EXPECT_LE(*a.rho_hat, t.layout.rho_max());
    EXPECT_EQ(a.sampled_nodes.size(), 5u);
    for (const auto& e : a.edges.edges) EXPECT_LE(e.distance, *a.rho_hat);
    EXPECT_TRUE(a.stack[0] == b.stack[0]);
    EXPECT_TRUE(a.scores == b.scores);
}

TEST(TwoStep, InflationClampedToRhoMax)
{
    const Toy t = chain(6, 200, 7);
    TwoStepConfig cfg;
    cfg.design = SrsDesign{6};
    cfg.rho_inflation = 100.0;
    const auto r = two_step(t.panel, t.layout, cfg, 2);
    EXPECT_DOUBLE_EQ(*r.rho_hat, t.layout.rho_max());
    cfg.rho_inflation = 0.5;
    EXPECT_THROW(two_step(t.panel, t.layout, cfg, 2), ValidationError);
}

TEST(TwoStep, ShapeMismatchRejected)
{
    const Toy t = chain(6, 50, 1);
    EXPECT_THROW(two_step(t.panel, line_layout(5), TwoStepConfig{}, 1), ShapeError);
}

TEST(Edges, StackRoundTrip)
{
    Matrix a1(2, 2), a2(2, 2);
    a1 << 0.1, 0, 0, -0.2;
    a2 << 0, 0.3, 0, 0;
    const TransitionStack s({a1, a2});
    const auto layout = line_layout(2, 2.0);
    const auto es = edges_from_stack(s, &layout);
    ASSERT_EQ(es.size(), 3u);
    EXPECT_EQ(es.edges[1].lag, 2);
    EXPECT_DOUBLE_EQ(es.edges[1].distance, 2.0);
    const auto back = stack_from_edges(es, 2, 2);
    EXPECT_TRUE(back[0] == a1 && back[1] == a2);
}

TEST(Layout, HaversineKnownDistance)
{
    // London to Paris, about 343.5 km.
    EXPECT_NEAR(haversine_km(-0.1278, 51.5074, 2.3522, 48.8566), 343.5, 1.0);
    Matrix p(2, 2);
    p << -0.1278, 51.5074, 2.3522, 48.8566;
    const SpatialLayout l(p, Metric::haversine_km);
    EXPECT_DOUBLE_EQ(l.distance(0, 1), l.distance(1, 0));
    EXPECT_EQ(l.distance(0, 0), 0.0);
}

TEST(Scores, KindsAgreeOnMaskingAndSupport)
{
    const auto layout = line_layout(6);
    Matrix a = Matrix::Zero(6, 6);
    a.diagonal().setConstant(0.5);
    a(1, 0) = 0.4;
    a(4, 3) = -0.4;
    const auto panel = simulate(VarProcess(TransitionStack({a}), NoiseSpec::identity(6)), 400, 8);
    for (auto score : {SelectionConfig::Score::coefficient, SelectionConfig::Score::path}) {
        SelectionConfig sel;
        sel.score = score;
        sel.stability.max_selected = 3;
        const auto full = full_fit(panel, layout, 1, sel, 3);
        const auto masked = step2_fit(panel, layout, 1.0, 1, sel, 3);
        EXPECT_TRUE(full.stack[0] == step2_fit(panel, layout, layout.rho_max(), 1, sel, 3).stack[0]);
        EXPECT_TRUE(full.scores == step2_fit(panel, layout, layout.rho_max(), 1, sel, 3).scores);
        for (Index i = 0; i < 6; ++i)
            for (Index j = 0; j < 6; ++j) {
                if (std::abs(i - j) > 1) EXPECT_EQ(masked.scores(i, j), 0.0);
                EXPECT_GE(full.scores(i, j), 0.0);
                EXPECT_LE(full.scores(i, j), score == SelectionConfig::Score::path ? 1.0 : 1e9);
            }
        // The strongest true edges rank above every unrelated pair.
        EXPECT_GT(full.scores(1, 0), full.scores(5, 0));
        EXPECT_GT(full.scores(4, 3), full.scores(0, 5));
    }
}
