#include "brute_force.hpp"
#include "helpers.hpp"

#include <random>

using namespace spvar;
using testing_util::row_major;

namespace {

GramSystem make_system(const Matrix& gram, const Vector& xty)
{
    GramSystem g;
    g.gram = gram;
    g.xty = xty;
    g.n_effective = 1;
    g.k = xty.size();
    g.lags = 1;
    return g;
}

} // namespace

TEST(BuildGram, HandArithmetic)
{
    Matrix v(3, 1);
    v << 1, 2, 3;
    const GramSystem g = build_gram(TimeSeriesPanel(v), 1);
    EXPECT_EQ(g.n_effective, 2);
    EXPECT_DOUBLE_EQ(g.gram(0, 0), 2.5);
    EXPECT_DOUBLE_EQ(g.xty(0, 0), 4.0);
}

TEST(BuildGram, ZeroPanel)
{
    const GramSystem g = build_gram(TimeSeriesPanel(Matrix::Zero(6, 2)), 2);
    EXPECT_TRUE(g.gram.isZero(0.0));
    EXPECT_TRUE(g.xty.isZero(0.0));
}

TEST(BuildGram, MatchesNumpyAndIsSymmetric)
{
    const auto panel = testing_util::oracle_panel();
    for (Index L : {1, 2}) {
        const GramSystem g = build_gram(panel, L);
        const auto& ref_g = L == 1 ? oracle::gram_L1 : oracle::gram_L2;
        const auto& ref_x = L == 1 ? oracle::xty_L1 : oracle::xty_L2;
        const Index p = 3 * L;
        EXPECT_LT((g.gram - row_major(ref_g, p, p)).cwiseAbs().maxCoeff(), 1e-14);
        EXPECT_LT((g.xty - row_major(ref_x, p, 3)).cwiseAbs().maxCoeff(), 1e-14);
        EXPECT_TRUE(g.gram == g.gram.transpose());
        EXPECT_EQ(g.predictor_source(4 % p), (4 % p) % 3);
    }
}

TEST(BuildGram, Errors)
{
    Matrix v = Matrix::Ones(2, 2);
    EXPECT_THROW(build_gram(TimeSeriesPanel(v), 2), InsufficientDataError);
    BoolMatrix miss = BoolMatrix::Zero(2, 2);
    miss(0, 0) = true;
    EXPECT_THROW(build_gram(TimeSeriesPanel(Matrix::Ones(2, 2), {}, miss), 1), PreprocessingRequiredError);
}

TEST(LambdaMax, Examples)
{
    Vector x(2);
    x << 1.0, -0.2;
    const auto g = make_system(Matrix::Identity(2, 2), Vector::Zero(2));
    GramSystem s = g;
    s.xty = x;
    s.k = 1;
    EXPECT_DOUBLE_EQ(lambda_max(s, 0, PredictorMask::full(2)), 2.0);
    EXPECT_DOUBLE_EQ(lambda_max(s, 0, PredictorMask({false, true})), 0.4);
    EXPECT_THROW(lambda_max(s, 0, PredictorMask::none(2)), EmptyMaskError);
    s.xty.setZero();
    EXPECT_DOUBLE_EQ(lambda_max(s, 0, PredictorMask::full(2)), 0.0);
    EXPECT_TRUE(lasso_cd(s, 0, PredictorMask::full(2), 0.1).beta.isZero(0.0));
}

TEST(Lasso, AboveLambdaMaxIsExactlyZero)
{
    const GramSystem g = build_gram(testing_util::oracle_panel(), 2);
    for (Index i = 0; i < 3; ++i) {
        const double lm = lambda_max(g, i, PredictorMask::full(6));
        const auto sol = lasso_cd(g, i, PredictorMask::full(6), lm);
        EXPECT_TRUE(sol.beta.isZero(0.0));
        EXPECT_EQ(kkt_residual(g, i, sol.beta, lm, PredictorMask::full(6)), 0.0);
    }
}

TEST(Lasso, OrthonormalSoftThreshold)
{
    Vector x(2);
    x << 1.0, 0.2;
    const auto g = make_system(Matrix::Identity(2, 2), x);
    GramSystem s = g;
    s.k = 1;
    const auto sol = lasso_cd(s, 0, PredictorMask::full(2), 0.5);
    EXPECT_DOUBLE_EQ(sol.beta(0), 0.75);
    EXPECT_EQ(sol.beta(1), 0.0);
}

TEST(Lasso, MatchesSklearn)
{
    const auto panel = testing_util::oracle_panel();
    for (Index L : {1, 2}) {
        const GramSystem g = build_gram(panel, L);
        const auto& ref = L == 1 ? oracle::lasso_beta_L1 : oracle::lasso_beta_L2;
        const Index p = 3 * L;
        for (std::size_t li = 0; li < oracle::lasso_lambdas.size(); ++li)
            for (Index i = 0; i < 3; ++i) {
                LassoOptions o;
                o.tol = 1e-12;
                const auto sol = lasso_cd(g, i, PredictorMask::full(p), oracle::lasso_lambdas[li], o);
                for (Index j = 0; j < p; ++j)
                    EXPECT_NEAR(sol.beta(j), ref[(li * 3 + static_cast<std::size_t>(i)) * p + j], 1e-9)
                        << "L=" << L << " lambda=" << oracle::lasso_lambdas[li] << " i=" << i << " j=" << j;
            }
    }
}

TEST(Lasso, LambdaZeroIsLeastSquares)
{
    const auto panel = testing_util::oracle_panel();
    for (Index L : {1, 2}) {
        const GramSystem g = build_gram(panel, L);
        const auto& ref = L == 1 ? oracle::ols_L1 : oracle::ols_L2;
        const Index p = 3 * L;
        for (Index i = 0; i < 3; ++i) {
            LassoOptions o;
            o.tol = 1e-10;
            const auto sol = lasso_cd(g, i, PredictorMask::full(p), 0.0, o);
            const Vector dense = g.gram.ldlt().solve(g.xty.col(i));
            for (Index j = 0; j < p; ++j) {
                EXPECT_NEAR(sol.beta(j), dense(j), 1e-8);
                EXPECT_NEAR(sol.beta(j), ref[static_cast<std::size_t>(i * p + j)], 1e-8);
            }
            EXPECT_LE(kkt_residual(g, i, dense, 0.0, PredictorMask::full(p)), 1e-9);
        }
    }
}

TEST(Lasso, BruteForceAndKktOnRandomProblems)
{
    std::mt19937_64 rng(99);
    std::normal_distribution<double> n01;
    std::uniform_int_distribution<int> dim(1, 6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int rep = 0; rep < 60; ++rep) {
        const Index p = dim(rng), n = 3 * p + 5;
        Matrix x(n, p);
        for (Index a = 0; a < n; ++a)
            for (Index b = 0; b < p; ++b) x(a, b) = n01(rng);
        Vector y(n);
        for (Index a = 0; a < n; ++a) y(a) = n01(rng);
        const auto g = make_system(x.transpose() * x / double(n), x.transpose() * y / double(n));
        GramSystem s = g;
        s.k = 1;
        std::vector<bool> allowed(static_cast<std::size_t>(p));
        for (auto&& b : allowed) b = u(rng) < 0.8;
        allowed[0] = true;
        const double lam = u(rng) * lambda_max(s, 0, PredictorMask::full(p));
        LassoOptions o;
        o.tol = 1e-10;
        const auto sol = lasso_cd(s, 0, PredictorMask(allowed), lam, o);
        const auto bf = testing_util::brute_force_lasso(s.gram, s.xty.col(0), lam, allowed);
        EXPECT_NEAR(sol.objective, bf.objective, 1e-9);
        EXPECT_LE(sol.kkt_residual, 1e-9);
        for (Index j = 0; j < p; ++j) {
            if (!allowed[static_cast<std::size_t>(j)]) EXPECT_EQ(sol.beta(j), 0.0);
        }
    }
}

TEST(Lasso, ObjectiveMonotoneAcrossSweeps)
{
    const GramSystem g = build_gram(testing_util::oracle_panel(), 2);
    LassoOptions o;
    o.record_objective = true;
    o.tol = 1e-12;
    const auto sol = lasso_cd(g, 1, PredictorMask::full(6), 0.01, o);
    ASSERT_GE(sol.objective_trace.size(), 2u);
    for (std::size_t t = 1; t < sol.objective_trace.size(); ++t)
        EXPECT_LE(sol.objective_trace[t], sol.objective_trace[t - 1] + 1e-14);
}

TEST(Lasso, MaskEquivalentToPinnedCoordinates)
{
    const GramSystem g = build_gram(testing_util::oracle_panel(), 2);
    const PredictorMask mask({true, false, true, true, false, true});
    const auto masked = lasso_cd(g, 0, mask, 0.01);
    // Pinning = solving the reduced system built from the allowed rows/cols only.
    GramSystem red;
    const auto idx = mask.indices();
    const Index m = static_cast<Index>(idx.size());
    red.gram.resize(m, m);
    red.xty.resize(m, 1);
    for (Index a = 0; a < m; ++a) {
        red.xty(a, 0) = g.xty(idx[a], 0);
        for (Index b = 0; b < m; ++b) red.gram(a, b) = g.gram(idx[a], idx[b]);
    }
    red.k = 1;
    red.lags = 1;
    red.n_effective = g.n_effective;
    const auto pinned = lasso_cd(red, 0, PredictorMask::full(m), 0.01);
    for (Index a = 0; a < m; ++a) EXPECT_NEAR(masked.beta(idx[a]), pinned.beta(a), 1e-6);
    EXPECT_EQ(masked.beta(1), 0.0);
    EXPECT_EQ(masked.beta(4), 0.0);
}

TEST(Lasso, ScalingAndWarmStartInvariance)
{
    const GramSystem g = build_gram(testing_util::oracle_panel(), 2);
    const auto base = lasso_cd(g, 2, PredictorMask::full(6), 0.02);
    GramSystem scaled = g;
    scaled.gram *= 3.5;
    scaled.xty *= 3.5;
    const auto sc = lasso_cd(scaled, 2, PredictorMask::full(6), 0.07);
    EXPECT_LT((sc.beta - base.beta).cwiseAbs().maxCoeff(), 1e-6);
    LassoOptions o;
    o.warm_start = base.beta;
    const auto warm = lasso_cd(g, 2, PredictorMask::full(6), 0.02, o);
    EXPECT_LT((warm.beta - base.beta).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LE(warm.iterations, base.iterations);
}

TEST(Lasso, DegeneratePredictors)
{
    Matrix gram = Matrix::Identity(2, 2);
    gram(1, 1) = 0.0;
    Vector x(2);
    x << 0.5, 0.0;
    GramSystem s = make_system(gram, x);
    s.k = 1;
    testing_util::WarningCapture w;
    EXPECT_NO_THROW(lasso_cd(s, 0, PredictorMask::full(2), 0.1));
    EXPECT_EQ(w.messages.size(), 1u);
    s.xty(1, 0) = 0.3;
    EXPECT_THROW(lasso_cd(s, 0, PredictorMask::full(2), 0.1), DegeneratePredictorError);
}

TEST(Lasso, NonConvergenceCarriesIterate)
{
    const GramSystem g = build_gram(testing_util::oracle_panel(), 2);
    LassoOptions o;
    o.max_iter = 1;
    o.tol = 1e-15;
    try {
        lasso_cd(g, 0, PredictorMask::full(6), 1e-4, o);
        FAIL() << "expected ConvergenceError";
    } catch (const ConvergenceError& e) {
        EXPECT_EQ(e.kind(), ErrorKind::numeric);
        EXPECT_EQ(e.last_iterate().size(), 6);
        EXPECT_GT(e.residual(), 0.0);
    }
}

TEST(LambdaGrid, GeometricAndDecreasing)
{
    const auto grid = lambda_grid(2.0, 50, 0.01);
    ASSERT_EQ(grid.size(), 50u);
    EXPECT_DOUBLE_EQ(grid.front(), 2.0);
    EXPECT_NEAR(grid.back(), 0.02, 1e-15);
    for (std::size_t i = 1; i < grid.size(); ++i) EXPECT_LT(grid[i], grid[i - 1]);
    EXPECT_TRUE(lambda_grid(0.0).empty());
}
