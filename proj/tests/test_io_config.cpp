#include "helpers.hpp"

#include <filesystem>
#include <fstream>

using namespace spvar;
namespace fs = std::filesystem;

namespace {

struct TempDir
{
    fs::path path;
    TempDir() : path(fs::temp_directory_path() / ("spvar_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                                  "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name()))
    {
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_text(const fs::path& p, const std::string& s)
{
    std::ofstream(p) << s;
}

} // namespace

TEST(PanelCsv, RoundTripIsExact)
{
    TempDir d;
    const auto panel = testing_util::oracle_panel();
    io::write_panel_csv(d.path / "p.csv", panel);
    const auto back = io::read_panel_csv(d.path / "p.csv");
    EXPECT_TRUE(back.values() == panel.values());
    EXPECT_EQ(back.series_ids(), panel.series_ids());
    EXPECT_EQ(back.times(), panel.times());
    EXPECT_FALSE(back.has_missing());
}

TEST(PanelCsv, MissingFields)
{
    TempDir d;
    write_text(d.path / "p.csv", "t,a,b\n0,1.5,NA\n1,,2\n2,3,4\n");
    const auto p = io::read_panel_csv(d.path / "p.csv");
    EXPECT_EQ(p.series_ids(), (std::vector<std::string>{"a", "b"}));
    EXPECT_TRUE(p.is_missing(0, 1));
    EXPECT_TRUE(p.is_missing(1, 0));
    EXPECT_FALSE(p.is_missing(2, 0));
    io::write_panel_csv(d.path / "q.csv", p);
    EXPECT_TRUE(io::read_panel_csv(d.path / "q.csv").missing_mask() == p.missing_mask());
}

TEST(PanelCsv, Errors)
{
    TempDir d;
    EXPECT_THROW(io::read_panel_csv(d.path / "absent.csv"), IoError);
    write_text(d.path / "a.csv", "x,a\n0,1\n");
    EXPECT_THROW(io::read_panel_csv(d.path / "a.csv"), ValidationError);
    write_text(d.path / "b.csv", "t,a,b\n0,1\n");
    EXPECT_THROW(io::read_panel_csv(d.path / "b.csv"), ValidationError);
    write_text(d.path / "c.csv", "t,a\n0,abc\n");
    EXPECT_THROW(io::read_panel_csv(d.path / "c.csv"), ValidationError);
    write_text(d.path / "e.csv", "t,a,a\n0,1,2\n");
    EXPECT_THROW(io::read_panel_csv(d.path / "e.csv"), ValidationError);
}

TEST(PositionsCsv, RoundTripAndAlignment)
{
    TempDir d;
    Matrix p(3, 2);
    p << 0.1, 0.2, 1.0 / 3.0, 4.0, -1e-9, 7.5;
    const SpatialLayout layout(p);
    io::write_positions_csv(d.path / "pos.csv", {"a", "b", "c"}, layout);
    const auto back = io::read_positions_csv(d.path / "pos.csv", Metric::euclidean);
    EXPECT_TRUE(back.layout.positions() == p);
    const auto aligned = io::align_layout(back, {"c", "a", "b"});
    EXPECT_EQ(aligned.positions().row(0), p.row(2));
    EXPECT_EQ(aligned.distance(1, 2), layout.distance(0, 1));
    EXPECT_THROW(io::align_layout(back, {"a", "b"}), ShapeError);
}

TEST(EdgesCsv, RoundTrip)
{
    TempDir d;
    EdgeSet es;
    es.edges = {{0, 1, 1, 0.25, 1.5}, {2, 2, 2, -1.0 / 3.0, 0.0}};
    const std::vector<std::string> ids{"a", "b", "c"};
    io::write_edges_csv(d.path / "e.csv", es, ids);
    const auto back = io::read_edges_csv(d.path / "e.csv", ids);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back.edges[1].coefficient, -1.0 / 3.0);
    EXPECT_EQ(back.edges[1].lag, 2);
    EXPECT_EQ(back.edges[0].target, 1);
    EXPECT_THROW(io::read_edges_csv(d.path / "e.csv", {"a", "b"}), ShapeError);
}

TEST(TruthJson, RoundTrip)
{
    BenchmarkConfig cfg;
    cfg.layout.n_centers = 2;
    cfg.layout.per_cluster = 5;
    cfg.sparsity.density = 0.1;
    cfg.lags = 2;
    const auto rep = make_replication(cfg, 0);
    const auto back = io::truth_from_json(io::json::parse(io::truth_to_json(rep.truth).dump()));
    EXPECT_EQ(back.rho_true, rep.truth.rho_true);
    EXPECT_EQ(back.beta_min, rep.truth.beta_min);
    EXPECT_EQ(back.labels, rep.truth.labels);
    EXPECT_TRUE(back.layout.positions() == rep.truth.layout.positions());
    for (Index l = 0; l < 2; ++l) EXPECT_TRUE(back.process.transition[l] == rep.truth.process.transition[l]);
    EXPECT_THROW(io::truth_from_json(io::json{{"k", 2}}), ValidationError);
}

TEST(Config, ApplyAndEcho)
{
    RunConfig cfg;
    const auto j = io::json::parse(R"({
        "seed": 9, "threads": 2, "lags": 2,
        "scenario": {"layout": {"kind": "uniform_square", "k": 40}, "sparsity": {"density": 0.05}, "n_obs": 80},
        "selection": {"kind": "fixed_lambda", "lambda_ratio": 0.2},
        "two_step": {"design": {"kind": "srs", "n": 10}, "rho_mode": "known", "rho": 0.3},
        "benchmark": {"replications": 3, "methods": ["full", "two-step"]},
        "preprocess": {"log_detrend": true, "max_lags": 3}
    })");
    apply_json(cfg, j);
    EXPECT_EQ(cfg.seed, 9u);
    EXPECT_EQ(cfg.bench.seed, 9u);
    EXPECT_EQ(cfg.bench.threads, 2u);
    EXPECT_EQ(cfg.lags(), 2);
    EXPECT_EQ(cfg.bench.layout.kind, LayoutSpec::Kind::uniform_square);
    EXPECT_EQ(cfg.bench.layout.k, 40);
    EXPECT_EQ(cfg.bench.sparsity.density, 0.05);
    EXPECT_EQ(cfg.bench.n_obs, 80);
    EXPECT_EQ(cfg.bench.selection.kind, SelectionConfig::Kind::fixed_lambda);
    EXPECT_EQ(cfg.bench.design.kind, DesignSpec::Kind::srs);
    EXPECT_EQ(cfg.rho_mode, RhoMode::known);
    EXPECT_EQ(cfg.bench.methods, (std::vector<Method>{Method::full, Method::two_step}));
    EXPECT_TRUE(cfg.preprocess.log_detrend);
    EXPECT_NO_THROW(cfg.validate());

    // Echo reproduces the configuration.
    RunConfig again;
    apply_json(again, to_json(cfg));
    EXPECT_EQ(to_json(again), to_json(cfg));
}

TEST(Config, RejectsUnknownKeysAndBadValues)
{
    RunConfig cfg;
    EXPECT_THROW(apply_json(cfg, io::json::parse(R"({"sede": 1})")), ValidationError);
    EXPECT_THROW(apply_json(cfg, io::json::parse(R"({"scenario": {"layout": {"kind": "hex"}}})")), ValidationError);
    EXPECT_THROW(apply_json(cfg, io::json::parse(R"({"seed": "x"})")), ValidationError);
    RunConfig bad;
    bad.threads = 0;
    EXPECT_THROW(bad.validate(), ValidationError);
    bad = {};
    bad.bench.step1_selection.stability.threshold = 0.4;
    EXPECT_THROW(bad.validate(), ValidationError);
    bad = {};
    bad.bench.design.theta = 0.0;
    EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(Config, LoadFromFile)
{
    TempDir d;
    write_text(d.path / "c.json", R"({"seed": 4, "metric": "haversine"})");
    const auto cfg = load_config(d.path / "c.json");
    EXPECT_EQ(cfg.seed, 4u);
    EXPECT_EQ(cfg.metric, Metric::haversine_km);
    write_text(d.path / "bad.json", "{ not json");
    EXPECT_THROW(load_config(d.path / "bad.json"), ValidationError);
    EXPECT_THROW(load_config(d.path / "absent.json"), IoError);
}

TEST(Format, ShortestRoundTrip)
{
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.0}) EXPECT_EQ(io::parse_double(io::format_double(v), "x"), v);
    EXPECT_EQ(io::format_double(std::nan("")), "NA");
}
