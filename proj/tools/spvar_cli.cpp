// spvar: command-line driver for scenario generation, fitting and benchmarks.

#include <spvar/spvar.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace spvar;
using io::json;

namespace {

struct Shared
{
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::optional<std::string> out;
    std::optional<std::string> metric;
};

RunConfig resolve(const Shared& s)
{
    RunConfig cfg;
    if (!s.config.empty()) apply_json(cfg, io::read_json(s.config));
    if (s.seed) cfg.seed = *s.seed;
    if (s.threads) cfg.threads = *s.threads;
    if (s.out) cfg.out = *s.out;
    if (s.metric) cfg.metric = metric_from_string(*s.metric);
    cfg.bench.seed = cfg.seed;
    cfg.bench.threads = cfg.threads;
    return cfg;
}

void write_text(const fs::path& path, const std::string& body)
{
    auto out = io::open_out(path);
    out << body;
    io::finish(out, path);
}

// ---------------------------------------------------------------------------

void cmd_gen_scenario(const RunConfig& cfg)
{
    const Replication rep = make_replication(cfg.bench, 0);
    const fs::path out = cfg.out;
    const auto ids = io::default_ids(rep.truth.process.dim());
    io::write_json(out / "truth.json", io::truth_to_json(rep.truth));
    io::write_panel_csv(out / "panel.csv", rep.train);
    if (rep.test) io::write_panel_csv(out / "test.csv", *rep.test);
    io::write_positions_csv(out / "positions.csv", ids, rep.truth.layout);
    io::write_edges_csv(out / "truth_edges.csv", rep.truth.support, ids);
    io::write_json(out / "config.json", to_json(cfg));
    std::cout << "k=" << rep.truth.process.dim() << " edges=" << rep.truth.support.edges.size()
              << " rho_true=" << io::format_double(rep.truth.rho_true) << " -> " << out.string() << "\n";
}

void cmd_simulate(const RunConfig& cfg, const std::string& truth_path, Index n_obs)
{
    const ScenarioTruth truth = io::truth_from_json(io::read_json(truth_path));
    const Index n = n_obs > 0 ? n_obs : cfg.bench.n_obs;
    const TimeSeriesPanel panel = simulate(truth.process, n, cfg.seed, {cfg.bench.burn_in, false});
    const fs::path out = fs::path(cfg.out) / "panel.csv";
    io::write_panel_csv(out, panel);
    std::cout << "T=" << n << " k=" << panel.n_series() << " -> " << out.string() << "\n";
}

void cmd_fit(const RunConfig& cfg, const std::string& panel_path, const std::string& positions_path,
             const std::string& method, std::optional<double> rho)
{
    const TimeSeriesPanel panel = io::read_panel_csv(panel_path);
    if (panel.has_missing()) throw PreprocessingRequiredError("panel has missing values; run preprocess first");
    const SpatialLayout layout = io::align_layout(io::read_positions_csv(positions_path, cfg.metric), panel.series_ids());
    const Method m = method_from_string(method);

    FitResult r;
    if (m == Method::full) {
        r = full_fit(panel, layout, cfg.lags(), cfg.bench.selection, cfg.seed, cfg.threads);
    } else {
        TwoStepConfig tc = cfg.two_step_config(layout.size());
        if (m == Method::oracle) {
            if (rho) tc.rho = *rho;
            if (cfg.rho_mode == RhoMode::estimate) tc.rho_mode = RhoMode::known;
            if (!rho && cfg.rho_mode == RhoMode::estimate)
                throw ValidationError("oracle fit needs --rho or two_step.rho_mode known/upper_bound in the config");
        } else if (rho) {
            throw ValidationError("--rho only applies to the oracle method");
        }
        r = two_step(panel, layout, tc, cfg.seed);
    }

    const fs::path out = cfg.out;
    io::write_edges_csv(out / "edges.csv", r.edges, panel.series_ids());
    if (!r.step1_edges.edges.empty() || !r.sampled_nodes.empty())
        io::write_edges_csv(out / "step1_edges.csv", r.step1_edges, panel.series_ids());

    std::vector<std::string> sampled;
    for (Index i : r.sampled_nodes) sampled.push_back(panel.series_ids()[static_cast<std::size_t>(i)]);
    json diag = json::array();
    for (const auto& d : r.diagnostics)
        diag.push_back({{"component", panel.series_ids()[static_cast<std::size_t>(d.component)]},
                        {"allowed", d.n_allowed},
                        {"selected", d.n_selected}});
    json summary{{"method", to_string(m)},
                 {"k", panel.n_series()},
                 {"lags", cfg.lags()},
                 {"n_effective", panel.n_times() - cfg.lags()},
                 {"rho_hat", r.rho_hat ? json(*r.rho_hat) : json(nullptr)},
                 {"rho_max", layout.rho_max()},
                 {"rho_source", to_string(r.rho_source)},
                 {"edges", r.edges.edges.size()},
                 {"step1_edges", r.step1_edges.edges.size()},
                 {"sampled_nodes", sampled},
                 {"components", diag},
                 {"config", to_json(cfg)}};
    io::write_json(out / "summary.json", summary);
    // Wall-clock timings vary run to run, so they live outside summary.json.
    io::write_json(out / "timing.json", json{{"step1_sec", r.timings.step1_sec}, {"step2_sec", r.timings.step2_sec}});
    std::cout << to_string(m) << ": " << r.edges.edges.size() << " edges";
    if (r.rho_hat) std::cout << ", rho_hat=" << io::format_double(*r.rho_hat) << " (" << to_string(r.rho_source) << ")";
    std::cout << " -> " << out.string() << "\n";
}

void cmd_benchmark(const RunConfig& cfg)
{
    const auto rows = run_benchmark(cfg.bench);
    const fs::path out = cfg.out;
    write_text(out / "metrics.csv", metrics_csv(rows, cfg.bench.record_timings));
    write_text(out / "timing.csv", timing_csv(rows));
    const auto summary = summarize(rows, cfg.bench.methods);
    const std::string table = summary_table(summary);
    write_text(out / "summary.csv", table);
    io::write_json(out / "config.json", to_json(cfg));
    std::cout << table;
    int failures = 0;
    for (const auto& s : summary) failures += s.failures;
    if (failures > 0) std::cerr << "warning: " << failures << " failed fits recorded in timing.csv\n";
}

void cmd_forecast(const RunConfig& cfg, const std::string& panel_path, const std::string& edges_path,
                  const std::string& test_path, Index horizon)
{
    const TimeSeriesPanel panel = io::read_panel_csv(panel_path);
    const Index k = panel.n_series();
    const EdgeSet es = io::read_edges_csv(edges_path, panel.series_ids());
    Index L = cfg.lags();
    for (const auto& e : es.edges) L = std::max(L, e.lag);
    const TransitionStack stack = stack_from_edges(es, k, L);
    const Index h = horizon > 0 ? horizon : cfg.horizon;
    const Matrix f = forecast(panel, stack, h);

    std::vector<std::int64_t> times;
    for (Index i = 1; i <= h; ++i) times.push_back(panel.times().back() + i);
    const fs::path out = cfg.out;
    io::write_panel_csv(out / "forecast.csv", TimeSeriesPanel(f, panel.series_ids(), std::nullopt, times));
    if (!test_path.empty()) {
        const TimeSeriesPanel test = io::read_panel_csv(test_path);
        json s{{"horizon", h}, {"mse", forecast_mse(panel, test, stack, h)}, {"test_rows", test.n_times()}};
        io::write_json(out / "forecast_summary.json", s);
        std::cout << "mse=" << io::format_double(s["mse"].get<double>()) << "\n";
    }
    std::cout << h << " forecast rows -> " << (out / "forecast.csv").string() << "\n";
}

void cmd_preprocess(const RunConfig& cfg, const std::string& panel_path)
{
    TimeSeriesPanel panel = io::read_panel_csv(panel_path);
    const auto& pc = cfg.preprocess;
    panel = interpolate_panel(panel, pc.interpolate);
    const fs::path out = cfg.out;
    json summary{{"config", to_json(cfg)}};

    if (pc.log_detrend) {
        Matrix resid(panel.n_times(), panel.n_series()), trend(panel.n_times(), panel.n_series());
        json knots = json::array();
        for (Index j = 0; j < panel.n_series(); ++j) {
            std::vector<double> col(panel.values().col(j).data(), panel.values().col(j).data() + panel.n_times());
            DetrendResult d;
            try {
                d = spline_detrend(col, pc.knots_per_year, pc.samples_per_year);
            } catch (const Error& e) {
                throw DomainError("series " + panel.series_ids()[static_cast<std::size_t>(j)] + ": " + e.what());
            }
            resid.col(j) = d.residual;
            trend.col(j) = d.fitted;
            knots.push_back(d.knot_count);
        }
        io::write_panel_csv(out / "trend.csv", TimeSeriesPanel(trend, panel.series_ids(), std::nullopt, panel.times()));
        panel = TimeSeriesPanel(std::move(resid), panel.series_ids(), std::nullopt, panel.times());
        summary["interior_knots"] = knots;
    }
    if (pc.max_lags > 1) {
        const auto sel = select_order_cv(panel, pc.max_lags, pc.cv_folds, cfg.bench.selection, cfg.seed, cfg.threads);
        summary["selected_lags"] = sel.lags;
        summary["cv_mse"] = sel.mean_mse;
        std::cout << "selected L=" << sel.lags << "\n";
    }
    io::write_panel_csv(out / "panel.csv", panel);
    io::write_json(out / "preprocess_summary.json", summary);
    std::cout << "T=" << panel.n_times() << " k=" << panel.n_series() << " -> " << (out / "panel.csv").string() << "\n";
}

/// Edge list joined with node coordinates, ready for plotting.
void cmd_export_edges(const RunConfig& cfg, const std::string& edges_path, const std::string& positions_path,
                      const std::string& truth_path)
{
    std::vector<std::string> ids;
    EdgeSet es;
    Matrix pos;
    if (!truth_path.empty()) {
        const ScenarioTruth t = io::truth_from_json(io::read_json(truth_path));
        ids = io::default_ids(t.process.dim());
        es = t.support;
        pos = t.layout.positions();
        if (!edges_path.empty()) es = io::read_edges_csv(edges_path, ids);
    } else {
        if (edges_path.empty() || positions_path.empty())
            throw ValidationError("export-edges needs --edges and --positions, or --truth");
        const auto p = io::read_positions_csv(positions_path, cfg.metric);
        ids = p.ids;
        pos = p.layout.positions();
        es = io::read_edges_csv(edges_path, ids);
    }
    std::ostringstream os;
    os << "source,target,lag,coefficient,distance,x_source,y_source,x_target,y_target\n";
    for (const auto& e : es.edges) {
        os << ids[static_cast<std::size_t>(e.source)] << ',' << ids[static_cast<std::size_t>(e.target)] << ',' << e.lag
           << ',' << io::format_double(e.coefficient) << ',' << io::format_double(e.distance);
        for (Index node : {e.source, e.target})
            for (Index c = 0; c < 2; ++c)
                os << ',' << (c < pos.cols() ? io::format_double(pos(node, c)) : std::string("NA"));
        os << '\n';
    }
    const fs::path out = fs::path(cfg.out) / "edges_plot.csv";
    write_text(out, os.str());
    std::cout << es.edges.size() << " edges -> " << out.string() << "\n";
}

int exit_code(ErrorKind k)
{
    switch (k) {
    case ErrorKind::validation: return 2;
    case ErrorKind::numeric: return 3;
    case ErrorKind::io: return 4;
    }
    return 2;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Sparse spatial VAR estimation"};
    app.require_subcommand(1);
    app.fallthrough();
    Shared s;
    app.add_option("--config", s.config, "JSON run configuration");
    app.add_option("--seed", s.seed, "top-level random seed");
    app.add_option("--threads", s.threads, "worker threads")->check(CLI::PositiveNumber);
    app.add_option("--out", s.out, "output directory");
    app.add_option("--metric", s.metric, "distance metric")->check(CLI::IsMember({"euclidean", "haversine"}));

    auto* gen = app.add_subcommand("gen-scenario", "generate a synthetic scenario (truth, panel, positions)");

    std::string truth_path;
    Index n_obs = 0;
    auto* sim = app.add_subcommand("simulate", "simulate a panel from a truth file");
    sim->add_option("--truth", truth_path, "truth JSON")->required();
    sim->add_option("--n-obs", n_obs, "number of observations (default from config)");

    std::string panel_path, positions_path, method = "two-step";
    std::optional<double> rho;
    auto* fit = app.add_subcommand("fit", "fit transition matrices");
    fit->add_option("--panel", panel_path, "panel CSV")->required();
    fit->add_option("--positions", positions_path, "positions CSV")->required();
    fit->add_option("--method", method, "full | two-step | oracle")
        ->check(CLI::IsMember({"full", "two-step", "two_step", "oracle"}));
    fit->add_option("--rho", rho, "radius for the oracle method");

    auto* bench = app.add_subcommand("benchmark", "Monte Carlo comparison of full, two-step and oracle fits");
    Index replications = 0;
    bench->add_option("--replications", replications, "override replication count");

    std::string edges_path, test_path;
    Index horizon = 0;
    auto* fc = app.add_subcommand("forecast", "recursive forecasts from a fitted edge list");
    fc->add_option("--panel", panel_path, "history panel CSV")->required();
    fc->add_option("--edges", edges_path, "edge CSV from fit")->required();
    fc->add_option("--test", test_path, "held-out panel for rolling-origin MSE");
    fc->add_option("--horizon", horizon, "forecast horizon");

    auto* pre = app.add_subcommand("preprocess", "interpolate gaps, optionally log-detrend and select L");
    pre->add_option("--panel", panel_path, "raw panel CSV")->required();

    auto* ex = app.add_subcommand("export-edges", "plot-ready edge list with coordinates");
    ex->add_option("--edges", edges_path, "edge CSV");
    ex->add_option("--positions", positions_path, "positions CSV");
    ex->add_option("--truth", truth_path, "truth JSON (exports its support unless --edges is given)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        RunConfig cfg = resolve(s);
        if (replications > 0) cfg.bench.replications = static_cast<int>(replications);
        cfg.validate();
        if (gen->parsed()) cmd_gen_scenario(cfg);
        else if (sim->parsed()) cmd_simulate(cfg, truth_path, n_obs);
        else if (fit->parsed()) cmd_fit(cfg, panel_path, positions_path, method, rho);
        else if (bench->parsed()) cmd_benchmark(cfg);
        else if (fc->parsed()) cmd_forecast(cfg, panel_path, edges_path, test_path, horizon);
        else if (pre->parsed()) cmd_preprocess(cfg, panel_path);
        else if (ex->parsed()) cmd_export_edges(cfg, edges_path, positions_path, truth_path);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
