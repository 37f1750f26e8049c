#pragma once

#include <spvar/benchmark.hpp>
#include <spvar/io.hpp>
#include <spvar/preprocess.hpp>
#include <spvar/spatial.hpp>
#include <spvar/two_step.hpp>

#include <set>
#include <string>

namespace spvar {

struct PreprocessConfig
{
    InterpolateOptions interpolate;
    bool log_detrend = false;
    Index knots_per_year = 4;
    Index samples_per_year = 365;
    Index max_lags = 1;  ///< > 1 runs lag selection by cross-validation
    Index cv_folds = 3;
};

/// Everything a CLI command may need. Loaded from JSON, then overridden by
/// flags, then validated before any computation.
struct RunConfig
{
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    std::string out = "out";
    Metric metric = Metric::euclidean;
    BenchmarkConfig bench;        ///< scenario, selection, design and replication settings
    RhoMode rho_mode = RhoMode::estimate;
    double rho = 0.0;
    PreprocessConfig preprocess;
    Index horizon = 1;            ///< forecast command

    Index lags() const { return bench.lags; }

    TwoStepConfig two_step_config(Index k, const ScenarioTruth* truth = nullptr) const
    {
        TwoStepConfig tc;
        tc.design = bench.design.resolve(k, truth);
        tc.lags = bench.lags;
        tc.step1 = bench.step1_selection;
        tc.step2 = bench.selection;
        tc.rho_mode = rho_mode;
        tc.rho = rho;
        tc.rho_inflation = bench.rho_inflation;
        tc.threads = threads;
        return tc;
    }

    void validate() const
    {
        if (threads < 1) throw ValidationError("threads must be at least 1");
        if (out.empty()) throw ValidationError("output directory must not be empty");
        bench.validate();
        if (!(rho >= 0.0)) throw ValidationError("rho must be nonnegative");
        if (horizon < 1) throw ValidationError("forecast horizon must be at least 1");
        const auto& p = preprocess;
        if (!(p.interpolate.max_missing_fraction >= 0.0 && p.interpolate.max_missing_fraction <= 1.0))
            throw ValidationError("max_missing_fraction must lie in [0, 1]");
        if (p.knots_per_year < 1 || p.samples_per_year < 1) throw ValidationError("spline rates must be positive");
        if (p.max_lags < 1 || p.cv_folds < 1) throw ValidationError("max_lags and cv_folds must be positive");
        for (const auto* s : {&bench.selection, &bench.step1_selection}) {
            if (s->lambda && !(*s->lambda > 0.0)) throw ValidationError("fixed lambda must be positive");
            if (!(s->lambda_ratio > 0.0 && s->lambda_ratio <= 1.0)) throw ValidationError("lambda_ratio must lie in (0, 1]");
            if (!(s->solver.tol > 0.0) || s->solver.max_iter < 1) throw ValidationError("invalid solver settings");
            const auto& st = s->stability;
            if (st.n_subsamples < 1) throw ValidationError("n_subsamples must be at least 1");
            if (!(st.threshold > 0.5 && st.threshold <= 1.0)) throw ValidationError("stability threshold must lie in (0.5, 1]");
            if (st.n_lambda < 1 || !(st.lambda_ratio > 0.0 && st.lambda_ratio < 1.0))
                throw ValidationError("invalid stability lambda grid settings");
        }
        const auto& d = bench.design;
        if (d.kind == DesignSpec::Kind::bernoulli && !(d.theta > 0.0 && d.theta <= 1.0))
            throw ValidationError("bernoulli theta must lie in (0, 1]");
        if (d.kind == DesignSpec::Kind::srs && d.n == 0 && !(d.fraction > 0.0 && d.fraction <= 1.0))
            throw ValidationError("srs fraction must lie in (0, 1]");
        if (d.kind == DesignSpec::Kind::long_edge &&
            !(d.high > 0.0 && d.high <= 1.0 && d.low > 0.0 && d.low <= 1.0 && d.boundary_fraction >= 0.0 &&
              d.boundary_fraction < 1.0))
            throw ValidationError("invalid long_edge design probabilities");
    }
};

namespace detail {

/// Reads known keys from a JSON object and rejects anything else.
class ObjectReader
{
public:
    ObjectReader(const io::json& j, std::string where) : j_(j), where_(std::move(where))
    {
        if (!j_.is_object()) throw ValidationError(where_ + " must be a JSON object");
    }

    ~ObjectReader() noexcept(false)
    {
        if (std::uncaught_exceptions() > 0) return;
        for (const auto& [key, _] : j_.items())
            if (!seen_.count(key)) throw ValidationError("unknown key '" + key + "' in " + where_);
    }

    template<class T>
    void get(const char* key, T& dest)
    {
        seen_.insert(key);
        if (!j_.contains(key) || j_.at(key).is_null()) return;
        try {
            dest = j_.at(key).get<T>();
        } catch (const io::json::exception& e) {
            throw ValidationError(where_ + "." + key + ": " + e.what());
        }
    }

    const io::json* child(const char* key)
    {
        seen_.insert(key);
        if (!j_.contains(key) || j_.at(key).is_null()) return nullptr;
        return &j_.at(key);
    }

    std::string path(const char* key) const { return where_ + "." + key; }

private:
    const io::json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

template<class E>
E enum_from(const std::string& s, std::initializer_list<std::pair<const char*, E>> table, const std::string& where)
{
    std::string names;
    for (const auto& [name, value] : table) {
        if (s == name) return value;
        names += names.empty() ? name : std::string(", ") + name;
    }
    throw ValidationError(where + ": unknown value '" + s + "' (expected " + names + ")");
}

inline void read_stability(const io::json& j, const std::string& where, StabilityConfig& s)
{
    ObjectReader r(j, where);
    r.get("n_subsamples", s.n_subsamples);
    r.get("subsample_length", s.subsample_length);
    r.get("threshold", s.threshold);
    r.get("lambda_grid", s.lambda_grid);
    r.get("n_lambda", s.n_lambda);
    r.get("lambda_ratio", s.lambda_ratio);
    r.get("max_selected", s.max_selected);
    r.get("expected_false_selections", s.expected_false_selections);
    r.get("tol", s.tol);
    r.get("max_iter", s.max_iter);
}

inline std::string score_name(SelectionConfig::Score s)
{
    switch (s) {
    case SelectionConfig::Score::frequency: return "frequency";
    case SelectionConfig::Score::coefficient: return "coefficient";
    case SelectionConfig::Score::path: return "path";
    }
    return "unknown";
}

inline void read_selection(const io::json& j, const std::string& where, SelectionConfig& s)
{
    ObjectReader r(j, where);
    std::string kind = s.kind == SelectionConfig::Kind::stability ? "stability" : "fixed_lambda";
    r.get("kind", kind);
    s.kind = enum_from<SelectionConfig::Kind>(
        kind, {{"stability", SelectionConfig::Kind::stability}, {"fixed_lambda", SelectionConfig::Kind::fixed_lambda}},
        r.path("kind"));
    std::string score = score_name(s.score);
    r.get("score", score);
    s.score = enum_from<SelectionConfig::Score>(score,
                                                {{"frequency", SelectionConfig::Score::frequency},
                                                 {"coefficient", SelectionConfig::Score::coefficient},
                                                 {"path", SelectionConfig::Score::path}},
                                                r.path("score"));
    if (const auto* st = r.child("stability")) read_stability(*st, r.path("stability"), s.stability);
    double lambda = 0.0;
    r.get("lambda", lambda);
    if (lambda != 0.0) s.lambda = lambda;
    r.get("lambda_ratio", s.lambda_ratio);
    if (const auto* so = r.child("solver")) {
        ObjectReader sr(*so, r.path("solver"));
        sr.get("tol", s.solver.tol);
        sr.get("max_iter", s.solver.max_iter);
    }
}

inline void read_design(const io::json& j, const std::string& where, DesignSpec& d)
{
    ObjectReader r(j, where);
    std::string kind;
    r.get("kind", kind);
    if (!kind.empty())
        d.kind = enum_from<DesignSpec::Kind>(kind,
                                             {{"bernoulli", DesignSpec::Kind::bernoulli},
                                              {"srs", DesignSpec::Kind::srs},
                                              {"stratified", DesignSpec::Kind::stratified},
                                              {"long_edge", DesignSpec::Kind::long_edge}},
                                             r.path("kind"));
    r.get("theta", d.theta);
    r.get("thetas", d.thetas);
    r.get("n", d.n);
    r.get("fraction", d.fraction);
    r.get("strata", d.strata);
    r.get("total", d.total);
    r.get("high", d.high);
    r.get("low", d.low);
    r.get("boundary_fraction", d.boundary_fraction);
}

inline std::string design_kind_name(DesignSpec::Kind k)
{
    switch (k) {
    case DesignSpec::Kind::bernoulli: return "bernoulli";
    case DesignSpec::Kind::srs: return "srs";
    case DesignSpec::Kind::stratified: return "stratified";
    case DesignSpec::Kind::long_edge: return "long_edge";
    }
    return "unknown";
}

inline std::string rho_mode_name(RhoMode m)
{
    switch (m) {
    case RhoMode::estimate: return "estimate";
    case RhoMode::known: return "known";
    case RhoMode::upper_bound: return "upper_bound";
    }
    return "unknown";
}

inline io::json selection_to_json(const SelectionConfig& s)
{
    const auto& st = s.stability;
    io::json j{{"kind", s.kind == SelectionConfig::Kind::stability ? "stability" : "fixed_lambda"},
               {"score", score_name(s.score)},
               {"stability",
                {{"n_subsamples", st.n_subsamples},
                 {"subsample_length", st.subsample_length},
                 {"threshold", st.threshold},
                 {"lambda_grid", st.lambda_grid},
                 {"n_lambda", st.n_lambda},
                 {"lambda_ratio", st.lambda_ratio},
                 {"max_selected", st.max_selected},
                 {"expected_false_selections", st.expected_false_selections},
                 {"tol", st.tol},
                 {"max_iter", st.max_iter}}},
               {"lambda_ratio", s.lambda_ratio},
               {"solver", {{"tol", s.solver.tol}, {"max_iter", s.solver.max_iter}}}};
    j["lambda"] = s.lambda ? io::json(*s.lambda) : io::json(nullptr);
    return j;
}

} // namespace detail

/// Applies a JSON document on top of `cfg` (missing keys keep their values).
inline void apply_json(RunConfig& cfg, const io::json& j)
{
    using detail::ObjectReader;
    ObjectReader r(j, "config");
    r.get("seed", cfg.seed);
    r.get("threads", cfg.threads);
    r.get("out", cfg.out);
    std::string metric = to_string(cfg.metric);
    r.get("metric", metric);
    cfg.metric = metric_from_string(metric);
    r.get("lags", cfg.bench.lags);
    r.get("horizon", cfg.horizon);

    auto& b = cfg.bench;
    if (const auto* sc = r.child("scenario")) {
        ObjectReader s(*sc, "scenario");
        if (const auto* lj = s.child("layout")) {
            ObjectReader l(*lj, "scenario.layout");
            std::string kind;
            l.get("kind", kind);
            if (!kind.empty())
                b.layout.kind = detail::enum_from<LayoutSpec::Kind>(
                    kind,
                    {{"uniform_square", LayoutSpec::Kind::uniform_square},
                     {"gaussian_clusters", LayoutSpec::Kind::gaussian_clusters}},
                    "scenario.layout.kind");
            l.get("k", b.layout.k);
            l.get("n_centers", b.layout.n_centers);
            l.get("per_cluster", b.layout.per_cluster);
            l.get("spread", b.layout.spread);
            l.get("side", b.layout.side);
        }
        if (const auto* sj = s.child("sparsity")) {
            ObjectReader p(*sj, "scenario.sparsity");
            p.get("density", b.sparsity.density);
            p.get("within_fraction", b.sparsity.within_fraction);
            p.get("between_quantile", b.sparsity.between_quantile);
            p.get("coef_low", b.sparsity.coef_low);
            p.get("coef_high", b.sparsity.coef_high);
            p.get("target_spectral_radius", b.sparsity.target_spectral_radius);
            p.get("noise_variance", b.sparsity.noise_variance);
        }
        s.get("n_obs", b.n_obs);
        s.get("n_test", b.n_test);
        s.get("burn_in", b.burn_in);
    }
    if (const auto* sel = r.child("selection")) detail::read_selection(*sel, "selection", b.selection);
    if (const auto* sel = r.child("step1_selection")) detail::read_selection(*sel, "step1_selection", b.step1_selection);
    if (const auto* ts = r.child("two_step")) {
        ObjectReader t(*ts, "two_step");
        if (const auto* d = t.child("design")) detail::read_design(*d, "two_step.design", b.design);
        std::string mode;
        t.get("rho_mode", mode);
        if (!mode.empty())
            cfg.rho_mode = detail::enum_from<RhoMode>(
                mode, {{"estimate", RhoMode::estimate}, {"known", RhoMode::known}, {"upper_bound", RhoMode::upper_bound}},
                "two_step.rho_mode");
        t.get("rho", cfg.rho);
        t.get("rho_inflation", b.rho_inflation);
    }
    if (const auto* bj = r.child("benchmark")) {
        ObjectReader bb(*bj, "benchmark");
        bb.get("replications", b.replications);
        std::vector<std::string> methods;
        bb.get("methods", methods);
        if (!methods.empty()) {
            b.methods.clear();
            for (const auto& m : methods) b.methods.push_back(method_from_string(m));
        }
        bb.get("record_timings", b.record_timings);
        bb.get("horizon", b.horizon);
    }
    if (const auto* pj = r.child("preprocess")) {
        ObjectReader p(*pj, "preprocess");
        p.get("max_missing_fraction", cfg.preprocess.interpolate.max_missing_fraction);
        p.get("strict", cfg.preprocess.interpolate.strict);
        p.get("log_detrend", cfg.preprocess.log_detrend);
        p.get("knots_per_year", cfg.preprocess.knots_per_year);
        p.get("samples_per_year", cfg.preprocess.samples_per_year);
        p.get("max_lags", cfg.preprocess.max_lags);
        p.get("cv_folds", cfg.preprocess.cv_folds);
    }
    b.seed = cfg.seed;
    b.threads = cfg.threads;
}

inline RunConfig load_config(const std::filesystem::path& path)
{
    RunConfig cfg;
    apply_json(cfg, io::read_json(path));
    return cfg;
}

/// Full echo; feeding it back through apply_json reproduces the run.
inline io::json to_json(const RunConfig& cfg)
{
    const auto& b = cfg.bench;
    std::vector<std::string> methods;
    for (Method m : b.methods) methods.push_back(to_string(m));
    const auto& d = b.design;
    return io::json{
        {"seed", cfg.seed},
        {"threads", cfg.threads},
        {"out", cfg.out},
        {"metric", to_string(cfg.metric)},
        {"lags", b.lags},
        {"horizon", cfg.horizon},
        {"scenario",
         {{"layout",
           {{"kind", b.layout.kind == LayoutSpec::Kind::uniform_square ? "uniform_square" : "gaussian_clusters"},
            {"k", b.layout.k},
            {"n_centers", b.layout.n_centers},
            {"per_cluster", b.layout.per_cluster},
            {"spread", b.layout.spread},
            {"side", b.layout.side}}},
          {"sparsity",
           {{"density", b.sparsity.density},
            {"within_fraction", b.sparsity.within_fraction},
            {"between_quantile", b.sparsity.between_quantile},
            {"coef_low", b.sparsity.coef_low},
            {"coef_high", b.sparsity.coef_high},
            {"target_spectral_radius", b.sparsity.target_spectral_radius},
            {"noise_variance", b.sparsity.noise_variance}}},
          {"n_obs", b.n_obs},
          {"n_test", b.n_test},
          {"burn_in", b.burn_in}}},
        {"selection", detail::selection_to_json(b.selection)},
        {"step1_selection", detail::selection_to_json(b.step1_selection)},
        {"two_step",
         {{"design",
           {{"kind", detail::design_kind_name(d.kind)},
            {"theta", d.theta},
            {"thetas", d.thetas},
            {"n", d.n},
            {"fraction", d.fraction},
            {"strata", d.strata},
            {"total", d.total},
            {"high", d.high},
            {"low", d.low},
            {"boundary_fraction", d.boundary_fraction}}},
          {"rho_mode", detail::rho_mode_name(cfg.rho_mode)},
          {"rho", cfg.rho},
          {"rho_inflation", b.rho_inflation}}},
        {"benchmark",
         {{"replications", b.replications},
          {"methods", methods},
          {"record_timings", b.record_timings},
          {"horizon", b.horizon}}},
        {"preprocess",
         {{"max_missing_fraction", cfg.preprocess.interpolate.max_missing_fraction},
          {"strict", cfg.preprocess.interpolate.strict},
          {"log_detrend", cfg.preprocess.log_detrend},
          {"knots_per_year", cfg.preprocess.knots_per_year},
          {"samples_per_year", cfg.preprocess.samples_per_year},
          {"max_lags", cfg.preprocess.max_lags},
          {"cv_folds", cfg.preprocess.cv_folds}}}};
}

} // namespace spvar
