#pragma once

#include <spvar/core.hpp>
#include <spvar/io.hpp>
#include <spvar/metrics.hpp>
#include <spvar/scenario.hpp>
#include <spvar/two_step.hpp>

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace spvar {

/// Declarative Step-1 sampling design; `long_edge` needs scenario truth and
/// includes nodes with near-boundary incoming edges with probability `high`.
struct DesignSpec
{
    enum class Kind { bernoulli, srs, stratified, long_edge };
    Kind kind = Kind::bernoulli;
    double theta = 0.2;              ///< bernoulli: common inclusion probability
    std::vector<double> thetas;      ///< bernoulli: per-node override
    Index n = 0;                     ///< srs: sample size (0 = fraction * k)
    double fraction = 0.2;           ///< srs
    std::vector<int> strata;         ///< stratified; empty uses scenario labels
    Index total = 0;                 ///< stratified
    double high = 0.99, low = 0.01;  ///< long_edge
    double boundary_fraction = 0.1;  ///< long_edge: edges with d >= (1 - f) rho_true

    SamplingDesign resolve(Index k, const ScenarioTruth* truth = nullptr) const
    {
        switch (kind) {
        case Kind::bernoulli:
            if (!thetas.empty()) return BernoulliDesign{thetas};
            return BernoulliDesign{std::vector<double>(static_cast<std::size_t>(k), theta)};
        case Kind::srs: {
            Index m = n > 0 ? n : static_cast<Index>(std::ceil(fraction * static_cast<double>(k)));
            return SrsDesign{std::clamp<Index>(m, 1, k)};
        }
        case Kind::stratified:
            if (strata.empty()) {
                if (!truth) throw ValidationError("stratified design needs strata or scenario labels");
                return StratifiedDesign{truth->labels, total};
            }
            return StratifiedDesign{strata, total};
        case Kind::long_edge: {
            if (!truth) throw ValidationError("long_edge sampling design needs scenario truth");
            std::vector<double> th(static_cast<std::size_t>(k), low);
            const double cut = (1.0 - boundary_fraction) * truth->rho_true;
            for (const auto& e : truth->support.edges)
                if (e.source != e.target && e.distance >= cut) th[static_cast<std::size_t>(e.target)] = high;
            return BernoulliDesign{std::move(th)};
        }
        }
        throw ValidationError("unknown design kind");
    }
};

enum class Method { full, two_step, oracle };

inline std::string to_string(Method m)
{
    switch (m) {
    case Method::full: return "full";
    case Method::two_step: return "two_step";
    case Method::oracle: return "oracle";
    }
    return "unknown";
}

inline Method method_from_string(const std::string& s)
{
    if (s == "full" || s == "lasso") return Method::full;
    if (s == "two_step" || s == "two-step") return Method::two_step;
    if (s == "oracle") return Method::oracle;
    throw ValidationError("unknown method '" + s + "' (expected full, two_step or oracle)");
}

struct BenchmarkConfig
{
    LayoutSpec layout;
    SparsitySpec sparsity;
    Index lags = 1;
    Index n_obs = 150;
    Index n_test = 50;
    Index burn_in = 500;
    int replications = 50;
    std::vector<Method> methods{Method::full, Method::two_step, Method::oracle};
    SelectionConfig selection;
    SelectionConfig step1_selection = step1_defaults();
    DesignSpec design;
    double rho_inflation = 1.0;
    Index horizon = 1;
    bool record_timings = false;
    std::uint64_t seed = 1;
    std::size_t threads = 1;

    void validate() const
    {
        layout.validate();
        sparsity.validate(layout.node_count());
        if (lags < 1) throw ValidationError("lag order must be at least 1");
        if (n_obs <= lags + 1) throw ValidationError("n_obs must exceed the lag order");
        if (n_test < 0 || burn_in < 0) throw ValidationError("n_test and burn_in must be nonnegative");
        if (replications < 1) throw ValidationError("need at least one replication");
        if (methods.empty()) throw ValidationError("need at least one method");
        if (horizon < 1) throw ValidationError("forecast horizon must be at least 1");
        if (!(rho_inflation >= 1.0)) throw ValidationError("rho inflation must be >= 1");
    }
};

struct MetricRow
{
    std::string method;
    int replication = 0;
    double auroc = std::numeric_limits<double>::quiet_NaN();
    double fp = std::numeric_limits<double>::quiet_NaN();
    double fn = std::numeric_limits<double>::quiet_NaN();
    double frob = std::numeric_limits<double>::quiet_NaN();
    double mse = std::numeric_limits<double>::quiet_NaN();
    double step1_sec = 0.0;
    double step2_sec = 0.0;
    double rho_hat = std::numeric_limits<double>::quiet_NaN();
    double rho_true = std::numeric_limits<double>::quiet_NaN();
    std::string error;
};

struct Replication
{
    ScenarioTruth truth;
    TimeSeriesPanel train;
    std::optional<TimeSeriesPanel> test;
};

/// World r of a benchmark: layout, transition, and simulated panel, all
/// derived from (seed, r).
inline Replication make_replication(const BenchmarkConfig& cfg, int r)
{
    const std::uint64_t world = derive_seed(cfg.seed, "replication", static_cast<std::uint64_t>(r));
    const auto lay = gen_layout(cfg.layout, world);
    Replication rep{gen_transition(lay.layout, lay.labels, cfg.sparsity, cfg.lags, world), {}, std::nullopt};
    const TimeSeriesPanel panel = simulate(rep.truth.process, cfg.n_obs + cfg.n_test, world, {cfg.burn_in, false});
    rep.train = panel.slice(0, cfg.n_obs);
    if (cfg.n_test > 0) rep.test = panel.slice(cfg.n_obs, cfg.n_test);
    return rep;
}

inline FitResult fit_method(Method m, const BenchmarkConfig& cfg, const Replication& rep, std::uint64_t fit_seed,
                            std::size_t threads)
{
    const auto& layout = rep.truth.layout;
    switch (m) {
    case Method::full:
        return full_fit(rep.train, layout, cfg.lags, cfg.selection, fit_seed, threads);
    case Method::oracle: {
        FitResult r = step2_fit(rep.train, layout, rep.truth.rho_true, cfg.lags, cfg.selection, fit_seed, threads);
        r.rho_source = RhoSource::known;
        return r;
    }
    case Method::two_step: {
        TwoStepConfig tc;
        tc.design = cfg.design.resolve(layout.size(), &rep.truth);
        tc.lags = cfg.lags;
        tc.step1 = cfg.step1_selection;
        tc.step2 = cfg.selection;
        tc.rho_inflation = cfg.rho_inflation;
        tc.threads = threads;
        return two_step(rep.train, layout, tc, fit_seed);
    }
    }
    throw ValidationError("unknown method");
}

inline MetricRow score_fit(Method m, int r, const BenchmarkConfig& cfg, const Replication& rep, const FitResult& fit)
{
    const Index k = rep.truth.process.dim();
    MetricRow row;
    row.method = to_string(m);
    row.replication = r;
    row.rho_true = rep.truth.rho_true;
    row.rho_hat = fit.rho_hat.value_or(std::numeric_limits<double>::quiet_NaN());
    row.auroc = auroc(fit.scores, rep.truth.support, cfg.lags);
    const auto f = fp_fn_fractions(fit.edges, rep.truth.support, k, cfg.lags);
    row.fp = f.fp_fraction;
    row.fn = f.fn_fraction;
    row.frob = rel_frobenius_error(fit.stack, rep.truth.process.transition);
    if (rep.test && rep.test->n_times() >= cfg.horizon)
        row.mse = forecast_mse(rep.train, *rep.test, fit.stack, cfg.horizon);
    row.step1_sec = fit.timings.step1_sec;
    row.step2_sec = fit.timings.step2_sec;
    return row;
}

/// One row per (replication, method) in that order. Replications run in
/// parallel; each fit is single-threaded so timings are comparable. A failing
/// replication is recorded in its rows and the run continues.
inline std::vector<MetricRow> run_benchmark(const BenchmarkConfig& cfg)
{
    cfg.validate();
    const std::size_t n_methods = cfg.methods.size();
    std::vector<MetricRow> rows(static_cast<std::size_t>(cfg.replications) * n_methods);
    parallel_for(static_cast<std::size_t>(cfg.replications), cfg.threads, [&](std::size_t ri) {
        const int r = static_cast<int>(ri);
        std::optional<Replication> rep;
        std::string world_error;
        try {
            rep = make_replication(cfg, r);
        } catch (const std::exception& e) {
            world_error = e.what();
        }
        const std::uint64_t fit_seed = derive_seed(cfg.seed, "fit", ri);
        for (std::size_t mi = 0; mi < n_methods; ++mi) {
            auto& row = rows[ri * n_methods + mi];
            const Method m = cfg.methods[mi];
            if (!rep) {
                row.method = to_string(m);
                row.replication = r;
                row.error = world_error;
                continue;
            }
            try {
                row = score_fit(m, r, cfg, *rep, fit_method(m, cfg, *rep, fit_seed, 1));
            } catch (const std::exception& e) {
                row = MetricRow{};
                row.method = to_string(m);
                row.replication = r;
                row.error = e.what();
            }
        }
    });
    return rows;
}

inline std::string metrics_csv(const std::vector<MetricRow>& rows, bool record_timings)
{
    std::ostringstream os;
    os << "method,replication,auroc,fp,fn,frob,mse,step1_sec,step2_sec\n";
    const double na = std::numeric_limits<double>::quiet_NaN();
    for (const auto& r : rows) {
        os << r.method << ',' << r.replication << ',' << io::format_double(r.auroc) << ',' << io::format_double(r.fp)
           << ',' << io::format_double(r.fn) << ',' << io::format_double(r.frob) << ',' << io::format_double(r.mse)
           << ',' << io::format_double(record_timings ? r.step1_sec : na) << ','
           << io::format_double(record_timings ? r.step2_sec : na) << '\n';
    }
    return os.str();
}

inline std::string timing_csv(const std::vector<MetricRow>& rows)
{
    std::ostringstream os;
    os << "method,replication,step1_sec,step2_sec,total_sec,rho_hat,rho_true,error\n";
    for (const auto& r : rows)
        os << r.method << ',' << r.replication << ',' << io::format_double(r.step1_sec) << ','
           << io::format_double(r.step2_sec) << ',' << io::format_double(r.step1_sec + r.step2_sec) << ','
           << io::format_double(r.rho_hat) << ',' << io::format_double(r.rho_true) << ",\"" << r.error << "\"\n";
    return os.str();
}

struct MeanSd
{
    double mean = std::numeric_limits<double>::quiet_NaN();
    double sd = std::numeric_limits<double>::quiet_NaN();
    int n = 0;
};

inline MeanSd mean_sd(const std::vector<double>& xs)
{
    MeanSd m;
    double s = 0.0;
    for (double x : xs)
        if (!std::isnan(x)) {
            s += x;
            ++m.n;
        }
    if (m.n == 0) return m;
    m.mean = s / m.n;
    double ss = 0.0;
    for (double x : xs)
        if (!std::isnan(x)) ss += (x - m.mean) * (x - m.mean);
    m.sd = m.n > 1 ? std::sqrt(ss / (m.n - 1)) : 0.0;
    return m;
}

/// "0.987 (0.016)" style cell.
inline std::string format_mean_sd(const MeanSd& m)
{
    if (m.n == 0) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f (%.3f)", m.mean, m.sd);
    return buf;
}

struct MethodSummary
{
    std::string method;
    MeanSd auroc, fp, fn, frob, mse, step1_sec, step2_sec;
    int failures = 0;
};

inline std::vector<MethodSummary> summarize(const std::vector<MetricRow>& rows, const std::vector<Method>& methods)
{
    std::vector<MethodSummary> out;
    for (Method m : methods) {
        const std::string name = to_string(m);
        std::vector<double> a, fp, fn, fr, ms, s1, s2;
        MethodSummary s;
        s.method = name;
        for (const auto& r : rows) {
            if (r.method != name) continue;
            if (!r.error.empty()) {
                ++s.failures;
                continue;
            }
            a.push_back(r.auroc);
            fp.push_back(r.fp);
            fn.push_back(r.fn);
            fr.push_back(r.frob);
            ms.push_back(r.mse);
            s1.push_back(r.step1_sec);
            s2.push_back(r.step2_sec);
        }
        s.auroc = mean_sd(a);
        s.fp = mean_sd(fp);
        s.fn = mean_sd(fn);
        s.frob = mean_sd(fr);
        s.mse = mean_sd(ms);
        s.step1_sec = mean_sd(s1);
        s.step2_sec = mean_sd(s2);
        out.push_back(s);
    }
    return out;
}

inline std::string summary_table(const std::vector<MethodSummary>& s)
{
    std::ostringstream os;
    os << "method,auroc,fp,fn,frob,mse,failures\n";
    for (const auto& m : s)
        os << m.method << ',' << format_mean_sd(m.auroc) << ',' << format_mean_sd(m.fp) << ','
           << format_mean_sd(m.fn) << ',' << format_mean_sd(m.frob) << ',' << format_mean_sd(m.mse) << ','
           << m.failures << '\n';
    return os.str();
}

} // namespace spvar
