#pragma once

#include <spvar/core.hpp>
#include <spvar/scenario.hpp>
#include <spvar/spatial.hpp>
#include <spvar/two_step.hpp>
#include <spvar/var_model.hpp>

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace spvar::io {

using json = nlohmann::json;

/// Shortest round-trip decimal form; NaN prints as NA.
inline std::string format_double(double v)
{
    if (std::isnan(v)) return "NA";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& where)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ValidationError("cannot parse number '" + std::string(s) + "' at " + where);
    return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string() + " for reading");
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        rows.push_back(split_csv_line(line));
    }
    return rows;
}

inline std::ofstream open_out(const std::filesystem::path& path)
{
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    return out;
}

inline void finish(std::ofstream& out, const std::filesystem::path& path)
{
    out.flush();
    if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Panel CSV: t,<id1>,...,<idk>; missing as empty field or NA
// ---------------------------------------------------------------------------

inline std::string panel_to_csv(const TimeSeriesPanel& panel)
{
    std::ostringstream os;
    os << 't';
    for (const auto& id : panel.series_ids()) os << ',' << id;
    os << '\n';
    for (Index t = 0; t < panel.n_times(); ++t) {
        os << panel.times()[static_cast<std::size_t>(t)];
        for (Index j = 0; j < panel.n_series(); ++j) {
            os << ',';
            if (panel.is_missing(t, j)) os << "NA";
            else os << format_double(panel.values()(t, j));
        }
        os << '\n';
    }
    return os.str();
}

inline void write_panel_csv(const std::filesystem::path& path, const TimeSeriesPanel& panel)
{
    auto out = open_out(path);
    out << panel_to_csv(panel);
    finish(out, path);
}

inline TimeSeriesPanel read_panel_csv(const std::filesystem::path& path)
{
    const auto rows = read_csv(path);
    if (rows.size() < 2) throw ValidationError(path.string() + ": panel CSV needs a header and at least one row");
    const auto& header = rows.front();
    if (header.size() < 2 || header[0] != "t")
        throw ValidationError(path.string() + ": panel header must start with 't'");
    const Index k = static_cast<Index>(header.size()) - 1;
    const Index T = static_cast<Index>(rows.size()) - 1;
    Matrix v = Matrix::Zero(T, k);
    BoolMatrix miss = BoolMatrix::Constant(T, k, false);
    std::vector<std::int64_t> times;
    for (Index r = 0; r < T; ++r) {
        const auto& row = rows[static_cast<std::size_t>(r + 1)];
        const std::string where = path.string() + " line " + std::to_string(r + 2);
        if (static_cast<Index>(row.size()) != k + 1) throw ValidationError(where + ": wrong field count");
        times.push_back(static_cast<std::int64_t>(parse_double(row[0], where)));
        for (Index j = 0; j < k; ++j) {
            const auto& f = row[static_cast<std::size_t>(j + 1)];
            if (f.empty() || f == "NA") {
                miss(r, j) = true;
                v(r, j) = 0.0;
            } else {
                v(r, j) = parse_double(f, where);
            }
        }
    }
    return TimeSeriesPanel(std::move(v), {header.begin() + 1, header.end()}, std::move(miss), std::move(times));
}

// ---------------------------------------------------------------------------
// Positions CSV: id,x,y[,z...] or id,lon,lat
// ---------------------------------------------------------------------------

struct Positions
{
    std::vector<std::string> ids;
    SpatialLayout layout;
};

inline void write_positions_csv(const std::filesystem::path& path, const std::vector<std::string>& ids,
                                const SpatialLayout& layout)
{
    auto out = open_out(path);
    out << "id";
    if (layout.metric() == Metric::haversine_km) out << ",lon,lat";
    else {
        const char* names[] = {"x", "y", "z"};
        for (Index c = 0; c < layout.dim(); ++c) out << ',' << (c < 3 ? names[c] : "x" + std::to_string(c + 1));
    }
    out << '\n';
    for (Index i = 0; i < layout.size(); ++i) {
        out << ids[static_cast<std::size_t>(i)];
        for (Index c = 0; c < layout.dim(); ++c) out << ',' << format_double(layout.positions()(i, c));
        out << '\n';
    }
    finish(out, path);
}

inline Positions read_positions_csv(const std::filesystem::path& path, Metric metric)
{
    const auto rows = read_csv(path);
    if (rows.size() < 2) throw ValidationError(path.string() + ": positions CSV needs a header and rows");
    if (rows.front().size() < 2 || rows.front()[0] != "id")
        throw ValidationError(path.string() + ": positions header must start with 'id'");
    const Index d = static_cast<Index>(rows.front().size()) - 1;
    Positions p;
    Matrix pos(static_cast<Index>(rows.size()) - 1, d);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const std::string where = path.string() + " line " + std::to_string(r + 1);
        if (static_cast<Index>(rows[r].size()) != d + 1) throw ValidationError(where + ": wrong field count");
        p.ids.push_back(rows[r][0]);
        for (Index c = 0; c < d; ++c) pos(static_cast<Index>(r) - 1, c) = parse_double(rows[r][static_cast<std::size_t>(c + 1)], where);
    }
    p.layout = SpatialLayout(std::move(pos), metric);
    return p;
}

/// Layout rows reordered to follow the panel's series ids.
inline SpatialLayout align_layout(const Positions& p, const std::vector<std::string>& series_ids)
{
    if (p.ids.size() != series_ids.size())
        throw ShapeError("panel has " + std::to_string(series_ids.size()) + " series but positions list " +
                         std::to_string(p.ids.size()) + " nodes");
    std::map<std::string, Index> where;
    for (std::size_t i = 0; i < p.ids.size(); ++i) where[p.ids[i]] = static_cast<Index>(i);
    Matrix pos(p.layout.size(), p.layout.dim());
    for (std::size_t j = 0; j < series_ids.size(); ++j) {
        auto it = where.find(series_ids[j]);
        if (it == where.end()) throw ShapeError("series '" + series_ids[j] + "' has no position");
        pos.row(static_cast<Index>(j)) = p.layout.positions().row(it->second);
    }
    return SpatialLayout(std::move(pos), p.layout.metric());
}

// ---------------------------------------------------------------------------
// Edge CSV: source,target,lag,coefficient,distance
// ---------------------------------------------------------------------------

inline std::string edges_to_csv(const EdgeSet& es, const std::vector<std::string>& ids)
{
    std::ostringstream os;
    os << "source,target,lag,coefficient,distance\n";
    for (const auto& e : es.edges)
        os << ids[static_cast<std::size_t>(e.source)] << ',' << ids[static_cast<std::size_t>(e.target)] << ',' << e.lag
           << ',' << format_double(e.coefficient) << ',' << format_double(e.distance) << '\n';
    return os.str();
}

inline void write_edges_csv(const std::filesystem::path& path, const EdgeSet& es, const std::vector<std::string>& ids)
{
    auto out = open_out(path);
    out << edges_to_csv(es, ids);
    finish(out, path);
}

inline EdgeSet read_edges_csv(const std::filesystem::path& path, const std::vector<std::string>& ids)
{
    const auto rows = read_csv(path);
    if (rows.empty() || rows.front().size() != 5 || rows.front()[0] != "source")
        throw ValidationError(path.string() + ": edge header must be source,target,lag,coefficient,distance");
    std::map<std::string, Index> where;
    for (std::size_t i = 0; i < ids.size(); ++i) where[ids[i]] = static_cast<Index>(i);
    EdgeSet es;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const std::string loc = path.string() + " line " + std::to_string(r + 1);
        const auto& row = rows[r];
        if (row.size() != 5) throw ValidationError(loc + ": wrong field count");
        auto s = where.find(row[0]), t = where.find(row[1]);
        if (s == where.end() || t == where.end()) throw ShapeError(loc + ": unknown series id");
        es.edges.push_back({s->second, t->second, static_cast<Index>(parse_double(row[2], loc)),
                            parse_double(row[3], loc), parse_double(row[4], loc)});
    }
    return es;
}

// ---------------------------------------------------------------------------
// Scenario truth JSON
// ---------------------------------------------------------------------------

inline std::vector<std::string> default_ids(Index k)
{
    std::vector<std::string> ids;
    for (Index i = 0; i < k; ++i) ids.push_back("X" + std::to_string(i + 1));
    return ids;
}

inline json truth_to_json(const ScenarioTruth& truth)
{
    const Index k = truth.process.dim();
    json j;
    j["seed"] = truth.seed;
    j["k"] = k;
    j["lags"] = truth.process.lags();
    j["rho_true"] = truth.rho_true;
    j["beta_min"] = truth.beta_min;
    j["spectral_radius"] = companion_spectral_radius(truth.process.transition);
    j["noise_variances"] = std::vector<double>(truth.process.noise.variances.data(),
                                               truth.process.noise.variances.data() + k);
    json layout;
    layout["metric"] = to_string(truth.layout.metric());
    json pos = json::array();
    for (Index i = 0; i < k; ++i) {
        json row = json::array();
        for (Index c = 0; c < truth.layout.dim(); ++c) row.push_back(truth.layout.positions()(i, c));
        pos.push_back(row);
    }
    layout["positions"] = pos;
    layout["labels"] = truth.labels;
    j["layout"] = layout;
    json support = json::array();
    for (const auto& e : truth.support.edges)
        support.push_back({{"source", e.source}, {"target", e.target}, {"lag", e.lag},
                           {"coefficient", e.coefficient}, {"distance", e.distance}});
    j["support"] = support;
    return j;
}

inline ScenarioTruth truth_from_json(const json& j)
{
    try {
        ScenarioTruth t;
        const Index k = j.at("k").get<Index>(), L = j.at("lags").get<Index>();
        t.seed = j.at("seed").get<std::uint64_t>();
        t.rho_true = j.at("rho_true").get<double>();
        t.beta_min = j.at("beta_min").get<double>();
        const auto& lay = j.at("layout");
        const auto& pos = lay.at("positions");
        if (static_cast<Index>(pos.size()) != k) throw ShapeError("truth layout has wrong node count");
        const Index d = k > 0 ? static_cast<Index>(pos.at(0).size()) : 0;
        Matrix p(k, d);
        for (Index i = 0; i < k; ++i)
            for (Index c = 0; c < d; ++c) p(i, c) = pos.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(c)).get<double>();
        t.layout = SpatialLayout(std::move(p), metric_from_string(lay.at("metric").get<std::string>()));
        t.labels = lay.at("labels").get<std::vector<int>>();
        for (const auto& e : j.at("support"))
            t.support.edges.push_back({e.at("source").get<Index>(), e.at("target").get<Index>(), e.at("lag").get<Index>(),
                                       e.at("coefficient").get<double>(), e.at("distance").get<double>()});
        const auto nv = j.at("noise_variances").get<std::vector<double>>();
        Vector v(static_cast<Index>(nv.size()));
        for (std::size_t i = 0; i < nv.size(); ++i) v(static_cast<Index>(i)) = nv[i];
        t.process = VarProcess(stack_from_edges(t.support, k, L), NoiseSpec(v));
        return t;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed truth JSON: ") + e.what());
    }
}

inline json read_json(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string() + " for reading");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

inline void write_json(const std::filesystem::path& path, const json& j)
{
    auto out = open_out(path);
    out << j.dump(2) << '\n';
    finish(out, path);
}

} // namespace spvar::io
