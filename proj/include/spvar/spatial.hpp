#pragma once

#include <spvar/core.hpp>

#include <cmath>
#include <numbers>
#include <string>

namespace spvar {

enum class Metric { euclidean, haversine_km };

inline std::string to_string(Metric m) { return m == Metric::euclidean ? "euclidean" : "haversine"; }

inline Metric metric_from_string(const std::string& s)
{
    if (s == "euclidean") return Metric::euclidean;
    if (s == "haversine" || s == "haversine-km" || s == "haversine_km") return Metric::haversine_km;
    throw ValidationError("unknown metric '" + s + "' (expected euclidean or haversine)");
}

/// Great-circle distance in km between (lon, lat) pairs given in degrees.
inline double haversine_km(double lon1, double lat1, double lon2, double lat2)
{
    constexpr double earth_radius_km = 6371.0088;
    constexpr double rad = std::numbers::pi / 180.0;
    const double dlat = (lat2 - lat1) * rad;
    const double dlon = (lon2 - lon1) * rad;
    const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                     std::cos(lat1 * rad) * std::cos(lat2 * rad) * std::sin(dlon / 2) * std::sin(dlon / 2);
    return 2.0 * earth_radius_km * std::asin(std::min(1.0, std::sqrt(a)));
}

/// Node positions (k x d, one row per node) with the pairwise distance
/// matrix precomputed once.
class SpatialLayout
{
public:
    SpatialLayout() = default;

    explicit SpatialLayout(Matrix positions, Metric metric = Metric::euclidean)
        : pos_(std::move(positions)), metric_(metric)
    {
        if (pos_.rows() < 1 || pos_.cols() < 1) throw ShapeError("layout needs at least one node in R^d, d >= 1");
        if (!pos_.allFinite()) throw ValidationError("layout positions must be finite");
        if (metric_ == Metric::haversine_km && pos_.cols() != 2)
            throw ShapeError("haversine layouts need exactly two coordinates (lon, lat)");
        const Index k = pos_.rows();
        dist_ = Matrix::Zero(k, k);
        for (Index i = 0; i < k; ++i)
            for (Index j = i + 1; j < k; ++j) {
                const double d = metric_ == Metric::euclidean
                                     ? (pos_.row(i) - pos_.row(j)).norm()
                                     : haversine_km(pos_(i, 0), pos_(i, 1), pos_(j, 0), pos_(j, 1));
                dist_(i, j) = dist_(j, i) = d;
            }
        rho_max_ = k > 1 ? dist_.maxCoeff() : 0.0;
    }

    Index size() const noexcept { return pos_.rows(); }
    Index dim() const noexcept { return pos_.cols(); }
    Metric metric() const noexcept { return metric_; }
    const Matrix& positions() const noexcept { return pos_; }
    const Matrix& distances() const noexcept { return dist_; }
    double distance(Index i, Index j) const { return dist_(i, j); }
    double rho_max() const noexcept { return rho_max_; }

    /// Number of nodes j (including i itself) with d(i, j) <= rho.
    Index ball_count(Index i, double rho) const
    {
        return (dist_.row(i).array() <= rho).count();
    }

private:
    Matrix pos_;
    Metric metric_ = Metric::euclidean;
    Matrix dist_;
    double rho_max_ = 0.0;
};

} // namespace spvar
