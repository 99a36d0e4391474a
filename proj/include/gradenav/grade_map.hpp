#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradenav/csv.hpp"
#include "gradenav/errors.hpp"

namespace gradenav {

/// One elevation fix along a route.
struct GeoSample {
    double lat_deg = 0.0;
    double lon_deg = 0.0;
    double elevation_m = 0.0;
    double resolution_m = 0.0;  // 0 = unknown
};

/// Raw (arc position, elevation) samples, strictly increasing in arc position.
struct ElevationProfile {
    std::vector<double> arc_m;
    std::vector<double> elevation_m;
    double source_resolution_m = 0.0;

    std::size_t size() const { return arc_m.size(); }

    void validate() const {
        if (arc_m.size() != elevation_m.size())
            throw ConfigError("elevation profile: arc/elevation length mismatch");
        if (arc_m.size() < 2) throw ConfigError("elevation profile: need >= 2 samples");
        for (std::size_t i = 0; i < arc_m.size(); ++i) {
            if (!std::isfinite(arc_m[i]) || !std::isfinite(elevation_m[i]))
                throw ConfigError("elevation profile: non-finite sample at index " + std::to_string(i));
            if (i > 0 && arc_m[i] <= arc_m[i - 1])
                throw ConfigError("elevation profile: arc positions not strictly increasing at index " +
                                  std::to_string(i));
        }
    }
};

/// Road grade map p(s): sine of the slope angle, piecewise-linear over
/// arc-position knots. Queries outside the knot range clamp to the boundary
/// value. Immutable after construction; safe to share across threads.
class GradeMap {
public:
    GradeMap() = default;

    GradeMap(std::vector<double> arc_m, std::vector<double> grade)
        : arc_(std::move(arc_m)), grade_(std::move(grade)) {
        if (arc_.size() != grade_.size() || arc_.size() < 2)
            throw ConfigError("grade map: need >= 2 knots with matching lengths");
        for (std::size_t i = 0; i < arc_.size(); ++i) {
            if (!std::isfinite(arc_[i]) || !std::isfinite(grade_[i]))
                throw ConfigError("grade map: non-finite knot at index " + std::to_string(i));
            if (std::abs(grade_[i]) >= 1.0)
                throw ConfigError("grade map: |grade| >= 1 at knot " + std::to_string(i) +
                                  " (non-traversable)");
            if (i > 0 && arc_[i] <= arc_[i - 1])
                throw ConfigError("grade map: knot positions not strictly increasing at index " +
                                  std::to_string(i));
        }
    }

    const std::vector<double>& knots_arc() const { return arc_; }
    const std::vector<double>& knots_grade() const { return grade_; }
    double s_min() const { return arc_.front(); }
    double s_max() const { return arc_.back(); }

    /// p(s), piecewise-linear, clamped to the boundary value outside the knots.
    double grade_at(double s) const {
        if (s <= arc_.front()) return grade_.front();
        if (s >= arc_.back()) return grade_.back();
        const std::size_t j = segment_index(s);
        const double w = (s - arc_[j]) / (arc_[j + 1] - arc_[j]);
        return grade_[j] + w * (grade_[j + 1] - grade_[j]);
    }

    /// dp/ds of the interpolant. At a knot this returns the right-segment
    /// slope; in the clamped regions (and from the last knot on) it is 0.
    double grade_slope_at(double s) const {
        if (s < arc_.front() || s >= arc_.back()) return 0.0;
        const std::size_t j = segment_index(s);
        return (grade_[j + 1] - grade_[j]) / (arc_[j + 1] - arc_[j]);
    }

private:
    // largest j with arc_[j] <= s, for s inside (front, back)
    std::size_t segment_index(double s) const {
        auto it = std::upper_bound(arc_.begin(), arc_.end(), s);
        return static_cast<std::size_t>(it - arc_.begin()) - 1;
    }

    std::vector<double> arc_;
    std::vector<double> grade_;
};

/// Differentiates an elevation profile into a grade map: centered finite
/// differences (one-sided at the ends) give sin(theta) = dz/ds along the
/// path, then a centered moving average of `smoothing_window` knots is
/// applied. The window shrinks symmetrically near the profile ends.
inline GradeMap from_elevation(const ElevationProfile& profile, int smoothing_window = 5) {
    profile.validate();
    const std::size_t n = profile.size();
    if (smoothing_window < 1 || smoothing_window % 2 == 0)
        throw ConfigError("smoothing window must be an odd integer >= 1");
    if (static_cast<std::size_t>(smoothing_window) > n)
        throw ConfigError("smoothing window exceeds sample count");

    const auto& s = profile.arc_m;
    const auto& z = profile.elevation_m;
    std::vector<double> raw(n);
    raw.front() = (z[1] - z[0]) / (s[1] - s[0]);
    raw.back() = (z[n - 1] - z[n - 2]) / (s[n - 1] - s[n - 2]);
    for (std::size_t i = 1; i + 1 < n; ++i)
        raw[i] = (z[i + 1] - z[i - 1]) / (s[i + 1] - s[i - 1]);

    std::vector<double> grade(n);
    const int hw = smoothing_window / 2;
    for (std::size_t i = 0; i < n; ++i) {
        const int reach = std::min<int>({hw, static_cast<int>(i), static_cast<int>(n - 1 - i)});
        double acc = 0.0;
        for (int k = -reach; k <= reach; ++k) acc += raw[static_cast<std::size_t>(static_cast<int>(i) + k)];
        grade[i] = acc / (2 * reach + 1);
    }

    for (std::size_t i = 0; i < n; ++i)
        if (std::abs(grade[i]) >= 1.0)
            throw ConfigError("elevation data implies |grade| >= 1 near arc " + std::to_string(s[i]) +
                              " m; rejecting as non-traversable");
    return GradeMap(s, std::move(grade));
}

namespace detail {
constexpr double kEarthRadiusM = 6371000.0;

inline double haversine_m(const GeoSample& a, const GeoSample& b) {
    const double deg = M_PI / 180.0;
    const double phi1 = a.lat_deg * deg, phi2 = b.lat_deg * deg;
    const double dphi = (b.lat_deg - a.lat_deg) * deg;
    const double dlam = (b.lon_deg - a.lon_deg) * deg;
    const double h = std::sin(dphi / 2) * std::sin(dphi / 2) +
                     std::cos(phi1) * std::cos(phi2) * std::sin(dlam / 2) * std::sin(dlam / 2);
    return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}
}  // namespace detail

inline void validate_geo(const GeoSample& g, std::size_t index) {
    if (std::abs(g.lat_deg) > 90.0 || std::abs(g.lon_deg) > 180.0 ||
        !std::isfinite(g.lat_deg) || !std::isfinite(g.lon_deg) || !std::isfinite(g.elevation_m))
        throw ConfigError("geo sample " + std::to_string(index) + " invalid (lat " +
                          std::to_string(g.lat_deg) + ", lon " + std::to_string(g.lon_deg) + ")");
}

/// Chains geo fixes into an elevation profile; arc positions are cumulative
/// haversine distances starting at 0. The stated resolution is the largest
/// sample resolution, falling back to the mean spacing when absent.
inline ElevationProfile from_geo_samples(const std::vector<GeoSample>& points) {
    if (points.size() < 2) throw ConfigError("need >= 2 geo samples");
    ElevationProfile p;
    p.arc_m.reserve(points.size());
    p.elevation_m.reserve(points.size());
    double arc = 0.0, max_res = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        validate_geo(points[i], i);
        if (i > 0) {
            const double d = detail::haversine_m(points[i - 1], points[i]);
            if (d <= 0.0)
                throw ConfigError("duplicate consecutive coordinates at geo sample " + std::to_string(i));
            arc += d;
        }
        p.arc_m.push_back(arc);
        p.elevation_m.push_back(points[i].elevation_m);
        max_res = std::max(max_res, points[i].resolution_m);
    }
    p.source_resolution_m = max_res > 0.0 ? max_res : arc / static_cast<double>(points.size() - 1);
    p.validate();
    return p;
}

/// JSON array of {lat, lng, elevation[, resolution]} objects, the shape of a
/// pre-fetched elevation API response.
inline std::vector<GeoSample> load_elevation_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed JSON in '" + path + "': " + e.what());
    }
    if (!doc.is_array()) throw ConfigError("'" + path + "': expected a JSON array");
    std::vector<GeoSample> out;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& rec = doc[i];
        if (!rec.is_object() || !rec.contains("lat") || !rec.contains("lng") || !rec.contains("elevation"))
            throw ConfigError("'" + path + "': record " + std::to_string(i) +
                              " must have lat, lng, elevation");
        GeoSample g;
        try {
            g.lat_deg = rec.at("lat").get<double>();
            g.lon_deg = rec.at("lng").get<double>();
            g.elevation_m = rec.at("elevation").get<double>();
            g.resolution_m = rec.value("resolution", 0.0);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("'" + path + "': record " + std::to_string(i) + ": " + e.what());
        }
        validate_geo(g, i);
        out.push_back(g);
    }
    if (out.size() < 2) throw ConfigError("'" + path + "': need >= 2 samples");
    return out;
}

/// CSV `arc_m,elevation_m`.
inline ElevationProfile load_profile_csv(const std::string& path) {
    auto t = csv::read(path);
    const int ca = t.column("arc_m"), cz = t.column("elevation_m");
    if (ca < 0 || cz < 0) throw ConfigError("'" + path + "': expected header arc_m,elevation_m");
    if (t.rows.size() < 2) throw ConfigError("'" + path + "': need >= 2 samples");
    ElevationProfile p;
    for (const auto& row : t.rows) {
        p.arc_m.push_back(row[ca]);
        p.elevation_m.push_back(row[cz]);
    }
    if (p.arc_m.size() >= 2) {
        double total = p.arc_m.back() - p.arc_m.front();
        p.source_resolution_m = total / static_cast<double>(p.arc_m.size() - 1);
    }
    p.validate();
    return p;
}

/// CSV `arc_m,grade` interchange format.
inline void save_grade_csv(const GradeMap& map, const std::string& path) {
    csv::Writer w(path);
    w.header({"arc_m", "grade"});
    for (std::size_t i = 0; i < map.knots_arc().size(); ++i)
        w.row({map.knots_arc()[i], map.knots_grade()[i]});
}

inline GradeMap load_grade_csv(const std::string& path) {
    auto t = csv::read(path);
    const int ca = t.column("arc_m"), cg = t.column("grade");
    if (ca < 0 || cg < 0) throw ConfigError("'" + path + "': expected header arc_m,grade");
    std::vector<double> arc, grade;
    for (const auto& row : t.rows) {
        arc.push_back(row[ca]);
        grade.push_back(row[cg]);
    }
    return GradeMap(std::move(arc), std::move(grade));
}

}  // namespace gradenav
