#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "firerisk/common.hpp"
#include "json.hpp"

namespace firerisk::geo {

enum class Errc { InvalidPoint, InvalidPolygon, BadGeoJson, Io };
using Error = CodedError<Errc>;

inline constexpr double kEarthRadiusMeters = 6'371'000.0;

/// WGS84 degrees.
struct GeoPoint {
    double lat = 0.0;
    double lon = 0.0;

    bool valid() const;
    friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

/// Throws InvalidPoint when out of range or non-finite.
GeoPoint make_point(double lat, double lon);

enum class OverlayKind { City, Npu, CouncilDistrict, Battalion };

std::string_view to_string(OverlayKind k);
/// Accepts "CITY", "NPU", "COUNCIL_DISTRICT", "BATTALION" in any case.
std::optional<OverlayKind> parse_overlay_kind(std::string_view s);

/// First ring is the outer boundary; the rest are holes. Rings are
/// implicitly closed.
struct Polygon {
    std::string id;
    OverlayKind kind = OverlayKind::City;
    std::string name;
    std::vector<std::vector<GeoPoint>> rings;
};

struct BoundingBox {
    double minLat, minLon, maxLat, maxLon;
    bool contains(const GeoPoint& p) const {
        return p.lat >= minLat && p.lat <= maxLat && p.lon >= minLon && p.lon <= maxLon;
    }
};

/// Great-circle distance on a sphere of radius 6,371 km.
double haversine_m(const GeoPoint& p, const GeoPoint& q);

/// Parity ray cast on the outer ring minus holes; boundary points are inside.
bool point_in_polygon(const GeoPoint& p, const Polygon& poly);

BoundingBox bounding_box(const Polygon& poly);
Polygon rectangle(std::string id, OverlayKind kind, std::string name, const BoundingBox& box);

struct Located {
    std::string_view id;
    GeoPoint point;
};

struct Neighbor {
    std::size_t index;  // into the candidate span
    double distanceMeters;
};

/// All candidates within `radiusMeters` of `p`, nearest first, ties by id.
std::vector<Neighbor> within_radius(const GeoPoint& p, std::span<const Located> candidates,
                                    double radiusMeters);

// Geohash (base32, interleaved lon/lat bits).
std::string geohash(const GeoPoint& p, int precision);
BoundingBox geohash_bounds(std::string_view hash);
/// The cell itself plus its 8 neighbors (fewer at the poles), deduplicated.
std::vector<std::string> geohash_with_neighbors(const GeoPoint& p, int precision);

/// Reads an RFC 7946 FeatureCollection of Polygon features whose properties
/// carry `id`, `kind` and `name`.
std::vector<Polygon> load_polygons(const std::filesystem::path& path);
std::vector<Polygon> parse_polygons(std::string_view geojson);
nlohmann::json polygon_feature(const Polygon& poly);
nlohmann::json polygons_to_geojson(std::span<const Polygon> polys);

}  // namespace firerisk::geo
