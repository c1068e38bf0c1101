#include "firerisk/geo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace firerisk::geo {
namespace {

constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
constexpr std::string_view kBase32 = "0123456789bcdefghjkmnpqrstuvwxyz";

bool on_segment(const GeoPoint& p, const GeoPoint& a, const GeoPoint& b) {
    constexpr double kEps = 1e-12;
    double cross = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon);
    double scale = std::max({1.0, std::abs(b.lon - a.lon), std::abs(b.lat - a.lat)});
    if (std::abs(cross) > kEps * scale) return false;
    return p.lon >= std::min(a.lon, b.lon) - kEps && p.lon <= std::max(a.lon, b.lon) + kEps &&
           p.lat >= std::min(a.lat, b.lat) - kEps && p.lat <= std::max(a.lat, b.lat) + kEps;
}

bool on_ring_boundary(const GeoPoint& p, const std::vector<GeoPoint>& ring) {
    for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++)
        if (on_segment(p, ring[j], ring[i])) return true;
    return false;
}

// Even-odd crossing count of a ray towards +lon.
bool ring_contains(const GeoPoint& p, const std::vector<GeoPoint>& ring) {
    bool inside = false;
    for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
        const auto& a = ring[i];
        const auto& b = ring[j];
        if ((a.lat > p.lat) != (b.lat > p.lat)) {
            double x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
            if (p.lon < x) inside = !inside;
        }
    }
    return inside;
}

double wrap_lon(double lon) {
    while (lon >= 180.0) lon -= 360.0;
    while (lon < -180.0) lon += 360.0;
    return lon;
}

std::vector<GeoPoint> parse_ring(const nlohmann::json& coords) {
    if (!coords.is_array()) throw Error(Errc::BadGeoJson, "ring is not an array");
    std::vector<GeoPoint> ring;
    for (const auto& pos : coords) {
        if (!pos.is_array() || pos.size() < 2 || !pos[0].is_number() || !pos[1].is_number())
            throw Error(Errc::BadGeoJson, "position must be [lon, lat]");
        ring.push_back(make_point(pos[1].get<double>(), pos[0].get<double>()));
    }
    if (ring.size() >= 2 && ring.front() == ring.back()) ring.pop_back();
    if (ring.size() < 3) throw Error(Errc::InvalidPolygon, "ring needs at least 3 distinct vertices");
    return ring;
}

}  // namespace

bool GeoPoint::valid() const {
    return std::isfinite(lat) && std::isfinite(lon) && lat >= -90.0 && lat <= 90.0 && lon >= -180.0 &&
           lon <= 180.0;
}

GeoPoint make_point(double lat, double lon) {
    GeoPoint p{lat, lon};
    if (!p.valid())
        throw Error(Errc::InvalidPoint, "coordinate out of range: " + format_double(lat) + "," + format_double(lon));
    return p;
}

std::string_view to_string(OverlayKind k) {
    switch (k) {
    case OverlayKind::City: return "CITY";
    case OverlayKind::Npu: return "NPU";
    case OverlayKind::CouncilDistrict: return "COUNCIL_DISTRICT";
    case OverlayKind::Battalion: return "BATTALION";
    }
    return "CITY";
}

std::optional<OverlayKind> parse_overlay_kind(std::string_view s) {
    std::string u = to_upper(s);
    for (auto k : {OverlayKind::City, OverlayKind::Npu, OverlayKind::CouncilDistrict, OverlayKind::Battalion})
        if (u == to_string(k)) return k;
    return std::nullopt;
}

double haversine_m(const GeoPoint& p, const GeoPoint& q) {
    double dlat = (q.lat - p.lat) * kDegToRad;
    double dlon = (q.lon - p.lon) * kDegToRad;
    double s1 = std::sin(dlat / 2.0);
    double s2 = std::sin(dlon / 2.0);
    double a = s1 * s1 + std::cos(p.lat * kDegToRad) * std::cos(q.lat * kDegToRad) * s2 * s2;
    a = std::clamp(a, 0.0, 1.0);
    return 2.0 * kEarthRadiusMeters * std::asin(std::sqrt(a));
}

bool point_in_polygon(const GeoPoint& p, const Polygon& poly) {
    if (poly.rings.empty()) return false;
    for (const auto& ring : poly.rings)
        if (on_ring_boundary(p, ring)) return true;
    if (!ring_contains(p, poly.rings.front())) return false;
    for (std::size_t h = 1; h < poly.rings.size(); ++h)
        if (ring_contains(p, poly.rings[h])) return false;
    return true;
}

BoundingBox bounding_box(const Polygon& poly) {
    BoundingBox b{90.0, 180.0, -90.0, -180.0};
    for (const auto& ring : poly.rings)
        for (const auto& v : ring) {
            b.minLat = std::min(b.minLat, v.lat);
            b.maxLat = std::max(b.maxLat, v.lat);
            b.minLon = std::min(b.minLon, v.lon);
            b.maxLon = std::max(b.maxLon, v.lon);
        }
    return b;
}

Polygon rectangle(std::string id, OverlayKind kind, std::string name, const BoundingBox& box) {
    Polygon p{std::move(id), kind, std::move(name), {}};
    p.rings.push_back({{box.minLat, box.minLon}, {box.minLat, box.maxLon}, {box.maxLat, box.maxLon},
                       {box.maxLat, box.minLon}});
    return p;
}

std::vector<Neighbor> within_radius(const GeoPoint& p, std::span<const Located> candidates,
                                    double radiusMeters) {
    std::vector<Neighbor> out;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        double d = haversine_m(p, candidates[i].point);
        if (d <= radiusMeters) out.push_back({i, d});
    }
    std::sort(out.begin(), out.end(), [&](const Neighbor& a, const Neighbor& b) {
        if (a.distanceMeters != b.distanceMeters) return a.distanceMeters < b.distanceMeters;
        return candidates[a.index].id < candidates[b.index].id;
    });
    return out;
}

std::string geohash(const GeoPoint& p, int precision) {
    double lat_lo = -90.0, lat_hi = 90.0, lon_lo = -180.0, lon_hi = 180.0;
    std::string out;
    out.reserve(static_cast<std::size_t>(precision));
    bool even = true;
    int bit = 0, ch = 0;
    while (static_cast<int>(out.size()) < precision) {
        if (even) {
            double mid = (lon_lo + lon_hi) / 2.0;
            if (p.lon >= mid) {
                ch = (ch << 1) | 1;
                lon_lo = mid;
            } else {
                ch <<= 1;
                lon_hi = mid;
            }
        } else {
            double mid = (lat_lo + lat_hi) / 2.0;
            if (p.lat >= mid) {
                ch = (ch << 1) | 1;
                lat_lo = mid;
            } else {
                ch <<= 1;
                lat_hi = mid;
            }
        }
        even = !even;
        if (++bit == 5) {
            out.push_back(kBase32[static_cast<std::size_t>(ch)]);
            bit = 0;
            ch = 0;
        }
    }
    return out;
}

BoundingBox geohash_bounds(std::string_view hash) {
    double lat_lo = -90.0, lat_hi = 90.0, lon_lo = -180.0, lon_hi = 180.0;
    bool even = true;
    for (char c : hash) {
        auto v = kBase32.find(c);
        if (v == std::string_view::npos) throw Error(Errc::InvalidPoint, "bad geohash character");
        for (int b = 4; b >= 0; --b) {
            bool one = (v >> b) & 1U;
            double& lo = even ? lon_lo : lat_lo;
            double& hi = even ? lon_hi : lat_hi;
            double mid = (lo + hi) / 2.0;
            (one ? lo : hi) = mid;
            even = !even;
        }
    }
    return {lat_lo, lon_lo, lat_hi, lon_hi};
}

std::vector<std::string> geohash_with_neighbors(const GeoPoint& p, int precision) {
    std::string self = geohash(p, precision);
    BoundingBox cell = geohash_bounds(self);
    double h = cell.maxLat - cell.minLat;
    double w = cell.maxLon - cell.minLon;
    double clat = (cell.minLat + cell.maxLat) / 2.0;
    double clon = (cell.minLon + cell.maxLon) / 2.0;
    std::vector<std::string> out;
    out.reserve(9);
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
            double lat = clat + dy * h;
            if (lat < -90.0 || lat > 90.0) continue;
            out.push_back(geohash({lat, wrap_lon(clon + dx * w)}, precision));
        }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<Polygon> parse_polygons(std::string_view geojson) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(geojson);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(Errc::BadGeoJson, e.what());
    }
    if (doc.value("type", "") != "FeatureCollection" || !doc.contains("features") || !doc["features"].is_array())
        throw Error(Errc::BadGeoJson, "expected a FeatureCollection");
    std::vector<Polygon> out;
    for (const auto& f : doc["features"]) {
        const auto& props = f.contains("properties") ? f["properties"] : nlohmann::json{};
        const auto& geom = f.contains("geometry") ? f["geometry"] : nlohmann::json{};
        if (!props.is_object() || !props.contains("id") || !props.contains("kind") || !props.contains("name"))
            throw Error(Errc::BadGeoJson, "feature properties must carry id, kind, name");
        if (!geom.is_object() || geom.value("type", "") != "Polygon" || !geom.contains("coordinates"))
            throw Error(Errc::BadGeoJson, "only Polygon geometries are supported");
        Polygon poly;
        poly.id = props["id"].is_string() ? props["id"].get<std::string>() : props["id"].dump();
        auto kind = parse_overlay_kind(props["kind"].get<std::string>());
        if (!kind) throw Error(Errc::BadGeoJson, "unknown overlay kind " + props["kind"].dump());
        poly.kind = *kind;
        poly.name = props["name"].get<std::string>();
        for (const auto& ring : geom["coordinates"]) poly.rings.push_back(parse_ring(ring));
        if (poly.rings.empty()) throw Error(Errc::InvalidPolygon, "polygon has no rings");
        out.push_back(std::move(poly));
    }
    return out;
}

std::vector<Polygon> load_polygons(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_polygons(ss.str());
}

nlohmann::json polygon_feature(const Polygon& poly) {
    nlohmann::json rings = nlohmann::json::array();
    for (const auto& ring : poly.rings) {
        nlohmann::json r = nlohmann::json::array();
        for (const auto& v : ring) r.push_back({v.lon, v.lat});
        if (!ring.empty()) r.push_back({ring.front().lon, ring.front().lat});
        rings.push_back(std::move(r));
    }
    return {{"type", "Feature"},
            {"geometry", {{"type", "Polygon"}, {"coordinates", std::move(rings)}}},
            {"properties", {{"id", poly.id}, {"kind", std::string(to_string(poly.kind))}, {"name", poly.name}}}};
}

nlohmann::json polygons_to_geojson(std::span<const Polygon> polys) {
    nlohmann::json features = nlohmann::json::array();
    for (const auto& p : polys) features.push_back(polygon_feature(p));
    return {{"type", "FeatureCollection"}, {"features", std::move(features)}};
}

}  // namespace firerisk::geo
