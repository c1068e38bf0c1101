#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "firerisk/common.hpp"
#include "firerisk/geo.hpp"
#include "firerisk/risk.hpp"
#include "json.hpp"

namespace firerisk::service {

enum class Errc { BadQuery, UnknownOverlay, BadSnapshot, Io };
using Error = CodedError<Errc>;

enum class Layer { Fire, CurrentInspection, PotentialInspection };
inline constexpr Layer kLayers[] = {Layer::Fire, Layer::CurrentInspection, Layer::PotentialInspection};
std::string_view to_string(Layer l);
std::optional<Layer> parse_layer(std::string_view s);

struct Feature {
    std::string propertyId;
    Layer layer = Layer::PotentialInspection;
    geo::GeoPoint point;
    std::string businessName;
    std::string address;
    std::string usageType;
    std::optional<Date> date;
    std::optional<double> probability;
    std::optional<int> riskScore;
    std::optional<risk::Category> riskCategory;
};

/// Immutable once published. Features sorted by (propertyId, layer, date).
struct Snapshot {
    std::string buildStamp;
    std::vector<Feature> features;
    std::vector<geo::Polygon> overlays;

    /// Sorts features and checks layer and risk invariants.
    void finalize();
    std::map<Layer, std::size_t> counts() const;

    /// FeatureCollection of points with foreign members buildStamp and overlays.
    nlohmann::json to_geojson() const;
    static Snapshot from_geojson(const nlohmann::json& j);
    /// Written to a temporary sibling, then renamed into place.
    void save(const std::filesystem::path& path) const;
    static Snapshot load(const std::filesystem::path& path);
};

/// Conjunction of the given filters; dates and risk bounds are inclusive.
struct Query {
    std::optional<Layer> layer;
    std::optional<std::string> usageType;  // compared folded
    std::optional<Date> dateFrom;
    std::optional<Date> dateTo;
    std::optional<int> riskMin;
    std::optional<int> riskMax;
    std::optional<geo::BoundingBox> bbox;

    bool matches(const Feature& f) const;
};

/// Keys: layer, usage, from, to, risk_min, risk_max, bbox (minLon,minLat,maxLon,maxLat).
/// Throws BadQuery on malformed values or empty ranges.
Query parse_query(const std::multimap<std::string, std::string>& params);

nlohmann::json feature_json(const Feature& f);
std::vector<const Feature*> filter(const Snapshot& s, const Query& q);
nlohmann::json filter_properties(const Snapshot& s, const Query& q);

/// Overlays of one kind as a FeatureCollection. Throws UnknownOverlay for an unknown kind.
nlohmann::json overlays_geojson(const Snapshot& s, std::string_view kind);

struct LayerStats {
    std::size_t count = 0;
    std::size_t total = 0;
    double percentage = 0.0;  // 100 * count / total, 0 when total is 0
};

/// Filtered features inside the overlay, per layer. Throws UnknownOverlay.
std::map<Layer, LayerStats> overlay_stats(const Snapshot& s, std::string_view kind, std::string_view overlayId,
                                          const Query& q);
nlohmann::json overlay_stats_json(const Snapshot& s, std::string_view kind, std::string_view overlayId, const Query& q);

/// Holds the published snapshot; readers keep the one they fetched.
class SnapshotStore {
public:
    std::shared_ptr<const Snapshot> get() const;
    void publish(std::shared_ptr<const Snapshot> s);
    void publish_file(const std::filesystem::path& path);

private:
    mutable std::mutex mutex_;
    std::shared_ptr<const Snapshot> current_;
};

struct Response {
    int status = 200;
    std::string contentType = "application/json";
    std::string body;
};

/// Routing without sockets: /api/health, /api/meta, /api/properties,
/// /api/overlays/{kind}, /api/overlays/{kind}/{id}/stats.
Response handle(const Snapshot& s, std::string_view path, const std::multimap<std::string, std::string>& params);

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path staticDir;  // served at / when it holds index.html
};

class Server {
public:
    Server(SnapshotStore& store, ServerOptions opts);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds (port 0 picks a free one) and returns the bound port, or -1.
    int bind();
    /// Blocks until stop().
    bool listen_after_bind();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace firerisk::service
