#include "firerisk/service.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "firerisk/address.hpp"
#include "httplib.h"

namespace firerisk::service {

using nlohmann::json;

std::string_view to_string(Layer l) {
    switch (l) {
    case Layer::Fire: return "FIRE";
    case Layer::CurrentInspection: return "CURRENT_INSPECTION";
    case Layer::PotentialInspection: return "POTENTIAL_INSPECTION";
    }
    return "FIRE";
}

std::optional<Layer> parse_layer(std::string_view s) {
    auto up = to_upper(s);
    for (auto l : kLayers)
        if (up == to_string(l)) return l;
    return std::nullopt;
}

namespace {

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        auto pos = s.find(sep, start);
        out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) return out;
        start = pos + 1;
    }
}

int parse_risk(const std::string& key, const std::string& v) {
    if (v.empty() || v.size() > 2 || !std::all_of(v.begin(), v.end(), [](char c) { return c >= '0' && c <= '9'; }))
        throw Error(Errc::BadQuery, key + " must be an integer in 1..10");
    int n = std::stoi(v);
    if (n < 1 || n > 10) throw Error(Errc::BadQuery, key + " must be an integer in 1..10");
    return n;
}

Date parse_query_date(const std::string& key, const std::string& v) {
    auto d = parse_date(v);
    if (!d) throw Error(Errc::BadQuery, key + " must be a YYYY-MM-DD date");
    return *d;
}

geo::BoundingBox parse_bbox(const std::string& v) {
    auto parts = split(v, ',');
    if (parts.size() != 4) throw Error(Errc::BadQuery, "bbox must be minLon,minLat,maxLon,maxLat");
    double x[4];
    for (int i = 0; i < 4; ++i) {
        auto d = parse_double(trim(parts[static_cast<std::size_t>(i)]));
        if (!d) throw Error(Errc::BadQuery, "bbox must be minLon,minLat,maxLon,maxLat");
        x[i] = *d;
    }
    geo::BoundingBox b{x[1], x[0], x[3], x[2]};
    if (b.minLat > b.maxLat || b.minLon > b.maxLon || b.minLat < -90 || b.maxLat > 90 || b.minLon < -180 ||
        b.maxLon > 180)
        throw Error(Errc::BadQuery, "bbox is empty or out of range");
    return b;
}

const geo::Polygon& find_overlay(const Snapshot& s, std::string_view kind, std::string_view id) {
    auto k = geo::parse_overlay_kind(kind);
    if (!k) throw Error(Errc::UnknownOverlay, "unknown overlay kind '" + std::string(kind) + "'");
    for (const auto& p : s.overlays)
        if (p.kind == *k && p.id == id) return p;
    throw Error(Errc::UnknownOverlay, "unknown overlay " + std::string(kind) + "/" + std::string(id));
}

json error_body(const std::string& msg) { return {{"error", msg}}; }

template <class T>
std::optional<T> opt_field(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<T>();
}

constexpr const char* kFallbackPage = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>Fire risk service</title></head>
<body><h1>Fire risk service</h1>
<p>No web map bundle is installed. API endpoints:</p>
<ul>
<li><a href="/api/health">/api/health</a></li>
<li><a href="/api/meta">/api/meta</a></li>
<li><a href="/api/properties">/api/properties</a>?layer=&amp;usage=&amp;from=&amp;to=&amp;risk_min=&amp;risk_max=&amp;bbox=</li>
<li>/api/overlays/{kind} and /api/overlays/{kind}/{id}/stats</li>
</ul></body></html>
)";

}  // namespace

// ---------------------------------------------------------------------------

void Snapshot::finalize() {
    std::sort(features.begin(), features.end(), [](const Feature& a, const Feature& b) {
        if (a.propertyId != b.propertyId) return a.propertyId < b.propertyId;
        if (a.layer != b.layer) return a.layer < b.layer;
        return a.date < b.date;
    });
    for (const auto& f : features) {
        if (f.layer == Layer::Fire && !f.date) throw Error(Errc::BadSnapshot, "fire feature " + f.propertyId + " has no date");
        if (!f.point.valid()) throw Error(Errc::BadSnapshot, "feature " + f.propertyId + " has an invalid point");
        if (f.riskScore.has_value() != f.riskCategory.has_value())
            throw Error(Errc::BadSnapshot, "feature " + f.propertyId + " has a partial risk annotation");
        if (f.riskScore) {
            if (*f.riskScore < 1 || *f.riskScore > 10 || risk::categorize(*f.riskScore) != *f.riskCategory)
                throw Error(Errc::BadSnapshot, "feature " + f.propertyId + " has an inconsistent risk annotation");
        }
    }
}

std::map<Layer, std::size_t> Snapshot::counts() const {
    std::map<Layer, std::size_t> c;
    for (auto l : kLayers) c[l] = 0;
    for (const auto& f : features) ++c[f.layer];
    return c;
}

json feature_json(const Feature& f) {
    json props{{"propertyId", f.propertyId},
               {"layer", std::string(to_string(f.layer))},
               {"businessName", f.businessName},
               {"address", f.address},
               {"usageType", f.usageType},
               {"date", f.date ? json(format_date(*f.date)) : json(nullptr)}};
    if (f.probability) props["probability"] = *f.probability;
    if (f.riskScore) props["riskScore"] = *f.riskScore;
    if (f.riskCategory) props["riskCategory"] = std::string(risk::to_string(*f.riskCategory));
    return {{"type", "Feature"},
            {"geometry", {{"type", "Point"}, {"coordinates", {f.point.lon, f.point.lat}}}},
            {"properties", std::move(props)}};
}

json Snapshot::to_geojson() const {
    json feats = json::array();
    for (const auto& f : features) feats.push_back(feature_json(f));
    return {{"type", "FeatureCollection"},
            {"buildStamp", buildStamp},
            {"features", std::move(feats)},
            {"overlays", geo::polygons_to_geojson(overlays)}};
}

Snapshot Snapshot::from_geojson(const json& j) {
    Snapshot s;
    try {
        if (j.at("type") != "FeatureCollection") throw Error(Errc::BadSnapshot, "snapshot is not a FeatureCollection");
        s.buildStamp = j.at("buildStamp").get<std::string>();
        for (const auto& jf : j.at("features")) {
            Feature f;
            const auto& g = jf.at("geometry");
            if (g.at("type") != "Point") throw Error(Errc::BadSnapshot, "snapshot features must be points");
            f.point = {g.at("coordinates").at(1).get<double>(), g.at("coordinates").at(0).get<double>()};
            const auto& p = jf.at("properties");
            f.propertyId = p.at("propertyId").get<std::string>();
            auto layer = parse_layer(p.at("layer").get<std::string>());
            if (!layer) throw Error(Errc::BadSnapshot, "unknown layer " + p.at("layer").dump());
            f.layer = *layer;
            f.businessName = p.value("businessName", "");
            f.address = p.value("address", "");
            f.usageType = p.value("usageType", "");
            if (auto d = opt_field<std::string>(p, "date")) {
                f.date = parse_date(*d);
                if (!f.date) throw Error(Errc::BadSnapshot, "bad date " + *d);
            }
            f.probability = opt_field<double>(p, "probability");
            f.riskScore = opt_field<int>(p, "riskScore");
            if (auto c = opt_field<std::string>(p, "riskCategory")) f.riskCategory = risk::parse_category(*c);
            s.features.push_back(std::move(f));
        }
        if (j.contains("overlays")) s.overlays = geo::parse_polygons(j.at("overlays").dump());
    } catch (const json::exception& e) {
        throw Error(Errc::BadSnapshot, std::string("snapshot: ") + e.what());
    } catch (const geo::Error& e) {
        throw Error(Errc::BadSnapshot, std::string("snapshot overlays: ") + e.what());
    } catch (const risk::Error& e) {
        throw Error(Errc::BadSnapshot, std::string("snapshot: ") + e.what());
    }
    s.finalize();
    return s;
}

void Snapshot::save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error(Errc::Io, "cannot write " + tmp.string());
        out << to_geojson().dump() << '\n';
        if (!out) throw Error(Errc::Io, "write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Snapshot Snapshot::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::Io, "cannot open " + path.string());
    try {
        return from_geojson(json::parse(in));
    } catch (const json::parse_error& e) {
        throw Error(Errc::BadSnapshot, path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------

bool Query::matches(const Feature& f) const {
    if (layer && f.layer != *layer) return false;
    if (usageType && address::fold(f.usageType) != address::fold(*usageType)) return false;
    if ((dateFrom || dateTo) && !f.date) return false;
    if (dateFrom && *f.date < *dateFrom) return false;
    if (dateTo && *dateTo < *f.date) return false;
    if ((riskMin || riskMax) && !f.riskScore) return false;
    if (riskMin && *f.riskScore < *riskMin) return false;
    if (riskMax && *f.riskScore > *riskMax) return false;
    if (bbox && !bbox->contains(f.point)) return false;
    return true;
}

Query parse_query(const std::multimap<std::string, std::string>& params) {
    Query q;
    for (const auto& [key, value] : params) {
        if (params.count(key) > 1) throw Error(Errc::BadQuery, "parameter '" + key + "' given more than once");
        if (value.empty()) continue;
        if (key == "layer") {
            q.layer = parse_layer(value);
            if (!q.layer) throw Error(Errc::BadQuery, "unknown layer '" + value + "'");
        } else if (key == "usage") {
            q.usageType = value;
        } else if (key == "from") {
            q.dateFrom = parse_query_date(key, value);
        } else if (key == "to") {
            q.dateTo = parse_query_date(key, value);
        } else if (key == "risk_min") {
            q.riskMin = parse_risk(key, value);
        } else if (key == "risk_max") {
            q.riskMax = parse_risk(key, value);
        } else if (key == "bbox") {
            q.bbox = parse_bbox(value);
        }
    }
    if (q.dateFrom && q.dateTo && *q.dateTo < *q.dateFrom) throw Error(Errc::BadQuery, "from is after to");
    if (q.riskMin && q.riskMax && *q.riskMin > *q.riskMax) throw Error(Errc::BadQuery, "risk_min exceeds risk_max");
    return q;
}

std::vector<const Feature*> filter(const Snapshot& s, const Query& q) {
    std::vector<const Feature*> out;
    for (const auto& f : s.features)
        if (q.matches(f)) out.push_back(&f);
    return out;
}

json filter_properties(const Snapshot& s, const Query& q) {
    json feats = json::array();
    for (const auto* f : filter(s, q)) feats.push_back(feature_json(*f));
    return {{"type", "FeatureCollection"}, {"features", std::move(feats)}};
}

json overlays_geojson(const Snapshot& s, std::string_view kind) {
    auto k = geo::parse_overlay_kind(kind);
    if (!k) throw Error(Errc::UnknownOverlay, "unknown overlay kind '" + std::string(kind) + "'");
    std::vector<geo::Polygon> sel;
    for (const auto& p : s.overlays)
        if (p.kind == *k) sel.push_back(p);
    return geo::polygons_to_geojson(sel);
}

std::map<Layer, LayerStats> overlay_stats(const Snapshot& s, std::string_view kind, std::string_view overlayId,
                                          const Query& q) {
    const auto& poly = find_overlay(s, kind, overlayId);
    std::map<Layer, LayerStats> out;
    for (auto l : kLayers) out[l] = {};
    for (const auto* f : filter(s, q)) {
        auto& st = out[f->layer];
        ++st.total;
        if (geo::point_in_polygon(f->point, poly)) ++st.count;
    }
    for (auto& [l, st] : out)
        st.percentage = st.total == 0 ? 0.0 : 100.0 * static_cast<double>(st.count) / static_cast<double>(st.total);
    return out;
}

json overlay_stats_json(const Snapshot& s, std::string_view kind, std::string_view overlayId, const Query& q) {
    const auto& poly = find_overlay(s, kind, overlayId);
    json layers = json::object();
    for (const auto& [l, st] : overlay_stats(s, kind, overlayId, q))
        layers[std::string(to_string(l))] = {{"count", st.count}, {"total", st.total}, {"percentage", st.percentage}};
    return {{"overlay", {{"kind", std::string(geo::to_string(poly.kind))}, {"id", poly.id}, {"name", poly.name}}},
            {"layers", std::move(layers)}};
}

// ---------------------------------------------------------------------------

std::shared_ptr<const Snapshot> SnapshotStore::get() const {
    std::lock_guard lock(mutex_);
    return current_;
}

void SnapshotStore::publish(std::shared_ptr<const Snapshot> s) {
    std::lock_guard lock(mutex_);
    current_ = std::move(s);
}

void SnapshotStore::publish_file(const std::filesystem::path& path) {
    publish(std::make_shared<const Snapshot>(Snapshot::load(path)));
}

Response handle(const Snapshot& s, std::string_view path, const std::multimap<std::string, std::string>& params) {
    try {
        if (path == "/api/health") return {200, "application/json", json{{"status", "ok"}, {"buildStamp", s.buildStamp}}.dump()};
        if (path == "/api/meta") {
            json counts = json::object();
            for (const auto& [l, n] : s.counts()) counts[std::string(to_string(l))] = n;
            std::map<std::string, std::size_t> kinds;
            for (const auto& p : s.overlays) ++kinds[std::string(geo::to_string(p.kind))];
            return {200, "application/json",
                    json{{"buildStamp", s.buildStamp}, {"counts", counts}, {"total", s.features.size()}, {"overlays", kinds}}
                        .dump()};
        }
        if (path == "/api/properties") return {200, "application/geo+json", filter_properties(s, parse_query(params)).dump()};
        const std::string_view prefix = "/api/overlays/";
        if (path.substr(0, prefix.size()) == prefix) {
            auto parts = split(path.substr(prefix.size()), '/');
            if (parts.size() == 1 && !parts[0].empty()) return {200, "application/geo+json", overlays_geojson(s, parts[0]).dump()};
            if (parts.size() == 3 && parts[2] == "stats")
                return {200, "application/json", overlay_stats_json(s, parts[0], parts[1], parse_query(params)).dump()};
        }
        return {404, "application/json", error_body("no route for " + std::string(path)).dump()};
    } catch (const Error& e) {
        int status = e.code() == Errc::BadQuery ? 400 : e.code() == Errc::UnknownOverlay ? 404 : 500;
        return {status, "application/json", error_body(e.what()).dump()};
    }
}

// ---------------------------------------------------------------------------

struct Server::Impl {
    SnapshotStore& store;
    ServerOptions opts;
    httplib::Server svr;

    Impl(SnapshotStore& s, ServerOptions o) : store(s), opts(std::move(o)) {
        svr.Get(R"(/api/.*)", [this](const httplib::Request& req, httplib::Response& res) {
            auto snap = store.get();
            if (!snap) {
                res.status = 503;
                res.set_content(error_body("no snapshot loaded").dump(), "application/json");
                return;
            }
            auto r = handle(*snap, req.path, req.params);
            res.status = r.status;
            res.set_content(r.body, r.contentType);
        });
        if (!opts.staticDir.empty() && std::filesystem::exists(opts.staticDir / "index.html")) {
            svr.set_mount_point("/", opts.staticDir.string());
        } else {
            svr.Get("/", [](const httplib::Request&, httplib::Response& res) {
                res.set_content(kFallbackPage, "text/html; charset=utf-8");
            });
        }
    }
};

Server::Server(SnapshotStore& store, ServerOptions opts) : impl_(std::make_unique<Impl>(store, std::move(opts))) {}
Server::~Server() = default;

int Server::bind() {
    if (impl_->opts.port == 0) return impl_->svr.bind_to_any_port(impl_->opts.host);
    return impl_->svr.bind_to_port(impl_->opts.host, impl_->opts.port) ? impl_->opts.port : -1;
}

bool Server::listen_after_bind() { return impl_->svr.listen_after_bind(); }

void Server::stop() { impl_->svr.stop(); }

}  // namespace firerisk::service
