#pragma once

// Fixtures shared by the unit tests and the acceptance run.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "firerisk/discovery.hpp"
#include "firerisk/features.hpp"
#include "firerisk/service.hpp"

namespace fixtures {

using namespace firerisk;

inline ingest::SourceRecord business(ingest::Dataset d, std::string id, int number, std::string street, std::string usage, double lat,
                      double lon, std::string name) {
    ingest::SourceRecord r;
    r.dataset = d;
    r.sourceId = std::move(id);
    r.address = address::normalize_address(std::to_string(number) + " " + street);
    r.usageType = std::move(usage);
    r.point = geo::GeoPoint{lat, lon};
    r.businessName = std::move(name);
    return r;
}

struct Fixture {
    std::vector<linkage::PropertyRecord> cityWide;
    std::vector<linkage::PropertyRecord> inspections;
};

// 507 motor-vehicle-repair businesses, 186 of them holding a permit under a
// differently formatted address; 40 restaurants, 12 inspected; 9 catch-all
// service businesses, 3 inspected.
inline Fixture motor_vehicle_fixture() {
    std::vector<ingest::SourceRecord> licenses, permits;
    auto add = [&](const char* tag, const char* usage, const char* permitUsage, const char* street, int total,
                   int inspected, double lat0) {
        for (int i = 0; i < total; ++i) {
            double lat = lat0 + 0.002 * (i / 25), lon = -84.50 + 0.002 * (i % 25);
            std::string name = std::string(tag) + " SHOP " + std::to_string(i);
            licenses.push_back(business(ingest::Dataset::BusinessLicense, std::string("BL-") + tag + std::to_string(i), i + 1,
                                        std::string(street) + " Street", usage, lat, lon, name));
            if (i < inspected)
                permits.push_back(business(ingest::Dataset::FirePermits, std::string("FP-") + tag + std::to_string(i), i + 1,
                                           std::string(street) + " st", permitUsage,
                                           lat + 0.00005, lon, name));
        }
    };
    add("M", "MOTOR VEHICLE REPAIR", "motor vehicle repair", "Garage", 507, 186, 33.70);
    add("R", "Restaurant", "RESTAURANT", "Market", 40, 12, 33.80);
    add("S", "MISCELLANEOUS BUSINESS SERVICE", "Miscellaneous Business Service", "Office", 9, 3, 33.85);
    return {linkage::fuse_each(licenses), linkage::fuse_each(permits)};
}

inline service::Feature feat(std::string id, service::Layer layer, std::string usage, std::optional<std::string> date, std::optional<int> score,
             double lon) {
    service::Feature f;
    f.propertyId = std::move(id);
    f.layer = layer;
    f.usageType = std::move(usage);
    f.businessName = "Biz " + f.propertyId;
    f.address = "1 Main St";
    f.point = {33.75, lon};
    if (date) f.date = parse_date(*date);
    if (score) {
        f.riskScore = score;
        f.riskCategory = risk::categorize(*score);
        f.probability = *score / 10.0 - 0.05;
    }
    return f;
}

// Six features west of -84.40, four east.
inline service::Snapshot fixture() {
    service::Snapshot s;
    s.buildStamp = "test-stamp";
    s.features = {
        feat("F1", service::Layer::Fire, "RESTAURANT", "2014-03-01", {}, -84.45),
        feat("F2", service::Layer::Fire, "RESTAURANT", "2013-06-01", {}, -84.46),
        feat("F3", service::Layer::Fire, "OFFICE", "2014-05-01", {}, -84.35),
        feat("C1", service::Layer::CurrentInspection, "RESTAURANT", "2014-01-01", 7, -84.47),
        feat("C2", service::Layer::CurrentInspection, "Restaurant", "2015-02-01", 3, -84.34),
        feat("C3", service::Layer::CurrentInspection, "OFFICE", "2014-08-01", 9, -84.48),
        feat("P1", service::Layer::PotentialInspection, "RESTAURANT", {}, 6, -84.49),
        feat("P2", service::Layer::PotentialInspection, "RETAIL", {}, 2, -84.33),
        feat("P3", service::Layer::PotentialInspection, "RESTAURANT", "2013-12-31", 1, -84.44),
        feat("P4", service::Layer::PotentialInspection, "WAREHOUSE", {}, {}, -84.32),
    };
    s.overlays = {
        geo::rectangle("W", geo::OverlayKind::Npu, "West", {33.0, -85.0, 34.5, -84.41}),
        geo::rectangle("E", geo::OverlayKind::Npu, "East", {33.0, -84.39, 34.5, -84.0}),
        geo::rectangle("ALL", geo::OverlayKind::City, "City", {33.0, -85.0, 34.5, -84.0}),
    };
    s.finalize();
    return s;
}

inline const char* const kUsages[] = {"RESTAURANT", "OFFICE", "RETAIL", "WAREHOUSE"};

/// n random features in a 0.2 x 0.3 degree box plus four random NPU rectangles Q0..Q3.
inline service::Snapshot random_snapshot(Rng& rng, int n) {
    service::Snapshot s;
    s.buildStamp = "random";
    for (int i = 0; i < n; ++i) {
        auto layer = service::kLayers[rng.index(3)];
        std::optional<std::string> date;
        if (layer == service::Layer::Fire || rng.bernoulli(0.6))
            date = format_date(add_days(make_date(2012, 1, 1), static_cast<int>(rng.index(1500))));
        std::optional<int> score;
        if (layer != service::Layer::Fire || rng.bernoulli(0.2)) score = 1 + static_cast<int>(rng.index(10));
        auto f = feat("R" + std::to_string(i), layer, kUsages[rng.index(4)], date, score, -84.5 + 0.2 * rng.uniform());
        f.point.lat = 33.6 + 0.3 * rng.uniform();
        s.features.push_back(f);
    }
    for (int q = 0; q < 4; ++q) {
        double lon = -84.5 + 0.1 * rng.uniform(), lat = 33.6 + 0.15 * rng.uniform();
        s.overlays.push_back(geo::rectangle("Q" + std::to_string(q), geo::OverlayKind::Npu, "Random",
                                            {lat, lon, lat + 0.15, lon + 0.1}));
    }
    s.finalize();
    return s;
}

struct RandomQuery {
    std::multimap<std::string, std::string> params;
    std::optional<service::Layer> layer;
    std::optional<std::string> usage;
    std::optional<Date> from, to;
    std::optional<int> lo, hi;
    std::optional<geo::BoundingBox> box;

    bool empty_range() const { return from && to && *to < *from; }

    bool accepts(const service::Feature& f) const {
        if (layer && f.layer != *layer) return false;
        if (usage && f.usageType != *usage) return false;
        if ((from || to) && !f.date) return false;
        if (from && f.date < from) return false;
        if (to && f.date > to) return false;
        if ((lo || hi) && !f.riskScore) return false;
        if (lo && *f.riskScore < *lo) return false;
        if (hi && *f.riskScore > *hi) return false;
        if (box && !inside(*box, f.point)) return false;
        return true;
    }

    static bool inside(const geo::BoundingBox& b, const geo::GeoPoint& p) {
        return p.lat >= b.minLat && p.lat <= b.maxLat && p.lon >= b.minLon && p.lon <= b.maxLon;
    }
};

/// Each filter present with some probability; usage is sent lowercase.
inline RandomQuery random_query(Rng& rng) {
    RandomQuery q;
    auto& p = q.params;
    if (rng.bernoulli(0.4)) {
        q.layer = service::kLayers[rng.index(3)];
        p.emplace("layer", std::string(service::to_string(*q.layer)));
    }
    if (rng.bernoulli(0.4)) {
        q.usage = kUsages[rng.index(4)];
        std::string u = *q.usage;
        for (auto& c : u) c = static_cast<char>(c - 'A' + 'a');
        p.emplace("usage", u);
    }
    if (rng.bernoulli(0.4)) {
        q.from = add_days(make_date(2012, 1, 1), static_cast<int>(rng.index(800)));
        p.emplace("from", format_date(*q.from));
    }
    if (rng.bernoulli(0.4)) {
        q.to = add_days(make_date(2013, 6, 1), static_cast<int>(rng.index(800)));
        p.emplace("to", format_date(*q.to));
    }
    if (rng.bernoulli(0.4)) {
        q.lo = 1 + static_cast<int>(rng.index(5));
        p.emplace("risk_min", std::to_string(*q.lo));
    }
    if (rng.bernoulli(0.4)) {
        q.hi = 5 + static_cast<int>(rng.index(6));
        p.emplace("risk_max", std::to_string(*q.hi));
    }
    if (rng.bernoulli(0.3)) {
        double a = -84.5 + 0.1 * rng.uniform(), b = 33.6 + 0.15 * rng.uniform();
        q.box = geo::BoundingBox{b, a, b + 0.15, a + 0.1};
        p.emplace("bbox", format_double(a) + "," + format_double(b) + "," + format_double(a + 0.1) + "," +
                              format_double(b + 0.15));
    }
    return q;
}

struct Recount {
    std::set<std::string> ids;
    std::map<service::Layer, std::pair<std::size_t, std::size_t>> perLayer;  // (inside, total) for `region`
};

/// Brute-force filter and per-layer recount against an axis-aligned region.
inline Recount recount(const service::Snapshot& s, const RandomQuery& q, const geo::BoundingBox& region) {
    Recount r;
    for (auto l : service::kLayers) r.perLayer[l] = {0, 0};
    for (const auto& f : s.features) {
        if (!q.accepts(f)) continue;
        r.ids.insert(f.propertyId);
        auto& [in, total] = r.perLayer[f.layer];
        ++total;
        in += RandomQuery::inside(region, f.point);
    }
    return r;
}

}  // namespace fixtures
