#include "firerisk/linkage.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "firerisk/csv.hpp"
#include "json.hpp"

namespace firerisk::linkage {

using ingest::Dataset;
using ingest::SourceRecord;
using nlohmann::json;

void LinkConfig::validate() const {
    if (!(radiusMeters > 0.0) || !std::isfinite(radiusMeters))
        throw Error(Errc::InvalidConfig, "radiusMeters must be > 0");
    if (!(nameThreshold > 0.0 && nameThreshold <= 1.0))
        throw Error(Errc::InvalidConfig, "nameThreshold must be in (0, 1]");
    if (blockPrecision < 1 || blockPrecision > 12)
        throw Error(Errc::InvalidConfig, "blockPrecision must be in [1, 12]");
}

std::string_view to_string(Tier t) {
    switch (t) {
    case Tier::ParcelId: return "PARCEL_ID";
    case Tier::AddressExact: return "ADDRESS_EXACT";
    case Tier::GeoFuzzy: return "GEO_FUZZY";
    case Tier::NoMatch: return "NO_MATCH";
    }
    return "NO_MATCH";
}

Tier parse_tier(std::string_view s) {
    for (auto t : {Tier::ParcelId, Tier::AddressExact, Tier::GeoFuzzy, Tier::NoMatch})
        if (s == to_string(t)) return t;
    throw Error(Errc::UnknownTier, "unknown tier '" + std::string(s) + "'");
}

namespace {

template <class T>
const T* ptr(const std::optional<T>& o) {
    return o ? &*o : nullptr;
}

std::string address_key(const address::PostalAddress& a) { return a.streetNumber + "|" + a.streetName; }

bool same_street(const address::PostalAddress& a, const address::PostalAddress& b) {
    if (a.streetNumber != b.streetNumber || a.streetName != b.streetName || a.streetSuffix != b.streetSuffix)
        return false;
    return !(a.zip5 && b.zip5) || *a.zip5 == *b.zip5;
}

// Finest precision <= requested whose cells are at least `radius` on each side
// at the highest latitude present.
int effective_precision(std::span<const Linkable> left, std::span<const Linkable> right, const LinkConfig& cfg) {
    double maxLat = 0.0;
    for (auto side : {left, right})
        for (const auto& v : side)
            if (v.point) maxLat = std::max(maxLat, std::abs(v.point->lat));
    const double degMeters = geo::kEarthRadiusMeters * 3.14159265358979323846 / 180.0;
    double coslat = std::cos(std::min(maxLat, 89.0) * 3.14159265358979323846 / 180.0);
    for (int p = cfg.blockPrecision; p > 1; --p) {
        int bits = 5 * p;
        int lonBits = (bits + 1) / 2, latBits = bits / 2;
        double h = 180.0 / std::ldexp(1.0, latBits) * degMeters;
        double w = 360.0 / std::ldexp(1.0, lonBits) * degMeters * coslat;
        if (std::min(h, w) >= cfg.radiusMeters) return p;
    }
    return 1;
}

struct Ranked {
    LinkDecision decision;
    std::size_t left;
    std::size_t right;
};

std::vector<Ranked> ranked_matches(std::span<const Linkable> left, std::span<const Linkable> right,
                                   const LinkConfig& cfg, bool parallel) {
    auto pairs = block_candidates(left, right, cfg);
    auto scored = parallel ? score_candidates(left, right, pairs, cfg) : score_candidates_serial(left, right, pairs, cfg);
    std::vector<Ranked> out;
    for (std::size_t i = 0; i < pairs.size(); ++i)
        if (scored[i].tier != Tier::NoMatch) out.push_back({std::move(scored[i]), pairs[i].first, pairs[i].second});
    std::sort(out.begin(), out.end(), [](const Ranked& a, const Ranked& b) { return ranks_before(a.decision, b.decision); });
    return out;
}

std::vector<LinkDecision> greedy(std::vector<Ranked> ranked, std::size_t nLeft, std::size_t nRight) {
    std::vector<char> usedL(nLeft, 0), usedR(nRight, 0);
    std::vector<LinkDecision> out;
    for (auto& r : ranked) {
        if (usedL[r.left] || usedR[r.right]) continue;
        usedL[r.left] = usedR[r.right] = 1;
        out.push_back(std::move(r.decision));
    }
    return out;
}

int precedence(Dataset d, std::initializer_list<Dataset> order) {
    int i = 0;
    for (auto o : order) {
        if (o == d) return i;
        ++i;
    }
    return 100 + static_cast<int>(d);
}

// First record in precedence order satisfying `has`; ties keep cluster order.
template <class Pred>
const SourceRecord* pick(std::span<const SourceRecord> recs, std::initializer_list<Dataset> order, Pred has) {
    const SourceRecord* best = nullptr;
    int bestRank = std::numeric_limits<int>::max();
    for (const auto& r : recs) {
        if (!has(r)) continue;
        int rank = precedence(r.dataset, order);
        if (rank < bestRank) {
            best = &r;
            bestRank = rank;
        }
    }
    return best;
}

json opt_json(const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); }

std::optional<std::string> opt_string(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<std::string>();
}

json address_json(const address::PostalAddress& a) {
    return {{"raw", a.raw},
            {"streetNumber", a.streetNumber},
            {"preDirectional", opt_json(a.preDirectional)},
            {"streetName", a.streetName},
            {"streetSuffix", opt_json(a.streetSuffix)},
            {"postDirectional", opt_json(a.postDirectional)},
            {"unit", opt_json(a.unit)},
            {"city", opt_json(a.city)},
            {"state", opt_json(a.state)},
            {"zip5", opt_json(a.zip5)}};
}

address::PostalAddress address_from_json(const json& j) {
    address::PostalAddress a;
    a.raw = j.at("raw").get<std::string>();
    a.streetNumber = j.at("streetNumber").get<std::string>();
    a.preDirectional = opt_string(j, "preDirectional");
    a.streetName = j.at("streetName").get<std::string>();
    a.streetSuffix = opt_string(j, "streetSuffix");
    a.postDirectional = opt_string(j, "postDirectional");
    a.unit = opt_string(j, "unit");
    a.city = opt_string(j, "city");
    a.state = opt_string(j, "state");
    a.zip5 = opt_string(j, "zip5");
    return a;
}

}  // namespace

Linkable view(const SourceRecord& r) {
    return {r.sourceId, ptr(r.parcelId), ptr(r.address), ptr(r.point), ptr(r.businessName)};
}

Linkable view(const PropertyRecord& p) {
    return {p.propertyId, ptr(p.parcelId), ptr(p.canonicalAddress), ptr(p.point), ptr(p.businessName)};
}

std::vector<Linkable> views(std::span<const SourceRecord> records) {
    std::vector<Linkable> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(view(r));
    return out;
}

std::vector<Linkable> views(std::span<const PropertyRecord> properties) {
    std::vector<Linkable> out;
    out.reserve(properties.size());
    for (const auto& p : properties) out.push_back(view(p));
    return out;
}

std::vector<CandidatePair> block_candidates(std::span<const Linkable> left, std::span<const Linkable> right,
                                            const LinkConfig& cfg) {
    cfg.validate();
    const int precision = effective_precision(left, right, cfg);
    std::unordered_map<std::string, std::vector<std::size_t>> byCell, byZip, byParcel, byStreet;
    for (std::size_t j = 0; j < right.size(); ++j) {
        const auto& r = right[j];
        if (r.point) byCell[geo::geohash(*r.point, precision)].push_back(j);
        if (r.address && r.address->zip5) byZip[*r.address->zip5].push_back(j);
        if (r.parcelId && !r.parcelId->empty()) byParcel[*r.parcelId].push_back(j);
        if (r.address) byStreet[address_key(*r.address)].push_back(j);
    }
    auto add = [](const auto& index, const std::string& key, std::vector<std::size_t>& into) {
        auto it = index.find(key);
        if (it != index.end()) into.insert(into.end(), it->second.begin(), it->second.end());
    };

    std::vector<CandidatePair> out;
    std::vector<std::size_t> hits;
    for (std::size_t i = 0; i < left.size(); ++i) {
        const auto& l = left[i];
        hits.clear();
        if (l.point)
            for (const auto& cell : geo::geohash_with_neighbors(*l.point, precision)) add(byCell, cell, hits);
        if (l.address && l.address->zip5) add(byZip, *l.address->zip5, hits);
        if (l.parcelId && !l.parcelId->empty()) add(byParcel, *l.parcelId, hits);
        if (l.address) add(byStreet, address_key(*l.address), hits);
        std::sort(hits.begin(), hits.end());
        hits.erase(std::unique(hits.begin(), hits.end()), hits.end());
        for (auto j : hits) out.emplace_back(i, j);
    }
    return out;
}

LinkDecision match_pair(const Linkable& a, const Linkable& b, const LinkConfig& cfg) {
    LinkDecision d;
    d.leftId = std::string(a.id);
    d.rightId = std::string(b.id);
    if (a.name && b.name) d.similarity = address::name_similarity(*a.name, *b.name);
    if (a.point && b.point) d.distanceMeters = geo::haversine_m(*a.point, *b.point);

    if (a.parcelId && b.parcelId && !a.parcelId->empty() && *a.parcelId == *b.parcelId)
        d.tier = Tier::ParcelId;
    else if (a.address && b.address && same_street(*a.address, *b.address))
        d.tier = Tier::AddressExact;
    else if (d.distanceMeters && *d.distanceMeters <= cfg.radiusMeters &&
             (!cfg.requireNameWithGeo || (d.similarity && *d.similarity >= cfg.nameThreshold)))
        d.tier = Tier::GeoFuzzy;
    return d;
}

LinkDecision match_pair(const SourceRecord& a, const SourceRecord& b, const LinkConfig& cfg) {
    return match_pair(view(a), view(b), cfg);
}

std::vector<LinkDecision> score_candidates(std::span<const Linkable> left, std::span<const Linkable> right,
                                           std::span<const CandidatePair> pairs, const LinkConfig& cfg) {
    std::vector<LinkDecision> out(pairs.size());
    const auto n = static_cast<std::ptrdiff_t>(pairs.size());
#pragma omp parallel for schedule(dynamic, 256)
    for (std::ptrdiff_t k = 0; k < n; ++k) {
        const auto& [i, j] = pairs[static_cast<std::size_t>(k)];
        out[static_cast<std::size_t>(k)] = match_pair(left[i], right[j], cfg);
    }
    return out;
}

std::vector<LinkDecision> score_candidates_serial(std::span<const Linkable> left, std::span<const Linkable> right,
                                                  std::span<const CandidatePair> pairs, const LinkConfig& cfg) {
    std::vector<LinkDecision> out;
    out.reserve(pairs.size());
    for (const auto& [i, j] : pairs) out.push_back(match_pair(left[i], right[j], cfg));
    return out;
}

bool ranks_before(const LinkDecision& a, const LinkDecision& b) {
    if (a.tier != b.tier) return a.tier < b.tier;
    double sa = a.similarity.value_or(-1.0), sb = b.similarity.value_or(-1.0);
    if (sa != sb) return sa > sb;
    constexpr double inf = std::numeric_limits<double>::infinity();
    double da = a.distanceMeters.value_or(inf), db = b.distanceMeters.value_or(inf);
    if (da != db) return da < db;
    if (a.leftId != b.leftId) return a.leftId < b.leftId;
    return a.rightId < b.rightId;
}

std::vector<LinkDecision> link_datasets(std::span<const Linkable> left, std::span<const Linkable> right,
                                        const LinkConfig& cfg) {
    return greedy(ranked_matches(left, right, cfg, true), left.size(), right.size());
}

std::vector<LinkDecision> link_datasets_serial(std::span<const Linkable> left, std::span<const Linkable> right,
                                               const LinkConfig& cfg) {
    return greedy(ranked_matches(left, right, cfg, false), left.size(), right.size());
}

std::vector<LinkDecision> link_datasets(std::span<const SourceRecord> left, std::span<const SourceRecord> right,
                                        const LinkConfig& cfg) {
    auto l = views(left), r = views(right);
    return link_datasets(l, r, cfg);
}

std::vector<std::optional<std::size_t>> best_matches(std::span<const Linkable> left,
                                                     std::span<const Linkable> right, const LinkConfig& cfg) {
    std::vector<std::optional<std::size_t>> out(left.size());
    // Ranked globally, so the first hit per left item is its best.
    for (const auto& r : ranked_matches(left, right, cfg, true))
        if (!out[r.left]) out[r.left] = r.right;
    return out;
}

std::string property_id(std::span<const std::pair<Dataset, std::string>> provenance) {
    std::string text;
    for (const auto& [d, id] : provenance) {
        text += ingest::to_string(d);
        text += ':';
        text += id;
        text += '\n';
    }
    return "P" + hex64(fnv1a64(text)).substr(0, 12);
}

PropertyRecord fuse(std::span<const SourceRecord> cluster) {
    if (cluster.empty()) throw Error(Errc::UnknownRecord, "cannot fuse an empty cluster");
    std::vector<SourceRecord> recs(cluster.begin(), cluster.end());
    std::sort(recs.begin(), recs.end(), [](const SourceRecord& a, const SourceRecord& b) {
        return std::tie(a.dataset, a.sourceId) < std::tie(b.dataset, b.sourceId);
    });

    PropertyRecord p;
    for (const auto& r : recs) p.provenance.emplace_back(r.dataset, r.sourceId);
    if (std::adjacent_find(p.provenance.begin(), p.provenance.end()) != p.provenance.end())
        throw Error(Errc::UnknownRecord, "duplicate record in cluster");
    p.propertyId = property_id(p.provenance);

    using D = Dataset;
    if (auto r = pick(recs, {D::Parcel, D::Costar}, [](const SourceRecord& s) { return s.parcelId.has_value(); }))
        p.parcelId = r->parcelId;
    const SourceRecord* addrSrc =
        pick(recs, {D::Parcel, D::BusinessLicense, D::Costar}, [](const SourceRecord& s) { return s.address.has_value(); });
    if (addrSrc) p.canonicalAddress = addrSrc->address;
    auto srcPoint = pick(recs, {D::Parcel, D::BusinessLicense, D::Costar},
                         [](const SourceRecord& s) { return s.point && !s.pointGeocoded; });
    if (!srcPoint)
        srcPoint = pick(recs, {D::Parcel, D::BusinessLicense, D::Costar}, [](const SourceRecord& s) { return s.point.has_value(); });
    if (srcPoint) {
        p.point = srcPoint->point;
        p.pointGeocoded = srcPoint->pointGeocoded;
    }
    if (auto r = pick(recs, {D::BusinessLicense, D::Costar, D::Parcel, D::FirePermits},
                      [](const SourceRecord& s) { return s.businessName.has_value(); }))
        p.businessName = r->businessName;
    if (auto r = pick(recs, {D::BusinessLicense, D::FirePermits, D::Costar},
                      [](const SourceRecord& s) { return s.usageType.has_value(); }))
        p.usageType = r->usageType;

    std::map<Dataset, int> seen;
    for (const auto& r : recs) {
        std::string prefix = ingest::attribute_prefix(r.dataset);
        if (seen[r.dataset]++ > 0) prefix += ":" + r.sourceId;
        for (const auto& [k, v] : r.attributes) p.attributes[prefix + "." + k] = v;
        if (r.address && &r != addrSrc && !r.address->same_place(*p.canonicalAddress))
            p.attributes[prefix + ".address"] = address::format(*r.address);
    }
    return p;
}

std::vector<PropertyRecord> fuse_each(std::span<const SourceRecord> records) {
    std::vector<PropertyRecord> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(fuse(std::span(&r, 1)));
    return out;
}

std::vector<std::vector<SourceRecord>> cluster(std::span<const SourceRecord> records,
                                               std::span<const DatasetLink> links) {
    std::map<std::pair<Dataset, std::string_view>, std::size_t> index;
    for (std::size_t i = 0; i < records.size(); ++i)
        if (!index.emplace(std::pair{records[i].dataset, std::string_view(records[i].sourceId)}, i).second)
            throw Error(Errc::UnknownRecord, "duplicate record " + records[i].sourceId);

    std::vector<std::size_t> parent(records.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    auto lookup = [&](Dataset d, const std::string& id) {
        auto it = index.find({d, id});
        if (it == index.end())
            throw Error(Errc::UnknownRecord, "link refers to unknown record " + std::string(ingest::to_string(d)) + ":" + id);
        return it->second;
    };
    for (const auto& l : links) {
        if (l.decision.tier == Tier::NoMatch) continue;
        auto a = find(lookup(l.leftDataset, l.decision.leftId));
        auto b = find(lookup(l.rightDataset, l.decision.rightId));
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }

    std::map<std::size_t, std::vector<SourceRecord>> groups;
    for (std::size_t i = 0; i < records.size(); ++i) groups[find(i)].push_back(records[i]);
    std::vector<std::vector<SourceRecord>> out;
    out.reserve(groups.size());
    for (auto& [root, g] : groups) {
        std::sort(g.begin(), g.end(), [](const SourceRecord& a, const SourceRecord& b) {
            return std::tie(a.dataset, a.sourceId) < std::tie(b.dataset, b.sourceId);
        });
        out.push_back(std::move(g));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return std::tie(a[0].dataset, a[0].sourceId) < std::tie(b[0].dataset, b[0].sourceId);
    });
    return out;
}

std::vector<PropertyRecord> fuse_all(std::span<const SourceRecord> records, std::span<const DatasetLink> links) {
    std::vector<PropertyRecord> out;
    for (const auto& c : cluster(records, links)) out.push_back(fuse(c));
    std::sort(out.begin(), out.end(),
              [](const PropertyRecord& a, const PropertyRecord& b) { return a.propertyId < b.propertyId; });
    return out;
}

void write_links(const std::filesystem::path& path, std::span<const DatasetLink> links) {
    std::vector<csv::Row> rows{
        {"leftDataset", "leftId", "rightDataset", "rightId", "tier", "similarity", "distanceMeters"}};
    for (const auto& l : links) {
        const auto& d = l.decision;
        rows.push_back({std::string(ingest::to_string(l.leftDataset)), d.leftId,
                        std::string(ingest::to_string(l.rightDataset)), d.rightId, std::string(to_string(d.tier)),
                        d.similarity ? format_double(*d.similarity) : "",
                        d.distanceMeters ? format_double(*d.distanceMeters) : ""});
    }
    try {
        csv::write_file(path, rows);
    } catch (const csv::Error& e) {
        throw Error(Errc::Io, e.what());
    }
}

std::vector<DatasetLink> read_links(const std::filesystem::path& path) {
    std::vector<csv::Row> rows;
    try {
        rows = csv::read_file(path);
    } catch (const csv::Error& e) {
        throw Error(Errc::Io, e.what());
    }
    if (rows.empty() || rows[0].size() != 7 || rows[0][0] != "leftDataset")
        throw Error(Errc::BadFormat, path.string() + ": not a links file");
    std::vector<DatasetLink> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() == 1 && r[0].empty()) continue;
        if (r.size() != 7) throw Error(Errc::BadFormat, path.string() + ": wrong field count on row " + std::to_string(i + 1));
        auto ld = ingest::parse_dataset(r[0]), rd = ingest::parse_dataset(r[2]);
        if (!ld || !rd) throw Error(Errc::BadFormat, path.string() + ": unknown dataset on row " + std::to_string(i + 1));
        DatasetLink l{*ld, *rd, {r[1], r[3], parse_tier(r[4]), std::nullopt, std::nullopt}};
        if (!r[5].empty()) l.decision.similarity = parse_double(r[5]);
        if (!r[6].empty()) l.decision.distanceMeters = parse_double(r[6]);
        out.push_back(std::move(l));
    }
    return out;
}

void write_properties(const std::filesystem::path& path, std::span<const PropertyRecord> props) {
    json arr = json::array();
    for (const auto& p : props) {
        json attrs = json::object();
        for (const auto& [k, v] : p.attributes) {
            if (auto d = std::get_if<double>(&v)) attrs[k] = *d;
            else attrs[k] = std::get<std::string>(v);
        }
        json prov = json::array();
        for (const auto& [d, id] : p.provenance) prov.push_back({std::string(ingest::to_string(d)), id});
        arr.push_back({{"propertyId", p.propertyId},
                       {"parcelId", opt_json(p.parcelId)},
                       {"address", p.canonicalAddress ? address_json(*p.canonicalAddress) : json(nullptr)},
                       {"point", p.point ? json{p.point->lat, p.point->lon} : json(nullptr)},
                       {"pointGeocoded", p.pointGeocoded},
                       {"businessName", opt_json(p.businessName)},
                       {"usageType", opt_json(p.usageType)},
                       {"attributes", std::move(attrs)},
                       {"provenance", std::move(prov)}});
    }
    json doc = {{"version", 1}, {"properties", std::move(arr)}};
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::Io, "cannot write " + path.string());
    out << doc.dump(1) << '\n';
    if (!out) throw Error(Errc::Io, "write failed: " + path.string());
}

std::vector<PropertyRecord> read_properties(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::Io, "cannot open " + path.string());
    std::vector<PropertyRecord> out;
    try {
        json doc = json::parse(in);
        if (doc.at("version").get<int>() != 1) throw Error(Errc::BadFormat, path.string() + ": unsupported version");
        for (const auto& j : doc.at("properties")) {
            PropertyRecord p;
            p.propertyId = j.at("propertyId").get<std::string>();
            p.parcelId = opt_string(j, "parcelId");
            if (!j.at("address").is_null()) p.canonicalAddress = address_from_json(j["address"]);
            if (!j.at("point").is_null()) p.point = geo::GeoPoint{j["point"][0].get<double>(), j["point"][1].get<double>()};
            p.pointGeocoded = j.at("pointGeocoded").get<bool>();
            p.businessName = opt_string(j, "businessName");
            p.usageType = opt_string(j, "usageType");
            for (const auto& [k, v] : j.at("attributes").items()) {
                if (v.is_number()) p.attributes[k] = v.get<double>();
                else p.attributes[k] = v.get<std::string>();
            }
            for (const auto& e : j.at("provenance")) {
                auto d = ingest::parse_dataset(e.at(0).get<std::string>());
                if (!d) throw Error(Errc::BadFormat, path.string() + ": unknown dataset in provenance");
                p.provenance.emplace_back(*d, e.at(1).get<std::string>());
            }
            out.push_back(std::move(p));
        }
    } catch (const json::exception& e) {
        throw Error(Errc::BadFormat, path.string() + ": " + e.what());
    }
    return out;
}

}  // namespace firerisk::linkage
