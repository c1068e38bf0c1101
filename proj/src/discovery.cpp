#include "firerisk/discovery.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "firerisk/address.hpp"
#include "firerisk/csv.hpp"

namespace firerisk::discovery {

using linkage::PropertyRecord;

namespace {

std::vector<UsageTypeStats> rank(const std::map<std::string, std::size_t>& counts) {
    std::vector<UsageTypeStats> out;
    for (const auto& [u, c] : counts) out.push_back({u, c, 0});
    std::stable_sort(out.begin(), out.end(),
                     [](const UsageTypeStats& a, const UsageTypeStats& b) { return a.inspectedCount > b.inspectedCount; });
    return out;
}

template <class Range>
std::vector<UsageTypeStats> count_usage(const Range& items) {
    std::map<std::string, std::size_t> counts;
    for (const auto& r : items)
        if (r.usageType) {
            auto u = address::fold(*r.usageType);
            if (!u.empty()) ++counts[u];
        }
    return rank(counts);
}

std::string folded_usage(const PropertyRecord& p) { return p.usageType ? address::fold(*p.usageType) : std::string(); }

}  // namespace

std::vector<UsageTypeStats> inspected_usage_types(std::span<const ingest::SourceRecord> permits) {
    return count_usage(permits);
}

std::vector<UsageTypeStats> inspected_usage_types(std::span<const PropertyRecord> inspections) {
    return count_usage(inspections);
}

std::set<std::string> default_criteria(std::span<const PropertyRecord> inspections, const DiscoveryConfig& cfg) {
    std::set<std::string> excluded;
    for (const auto& e : cfg.exclude) excluded.insert(address::fold(e));
    std::set<std::string> out;
    for (const auto& s : inspected_usage_types(inspections))
        if (!excluded.count(s.usageType)) out.insert(s.usageType);
    return out;
}

DiscoveryResult discover_properties(std::span<const PropertyRecord> cityWide,
                                    std::span<const PropertyRecord> currentInspections,
                                    const std::set<std::string>& criteria, const DiscoveryConfig& cfg) {
    std::set<std::string> crit, excluded;
    for (const auto& e : cfg.exclude) excluded.insert(address::fold(e));
    for (const auto& c : criteria) {
        auto f = address::fold(c);
        if (!excluded.count(f)) crit.insert(f);
    }

    auto inspected = inspected_usage_types(currentInspections);
    std::set<std::string> top;
    for (const auto& s : inspected) {
        if (top.size() >= cfg.topN) break;
        if (crit.count(s.usageType)) top.insert(s.usageType);
    }

    std::vector<PropertyRecord> candidates;
    for (const auto& p : cityWide)
        if (crit.count(folded_usage(p))) candidates.push_back(p);
    auto cv = linkage::views(candidates), iv = linkage::views(currentInspections);
    auto matches = linkage::best_matches(cv, iv, cfg.link);

    DiscoveryResult out;
    for (std::size_t i = 0; i < candidates.size(); ++i)
        if (!matches[i]) out.longList.push_back(candidates[i]);
    auto by_id = [](const PropertyRecord& a, const PropertyRecord& b) { return a.propertyId < b.propertyId; };
    std::sort(out.longList.begin(), out.longList.end(), by_id);
    for (const auto& p : out.longList)
        if (top.count(folded_usage(p))) out.shortList.push_back(p);

    std::map<std::string, std::size_t> inspectedCounts, cityCounts;
    for (const auto& s : inspected) inspectedCounts[s.usageType] = s.inspectedCount;
    for (const auto& p : cityWide) ++cityCounts[folded_usage(p)];
    std::map<std::string, std::size_t> critCounts;
    for (const auto& c : crit) critCounts[c] = inspectedCounts.count(c) ? inspectedCounts[c] : 0;
    out.stats = rank(critCounts);
    for (auto& s : out.stats) s.cityWideCount = cityCounts.count(s.usageType) ? cityCounts[s.usageType] : 0;
    return out;
}

std::string provenance_text(const PropertyRecord& p) {
    std::string s;
    for (const auto& [d, id] : p.provenance) {
        if (!s.empty()) s += ';';
        s += ingest::to_string(d);
        s += ':';
        s += id;
    }
    return s;
}

void write_list_csv(const std::filesystem::path& path, std::span<const PropertyRecord> list) {
    std::vector<csv::Row> rows{{"propertyId", "businessName", "address", "usageType", "lat", "lon", "provenance"}};
    for (const auto& p : list)
        rows.push_back({p.propertyId, p.businessName.value_or(""),
                        p.canonicalAddress ? address::format(*p.canonicalAddress) : "", p.usageType.value_or(""),
                        p.point ? format_double(p.point->lat) : "", p.point ? format_double(p.point->lon) : "",
                        provenance_text(p)});
    csv::write_file(path, rows);
}

nlohmann::json list_geojson(std::span<const PropertyRecord> list) {
    nlohmann::json features = nlohmann::json::array();
    for (const auto& p : list) {
        if (!p.point) continue;
        features.push_back(
            {{"type", "Feature"},
             {"id", p.propertyId},
             {"geometry", {{"type", "Point"}, {"coordinates", {p.point->lon, p.point->lat}}}},
             {"properties",
              {{"propertyId", p.propertyId},
               {"businessName", p.businessName ? nlohmann::json(*p.businessName) : nlohmann::json(nullptr)},
               {"address", p.canonicalAddress ? nlohmann::json(address::format(*p.canonicalAddress)) : nlohmann::json(nullptr)},
               {"usageType", p.usageType ? nlohmann::json(*p.usageType) : nlohmann::json(nullptr)},
               {"provenance", provenance_text(p)}}}});
    }
    return {{"type", "FeatureCollection"}, {"features", std::move(features)}};
}

void write_stats_csv(const std::filesystem::path& path, std::span<const UsageTypeStats> stats) {
    std::vector<csv::Row> rows{{"usageType", "inspectedCount", "cityWideCount"}};
    for (const auto& s : stats)
        rows.push_back({s.usageType, std::to_string(s.inspectedCount), std::to_string(s.cityWideCount)});
    csv::write_file(path, rows);
}

}  // namespace firerisk::discovery
