#pragma once

#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "firerisk/ingest.hpp"
#include "firerisk/linkage.hpp"
#include "json.hpp"

namespace firerisk::discovery {

struct UsageTypeStats {
    std::string usageType;  // folded
    std::size_t inspectedCount = 0;
    std::size_t cityWideCount = 0;
};

struct DiscoveryConfig {
    std::size_t topN = 100;
    /// Usage types never treated as inspectable, e.g. vague catch-all categories.
    std::vector<std::string> exclude;
    linkage::LinkConfig link;
};

struct DiscoveryResult {
    std::vector<linkage::PropertyRecord> longList;
    std::vector<linkage::PropertyRecord> shortList;
    std::vector<UsageTypeStats> stats;  // one per criteria type, ranked like inspected_usage_types
};

/// Counts per folded usage type, most inspected first, ties alphabetical.
/// Records without a usage type are ignored.
std::vector<UsageTypeStats> inspected_usage_types(std::span<const ingest::SourceRecord> permits);
std::vector<UsageTypeStats> inspected_usage_types(std::span<const linkage::PropertyRecord> inspections);

/// Folded usage types of `inspections`, minus cfg.exclude.
std::set<std::string> default_criteria(std::span<const linkage::PropertyRecord> inspections,
                                       const DiscoveryConfig& cfg);

/// longList: city-wide properties with a criteria usage type that match no
/// current inspection. shortList: longList restricted to the cfg.topN most
/// inspected usage types. Both ordered by propertyId.
DiscoveryResult discover_properties(std::span<const linkage::PropertyRecord> cityWide,
                                    std::span<const linkage::PropertyRecord> currentInspections,
                                    const std::set<std::string>& criteria, const DiscoveryConfig& cfg = {});

/// propertyId,businessName,address,usageType,lat,lon,provenance
void write_list_csv(const std::filesystem::path& path, std::span<const linkage::PropertyRecord> list);
nlohmann::json list_geojson(std::span<const linkage::PropertyRecord> list);
void write_stats_csv(const std::filesystem::path& path, std::span<const UsageTypeStats> stats);

/// "DATASET:id;DATASET:id"
std::string provenance_text(const linkage::PropertyRecord& p);

}  // namespace firerisk::discovery
