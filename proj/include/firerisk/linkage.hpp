#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "firerisk/address.hpp"
#include "firerisk/common.hpp"
#include "firerisk/geo.hpp"
#include "firerisk/ingest.hpp"

namespace firerisk::linkage {

enum class Errc { InvalidConfig, Io, UnknownTier, UnknownRecord, BadFormat };
using Error = CodedError<Errc>;

struct LinkConfig {
    double radiusMeters = 50.0;
    double nameThreshold = 0.85;
    int blockPrecision = 6;
    bool requireNameWithGeo = true;

    void validate() const;
};

/// Evidence tiers, strongest first.
enum class Tier { ParcelId, AddressExact, GeoFuzzy, NoMatch };

std::string_view to_string(Tier t);
Tier parse_tier(std::string_view s);

struct LinkDecision {
    std::string leftId;
    std::string rightId;
    Tier tier = Tier::NoMatch;
    std::optional<double> similarity;      // present when both sides carry a name
    std::optional<double> distanceMeters;  // present when both sides carry a point
};

/// Fused view of one property built from linked source records.
struct PropertyRecord {
    std::string propertyId;
    std::optional<address::PostalAddress> canonicalAddress;
    std::optional<geo::GeoPoint> point;
    bool pointGeocoded = false;
    std::optional<std::string> parcelId;
    std::optional<std::string> businessName;
    std::optional<std::string> usageType;
    ingest::Attributes attributes;
    std::vector<std::pair<ingest::Dataset, std::string>> provenance;  // sorted
};

/// Borrowed matching fields of a SourceRecord or PropertyRecord. Null means absent.
struct Linkable {
    std::string_view id;
    const std::string* parcelId = nullptr;
    const address::PostalAddress* address = nullptr;
    const geo::GeoPoint* point = nullptr;
    const std::string* name = nullptr;
};

Linkable view(const ingest::SourceRecord& r);
Linkable view(const PropertyRecord& p);
std::vector<Linkable> views(std::span<const ingest::SourceRecord> records);
std::vector<Linkable> views(std::span<const PropertyRecord> properties);

/// (leftIndex, rightIndex), sorted and unique.
using CandidatePair = std::pair<std::size_t, std::size_t>;

/// Union of: shared or adjacent geohash cell, shared zip5, shared parcel id,
/// shared (street number, street name). The cell precision is lowered when a
/// cell would be narrower than the match radius.
std::vector<CandidatePair> block_candidates(std::span<const Linkable> left, std::span<const Linkable> right,
                                            const LinkConfig& cfg);

LinkDecision match_pair(const Linkable& a, const Linkable& b, const LinkConfig& cfg);
LinkDecision match_pair(const ingest::SourceRecord& a, const ingest::SourceRecord& b, const LinkConfig& cfg);

/// match_pair over every candidate, in candidate order. The parallel and
/// serial versions return identical results.
std::vector<LinkDecision> score_candidates(std::span<const Linkable> left, std::span<const Linkable> right,
                                           std::span<const CandidatePair> pairs, const LinkConfig& cfg);
std::vector<LinkDecision> score_candidates_serial(std::span<const Linkable> left, std::span<const Linkable> right,
                                                  std::span<const CandidatePair> pairs, const LinkConfig& cfg);

/// Strict total order: tier, similarity desc, distance asc, (leftId, rightId).
bool ranks_before(const LinkDecision& a, const LinkDecision& b);

/// One-to-one links chosen greedily over the globally ranked decisions.
std::vector<LinkDecision> link_datasets(std::span<const Linkable> left, std::span<const Linkable> right,
                                        const LinkConfig& cfg);
std::vector<LinkDecision> link_datasets(std::span<const ingest::SourceRecord> left,
                                        std::span<const ingest::SourceRecord> right, const LinkConfig& cfg);
std::vector<LinkDecision> link_datasets_serial(std::span<const Linkable> left, std::span<const Linkable> right,
                                               const LinkConfig& cfg);

/// Many-to-one: for each left item, the best-ranked right index, if any tier fires.
std::vector<std::optional<std::size_t>> best_matches(std::span<const Linkable> left,
                                                     std::span<const Linkable> right, const LinkConfig& cfg);

/// A link between two datasets.
struct DatasetLink {
    ingest::Dataset leftDataset;
    ingest::Dataset rightDataset;
    LinkDecision decision;
};

/// Fuses one transitively linked cluster. Precedence by dataset:
/// parcel id PARCEL > COSTAR; address and point PARCEL > BUSINESS_LICENSE > COSTAR;
/// source coordinates win over geocoded ones. Attributes are prefixed by dataset.
PropertyRecord fuse(std::span<const ingest::SourceRecord> cluster);

/// One PropertyRecord per source record.
std::vector<PropertyRecord> fuse_each(std::span<const ingest::SourceRecord> records);

/// Stable digest of the sorted provenance list.
std::string property_id(std::span<const std::pair<ingest::Dataset, std::string>> provenance);

/// Connected components of `records` under `links` (union-find); each cluster is
/// sorted by (dataset, sourceId), clusters ordered by their first member.
std::vector<std::vector<ingest::SourceRecord>> cluster(std::span<const ingest::SourceRecord> records,
                                                       std::span<const DatasetLink> links);

/// cluster + fuse; output sorted by propertyId.
std::vector<PropertyRecord> fuse_all(std::span<const ingest::SourceRecord> records,
                                     std::span<const DatasetLink> links);

/// leftDataset,leftId,rightDataset,rightId,tier,similarity,distanceMeters
void write_links(const std::filesystem::path& path, std::span<const DatasetLink> links);
std::vector<DatasetLink> read_links(const std::filesystem::path& path);

/// Versioned JSON document holding every field of each property.
void write_properties(const std::filesystem::path& path, std::span<const PropertyRecord> props);
std::vector<PropertyRecord> read_properties(const std::filesystem::path& path);

}  // namespace firerisk::linkage
