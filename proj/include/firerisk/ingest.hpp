#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "firerisk/address.hpp"
#include "firerisk/common.hpp"
#include "firerisk/geo.hpp"

namespace firerisk::ingest {

enum class Errc { SchemaMismatch, Io, UnknownDataset };
using Error = CodedError<Errc>;

enum class Dataset {
    FireIncidents,
    FirePermits,
    Parcel,
    Sci,
    BusinessLicense,
    Crime,
    LiquorLicense,
    Costar,
    Places,
    Demographic,
    Socioeconomic,
    Co,
};

inline constexpr std::size_t kDatasetCount = 12;

std::string_view to_string(Dataset d);
std::optional<Dataset> parse_dataset(std::string_view s);
/// File name used for the dataset inside a data directory, e.g. "fire_incidents.csv".
std::string file_name(Dataset d);
/// Lowercase prefix used for fused attribute keys, e.g. "costar".
std::string attribute_prefix(Dataset d);

using AttrValue = std::variant<double, std::string>;
using Attributes = std::map<std::string, AttrValue, std::less<>>;

/// One row of one source dataset.
struct SourceRecord {
    std::string sourceId;
    Dataset dataset = Dataset::Parcel;
    std::optional<std::string> parcelId;
    std::optional<address::PostalAddress> address;
    /// Raw address text that could not be parsed (no street number); such
    /// records can only be matched by coordinates.
    std::optional<std::string> unparsedAddress;
    std::optional<geo::GeoPoint> point;
    /// True when `point` was filled by a geocoder rather than the source.
    bool pointGeocoded = false;
    std::optional<std::string> businessName;
    std::optional<std::string> usageType;
    std::optional<Date> eventDate;
    Attributes attributes;

    bool has_location() const { return parcelId || address || point; }
};

bool same_fields(const SourceRecord& a, const SourceRecord& b);

// ---------------------------------------------------------------------------
// Schemas

enum class Role {
    SourceId,
    ParcelId,
    Address,
    Lat,
    Lon,
    BusinessName,
    UsageType,
    EventDate,
    PointSource,  // "source" | "geocoded"
    NumericAttr,
    TextAttr,
};

struct ColumnSpec {
    std::string name;
    Role role;
};

struct DatasetSchema {
    Dataset dataset;
    std::vector<ColumnSpec> columns;

    std::vector<std::string> header() const;
};

/// Column layout for raw source files.
DatasetSchema default_schema(Dataset d);
/// Raw layout plus a point_source column, used for pipeline intermediates.
DatasetSchema ingested_schema(Dataset d);

// ---------------------------------------------------------------------------
// Reading and writing

enum class RejectReason {
    NoLocation,
    BadCoordinate,
    MissingEventDate,
    BadDate,
    BadNumber,
    MissingId,
    DuplicateId,
    WrongFieldCount,
};

std::string_view to_string(RejectReason r);

struct Reject {
    std::size_t line = 0;  // 1-based physical row, header is row 1
    std::string sourceId;
    RejectReason reason;
    std::string detail;
};

struct ReadResult {
    std::vector<SourceRecord> records;
    std::vector<Reject> rejects;
};

ReadResult read_dataset(const std::filesystem::path& path, const DatasetSchema& schema,
                        const address::NormalizationConfig& cfg = address::NormalizationConfig::builtin());
/// Parses already-loaded CSV text; `origin` is used in error messages.
ReadResult parse_dataset(std::string_view text, const DatasetSchema& schema, std::string_view origin,
                         const address::NormalizationConfig& cfg = address::NormalizationConfig::builtin());

void write_dataset(const std::filesystem::path& path, std::span<const SourceRecord> records,
                   const DatasetSchema& schema);
void write_rejects(const std::filesystem::path& path, Dataset d, std::span<const Reject> rejects);

// ---------------------------------------------------------------------------
// Geocoding

struct GeocodeResult {
    std::string query;
    geo::GeoPoint point;
    double confidence = 1.0;
};

enum class GeocodeErrc { NotFound, RateLimited, Transport };

class GeocodeError : public CodedError<GeocodeErrc> {
public:
    GeocodeError(GeocodeErrc code, const std::string& what, std::chrono::seconds retryAfter = {})
        : CodedError(code, what), retryAfter_(retryAfter) {}
    std::chrono::seconds retry_after() const { return retryAfter_; }

private:
    std::chrono::seconds retryAfter_;
};

class GeocoderClient {
public:
    virtual ~GeocoderClient() = default;
    virtual GeocodeResult geocode(const address::PostalAddress& addr) = 0;
};

/// Offline geocoder: hashes the canonical address text into a bounding box.
/// Same address, same point; confidence is always 1.
class StubGeocoder final : public GeocoderClient {
public:
    explicit StubGeocoder(geo::BoundingBox box) : box_(box) {}
    GeocodeResult geocode(const address::PostalAddress& addr) override;

private:
    geo::BoundingBox box_;
};

/// HTTP geocoder: GET <url>?address=<text>, expecting
/// {"lat": .., "lon": .., "confidence": ..}. 404 maps to NotFound, 429 to
/// RateLimited (Retry-After honored by the caller). Requests are serialized.
class HttpGeocoder final : public GeocoderClient {
public:
    explicit HttpGeocoder(std::string url);
    GeocodeResult geocode(const address::PostalAddress& addr) override;

private:
    std::string scheme_host_;
    std::string path_;
    std::mutex mutex_;
};

/// HttpGeocoder when GEOCODER_URL is set, otherwise the stub over `box`.
std::unique_ptr<GeocoderClient> make_geocoder(const geo::BoundingBox& box);

GeocodeResult geocode(const address::PostalAddress& addr, GeocoderClient& client);

struct GeocodeSummary {
    std::size_t geocoded = 0;
    std::size_t notFound = 0;
};

/// Fills missing points from addresses. Source coordinates are never replaced.
GeocodeSummary geocode_missing(std::vector<SourceRecord>& records, GeocoderClient& client);

struct CityFilterResult {
    std::vector<SourceRecord> kept;
    std::vector<SourceRecord> removed;
};

/// Drops records whose point lies outside `city`. Records without a point are kept.
CityFilterResult city_filter(std::vector<SourceRecord> records, const geo::Polygon& city);

/// Approximate City of Atlanta extent used by the synthetic generator and the stub geocoder.
geo::BoundingBox default_city_box();

}  // namespace firerisk::ingest
