#include "firerisk/ingest.hpp"

#include <array>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "firerisk/csv.hpp"

namespace firerisk::ingest {
namespace {

struct DatasetInfo {
    Dataset dataset;
    std::string_view name;
    std::string_view prefix;
};

constexpr std::array<DatasetInfo, kDatasetCount> kDatasets = {{
    {Dataset::FireIncidents, "FIRE_INCIDENTS", "incident"},
    {Dataset::FirePermits, "FIRE_PERMITS", "permit"},
    {Dataset::Parcel, "PARCEL", "parcel"},
    {Dataset::Sci, "SCI", "sci"},
    {Dataset::BusinessLicense, "BUSINESS_LICENSE", "license"},
    {Dataset::Crime, "CRIME", "crime"},
    {Dataset::LiquorLicense, "LIQUOR_LICENSE", "liquor"},
    {Dataset::Costar, "COSTAR", "costar"},
    {Dataset::Places, "PLACES", "places"},
    {Dataset::Demographic, "DEMOGRAPHIC", "demographic"},
    {Dataset::Socioeconomic, "SOCIOECONOMIC", "socioeconomic"},
    {Dataset::Co, "CO", "co"},
}};

const DatasetInfo& info(Dataset d) { return kDatasets[static_cast<std::size_t>(d)]; }

bool requires_event_date(Dataset d) { return d == Dataset::FireIncidents || d == Dataset::FirePermits; }

std::vector<ColumnSpec> core_columns() {
    return {{"source_id", Role::SourceId},       {"parcel_id", Role::ParcelId},
            {"address", Role::Address},          {"lat", Role::Lat},
            {"lon", Role::Lon},                  {"business_name", Role::BusinessName},
            {"usage_type", Role::UsageType},     {"event_date", Role::EventDate}};
}

std::optional<std::string> non_empty(const std::string& s) {
    std::string t = trim(s);
    if (t.empty()) return std::nullopt;
    return t;
}

}  // namespace

std::string_view to_string(Dataset d) { return info(d).name; }

std::optional<Dataset> parse_dataset(std::string_view s) {
    std::string u = to_upper(s);
    for (const auto& i : kDatasets)
        if (u == i.name) return i.dataset;
    return std::nullopt;
}

std::string file_name(Dataset d) {
    std::string n(info(d).name);
    for (char& c : n) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return n + ".csv";
}

std::string attribute_prefix(Dataset d) { return std::string(info(d).prefix); }

bool same_fields(const SourceRecord& a, const SourceRecord& b) {
    bool addr_eq = a.address.has_value() == b.address.has_value() &&
                   (!a.address || a.address->same_place(*b.address));
    return a.sourceId == b.sourceId && a.dataset == b.dataset && a.parcelId == b.parcelId && addr_eq &&
           a.unparsedAddress == b.unparsedAddress && a.point == b.point && a.pointGeocoded == b.pointGeocoded &&
           a.businessName == b.businessName && a.usageType == b.usageType && a.eventDate == b.eventDate &&
           a.attributes == b.attributes;
}

std::vector<std::string> DatasetSchema::header() const {
    std::vector<std::string> h;
    h.reserve(columns.size());
    for (const auto& c : columns) h.push_back(c.name);
    return h;
}

DatasetSchema default_schema(Dataset d) {
    DatasetSchema s{d, core_columns()};
    auto num = [&](const char* n) { s.columns.push_back({n, Role::NumericAttr}); };
    auto text = [&](const char* n) { s.columns.push_back({n, Role::TextAttr}); };
    switch (d) {
    case Dataset::Parcel:
        num("land_area");
        num("lot_size");
        num("appraised_value");
        num("total_taxes");
        text("neighborhood");
        break;
    case Dataset::Costar:
        num("floor_size");
        num("num_units");
        num("num_buildings");
        num("living_units");
        num("percent_leased");
        num("year_built");
        num("has_sprinkler");
        text("property_type");
        break;
    case Dataset::BusinessLicense:
        num("employees");
        break;
    case Dataset::FirePermits:
        text("permit_type");
        break;
    case Dataset::FireIncidents:
        text("incident_type");
        break;
    default:
        break;
    }
    return s;
}

DatasetSchema ingested_schema(Dataset d) {
    DatasetSchema s = default_schema(d);
    s.columns.push_back({"point_source", Role::PointSource});
    return s;
}

std::string_view to_string(RejectReason r) {
    switch (r) {
    case RejectReason::NoLocation: return "NO_LOCATION";
    case RejectReason::BadCoordinate: return "BAD_COORDINATE";
    case RejectReason::MissingEventDate: return "MISSING_EVENT_DATE";
    case RejectReason::BadDate: return "BAD_DATE";
    case RejectReason::BadNumber: return "BAD_NUMBER";
    case RejectReason::MissingId: return "MISSING_ID";
    case RejectReason::DuplicateId: return "DUPLICATE_ID";
    case RejectReason::WrongFieldCount: return "WRONG_FIELD_COUNT";
    }
    return "UNKNOWN";
}

ReadResult parse_dataset(std::string_view text, const DatasetSchema& schema, std::string_view origin,
                         const address::NormalizationConfig& cfg) {
    std::vector<csv::Row> rows;
    try {
        rows = csv::parse(text);
    } catch (const csv::Error& e) {
        throw Error(Errc::SchemaMismatch, std::string(origin) + ": " + e.what());
    }
    if (rows.empty()) throw Error(Errc::SchemaMismatch, std::string(origin) + ": missing header row");
    if (rows[0] != schema.header()) {
        std::string got;
        for (const auto& c : rows[0]) got += (got.empty() ? "" : ",") + c;
        throw Error(Errc::SchemaMismatch, std::string(origin) + ": header '" + got + "' does not match schema for " +
                                              std::string(to_string(schema.dataset)));
    }

    ReadResult result;
    std::set<std::string, std::less<>> seen;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.size() == 1 && trim(row[0]).empty()) continue;  // blank line
        Reject reject{i + 1, "", RejectReason::WrongFieldCount, ""};
        if (row.size() != schema.columns.size()) {
            reject.detail = "expected " + std::to_string(schema.columns.size()) + " fields, got " +
                            std::to_string(row.size());
            result.rejects.push_back(std::move(reject));
            continue;
        }

        SourceRecord rec;
        rec.dataset = schema.dataset;
        std::optional<std::string> lat_text, lon_text;
        std::optional<RejectReason> failure;
        std::string detail;
        auto fail = [&](RejectReason r, std::string d) {
            if (!failure) {
                failure = r;
                detail = std::move(d);
            }
        };

        for (std::size_t c = 0; c < row.size(); ++c) {
            const auto& spec = schema.columns[c];
            const std::string& cell = row[c];
            switch (spec.role) {
            case Role::SourceId: rec.sourceId = trim(cell); break;
            case Role::ParcelId: rec.parcelId = non_empty(cell); break;
            case Role::Address:
                if (auto raw = non_empty(cell)) {
                    try {
                        rec.address = address::normalize_address(*raw, cfg);
                    } catch (const address::Error&) {
                        rec.unparsedAddress = *raw;
                    }
                }
                break;
            case Role::Lat: lat_text = non_empty(cell); break;
            case Role::Lon: lon_text = non_empty(cell); break;
            case Role::BusinessName: rec.businessName = non_empty(cell); break;
            case Role::UsageType: rec.usageType = non_empty(cell); break;
            case Role::EventDate:
                if (auto t = non_empty(cell)) {
                    if (auto d = parse_date(*t)) rec.eventDate = d;
                    else fail(RejectReason::BadDate, "bad date '" + *t + "'");
                }
                break;
            case Role::PointSource: rec.pointGeocoded = trim(cell) == "geocoded"; break;
            case Role::NumericAttr:
                if (auto t = non_empty(cell)) {
                    if (auto v = parse_double(*t)) rec.attributes[spec.name] = *v;
                    else fail(RejectReason::BadNumber, spec.name + " = '" + *t + "'");
                }
                break;
            case Role::TextAttr:
                if (auto t = non_empty(cell)) rec.attributes[spec.name] = *t;
                break;
            }
        }

        if (lat_text || lon_text) {
            auto lat = lat_text ? parse_double(*lat_text) : std::nullopt;
            auto lon = lon_text ? parse_double(*lon_text) : std::nullopt;
            geo::GeoPoint p{lat.value_or(0.0), lon.value_or(0.0)};
            if (!lat || !lon || !p.valid())
                fail(RejectReason::BadCoordinate,
                     "lat='" + lat_text.value_or("") + "' lon='" + lon_text.value_or("") + "'");
            else
                rec.point = p;
        }
        if (rec.sourceId.empty()) fail(RejectReason::MissingId, "empty source id");
        if (!rec.has_location()) fail(RejectReason::NoLocation, "no parcel id, parseable address or coordinates");
        if (requires_event_date(rec.dataset) && !rec.eventDate && !failure)
            fail(RejectReason::MissingEventDate, "event_date required");
        if (!failure && !seen.insert(rec.sourceId).second)
            fail(RejectReason::DuplicateId, "duplicate source id");

        if (failure) {
            reject.sourceId = rec.sourceId;
            reject.reason = *failure;
            reject.detail = std::move(detail);
            result.rejects.push_back(std::move(reject));
        } else {
            result.records.push_back(std::move(rec));
        }
    }
    return result;
}

ReadResult read_dataset(const std::filesystem::path& path, const DatasetSchema& schema,
                        const address::NormalizationConfig& cfg) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw Error(Errc::Io, "read failed: " + path.string());
    return parse_dataset(ss.str(), schema, path.string(), cfg);
}

void write_dataset(const std::filesystem::path& path, std::span<const SourceRecord> records,
                   const DatasetSchema& schema) {
    std::vector<csv::Row> rows;
    rows.reserve(records.size() + 1);
    rows.push_back(schema.header());
    for (const auto& r : records) {
        csv::Row row;
        row.reserve(schema.columns.size());
        for (const auto& spec : schema.columns) {
            switch (spec.role) {
            case Role::SourceId: row.push_back(r.sourceId); break;
            case Role::ParcelId: row.push_back(r.parcelId.value_or("")); break;
            case Role::Address:
                row.push_back(r.address ? address::format(*r.address) : r.unparsedAddress.value_or(""));
                break;
            case Role::Lat: row.push_back(r.point ? format_double(r.point->lat) : ""); break;
            case Role::Lon: row.push_back(r.point ? format_double(r.point->lon) : ""); break;
            case Role::BusinessName: row.push_back(r.businessName.value_or("")); break;
            case Role::UsageType: row.push_back(r.usageType.value_or("")); break;
            case Role::EventDate: row.push_back(r.eventDate ? format_date(*r.eventDate) : ""); break;
            case Role::PointSource: row.push_back(r.point ? (r.pointGeocoded ? "geocoded" : "source") : ""); break;
            case Role::NumericAttr:
            case Role::TextAttr: {
                auto it = r.attributes.find(spec.name);
                if (it == r.attributes.end()) row.emplace_back();
                else if (auto d = std::get_if<double>(&it->second)) row.push_back(format_double(*d));
                else row.push_back(std::get<std::string>(it->second));
                break;
            }
            }
        }
        rows.push_back(std::move(row));
    }
    try {
        csv::write_file(path, rows);
    } catch (const csv::Error& e) {
        throw Error(Errc::Io, e.what());
    }
}

void write_rejects(const std::filesystem::path& path, Dataset d, std::span<const Reject> rejects) {
    std::vector<csv::Row> rows{{"dataset", "line", "source_id", "reason", "detail"}};
    for (const auto& r : rejects)
        rows.push_back({std::string(to_string(d)), std::to_string(r.line), r.sourceId,
                        std::string(to_string(r.reason)), r.detail});
    try {
        csv::write_file(path, rows);
    } catch (const csv::Error& e) {
        throw Error(Errc::Io, e.what());
    }
}

GeocodeResult StubGeocoder::geocode(const address::PostalAddress& addr) {
    std::string query = address::format(addr);
    std::uint64_t h1 = fnv1a64(query);
    std::uint64_t h2 = fnv1a64(query, h1 ^ 0x9e3779b97f4a7c15ULL);
    double u = static_cast<double>(h1 >> 11) * 0x1.0p-53;
    double v = static_cast<double>(h2 >> 11) * 0x1.0p-53;
    geo::GeoPoint p{box_.minLat + u * (box_.maxLat - box_.minLat), box_.minLon + v * (box_.maxLon - box_.minLon)};
    return {std::move(query), p, 1.0};
}

GeocodeResult geocode(const address::PostalAddress& addr, GeocoderClient& client) { return client.geocode(addr); }

GeocodeSummary geocode_missing(std::vector<SourceRecord>& records, GeocoderClient& client) {
    GeocodeSummary s;
    for (auto& r : records) {
        if (r.point || !r.address) continue;
        for (int attempt = 0;; ++attempt) {
            try {
                auto res = client.geocode(*r.address);
                r.point = res.point;
                r.pointGeocoded = true;
                ++s.geocoded;
                break;
            } catch (const GeocodeError& e) {
                if (e.code() == GeocodeErrc::NotFound) {
                    ++s.notFound;
                    break;
                }
                if (e.code() != GeocodeErrc::RateLimited || attempt >= 3) throw;
                std::this_thread::sleep_for(e.retry_after());
            }
        }
    }
    return s;
}

CityFilterResult city_filter(std::vector<SourceRecord> records, const geo::Polygon& city) {
    CityFilterResult out;
    for (auto& r : records) {
        if (r.point && !geo::point_in_polygon(*r.point, city)) out.removed.push_back(std::move(r));
        else out.kept.push_back(std::move(r));
    }
    return out;
}

geo::BoundingBox default_city_box() { return {33.65, -84.55, 33.89, -84.29}; }

}  // namespace firerisk::ingest
