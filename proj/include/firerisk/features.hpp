#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "firerisk/common.hpp"
#include "firerisk/ingest.hpp"
#include "firerisk/linkage.hpp"
#include "firerisk/matrix.hpp"
#include "json.hpp"

namespace firerisk::features {

enum class Errc { InvalidSchema, NegativeValue, BadValue, Io };
using Error = CodedError<Errc>;

enum class Kind { Numeric, Categorical, Binary };

std::string_view to_string(Kind k);

/// Special sources besides attribute keys.
inline constexpr std::string_view kZipSource = "address.zip5";
inline constexpr std::string_view kUsageSource = "usageType";
inline constexpr std::string_view kBuildingAgeSource = "derived.building_age";
inline constexpr std::string_view kSinceInspectionSource = "derived.years_since_inspection";

struct Variable {
    std::string name;
    Kind kind = Kind::Numeric;
    bool logTransform = false;
    bool missingIndicator = false;
    /// Attribute key (e.g. "costar.floor_size") or one of the special sources.
    /// Defaults to `name`.
    std::string source;
    /// For derived.building_age: attribute holding the construction year.
    std::string yearBuiltKey = "costar.year_built";
};

struct FeatureSchema {
    std::vector<Variable> variables;

    void validate() const;
    nlohmann::json to_json() const;
    static FeatureSchema from_json(const nlohmann::json& j);
    static FeatureSchema load(const std::filesystem::path& path);
};

/// Built-in schema: size, value, use and age fields plus zip and neighborhood.
FeatureSchema default_schema();

/// Dates of linked inspections (or incidents) per propertyId.
using Histories = std::map<std::string, std::vector<Date>, std::less<>>;

/// Raw (pre-encoding) cell values, one row per property, one cell per variable.
struct RawTable {
    std::vector<std::string> propertyIds;
    std::vector<std::vector<std::optional<ingest::AttrValue>>> rows;
};

/// Reads each variable's source; derived variables are computed as of `asOf`
/// (building_age = year(asOf) - year built; years_since_inspection from the
/// latest inspection strictly before asOf).
RawTable extract(std::span<const linkage::PropertyRecord> props, const FeatureSchema& schema, const Date& asOf,
                 const Histories& inspections = {});

/// ln(1 + x). Throws NegativeValue for x < 0.
double log1p_checked(double x);
std::vector<double> log_transform(std::span<const double> column);

struct Imputed {
    std::vector<double> values;
    std::vector<double> missing;  // 1 where the input was absent
};

/// Missing values become 0 with a 1 in the indicator column.
Imputed impute_and_flag(std::span<const std::optional<double>> column);

/// One column per category; all zeros for a missing or unseen value.
Matrix one_hot_expand(std::span<const std::optional<std::string>> column, std::span<const std::string> categories);

/// Column layout and category sets learned from training rows.
struct Encoder {
    FeatureSchema schema;
    std::vector<std::vector<std::string>> categories;  // per variable; empty unless categorical

    std::vector<std::string> column_names() const;
    std::size_t width() const;
    nlohmann::json to_json() const;
    static Encoder from_json(const nlohmann::json& j);
};

Encoder fit_encoder(const FeatureSchema& schema, const RawTable& training);

struct FeatureMatrix {
    std::vector<std::string> propertyIds;
    std::vector<std::string> columnNames;
    Matrix values;
};

FeatureMatrix encode(const Encoder& enc, const RawTable& raw);

/// Event (incident or inspection) attached to a property.
struct LinkedEvent {
    std::string propertyId;
    std::string sourceId;
    Date date;
};

struct EventLinkResult {
    std::vector<LinkedEvent> linked;
    std::vector<std::string> unmatched;  // sourceIds
};

/// Properties for modelling: PARCEL and COSTAR records linked and fused; only
/// clusters holding a COSTAR record are kept. Sorted by propertyId.
std::vector<linkage::PropertyRecord> model_properties(std::span<const ingest::SourceRecord> parcels,
                                                      std::span<const ingest::SourceRecord> costar,
                                                      const linkage::LinkConfig& cfg);
/// PARCEL-COSTAR links used by model_properties, NoMatch decisions dropped.
std::vector<linkage::DatasetLink> model_links(std::span<const ingest::SourceRecord> parcels,
                                              std::span<const ingest::SourceRecord> costar,
                                              const linkage::LinkConfig& cfg);
std::vector<linkage::PropertyRecord> model_properties(std::span<const ingest::SourceRecord> parcels,
                                                      std::span<const ingest::SourceRecord> costar,
                                                      std::span<const linkage::DatasetLink> links);

/// Many-to-one assignment of dated events to properties through the linkage cascade.
/// Events without a date are reported unmatched.
EventLinkResult link_events(std::span<const ingest::SourceRecord> events,
                            std::span<const linkage::PropertyRecord> props, const linkage::LinkConfig& cfg);

Histories histories(std::span<const LinkedEvent> events);

/// 1 iff at least one linked event of the property falls in [start, end).
std::vector<int> build_labels(std::span<const LinkedEvent> incidents, std::span<const std::string> propertyIds,
                              const TimeWindow& window);

struct ExpandedRows {
    RawTable raw;
    std::vector<int> labels;
    std::vector<std::size_t> windowIndex;
};

/// One row per (window, property), windows outermost; derived variables as of
/// each window's start and labels from that window.
ExpandedRows per_year_expansion(std::span<const linkage::PropertyRecord> props, const FeatureSchema& schema,
                                std::span<const LinkedEvent> incidents, const Histories& inspections,
                                std::span<const TimeWindow> windows);

/// Consecutive one-year windows covering [start, end).
std::vector<TimeWindow> yearly_windows(const TimeWindow& span);

/// propertyId, then one column per feature; label column appended when given.
void write_matrix_csv(const std::filesystem::path& path, const FeatureMatrix& m,
                      std::span<const int> labels = {});

}  // namespace firerisk::features
