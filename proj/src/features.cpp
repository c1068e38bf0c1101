#include "firerisk/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "firerisk/csv.hpp"

namespace firerisk::features {

using linkage::PropertyRecord;
using nlohmann::json;

std::string_view to_string(Kind k) {
    switch (k) {
    case Kind::Numeric: return "NUMERIC";
    case Kind::Categorical: return "CATEGORICAL";
    case Kind::Binary: return "BINARY";
    }
    return "NUMERIC";
}

namespace {

Kind parse_kind(const std::string& s) {
    for (auto k : {Kind::Numeric, Kind::Categorical, Kind::Binary})
        if (s == to_string(k)) return k;
    throw Error(Errc::InvalidSchema, "unknown variable kind '" + s + "'");
}

const std::string& source_of(const Variable& v) { return v.source.empty() ? v.name : v.source; }

std::string category_text(const ingest::AttrValue& v) {
    if (auto d = std::get_if<double>(&v)) return format_double(*d);
    return std::get<std::string>(v);
}

std::optional<double> numeric_value(const std::optional<ingest::AttrValue>& cell, const Variable& v) {
    if (!cell) return std::nullopt;
    double x;
    if (auto d = std::get_if<double>(&*cell)) {
        x = *d;
    } else {
        auto parsed = parse_double(std::get<std::string>(*cell));
        if (!parsed)
            throw Error(Errc::BadValue, v.name + ": non-numeric value '" + std::get<std::string>(*cell) + "'");
        x = *parsed;
    }
    if (!std::isfinite(x)) throw Error(Errc::BadValue, v.name + ": non-finite value");
    return x;
}

double binary_value(const std::optional<ingest::AttrValue>& cell) {
    if (!cell) return 0.0;
    if (auto d = std::get_if<double>(&*cell)) return *d != 0.0 ? 1.0 : 0.0;
    auto s = to_upper(trim(std::get<std::string>(*cell)));
    return (s == "1" || s == "TRUE" || s == "YES" || s == "Y") ? 1.0 : 0.0;
}

double years_between(const Date& from, const Date& to) { return days_between(from, to) / 365.25; }

}  // namespace

void FeatureSchema::validate() const {
    if (variables.empty()) throw Error(Errc::InvalidSchema, "schema has no variables");
    std::set<std::string> names;
    for (const auto& v : variables) {
        if (v.name.empty()) throw Error(Errc::InvalidSchema, "variable with empty name");
        if (v.kind != Kind::Numeric && (v.logTransform || v.missingIndicator))
            throw Error(Errc::InvalidSchema, v.name + ": logTransform and missingIndicator apply to NUMERIC only");
        std::vector<std::string> cols{v.name};
        if (v.missingIndicator) cols.push_back(v.name + "_missing");
        for (const auto& c : cols)
            if (!names.insert(c).second) throw Error(Errc::InvalidSchema, "duplicate column name '" + c + "'");
    }
}

json FeatureSchema::to_json() const {
    json vars = json::array();
    for (const auto& v : variables) {
        json j{{"name", v.name}, {"kind", std::string(features::to_string(v.kind))}, {"source", source_of(v)}};
        if (v.kind == Kind::Numeric) {
            j["logTransform"] = v.logTransform;
            j["missingIndicator"] = v.missingIndicator;
        }
        if (source_of(v) == kBuildingAgeSource) j["yearBuiltKey"] = v.yearBuiltKey;
        vars.push_back(std::move(j));
    }
    return {{"variables", std::move(vars)}};
}

FeatureSchema FeatureSchema::from_json(const json& j) {
    FeatureSchema s;
    try {
        for (const auto& jv : j.at("variables")) {
            Variable v;
            v.name = jv.at("name").get<std::string>();
            v.kind = parse_kind(jv.at("kind").get<std::string>());
            v.logTransform = jv.value("logTransform", false);
            v.missingIndicator = jv.value("missingIndicator", false);
            v.source = jv.value("source", std::string());
            v.yearBuiltKey = jv.value("yearBuiltKey", v.yearBuiltKey);
            s.variables.push_back(std::move(v));
        }
    } catch (const json::exception& e) {
        throw Error(Errc::InvalidSchema, std::string("feature schema: ") + e.what());
    }
    s.validate();
    return s;
}

FeatureSchema FeatureSchema::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::Io, "cannot open " + path.string());
    try {
        return from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw Error(Errc::InvalidSchema, path.string() + ": " + e.what());
    }
}

FeatureSchema default_schema() {
    auto num = [](std::string name, std::string source, bool log) {
        return Variable{std::move(name), Kind::Numeric, log, true, std::move(source)};
    };
    FeatureSchema s;
    s.variables = {
        num("floor_size", "costar.floor_size", true),
        num("land_area", "parcel.land_area", true),
        num("num_units", "costar.num_units", true),
        num("appraised_value", "parcel.appraised_value", true),
        num("num_buildings", "costar.num_buildings", true),
        num("total_taxes", "parcel.total_taxes", true),
        num("lot_size", "parcel.lot_size", true),
        num("living_units", "costar.living_units", true),
        num("percent_leased", "costar.percent_leased", false),
        num("building_age", std::string(kBuildingAgeSource), false),
        num("years_since_inspection", std::string(kSinceInspectionSource), false),
        Variable{"property_type", Kind::Categorical, false, false, "costar.property_type"},
        Variable{"zip", Kind::Categorical, false, false, std::string(kZipSource)},
        Variable{"neighborhood", Kind::Categorical, false, false, "parcel.neighborhood"},
        Variable{"has_sprinkler", Kind::Binary, false, false, "costar.has_sprinkler"},
    };
    return s;
}

RawTable extract(std::span<const PropertyRecord> props, const FeatureSchema& schema, const Date& asOf,
                 const Histories& inspections) {
    schema.validate();
    RawTable t;
    t.propertyIds.reserve(props.size());
    t.rows.reserve(props.size());
    for (const auto& p : props) {
        t.propertyIds.push_back(p.propertyId);
        std::vector<std::optional<ingest::AttrValue>> row;
        row.reserve(schema.variables.size());
        for (const auto& v : schema.variables) {
            const auto& src = source_of(v);
            std::optional<ingest::AttrValue> cell;
            if (src == kZipSource) {
                if (p.canonicalAddress && p.canonicalAddress->zip5) cell = *p.canonicalAddress->zip5;
            } else if (src == kUsageSource) {
                if (p.usageType) cell = *p.usageType;
            } else if (src == kBuildingAgeSource) {
                auto it = p.attributes.find(v.yearBuiltKey);
                if (it != p.attributes.end()) {
                    if (auto built = numeric_value(it->second, v))
                        cell = static_cast<double>(static_cast<int>(asOf.year())) - *built;
                }
            } else if (src == kSinceInspectionSource) {
                auto it = inspections.find(p.propertyId);
                if (it != inspections.end()) {
                    std::optional<Date> last;
                    for (const auto& d : it->second)
                        if (d < asOf && (!last || *last < d)) last = d;
                    if (last) cell = years_between(*last, asOf);
                }
            } else {
                auto it = p.attributes.find(src);
                if (it != p.attributes.end()) cell = it->second;
            }
            row.push_back(std::move(cell));
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

double log1p_checked(double x) {
    if (x < 0.0 || std::isnan(x)) throw Error(Errc::NegativeValue, "log transform of negative value " + format_double(x));
    return std::log1p(x);
}

std::vector<double> log_transform(std::span<const double> column) {
    std::vector<double> out;
    out.reserve(column.size());
    for (double x : column) out.push_back(log1p_checked(x));
    return out;
}

Imputed impute_and_flag(std::span<const std::optional<double>> column) {
    Imputed out;
    out.values.reserve(column.size());
    out.missing.reserve(column.size());
    for (const auto& x : column) {
        out.values.push_back(x.value_or(0.0));
        out.missing.push_back(x ? 0.0 : 1.0);
    }
    return out;
}

Matrix one_hot_expand(std::span<const std::optional<std::string>> column, std::span<const std::string> categories) {
    Matrix m(column.size(), categories.size());
    for (std::size_t r = 0; r < column.size(); ++r) {
        if (!column[r]) continue;
        auto it = std::find(categories.begin(), categories.end(), *column[r]);
        if (it != categories.end()) m(r, static_cast<std::size_t>(it - categories.begin())) = 1.0;
    }
    return m;
}

std::vector<std::string> Encoder::column_names() const {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < schema.variables.size(); ++i) {
        const auto& v = schema.variables[i];
        switch (v.kind) {
        case Kind::Numeric:
            names.push_back(v.name);
            if (v.missingIndicator) names.push_back(v.name + "_missing");
            break;
        case Kind::Categorical:
            for (const auto& c : categories[i]) names.push_back(v.name + "=" + c);
            break;
        case Kind::Binary: names.push_back(v.name); break;
        }
    }
    return names;
}

std::size_t Encoder::width() const {
    std::size_t w = 0;
    for (std::size_t i = 0; i < schema.variables.size(); ++i) {
        const auto& v = schema.variables[i];
        if (v.kind == Kind::Categorical) w += categories[i].size();
        else w += (v.kind == Kind::Numeric && v.missingIndicator) ? 2 : 1;
    }
    return w;
}

json Encoder::to_json() const {
    json cats = json::object();
    for (std::size_t i = 0; i < schema.variables.size(); ++i)
        if (schema.variables[i].kind == Kind::Categorical) cats[schema.variables[i].name] = categories[i];
    return {{"version", 1}, {"schema", schema.to_json()}, {"categories", std::move(cats)}};
}

Encoder Encoder::from_json(const json& j) {
    Encoder e;
    try {
        if (j.at("version").get<int>() != 1) throw Error(Errc::InvalidSchema, "unsupported encoder version");
        e.schema = FeatureSchema::from_json(j.at("schema"));
        for (const auto& v : e.schema.variables) {
            if (v.kind == Kind::Categorical) e.categories.push_back(j.at("categories").at(v.name).get<std::vector<std::string>>());
            else e.categories.emplace_back();
        }
    } catch (const json::exception& ex) {
        throw Error(Errc::InvalidSchema, std::string("encoder: ") + ex.what());
    }
    return e;
}

Encoder fit_encoder(const FeatureSchema& schema, const RawTable& training) {
    schema.validate();
    Encoder e{schema, {}};
    for (std::size_t i = 0; i < schema.variables.size(); ++i) {
        std::set<std::string> seen;
        if (schema.variables[i].kind == Kind::Categorical)
            for (const auto& row : training.rows)
                if (row[i]) seen.insert(category_text(*row[i]));
        e.categories.emplace_back(seen.begin(), seen.end());
    }
    return e;
}

FeatureMatrix encode(const Encoder& enc, const RawTable& raw) {
    const auto& vars = enc.schema.variables;
    FeatureMatrix fm;
    fm.propertyIds = raw.propertyIds;
    fm.columnNames = enc.column_names();
    fm.values = Matrix(raw.rows.size(), fm.columnNames.size());
    for (std::size_t r = 0; r < raw.rows.size(); ++r) {
        const auto& row = raw.rows[r];
        if (row.size() != vars.size()) throw Error(Errc::BadValue, "raw row width does not match schema");
        std::size_t c = 0;
        for (std::size_t i = 0; i < vars.size(); ++i) {
            const auto& v = vars[i];
            switch (v.kind) {
            case Kind::Numeric: {
                auto x = numeric_value(row[i], v);
                double val = x.value_or(0.0);
                if (v.logTransform) {
                    if (val < 0.0)
                        throw Error(Errc::NegativeValue, v.name + ": log transform of negative value " + format_double(val));
                    val = std::log1p(val);
                }
                fm.values(r, c++) = val;
                if (v.missingIndicator) fm.values(r, c++) = x ? 0.0 : 1.0;
                break;
            }
            case Kind::Categorical: {
                const auto& cats = enc.categories[i];
                if (row[i]) {
                    auto key = category_text(*row[i]);
                    auto it = std::lower_bound(cats.begin(), cats.end(), key);
                    if (it != cats.end() && *it == key) fm.values(r, c + static_cast<std::size_t>(it - cats.begin())) = 1.0;
                }
                c += cats.size();
                break;
            }
            case Kind::Binary: fm.values(r, c++) = binary_value(row[i]); break;
            }
        }
    }
    return fm;
}

std::vector<PropertyRecord> model_properties(std::span<const ingest::SourceRecord> parcels,
                                             std::span<const ingest::SourceRecord> costar,
                                             const linkage::LinkConfig& cfg) {
    return model_properties(parcels, costar, model_links(parcels, costar, cfg));
}

std::vector<linkage::DatasetLink> model_links(std::span<const ingest::SourceRecord> parcels,
                                              std::span<const ingest::SourceRecord> costar,
                                              const linkage::LinkConfig& cfg) {
    std::vector<linkage::DatasetLink> links;
    for (const auto& d : linkage::link_datasets(parcels, costar, cfg))
        if (d.tier != linkage::Tier::NoMatch) links.push_back({ingest::Dataset::Parcel, ingest::Dataset::Costar, d});
    return links;
}

std::vector<PropertyRecord> model_properties(std::span<const ingest::SourceRecord> parcels,
                                             std::span<const ingest::SourceRecord> costar,
                                             std::span<const linkage::DatasetLink> links) {
    std::vector<ingest::SourceRecord> all(parcels.begin(), parcels.end());
    all.insert(all.end(), costar.begin(), costar.end());
    auto fused = linkage::fuse_all(all, links);
    std::erase_if(fused, [](const PropertyRecord& p) {
        return std::none_of(p.provenance.begin(), p.provenance.end(),
                            [](const auto& e) { return e.first == ingest::Dataset::Costar; });
    });
    return fused;
}

EventLinkResult link_events(std::span<const ingest::SourceRecord> events, std::span<const PropertyRecord> props,
                            const linkage::LinkConfig& cfg) {
    EventLinkResult out;
    std::vector<const ingest::SourceRecord*> dated;
    std::vector<linkage::Linkable> ev;
    for (const auto& e : events) {
        if (!e.eventDate) {
            out.unmatched.push_back(e.sourceId);
            continue;
        }
        dated.push_back(&e);
        ev.push_back(linkage::view(e));
    }
    auto pv = linkage::views(props);
    auto best = linkage::best_matches(ev, pv, cfg);
    for (std::size_t i = 0; i < dated.size(); ++i) {
        if (best[i]) out.linked.push_back({props[*best[i]].propertyId, dated[i]->sourceId, *dated[i]->eventDate});
        else out.unmatched.push_back(dated[i]->sourceId);
    }
    return out;
}

Histories histories(std::span<const LinkedEvent> events) {
    Histories h;
    for (const auto& e : events) h[e.propertyId].push_back(e.date);
    for (auto& [id, dates] : h) std::sort(dates.begin(), dates.end());
    return h;
}

std::vector<int> build_labels(std::span<const LinkedEvent> incidents, std::span<const std::string> propertyIds,
                              const TimeWindow& window) {
    std::set<std::string, std::less<>> burned;
    for (const auto& e : incidents)
        if (window.contains(e.date)) burned.insert(e.propertyId);
    std::vector<int> y;
    y.reserve(propertyIds.size());
    for (const auto& id : propertyIds) y.push_back(burned.count(id) ? 1 : 0);
    return y;
}

ExpandedRows per_year_expansion(std::span<const PropertyRecord> props, const FeatureSchema& schema,
                                std::span<const LinkedEvent> incidents, const Histories& inspections,
                                std::span<const TimeWindow> windows) {
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (!windows[i].valid()) throw Error(Errc::BadValue, "empty time window");
        for (std::size_t j = i + 1; j < windows.size(); ++j)
            if (windows[i].overlaps(windows[j])) throw Error(Errc::BadValue, "yearly windows overlap");
    }
    ExpandedRows out;
    for (std::size_t w = 0; w < windows.size(); ++w) {
        auto raw = extract(props, schema, windows[w].start, inspections);
        auto y = build_labels(incidents, raw.propertyIds, windows[w]);
        out.raw.propertyIds.insert(out.raw.propertyIds.end(), raw.propertyIds.begin(), raw.propertyIds.end());
        for (auto& row : raw.rows) out.raw.rows.push_back(std::move(row));
        out.labels.insert(out.labels.end(), y.begin(), y.end());
        out.windowIndex.insert(out.windowIndex.end(), y.size(), w);
    }
    return out;
}

std::vector<TimeWindow> yearly_windows(const TimeWindow& span) {
    if (!span.valid()) throw Error(Errc::BadValue, "empty time window");
    std::vector<TimeWindow> out;
    for (Date s = span.start; s < span.end;) {
        Date e = std::min(add_years(s, 1), span.end);
        out.push_back({s, e});
        s = e;
    }
    return out;
}

void write_matrix_csv(const std::filesystem::path& path, const FeatureMatrix& m, std::span<const int> labels) {
    std::vector<csv::Row> rows;
    csv::Row header{"propertyId"};
    header.insert(header.end(), m.columnNames.begin(), m.columnNames.end());
    if (!labels.empty()) header.push_back("label");
    rows.push_back(std::move(header));
    for (std::size_t r = 0; r < m.values.rows; ++r) {
        csv::Row row{m.propertyIds[r]};
        for (double v : m.values.row(r)) row.push_back(format_double(v));
        if (!labels.empty()) row.push_back(std::to_string(labels[r]));
        rows.push_back(std::move(row));
    }
    csv::write_file(path, rows);
}

}  // namespace firerisk::features
