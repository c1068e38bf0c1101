#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "firerisk/common.hpp"
#include "firerisk/geo.hpp"
#include "firerisk/ingest.hpp"

namespace firerisk::synth {

enum class Errc { InvalidConfig, Io };
using Error = CodedError<Errc>;

struct Corruption {
    double typoRate = 0.0;     // per field: street name, business name
    double abbrevRate = 0.0;   // suffix / directional spelled as a non-canonical variant
    double jitterMeters = 0.0; // uniform in a disc
};

/// Fire probability per property-year is sigmoid(bias + sum(weight * feature)).
/// Feature names: a numeric attribute (value is the population z-score of
/// ln(1 + x)), or "neighborhood=<name>" / "property_type=<name>" indicators.
struct Signal {
    std::map<std::string, double> weights;
    double bias = -2.751535313041949;  // logit(0.06)
};

struct SynthConfig {
    std::uint64_t seed = 1;
    std::size_t nProperties = 1000;
    /// When > 0 the bias is recalibrated so the expected number of properties
    /// with at least one fire in the window equals nFires.
    std::size_t nFires = 0;
    Date windowStart = make_date(2011, 7, 1);
    Date windowEnd = make_date(2015, 7, 1);
    Corruption corruption;
    Signal signal;
    double inspectedFraction = 0.4;    // properties carrying a fire permit
    double costarFraction = 1.0;       // properties present in the CoStar-like dataset
    double costarParcelIdRate = 0.5;   // CoStar rows that carry the parcel id
    geo::BoundingBox box = ingest::default_city_box();

    void validate() const;
};

/// Hidden truth about one generated property.
struct TruthProperty {
    std::string id;
    geo::GeoPoint point;
    std::string usageType;
    std::string businessName;
    std::string neighborhood;
    std::string zip5;
    bool inspected = false;
    std::map<std::string, double> numeric;   // unobscured attribute values
    std::string propertyType;
    double linearPredictor = 0.0;            // signal minus bias
};

struct TruthLink {
    std::string propertyId;
    ingest::Dataset leftDataset;
    std::string leftId;
    ingest::Dataset rightDataset;
    std::string rightId;
};

struct TruthFire {
    std::string propertyId;
    Date date;
};

struct SynthOutput {
    std::map<ingest::Dataset, std::vector<ingest::SourceRecord>> records;
    std::vector<TruthLink> groundTruthLinks;
    std::vector<TruthFire> groundTruthFires;
    std::vector<TruthProperty> properties;
    std::map<std::string, std::string> truthOf;  // sourceId -> truth property id
    double bias = 0.0;                            // bias actually used
};

SynthOutput synth_generate(const SynthConfig& cfg);

/// Bias giving a mean per-property-year fire probability of `rate` under
/// cfg's features and weights (bisection on the generated population).
double calibrate_bias(const SynthConfig& cfg, double rate);

/// One CSV per dataset plus ground_truth_links.csv and ground_truth_fires.csv.
void write_corpus(const std::filesystem::path& dir, const SynthOutput& out);

/// Rectangular overlays over `box`: the city itself, 5x5 NPUs, 4x3 council
/// districts and 2x2 battalions.
std::vector<geo::Polygon> synth_overlays(const geo::BoundingBox& box);

/// The usage types the generator draws from, most common first.
const std::vector<std::string>& usage_types();

}  // namespace firerisk::synth
