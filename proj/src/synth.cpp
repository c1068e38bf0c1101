#include "firerisk/synth.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>

#include "firerisk/csv.hpp"

namespace firerisk::synth {
namespace {

using ingest::Dataset;
using ingest::SourceRecord;

struct UsageSpec {
    const char* type;
    double weight;
    const char* noun;
};

constexpr UsageSpec kUsages[] = {
    {"RESTAURANT", 20, "GRILL"},
    {"RETAIL STORE", 15, "MARKET"},
    {"OFFICE", 15, "ASSOCIATES"},
    {"MOTOR VEHICLE REPAIR", 8, "AUTO REPAIR"},
    {"MISCELLANEOUS BUSINESS SERVICE", 6, "SERVICES"},
    {"CHURCH", 5, "CHURCH"},
    {"WAREHOUSE", 5, "STORAGE"},
    {"CHILDREN'S DAY CARE", 4, "LEARNING CENTER"},
    {"GAS STATION", 4, "FUEL STOP"},
    {"GROCERY", 4, "FOODS"},
    {"BEAUTY SALON", 4, "SALON"},
    {"SCHOOL", 3, "ACADEMY"},
    {"BAR", 3, "TAVERN"},
    {"HOTEL", 3, "INN"},
    {"MEDICAL CLINIC", 3, "CLINIC"},
    {"NIGHTCLUB", 2, "LOUNGE"},
    {"NURSING HOME", 2, "CARE HOME"},
    {"DRY CLEANER", 2, "CLEANERS"},
    {"AUTO DEALER", 2, "MOTORS"},
    {"FITNESS CENTER", 2, "FITNESS"},
    {"TEXTILE STORAGE", 1, "TEXTILES"},
    {"PRINTING", 1, "PRINT SHOP"},
    {"HARDWARE STORE", 1, "HARDWARE"},
    {"ASSEMBLY HALL", 1, "HALL"},
};

constexpr const char* kNameFirst[] = {
    "PEACHTREE", "MAGNOLIA", "DOGWOOD",  "SUMMIT",   "PIONEER",  "HERITAGE", "CAPITOL",  "FIVE POINTS",
    "KIRKWOOD",  "BUCKHEAD", "MIDTOWN",  "INMAN",    "GRANT",    "CASTLE",   "ORCHARD",  "REDBUD",
    "BLUEBIRD",  "CARDINAL", "FALCON",   "HAWTHORN", "IRONWOOD", "JUBILEE",  "KEYSTONE", "LANTERN",
    "MERIDIAN",  "NOBLE",    "OAKHURST", "PALISADE", "QUARRY",   "RIVERSIDE", "SENTINEL", "TRINITY",
    "UNION",     "VANGUARD", "WILLOW",   "YARDLEY",  "ZENITH",   "ARBOR",    "BEACON",   "CHAMPION",
    "DIAMOND",   "EMPIRE",   "FRONTIER", "GATEWAY",  "HARBOR",   "IMPERIAL", "LIBERTY",  "MONARCH",
};

constexpr const char* kNameSecond[] = {
    "GOLDEN",   "BLUE",    "CAPITAL", "ROYAL",   "GREEN",   "SILVER",  "PREMIER", "CLASSIC",
    "SOUTHERN", "UNITED",  "PRIME",   "FAMILY",  "CITY",    "METRO",   "STAR",    "EAGLE",
    "CROWN",    "ELITE",   "MODERN",  "PEOPLES", "QUALITY", "RELIABLE", "SUPREME", "TRUSTED",
    "URBAN",    "VICTORY", "WESTERN", "ALLIED",  "BRIGHT",  "CENTRAL", "DELUXE",  "EXPRESS",
};

constexpr const char* kStreets[] = {
    "PEACHTREE",     "PIEDMONT",  "PONCE DE LEON", "MARIETTA",  "SPRING",     "HOWELL MILL", "MORELAND",
    "MEMORIAL",      "CASCADE",   "CAMPBELLTON",   "CHESHIRE BRIDGE", "LINDBERGH", "MONROE", "HIGHLAND",
    "EUCLID",        "DEKALB",    "EDGEWOOD",      "AUBURN",    "DECATUR",    "MITCHELL",    "HUNTER",
    "NELSON",        "FORSYTH",   "COURTLAND",     "JUNIPER",   "CYPRESS",    "PINE",        "OAK",
    "ELM",           "MAPLE",     "FAIRBURN",      "GORDON",    "LEE",        "LAKEWOOD",    "METROPOLITAN",
    "PRYOR",         "CAPITOL",   "WASHINGTON",    "CENTRAL",   "GLENWOOD",   "BOULDERCREST", "FLAT SHOALS",
    "CANDLER",       "CLIFTON",   "BRIARCLIFF",    "LAVISTA",   "CHEROKEE",   "GRANT",       "BOWEN",
    "JOHNSON",       "NORTHSIDE", "COLLIER",       "DEFOORS FERRY", "BOLTON",  "HOLLYWOOD",   "DONALD LEE HOLLOWELL",
    "MARTIN LUTHER KING JR", "RALPH DAVID ABERNATHY", "JOSEPH BOONE", "SIMPSON", "WINDSOR", "WHITEHALL",
};

constexpr const char* kSuffixes[] = {"ST", "AVE", "RD", "DR", "BLVD", "LN", "CT", "PL", "PKWY", "WAY", "CIR", "TRL", "HWY"};

const std::map<std::string, std::vector<std::string>>& suffix_variants() {
    static const std::map<std::string, std::vector<std::string>> m = {
        {"ST", {"STREET", "STR"}},        {"AVE", {"AVENUE", "AV"}},      {"RD", {"ROAD"}},
        {"DR", {"DRIVE", "DRV"}},         {"BLVD", {"BOULEVARD", "BOUL"}}, {"LN", {"LANE"}},
        {"CT", {"COURT"}},                {"PL", {"PLACE"}},              {"PKWY", {"PARKWAY", "PKY"}},
        {"WAY", {"WY"}},                  {"CIR", {"CIRCLE", "CIRC"}},    {"TRL", {"TRAIL"}},
        {"HWY", {"HIGHWAY", "HIWAY"}},
    };
    return m;
}

const std::map<std::string, std::string>& directional_words() {
    static const std::map<std::string, std::string> m = {
        {"NE", "NORTHEAST"}, {"NW", "NORTHWEST"}, {"SE", "SOUTHEAST"}, {"SW", "SOUTHWEST"}};
    return m;
}

constexpr const char* kPostDirs[] = {"NE", "NW", "SE", "SW"};

struct TypeWeight {
    const char* name;
    double weight;
};
constexpr TypeWeight kPropertyTypes[] = {
    {"OFFICE", 25}, {"RETAIL", 25}, {"MULTI-FAMILY", 15}, {"INDUSTRIAL", 12},
    {"FLEX", 8},    {"HOSPITALITY", 5}, {"SPECIALTY", 5}, {"HEALTH CARE", 5},
};

template <class T, std::size_t N>
std::size_t weighted_pick(Rng& rng, const T (&items)[N]) {
    double total = 0;
    for (const auto& it : items) total += it.weight;
    double u = rng.uniform() * total;
    for (std::size_t i = 0; i < N; ++i) {
        u -= items[i].weight;
        if (u < 0) return i;
    }
    return N - 1;
}

template <class T, std::size_t N>
const T& pick(Rng& rng, const T (&items)[N]) {
    return items[rng.index(N)];
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::string lower(std::string s) {
    for (char& c : s)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return s;
}

// One or two single-character edits on letters; spaces are never touched.
std::string typo(std::string s, Rng& rng) {
    int edits = 1 + static_cast<int>(rng.index(2));
    for (int e = 0; e < edits; ++e) {
        std::vector<std::size_t> letters;
        for (std::size_t i = 0; i < s.size(); ++i)
            if (s[i] >= 'A' && s[i] <= 'Z') letters.push_back(i);
        if (letters.size() < 3) break;
        std::size_t pos = letters[rng.index(letters.size())];
        char ch = static_cast<char>('A' + rng.index(26));
        switch (rng.index(3)) {
        case 0:
            if (ch == s[pos]) ch = ch == 'Z' ? 'A' : static_cast<char>(ch + 1);
            s[pos] = ch;
            break;
        case 1: s.insert(s.begin() + static_cast<std::ptrdiff_t>(pos), ch); break;
        default: s.erase(pos, 1); break;
        }
    }
    return s;
}

geo::GeoPoint jitter(const geo::GeoPoint& p, double meters, Rng& rng) {
    // Always consume two draws so record streams stay aligned across configs.
    double u = rng.uniform(), v = rng.uniform();
    if (meters <= 0.0) return p;
    constexpr double kMetersPerDegree = geo::kEarthRadiusMeters * 3.14159265358979323846 / 180.0;
    double r = meters * std::sqrt(u);
    double theta = 2.0 * 3.14159265358979323846 * v;
    double dlat = r * std::cos(theta) / kMetersPerDegree;
    double dlon = r * std::sin(theta) / (kMetersPerDegree * std::cos(p.lat * 3.14159265358979323846 / 180.0));
    return {p.lat + dlat, p.lon + dlon};
}

struct StreetAddress {
    std::string number;
    std::string name;
    std::string suffix;
    std::string postDir;  // may be empty
};

struct World {
    std::vector<TruthProperty> props;
    std::vector<StreetAddress> addresses;
    std::vector<std::string> parcelIds;
    std::vector<std::vector<double>> signalValues;  // per weight (map order), per property
};

World make_world(const SynthConfig& cfg) {
    Rng rng(cfg.seed);
    World w;
    const auto n = cfg.nProperties;
    w.props.resize(n);
    w.addresses.resize(n);
    w.parcelIds.resize(n);

    const double margin = 0.002;
    const auto& box = cfg.box;
    std::set<std::string> used_addresses, used_names, used_parcels;

    for (std::size_t i = 0; i < n; ++i) {
        auto& p = w.props[i];
        char id[32];
        std::snprintf(id, sizeof id, "T%06zu", i + 1);
        p.id = id;

        double fy = rng.uniform(), fx = rng.uniform();
        p.point = {box.minLat + margin + fy * (box.maxLat - box.minLat - 2 * margin),
                   box.minLon + margin + fx * (box.maxLon - box.minLon - 2 * margin)};
        auto cell = static_cast<std::size_t>(std::min(5.0, std::floor(fy * 6)) * 7 + std::min(6.0, std::floor(fx * 7)));
        char zip[24];
        std::snprintf(zip, sizeof zip, "%05zu", 30301 + cell % 37);
        p.zip5 = zip;
        auto nb = static_cast<int>(std::min(4.0, std::floor(fy * 5)) * 5 + std::min(4.0, std::floor(fx * 5)));
        char nbhd[24];
        std::snprintf(nbhd, sizeof nbhd, "NBHD-%02d", nb + 1);
        p.neighborhood = nbhd;

        p.propertyType = kPropertyTypes[weighted_pick(rng, kPropertyTypes)].name;
        double z = rng.normal();
        auto& num = p.numeric;
        num["floor_size"] = std::round(std::exp(9.0 + 1.0 * z));
        num["num_units"] = std::max(1.0, std::round(std::exp(0.8 + 0.8 * z + 0.6 * rng.normal())));
        num["land_area"] = std::round(std::exp(10.2 + 0.6 * z + 0.7 * rng.normal()));
        num["lot_size"] = std::round(num["land_area"] * rng.uniform(0.9, 1.1));
        num["appraised_value"] = std::round(num["floor_size"] * std::exp(4.6 + 0.5 * rng.normal()));
        num["total_taxes"] = std::round(num["appraised_value"] * 0.0125 * rng.uniform(0.8, 1.2) * 100.0) / 100.0;
        num["num_buildings"] = 1.0 + static_cast<double>(rng.index(3)) + (z > 1.0 ? static_cast<double>(rng.index(3)) : 0.0);
        num["living_units"] = p.propertyType == "MULTI-FAMILY" ? num["num_units"] : 0.0;
        num["percent_leased"] = std::round(rng.uniform(40.0, 100.0));
        num["year_built"] = 1900.0 + static_cast<double>(rng.index(113));
        num["has_sprinkler"] = rng.bernoulli(0.4) ? 1.0 : 0.0;
        num["employees"] = 1.0 + static_cast<double>(rng.index(50));

        const auto& usage = kUsages[weighted_pick(rng, kUsages)];
        p.usageType = usage.type;
        for (int attempt = 0;; ++attempt) {
            std::string name = std::string(pick(rng, kNameFirst)) + " " + pick(rng, kNameSecond) + " " + usage.noun;
            name = to_upper(name);
            if (attempt > 20) name += " " + std::to_string(attempt);
            if (used_names.insert(name).second) {
                p.businessName = name;
                break;
            }
        }
        for (;;) {
            StreetAddress a{std::to_string(1 + rng.index(9999)), pick(rng, kStreets), pick(rng, kSuffixes),
                            rng.bernoulli(0.5) ? pick(rng, kPostDirs) : ""};
            std::string key = a.number + "|" + a.name + "|" + a.suffix + "|" + a.postDir;
            if (used_addresses.insert(key).second) {
                w.addresses[i] = std::move(a);
                break;
            }
        }
        for (;;) {
            char pid[24];
            std::snprintf(pid, sizeof pid, "14-%04llu-%04llu", static_cast<unsigned long long>(rng.index(10000)),
                          static_cast<unsigned long long>(rng.index(10000)));
            if (used_parcels.insert(pid).second) {
                w.parcelIds[i] = pid;
                break;
            }
        }
        p.inspected = rng.bernoulli(cfg.inspectedFraction);
    }

    // Signal features: z-scores of ln(1+x) or category indicators.
    for (const auto& [feature, weight] : cfg.signal.weights) {
        std::vector<double> vals(n, 0.0);
        auto eq = feature.find('=');
        if (eq != std::string::npos) {
            std::string key = feature.substr(0, eq), value = feature.substr(eq + 1);
            for (std::size_t i = 0; i < n; ++i) {
                const auto& p = w.props[i];
                const std::string& v = key == "neighborhood" ? p.neighborhood
                                       : key == "property_type" ? p.propertyType
                                       : key == "usage_type"    ? p.usageType
                                                                : p.zip5;
                vals[i] = v == value ? 1.0 : 0.0;
            }
        } else {
            double mean = 0, sq = 0;
            for (std::size_t i = 0; i < n; ++i) {
                auto it = w.props[i].numeric.find(feature);
                vals[i] = std::log1p(it == w.props[i].numeric.end() ? 0.0 : it->second);
                mean += vals[i];
            }
            mean /= static_cast<double>(std::max<std::size_t>(n, 1));
            for (double v : vals) sq += (v - mean) * (v - mean);
            double sd = std::sqrt(sq / static_cast<double>(std::max<std::size_t>(n, 1)));
            for (double& v : vals) v = sd > 0 ? (v - mean) / sd : 0.0;
        }
        for (std::size_t i = 0; i < n; ++i) w.props[i].linearPredictor += weight * vals[i];
        w.signalValues.push_back(std::move(vals));
    }
    return w;
}

std::vector<TimeWindow> year_slices(const SynthConfig& cfg) {
    std::vector<TimeWindow> out;
    for (Date s = cfg.windowStart; s < cfg.windowEnd; s = add_years(s, 1)) {
        Date e = add_years(s, 1);
        out.push_back({s, std::min(e, cfg.windowEnd)});
    }
    return out;
}

double bisect_bias(const std::function<double(double)>& f, double target) {
    double lo = -30.0, hi = 30.0;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        (f(mid) < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

std::string render_address(const StreetAddress& a, const std::string& zip, bool abbrevSwap, bool streetTypo,
                           Rng& rng) {
    std::string name = streetTypo ? typo(a.name, rng) : a.name;
    std::string suffix = a.suffix;
    std::string post = a.postDir;
    if (abbrevSwap) {
        const auto& vars = suffix_variants().at(a.suffix);
        suffix = vars[rng.index(vars.size())];
        if (!post.empty()) post = directional_words().at(post);
    }
    std::string s = a.number + " " + name + " " + suffix;
    if (!post.empty()) s += " " + post;
    s += ", ATLANTA, GA " + zip;
    return s;
}

}  // namespace

void SynthConfig::validate() const {
    auto bad = [](const std::string& m) { throw Error(Errc::InvalidConfig, m); };
    auto rate = [&](double r, const char* name) {
        if (!(r >= 0.0 && r <= 1.0)) bad(std::string(name) + " must lie in [0,1]");
    };
    if (nProperties == 0) bad("nProperties must be positive");
    if (nFires > nProperties) bad("nFires must not exceed nProperties");
    if (!(windowStart < windowEnd)) bad("windowStart must precede windowEnd");
    rate(corruption.typoRate, "typoRate");
    rate(corruption.abbrevRate, "abbrevRate");
    rate(inspectedFraction, "inspectedFraction");
    rate(costarFraction, "costarFraction");
    rate(costarParcelIdRate, "costarParcelIdRate");
    if (!(corruption.jitterMeters >= 0.0) || !std::isfinite(corruption.jitterMeters)) bad("jitterMeters must be >= 0");
    if (!std::isfinite(signal.bias)) bad("signal bias must be finite");
    if (!(box.minLat < box.maxLat && box.minLon < box.maxLon)) bad("bounding box is empty");
    for (const auto& [k, v] : signal.weights)
        if (!std::isfinite(v)) bad("signal weight for " + k + " must be finite");
}

const std::vector<std::string>& usage_types() {
    static const std::vector<std::string> v = [] {
        std::vector<std::string> out;
        for (const auto& u : kUsages) out.emplace_back(u.type);
        return out;
    }();
    return v;
}

double calibrate_bias(const SynthConfig& cfg, double rate) {
    cfg.validate();
    World w = make_world(cfg);
    auto mean_p = [&](double b) {
        double s = 0;
        for (const auto& p : w.props) s += sigmoid(b + p.linearPredictor);
        return s / static_cast<double>(w.props.size());
    };
    return bisect_bias(mean_p, rate);
}

SynthOutput synth_generate(const SynthConfig& cfg) {
    cfg.validate();
    World w = make_world(cfg);
    const auto n = cfg.nProperties;
    const auto slices = year_slices(cfg);

    SynthOutput out;
    out.bias = cfg.signal.bias;
    if (cfg.nFires > 0) {
        auto expected_burned = [&](double b) {
            double s = 0;
            for (const auto& p : w.props) {
                double q = sigmoid(b + p.linearPredictor);
                s += 1.0 - std::pow(1.0 - q, static_cast<double>(slices.size()));
            }
            return s;
        };
        out.bias = bisect_bias(expected_burned, static_cast<double>(cfg.nFires));
    }

    // Fires per property-year.
    Rng fire_rng(cfg.seed ^ 0xf12e5eedULL);
    std::vector<std::vector<Date>> fires(n);
    for (std::size_t i = 0; i < n; ++i) {
        double q = sigmoid(out.bias + w.props[i].linearPredictor);
        for (const auto& s : slices) {
            double u = fire_rng.uniform();
            auto span = static_cast<std::uint64_t>(days_between(s.start, s.end));
            auto offset = static_cast<int>(fire_rng.index(span));
            if (u < q) fires[i].push_back(add_days(s.start, offset));
        }
    }

    Rng rec_rng(cfg.seed ^ 0x5eed0fdeadbeefULL);
    const auto& cor = cfg.corruption;
    std::map<std::string, std::vector<std::pair<Dataset, std::string>>> members;

    auto emit = [&](Dataset d, const char* prefix, const std::vector<std::size_t>& owners,
                    const std::function<void(SourceRecord&, std::size_t, std::size_t)>& fill) {
        // Shuffle so row order and ids carry no information about the truth.
        std::vector<std::size_t> order(owners.size());
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rec_rng.index(i)]);
        auto& recs = out.records[d];
        recs.reserve(order.size());
        for (std::size_t k = 0; k < order.size(); ++k) {
            std::size_t slot = order[k];
            std::size_t prop = owners[slot];
            SourceRecord r;
            r.dataset = d;
            char id[24];
            std::snprintf(id, sizeof id, "%s-%06zu", prefix, k + 1);
            r.sourceId = id;
            fill(r, prop, slot);
            out.truthOf[r.sourceId] = w.props[prop].id;
            members[w.props[prop].id].emplace_back(d, r.sourceId);
            recs.push_back(std::move(r));
        }
    };

    auto set_address = [&](SourceRecord& r, std::size_t prop, bool corrupt, bool lowercase) {
        bool swap = corrupt && rec_rng.bernoulli(cor.abbrevRate);
        bool street_typo = corrupt && rec_rng.bernoulli(cor.typoRate);
        std::string text = render_address(w.addresses[prop], w.props[prop].zip5, swap, street_typo, rec_rng);
        if (lowercase) text = lower(text);
        r.address = address::normalize_address(text);
    };
    auto set_name = [&](SourceRecord& r, std::size_t prop, bool corrupt, bool lowercase) {
        std::string name = w.props[prop].businessName;
        if (corrupt && rec_rng.bernoulli(cor.typoRate)) name = typo(name, rec_rng);
        r.businessName = lowercase ? lower(name) : name;
    };
    auto set_point = [&](SourceRecord& r, std::size_t prop) {
        r.point = jitter(w.props[prop].point, cor.jitterMeters, rec_rng);
    };
    auto num = [&](SourceRecord& r, std::size_t prop, const char* key) {
        r.attributes[key] = w.props[prop].numeric.at(key);
    };
    auto maybe_num = [&](SourceRecord& r, std::size_t prop, const char* key, double missing) {
        bool drop = rec_rng.bernoulli(missing);
        if (!drop) num(r, prop, key);
    };

    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);

    emit(Dataset::Parcel, "PAR", all, [&](SourceRecord& r, std::size_t prop, std::size_t) {
        r.parcelId = w.parcelIds[prop];
        set_address(r, prop, false, false);
        set_point(r, prop);
        set_name(r, prop, false, false);
        maybe_num(r, prop, "land_area", 0.05);
        maybe_num(r, prop, "lot_size", 0.05);
        maybe_num(r, prop, "appraised_value", 0.05);
        maybe_num(r, prop, "total_taxes", 0.05);
        r.attributes["neighborhood"] = w.props[prop].neighborhood;
    });

    std::vector<std::size_t> costar_owners;
    {
        Rng pick_rng(cfg.seed ^ 0xc057a2ULL);
        for (std::size_t i = 0; i < n; ++i)
            if (pick_rng.bernoulli(cfg.costarFraction)) costar_owners.push_back(i);
    }
    emit(Dataset::Costar, "CST", costar_owners, [&](SourceRecord& r, std::size_t prop, std::size_t) {
        if (rec_rng.bernoulli(cfg.costarParcelIdRate)) r.parcelId = w.parcelIds[prop];
        set_address(r, prop, true, true);
        set_point(r, prop);
        set_name(r, prop, true, true);
        maybe_num(r, prop, "floor_size", 0.08);
        maybe_num(r, prop, "num_units", 0.08);
        maybe_num(r, prop, "num_buildings", 0.05);
        maybe_num(r, prop, "living_units", 0.10);
        maybe_num(r, prop, "percent_leased", 0.30);
        maybe_num(r, prop, "year_built", 0.05);
        maybe_num(r, prop, "has_sprinkler", 0.20);
        if (!rec_rng.bernoulli(0.05)) r.attributes["property_type"] = w.props[prop].propertyType;
    });

    emit(Dataset::BusinessLicense, "BL", all, [&](SourceRecord& r, std::size_t prop, std::size_t) {
        set_address(r, prop, true, false);
        set_point(r, prop);
        set_name(r, prop, true, false);
        r.usageType = w.props[prop].usageType;
        maybe_num(r, prop, "employees", 0.1);
    });

    std::vector<std::size_t> inspected;
    for (std::size_t i = 0; i < n; ++i)
        if (w.props[i].inspected) inspected.push_back(i);
    const int window_days = days_between(cfg.windowStart, cfg.windowEnd);
    emit(Dataset::FirePermits, "FP", inspected, [&](SourceRecord& r, std::size_t prop, std::size_t) {
        set_address(r, prop, true, false);
        set_point(r, prop);
        set_name(r, prop, true, false);
        r.usageType = w.props[prop].usageType;
        r.eventDate = add_days(cfg.windowStart, static_cast<int>(rec_rng.index(static_cast<std::uint64_t>(window_days))));
        r.attributes["permit_type"] = std::string("ANNUAL");
    });

    std::vector<std::size_t> fire_owners;
    std::vector<Date> fire_dates;
    for (std::size_t i = 0; i < n; ++i)
        for (const auto& d : fires[i]) {
            fire_owners.push_back(i);
            fire_dates.push_back(d);
            out.groundTruthFires.push_back({w.props[i].id, d});
        }
    emit(Dataset::FireIncidents, "FI", fire_owners, [&](SourceRecord& r, std::size_t prop, std::size_t slot) {
        set_address(r, prop, true, false);
        set_point(r, prop);
        r.eventDate = fire_dates[slot];
        r.attributes["incident_type"] = std::string("STRUCTURE FIRE");
    });

    for (auto& [pid, list] : members) {
        std::sort(list.begin(), list.end());
        for (std::size_t a = 0; a < list.size(); ++a)
            for (std::size_t b = a + 1; b < list.size(); ++b)
                if (list[a].first != list[b].first)
                    out.groundTruthLinks.push_back({pid, list[a].first, list[a].second, list[b].first, list[b].second});
    }
    out.properties = std::move(w.props);
    return out;
}

void write_corpus(const std::filesystem::path& dir, const SynthOutput& out) {
    try {
        std::filesystem::create_directories(dir);
        for (const auto& [d, recs] : out.records)
            ingest::write_dataset(dir / ingest::file_name(d), recs, ingest::default_schema(d));
        std::vector<csv::Row> links{{"property_id", "left_dataset", "left_id", "right_dataset", "right_id"}};
        for (const auto& l : out.groundTruthLinks)
            links.push_back({l.propertyId, std::string(ingest::to_string(l.leftDataset)), l.leftId,
                             std::string(ingest::to_string(l.rightDataset)), l.rightId});
        csv::write_file(dir / "ground_truth_links.csv", links);
        std::vector<csv::Row> fires{{"property_id", "date"}};
        for (const auto& f : out.groundTruthFires) fires.push_back({f.propertyId, format_date(f.date)});
        csv::write_file(dir / "ground_truth_fires.csv", fires);
    } catch (const std::filesystem::filesystem_error& e) {
        throw Error(Errc::Io, e.what());
    } catch (const csv::Error& e) {
        throw Error(Errc::Io, e.what());
    } catch (const ingest::Error& e) {
        throw Error(Errc::Io, e.what());
    }
}

std::vector<geo::Polygon> synth_overlays(const geo::BoundingBox& box) {
    std::vector<geo::Polygon> out{geo::rectangle("ATL", geo::OverlayKind::City, "City", box)};
    auto grid = [&](geo::OverlayKind kind, int cols, int rows, auto name) {
        double dLon = (box.maxLon - box.minLon) / cols, dLat = (box.maxLat - box.minLat) / rows;
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                auto [id, label] = name(r * cols + c);
                geo::BoundingBox cell{box.minLat + r * dLat, box.minLon + c * dLon, box.minLat + (r + 1) * dLat,
                                      box.minLon + (c + 1) * dLon};
                out.push_back(geo::rectangle(id, kind, label, cell));
            }
    };
    grid(geo::OverlayKind::Npu, 5, 5, [](int i) {
        std::string letter(1, static_cast<char>('A' + i));
        return std::pair{letter, "NPU " + letter};
    });
    grid(geo::OverlayKind::CouncilDistrict, 4, 3, [](int i) {
        return std::pair{std::to_string(i + 1), "District " + std::to_string(i + 1)};
    });
    grid(geo::OverlayKind::Battalion, 2, 2, [](int i) {
        return std::pair{std::to_string(i + 1), "Battalion " + std::to_string(i + 1)};
    });
    return out;
}

}  // namespace firerisk::synth
