#include "firerisk/address.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <vector>

#include "firerisk/csv.hpp"

namespace firerisk::address {
namespace {

using Table = std::map<std::string, std::string, std::less<>>;

const Table& builtin_suffixes() {
    static const Table t = {
        {"STREET", "ST"},     {"ST", "ST"},         {"STR", "ST"},        {"STRT", "ST"},
        {"AVENUE", "AVE"},    {"AVE", "AVE"},       {"AV", "AVE"},        {"AVN", "AVE"},
        {"AVNUE", "AVE"},     {"BOULEVARD", "BLVD"}, {"BLVD", "BLVD"},    {"BOUL", "BLVD"},
        {"BOULV", "BLVD"},    {"DRIVE", "DR"},      {"DR", "DR"},         {"DRV", "DR"},
        {"DRIV", "DR"},       {"ROAD", "RD"},       {"RD", "RD"},         {"LANE", "LN"},
        {"LN", "LN"},         {"COURT", "CT"},      {"CT", "CT"},         {"PLACE", "PL"},
        {"PL", "PL"},         {"PARKWAY", "PKWY"},  {"PKWY", "PKWY"},     {"PKY", "PKWY"},
        {"PARKWY", "PKWY"},   {"HIGHWAY", "HWY"},   {"HWY", "HWY"},       {"HIWAY", "HWY"},
        {"CIRCLE", "CIR"},    {"CIR", "CIR"},       {"CIRC", "CIR"},      {"TRAIL", "TRL"},
        {"TRL", "TRL"},       {"WAY", "WAY"},       {"WY", "WAY"},        {"TERRACE", "TER"},
        {"TER", "TER"},       {"SQUARE", "SQ"},     {"SQ", "SQ"},         {"PLAZA", "PLZ"},
        {"PLZ", "PLZ"},       {"CROSSING", "XING"}, {"XING", "XING"},     {"EXPRESSWAY", "EXPY"},
        {"EXPY", "EXPY"},     {"FREEWAY", "FWY"},   {"FWY", "FWY"},       {"ALLEY", "ALY"},
        {"ALY", "ALY"},       {"LOOP", "LOOP"},     {"RUN", "RUN"},       {"PATH", "PATH"},
        {"PIKE", "PIKE"},     {"ROW", "ROW"},       {"WALK", "WALK"},     {"BEND", "BND"},
        {"BND", "BND"},       {"COVE", "CV"},       {"CV", "CV"},         {"TRACE", "TRCE"},
        {"TRCE", "TRCE"},     {"POINT", "PT"},      {"PT", "PT"},         {"RIDGE", "RDG"},
        {"RDG", "RDG"},       {"VIEW", "VW"},       {"VW", "VW"},         {"HEIGHTS", "HTS"},
        {"HTS", "HTS"},       {"CRESCENT", "CRES"}, {"CRES", "CRES"},     {"CENTER", "CTR"},
        {"CTR", "CTR"},       {"COMMONS", "CMNS"},  {"CMNS", "CMNS"},
    };
    return t;
}

const Table& builtin_directionals() {
    static const Table t = {
        {"N", "N"},   {"NORTH", "N"},     {"S", "S"},   {"SOUTH", "S"},
        {"E", "E"},   {"EAST", "E"},      {"W", "W"},   {"WEST", "W"},
        {"NE", "NE"}, {"NORTHEAST", "NE"}, {"NW", "NW"}, {"NORTHWEST", "NW"},
        {"SE", "SE"}, {"SOUTHEAST", "SE"}, {"SW", "SW"}, {"SOUTHWEST", "SW"},
    };
    return t;
}

const Table& unit_designators() {
    static const Table t = {
        {"APT", "APT"},   {"APARTMENT", "APT"}, {"STE", "STE"}, {"SUITE", "STE"},
        {"UNIT", "UNIT"}, {"BLDG", "BLDG"},     {"BUILDING", "BLDG"}, {"FL", "FL"},
        {"FLOOR", "FL"},  {"RM", "RM"},         {"ROOM", "RM"}, {"#", "#"},
    };
    return t;
}

bool is_state_code(std::string_view t) {
    static constexpr std::array<std::string_view, 51> kStates = {
        "AK", "AL", "AR", "AZ", "CA", "CO", "CT", "DC", "DE", "FL", "GA", "HI", "IA",
        "ID", "IL", "IN", "KS", "KY", "LA", "MA", "MD", "ME", "MI", "MN", "MO", "MS",
        "MT", "NC", "ND", "NE", "NH", "NJ", "NM", "NV", "NY", "OH", "OK", "OR", "PA",
        "RI", "SC", "SD", "TN", "TX", "UT", "VA", "VT", "WA", "WI", "WV", "WY"};
    return std::find(kStates.begin(), kStates.end(), t) != kStates.end();
}

bool all_digits(std::string_view t) {
    return !t.empty() && std::all_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; });
}

// Digit groups joined by hyphens: "123", "123-125", "30312-1234".
bool is_digit_groups(std::string_view t) {
    if (t.empty() || t.front() == '-' || t.back() == '-') return false;
    bool prev_dash = false;
    for (char c : t) {
        if (c == '-') {
            if (prev_dash) return false;
            prev_dash = true;
        } else if (c >= '0' && c <= '9') {
            prev_dash = false;
        } else {
            return false;
        }
    }
    return true;
}

bool is_street_number(std::string_view t) {
    if (t.empty()) return false;
    if (t.back() >= 'A' && t.back() <= 'Z') t.remove_suffix(1);
    return is_digit_groups(t);
}

bool is_zip(std::string_view t) {
    if (t.size() == 5) return all_digits(t);
    return t.size() == 10 && t[5] == '-' && all_digits(t.substr(0, 5)) && all_digits(t.substr(6));
}

// Uppercases and splits one comma-free segment into tokens. Hyphens survive
// only inside digit-group tokens (street numbers, ZIP+4).
std::vector<std::string> tokenize(std::string_view segment, bool dropPunctuation) {
    std::string cleaned;
    cleaned.reserve(segment.size() + 4);
    for (char raw : segment) {
        char c = static_cast<char>(std::toupper(static_cast<unsigned char>(raw)));
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '-') {
            cleaned.push_back(c);
        } else if (c == '#') {
            cleaned += " # ";
        } else if (c == '.' || c == '\'') {
            if (!dropPunctuation) cleaned.push_back(c);
        } else {
            cleaned.push_back(' ');
        }
    }
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < cleaned.size()) {
        while (i < cleaned.size() && cleaned[i] == ' ') ++i;
        std::size_t j = i;
        while (j < cleaned.size() && cleaned[j] != ' ') ++j;
        if (j > i) {
            std::string tok = cleaned.substr(i, j - i);
            if (tok.find('-') == std::string::npos || is_digit_groups(tok) || is_street_number(tok)) {
                tokens.push_back(std::move(tok));
            } else {
                std::size_t a = 0;
                while (a <= tok.size()) {
                    std::size_t b = tok.find('-', a);
                    if (b == std::string::npos) b = tok.size();
                    if (b > a) tokens.push_back(tok.substr(a, b - a));
                    a = b + 1;
                }
            }
        }
        i = j;
    }
    return tokens;
}

std::string join(const std::vector<std::string>& tokens, std::size_t first, std::size_t last) {
    std::string out;
    for (std::size_t i = first; i < last; ++i) {
        if (!out.empty()) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

std::vector<std::string_view> split_commas(std::string_view s) {
    std::vector<std::string_view> parts;
    std::size_t a = 0;
    while (true) {
        std::size_t b = s.find(',', a);
        parts.push_back(s.substr(a, b == std::string_view::npos ? std::string_view::npos : b - a));
        if (b == std::string_view::npos) break;
        a = b + 1;
    }
    return parts;
}

// Peels an optional ZIP then an optional state off the back of `tokens`,
// never consuming below `keep` tokens. On a bare street line a state is only
// taken after a ZIP, and never when it reads as a suffix or directional
// ("CT", "NE").
void peel_state_zip(std::vector<std::string>& tokens, std::size_t keep, PostalAddress& out,
                    const NormalizationConfig* streetLine = nullptr) {
    bool took_zip = false;
    if (tokens.size() > keep && is_zip(tokens.back())) {
        out.zip5 = tokens.back().substr(0, 5);
        tokens.pop_back();
        took_zip = true;
    }
    if (streetLine) {
        if (!took_zip || tokens.size() <= keep) return;
        const auto& t = tokens.back();
        if (streetLine->suffixTable.count(t) || streetLine->directionalTable.count(t)) return;
    }
    if (tokens.size() > keep && tokens.back().size() == 2 && is_state_code(tokens.back())) {
        out.state = tokens.back();
        tokens.pop_back();
    }
}

Table load_table(const std::filesystem::path& path) {
    auto rows = csv::read_file(path);
    if (rows.empty() || rows[0].size() != 2 || to_upper(trim(rows[0][0])) != "VARIANT" ||
        to_upper(trim(rows[0][1])) != "CANONICAL")
        throw Error(Errc::BadTable, path.string() + ": expected header variant,canonical");
    Table t;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() == 1 && trim(r[0]).empty()) continue;
        if (r.size() != 2) throw Error(Errc::BadTable, path.string() + ": row " + std::to_string(i) + " needs 2 fields");
        std::string variant = to_upper(trim(r[0]));
        std::string canonical = to_upper(trim(r[1]));
        if (variant.empty() || canonical.empty())
            throw Error(Errc::BadTable, path.string() + ": empty entry at row " + std::to_string(i));
        t[variant] = canonical;
    }
    // Close the table: canonical codes map to themselves.
    std::vector<std::string> canon;
    for (const auto& [_, c] : t) canon.push_back(c);
    for (const auto& c : canon) t.emplace(c, c);
    return t;
}

}  // namespace

bool PostalAddress::same_place(const PostalAddress& o) const {
    return streetNumber == o.streetNumber && preDirectional == o.preDirectional &&
           streetName == o.streetName && streetSuffix == o.streetSuffix &&
           postDirectional == o.postDirectional && unit == o.unit && city == o.city &&
           state == o.state && zip5 == o.zip5;
}

std::string format_street(const PostalAddress& a) {
    std::string s = a.streetNumber;
    auto add = [&](const std::string& part) {
        if (part.empty()) return;
        if (!s.empty()) s.push_back(' ');
        s += part;
    };
    if (a.preDirectional) add(*a.preDirectional);
    add(a.streetName);
    if (a.streetSuffix) add(*a.streetSuffix);
    if (a.postDirectional) add(*a.postDirectional);
    if (a.unit) add(*a.unit);
    return s;
}

std::string format(const PostalAddress& a) {
    std::string s = format_street(a);
    if (a.city) s += ", " + *a.city;
    if (a.state || a.zip5) {
        s += ",";
        if (a.state) s += " " + *a.state;
        if (a.zip5) s += " " + *a.zip5;
    }
    return s;
}

const NormalizationConfig& NormalizationConfig::builtin() {
    static const NormalizationConfig cfg{builtin_suffixes(), builtin_directionals(), true};
    return cfg;
}

NormalizationConfig NormalizationConfig::load(const std::optional<std::filesystem::path>& suffixCsv,
                                              const std::optional<std::filesystem::path>& directionalCsv) {
    NormalizationConfig cfg = builtin();
    if (suffixCsv) cfg.suffixTable = load_table(*suffixCsv);
    if (directionalCsv) cfg.directionalTable = load_table(*directionalCsv);
    return cfg;
}

bool NormalizationConfig::is_canonical_suffix(std::string_view code) const {
    auto it = suffixTable.find(code);
    return it != suffixTable.end() && it->second == code;
}

PostalAddress normalize_address(std::string_view raw, const NormalizationConfig& cfg) {
    std::string trimmed = trim(raw);
    if (trimmed.empty()) throw Error(Errc::EmptyAddress, "address is blank");

    PostalAddress out;
    out.raw = std::string(raw);

    auto segments = split_commas(trimmed);
    auto street = tokenize(segments[0], cfg.dropPunctuation);
    if (street.empty() || !is_street_number(street.front()))
        throw Error(Errc::NoStreetNumber, "no leading street number in '" + trimmed + "'");
    out.streetNumber = street.front();

    std::vector<std::string> rest;
    for (std::size_t s = 1; s < segments.size(); ++s) {
        auto toks = tokenize(segments[s], cfg.dropPunctuation);
        if (toks.empty()) continue;
        auto unit_it = unit_designators().find(toks.front());
        if (!out.unit && unit_it != unit_designators().end() && toks.size() >= 2) {
            out.unit = unit_it->second + " " + join(toks, 1, toks.size());
            continue;
        }
        rest.insert(rest.end(), toks.begin(), toks.end());
    }

    // Single-segment input may still end in "STATE ZIP".
    if (segments.size() == 1) peel_state_zip(street, 2, out, &cfg);

    // Unit: first designator after at least one name token, with a value after it.
    for (std::size_t i = 2; i + 1 < street.size(); ++i) {
        auto it = unit_designators().find(street[i]);
        if (it != unit_designators().end()) {
            if (!out.unit) out.unit = it->second + " " + join(street, i + 1, street.size());
            street.resize(i);
            break;
        }
    }

    std::size_t first = 1, last = street.size();
    if (last - first >= 2) {
        if (auto it = cfg.directionalTable.find(street[last - 1]); it != cfg.directionalTable.end()) {
            out.postDirectional = it->second;
            --last;
        }
    }
    if (last - first >= 2) {
        if (auto it = cfg.suffixTable.find(street[last - 1]); it != cfg.suffixTable.end()) {
            out.streetSuffix = it->second;
            --last;
        }
    }
    if (last - first >= 2) {
        if (auto it = cfg.directionalTable.find(street[first]); it != cfg.directionalTable.end()) {
            out.preDirectional = it->second;
            ++first;
        }
    }
    out.streetName = join(street, first, last);
    if (out.streetName.empty()) throw Error(Errc::NoStreetName, "no street name in '" + trimmed + "'");

    if (!rest.empty()) {
        peel_state_zip(rest, 0, out);
        if (!rest.empty()) out.city = join(rest, 0, rest.size());
    }
    return out;
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
    if (a.size() < b.size()) std::swap(a, b);
    std::vector<std::size_t> row(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diag = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            std::size_t up = row[j];
            std::size_t sub = diag + (a[i - 1] == b[j - 1] ? 0 : 1);
            row[j] = std::min({up + 1, row[j - 1] + 1, sub});
            diag = up;
        }
    }
    return row[b.size()];
}

std::string fold(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char raw : s) {
        auto c = static_cast<unsigned char>(raw);
        if (std::isalnum(c)) {
            if (pending_space && !out.empty()) out.push_back(' ');
            pending_space = false;
            out.push_back(static_cast<char>(std::toupper(c)));
        } else if (std::isspace(c)) {
            pending_space = true;
        }
    }
    return out;
}

double name_similarity(std::string_view a, std::string_view b) {
    std::string fa = fold(a), fb = fold(b);
    std::size_t len = std::max(fa.size(), fb.size());
    if (len == 0) return 1.0;
    return 1.0 - static_cast<double>(edit_distance(fa, fb)) / static_cast<double>(len);
}

}  // namespace firerisk::address
