#include "firerisk/risk.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "firerisk/csv.hpp"

namespace firerisk::risk {

using linkage::PropertyRecord;

std::string_view to_string(Category c) {
    switch (c) {
    case Category::Low: return "LOW";
    case Category::Medium: return "MEDIUM";
    case Category::High: return "HIGH";
    }
    return "LOW";
}

Category parse_category(std::string_view s) {
    for (auto c : {Category::Low, Category::Medium, Category::High})
        if (s == to_string(c)) return c;
    throw Error(Errc::InvalidConfig, "unknown risk category '" + std::string(s) + "'");
}

int to_score(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(Errc::OutOfRange, "probability outside [0,1]: " + format_double(p));
    double x = 10.0 * p;
    double r = std::round(x);
    if (std::abs(x - r) < 1e-9) x = r;
    return std::max(1, static_cast<int>(std::ceil(x)));
}

Category categorize(int score) {
    if (score < 1 || score > 10) throw Error(Errc::OutOfRange, "risk score outside 1..10: " + std::to_string(score));
    if (score == 1) return Category::Low;
    return score <= 5 ? Category::Medium : Category::High;
}

Mapping parse_mapping(std::string_view s) {
    if (s == "AFFINE") return Mapping::Affine;
    if (s == "QUANTILE") return Mapping::Quantile;
    throw Error(Errc::InvalidConfig, "unknown score mapping '" + std::string(s) + "'");
}

std::string_view to_string(Mapping m) { return m == Mapping::Affine ? "AFFINE" : "QUANTILE"; }

std::vector<RiskScore> make_scores(std::span<const std::string> propertyIds, std::span<const double> probabilities,
                                   Mapping mapping) {
    if (propertyIds.size() != probabilities.size())
        throw Error(Errc::InvalidConfig, "property and probability counts differ");
    std::vector<double> sorted(probabilities.begin(), probabilities.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<RiskScore> out;
    out.reserve(propertyIds.size());
    for (std::size_t i = 0; i < propertyIds.size(); ++i) {
        double p = probabilities[i];
        int s = to_score(p);
        if (mapping == Mapping::Quantile) {
            auto lower = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), p) - sorted.begin());
            s = std::min(10, 1 + static_cast<int>(10 * lower / sorted.size()));
        }
        out.push_back({propertyIds[i], p, s, categorize(s)});
    }
    return out;
}

Assignment assign_scores(std::span<const RiskScore> scored, std::span<const PropertyRecord> modelSet,
                         std::span<const PropertyRecord> inspectionList, const linkage::LinkConfig& cfg) {
    std::map<std::string, const RiskScore*, std::less<>> byId;
    for (const auto& s : scored) byId[s.propertyId] = &s;
    std::vector<PropertyRecord> targets;
    for (const auto& p : modelSet)
        if (byId.count(p.propertyId)) targets.push_back(p);

    auto left = linkage::views(inspectionList);
    auto right = linkage::views(targets);
    auto best = targets.empty() ? std::vector<std::optional<std::size_t>>(inspectionList.size())
                                : linkage::best_matches(left, right, cfg);

    Assignment out;
    out.annotated.reserve(inspectionList.size());
    for (std::size_t i = 0; i < inspectionList.size(); ++i) {
        Annotated a{inspectionList[i], std::nullopt, std::nullopt, {}};
        const auto& p = inspectionList[i];
        if (best[i]) {
            const auto& target = targets[*best[i]];
            a.risk = *byId.at(target.propertyId);
            a.tier = linkage::match_pair(left[i], right[*best[i]], cfg).tier;
            ++out.matched;
        } else if (targets.empty()) {
            a.reason = "NO_SCORED_PROPERTIES";
        } else if (!p.canonicalAddress && !p.point && !p.parcelId) {
            a.reason = "NO_LOCATION";
        } else {
            a.reason = "NO_MATCH";
        }
        out.annotated.push_back(std::move(a));
    }
    return out;
}

void write_scores_csv(const std::filesystem::path& path, std::span<const RiskScore> scores) {
    std::vector<csv::Row> rows{{"propertyId", "probability", "score", "category"}};
    for (const auto& s : scores)
        rows.push_back({s.propertyId, format_double(s.probability), std::to_string(s.score), std::string(to_string(s.category))});
    csv::write_file(path, rows);
}

std::vector<RiskScore> read_scores_csv(const std::filesystem::path& path) {
    auto rows = csv::read_file(path);
    if (rows.empty() || rows[0] != csv::Row{"propertyId", "probability", "score", "category"})
        throw Error(Errc::Io, path.string() + ": unexpected header");
    std::vector<RiskScore> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        auto p = r.size() == 4 ? parse_double(r[1]) : std::nullopt;
        auto s = r.size() == 4 ? parse_double(r[2]) : std::nullopt;
        if (!p || !s) throw Error(Errc::Io, path.string() + ": bad row " + std::to_string(i + 1));
        out.push_back({r[0], *p, static_cast<int>(*s), parse_category(r[3])});
    }
    return out;
}

}  // namespace firerisk::risk
