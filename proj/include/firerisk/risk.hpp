#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "firerisk/common.hpp"
#include "firerisk/linkage.hpp"

namespace firerisk::risk {

enum class Errc { OutOfRange, InvalidConfig, Io };
using Error = CodedError<Errc>;

enum class Category { Low, Medium, High };
std::string_view to_string(Category c);
Category parse_category(std::string_view s);

/// max(1, ceil(10 p)); 10 p within 1e-9 of an integer counts as that integer.
int to_score(double p);
/// LOW = 1, MEDIUM = 2..5, HIGH = 6..10.
Category categorize(int score);

enum class Mapping { Affine, Quantile };
Mapping parse_mapping(std::string_view s);
std::string_view to_string(Mapping m);

struct RiskScore {
    std::string propertyId;
    double probability = 0.0;
    int score = 1;
    Category category = Category::Low;
};

/// Affine: to_score. Quantile: 1 + floor(10 * (# strictly lower) / n), capped at 10.
std::vector<RiskScore> make_scores(std::span<const std::string> propertyIds, std::span<const double> probabilities,
                                   Mapping mapping = Mapping::Affine);

struct Annotated {
    linkage::PropertyRecord property;
    std::optional<RiskScore> risk;
    std::optional<linkage::Tier> tier;
    std::string reason;  // empty when matched
};

struct Assignment {
    std::vector<Annotated> annotated;  // input order, nothing dropped
    std::size_t matched = 0;
};

/// Joins each inspection-list property to the best scored model-set property
/// through the linkage cascade. Unmatched entries carry a reason:
/// NO_SCORED_PROPERTIES, NO_LOCATION or NO_MATCH.
Assignment assign_scores(std::span<const RiskScore> scored, std::span<const linkage::PropertyRecord> modelSet,
                         std::span<const linkage::PropertyRecord> inspectionList, const linkage::LinkConfig& cfg);

/// propertyId,probability,score,category
void write_scores_csv(const std::filesystem::path& path, std::span<const RiskScore> scores);
std::vector<RiskScore> read_scores_csv(const std::filesystem::path& path);

}  // namespace firerisk::risk
