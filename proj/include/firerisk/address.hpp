#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "firerisk/common.hpp"

namespace firerisk::address {

enum class Errc { EmptyAddress, NoStreetNumber, NoStreetName, BadTable };
using Error = CodedError<Errc>;

/// A USPS-style normalized street address. All fields uppercase and trimmed.
struct PostalAddress {
    std::string raw;
    std::string streetNumber;
    std::optional<std::string> preDirectional;
    std::string streetName;
    std::optional<std::string> streetSuffix;
    std::optional<std::string> postDirectional;
    std::optional<std::string> unit;
    std::optional<std::string> city;
    std::optional<std::string> state;
    std::optional<std::string> zip5;

    /// Equality ignores `raw`.
    bool same_place(const PostalAddress& o) const;
};

/// Renders the canonical single-line form, e.g.
/// "500 MARTIN LUTHER KING JR DR SE, ATLANTA, GA 30312".
/// normalize(format(a)) reproduces every parsed field of `a`.
std::string format(const PostalAddress& a);
/// Street line only: number, directionals, name, suffix, unit.
std::string format_street(const PostalAddress& a);

struct NormalizationConfig {
    std::map<std::string, std::string, std::less<>> suffixTable;
    std::map<std::string, std::string, std::less<>> directionalTable;
    bool dropPunctuation = true;

    /// Built-in USPS suffix and directional tables.
    static const NormalizationConfig& builtin();
    /// Replaces one or both tables from `variant,canonical` CSV files. Canonical
    /// codes are added as their own keys so the tables stay closed.
    static NormalizationConfig load(const std::optional<std::filesystem::path>& suffixCsv,
                                    const std::optional<std::filesystem::path>& directionalCsv);

    bool is_canonical_suffix(std::string_view code) const;
};

PostalAddress normalize_address(std::string_view raw,
                                const NormalizationConfig& cfg = NormalizationConfig::builtin());

/// Unit-cost Levenshtein distance over bytes.
std::size_t edit_distance(std::string_view a, std::string_view b);

/// Uppercase, strip punctuation, collapse whitespace.
std::string fold(std::string_view s);

/// 1 - d(fold a, fold b) / max(len); 1 when both folds are empty.
double name_similarity(std::string_view a, std::string_view b);

}  // namespace firerisk::address
