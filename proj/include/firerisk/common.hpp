#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace firerisk {

/// Exception carrying a module-specific error code enum.
template <class Code>
class CodedError : public std::runtime_error {
public:
    CodedError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
    Code code() const noexcept { return code_; }

private:
    Code code_;
};

// ---------------------------------------------------------------------------
// Calendar dates

using Date = std::chrono::year_month_day;

/// Parses strict ISO-8601 "YYYY-MM-DD". Returns nullopt on any deviation.
std::optional<Date> parse_date(std::string_view text);
std::string format_date(const Date& d);
Date make_date(int y, unsigned m, unsigned d);
Date add_years(const Date& d, int years);
Date add_days(const Date& d, int days);
/// Whole days from `from` to `to` (negative when `to` precedes `from`).
int days_between(const Date& from, const Date& to);

/// Half-open calendar window [start, end).
struct TimeWindow {
    Date start;
    Date end;

    bool contains(const Date& d) const { return start <= d && d < end; }
    bool valid() const { return start < end; }
    bool overlaps(const TimeWindow& other) const { return start < other.end && other.start < end; }
};

// ---------------------------------------------------------------------------
// Deterministic randomness

/// mt19937_64 with portable draw helpers. The standard distributions are
/// implementation-defined, so nothing here uses them.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t index(std::uint64_t n);
    /// Uniform real in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    bool bernoulli(double p) { return uniform() < p; }
    double normal();

private:
    std::mt19937_64 engine_;
    std::optional<double> spare_;
};

// ---------------------------------------------------------------------------
// Hashing

/// 64-bit FNV-1a. Stable across platforms; used for ids and digests.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

// ---------------------------------------------------------------------------
// Text helpers

std::string trim(std::string_view s);
std::string to_upper(std::string_view s);
/// Shortest round-trip decimal representation.
std::string format_double(double v);
std::optional<double> parse_double(std::string_view s);

}  // namespace firerisk
