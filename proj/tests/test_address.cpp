#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "firerisk/address.hpp"
#include "firerisk/common.hpp"

using namespace firerisk;
using namespace firerisk::address;

namespace {

// Exponential recursion over edit scripts; shares nothing with the DP.
std::size_t brute_edit_distance(std::string_view a, std::string_view b) {
    if (a.empty()) return b.size();
    if (b.empty()) return a.size();
    std::size_t del = brute_edit_distance(a.substr(1), b) + 1;
    std::size_t ins = brute_edit_distance(a, b.substr(1)) + 1;
    std::size_t sub = brute_edit_distance(a.substr(1), b.substr(1)) + (a[0] == b[0] ? 0 : 1);
    return std::min({del, ins, sub});
}

std::string random_string(Rng& rng, std::size_t maxLen, std::string_view alphabet = "abc") {
    std::size_t len = rng.index(maxLen + 1);
    std::string s;
    for (std::size_t i = 0; i < len; ++i) s.push_back(alphabet[rng.index(alphabet.size())]);
    return s;
}

}  // namespace

TEST_CASE("normalize_address: canonical abbreviated address") {
    auto a = normalize_address("123 peachtree st nw");
    CHECK(a.streetNumber == "123");
    CHECK(a.streetName == "PEACHTREE");
    CHECK(a.streetSuffix == "ST");
    CHECK(a.postDirectional == "NW");
    CHECK_FALSE(a.preDirectional);
    CHECK_FALSE(a.city);
    CHECK_FALSE(a.zip5);
}

TEST_CASE("normalize_address: full street line with city, state, zip") {
    // Hand run of the tables: DRIVE -> DR (suffix), SE -> SE (post-directional),
    // remaining middle tokens form the name; ", Atlanta" is the city and
    // "GA 30312" splits into state and ZIP.
    auto a = normalize_address("500 Martin Luther King Jr Drive SE, Atlanta, GA 30312");
    CHECK(a.streetNumber == "500");
    CHECK(a.streetName == "MARTIN LUTHER KING JR");
    CHECK(a.streetSuffix == "DR");
    CHECK(a.postDirectional == "SE");
    CHECK(a.city == "ATLANTA");
    CHECK(a.state == "GA");
    CHECK(a.zip5 == "30312");
    CHECK(format(a) == "500 MARTIN LUTHER KING JR DR SE, ATLANTA, GA 30312");
}

TEST_CASE("normalize_address: errors") {
    auto code_of = [](std::string_view raw) {
        try {
            normalize_address(raw);
        } catch (const Error& e) {
            return e.code();
        }
        FAIL("expected an error");
        return Errc::BadTable;
    };
    CHECK(code_of("   ") == Errc::EmptyAddress);
    CHECK(code_of("") == Errc::EmptyAddress);
    CHECK(code_of("Peachtree Street") == Errc::NoStreetNumber);
    CHECK(code_of("123") == Errc::NoStreetName);
}

TEST_CASE("normalize_address: variants collapse") {
    auto a = normalize_address("123 Peachtree Street");
    auto b = normalize_address("123 PEACHTREE ST.");
    CHECK(a.same_place(b));

    auto c = normalize_address("77 North Avenue Northwest");
    CHECK(c.streetName == "NORTH");
    CHECK(c.streetSuffix == "AVE");
    CHECK(c.postDirectional == "NW");

    auto d = normalize_address("10 N Highland Ave");
    CHECK(d.preDirectional == "N");
    CHECK(d.streetName == "HIGHLAND");

    auto e = normalize_address("200 Main St Suite 300, Atlanta, GA 30303-1234");
    CHECK(e.unit == "STE 300");
    CHECK(e.zip5 == "30303");

    auto f = normalize_address("12-14 Joe's Winn-Dixie Rd #5");
    CHECK(f.streetNumber == "12-14");
    CHECK(f.streetName == "JOES WINN DIXIE");
    CHECK(f.unit == "# 5");

    auto g = normalize_address("42 Main Ct 30303");
    CHECK(g.streetSuffix == "CT");
    CHECK(g.zip5 == "30303");
    CHECK_FALSE(g.state);
}

TEST_CASE("normalize_address: unparsed trailing tokens stay in the street name") {
    auto a = normalize_address("123 Main St Atlanta");
    CHECK(a.streetName == "MAIN ST ATLANTA");
    CHECK_FALSE(a.streetSuffix);
}

TEST_CASE("normalize_address: idempotent on generated addresses") {
    const char* names[] = {"PEACHTREE", "PONCE DE LEON", "MARTIN LUTHER KING JR", "NORTH", "OAK", "ST CHARLES"};
    const char* suffixes[] = {"Street", "st", "AVENUE", "Ave.", "drive", "BLVD", "Court", "", "pkwy", "Circle"};
    const char* dirs[] = {"", "NW", "northeast", "S", "West"};
    const char* units[] = {"", " Suite 100", " #4", " Apt 2B"};
    const char* tails[] = {"", ", Atlanta, GA 30312", ", ATLANTA", ", GA", " GA 30303", ", Decatur, GA 30030-1234"};
    Rng rng(7);
    const auto& cfg = NormalizationConfig::builtin();
    for (int i = 0; i < 2000; ++i) {
        std::string raw = std::to_string(1 + rng.index(9999)) + " ";
        std::string pre = dirs[rng.index(5)];
        if (!pre.empty() && rng.bernoulli(0.3)) raw += pre + " ";
        raw += names[rng.index(6)];
        std::string suf = suffixes[rng.index(10)];
        if (!suf.empty()) raw += " " + suf;
        std::string post = dirs[rng.index(5)];
        if (!post.empty()) raw += " " + post;
        raw += units[rng.index(4)];
        raw += tails[rng.index(6)];
        if (rng.bernoulli(0.5)) raw = to_upper(raw);

        auto once = normalize_address(raw);
        auto twice = normalize_address(format(once));
        INFO(raw, " -> ", format(once));
        CHECK(once.same_place(twice));
        CHECK(format(once) == format(twice));
        if (once.streetSuffix) CHECK(cfg.is_canonical_suffix(*once.streetSuffix));
        if (once.zip5) {
            CHECK(once.zip5->size() == 5);
            CHECK(std::all_of(once.zip5->begin(), once.zip5->end(), [](char c) { return c >= '0' && c <= '9'; }));
        }
        for (const auto* field : {&once.streetNumber, &once.streetName})
            CHECK(*field == trim(to_upper(*field)));
    }
}

TEST_CASE("NormalizationConfig: builtin tables are closed") {
    const auto& cfg = NormalizationConfig::builtin();
    CHECK(cfg.suffixTable.size() >= 60);
    for (const auto& [variant, canonical] : cfg.suffixTable) CHECK(cfg.suffixTable.at(canonical) == canonical);
    for (const auto& [variant, canonical] : cfg.directionalTable)
        CHECK(cfg.directionalTable.at(canonical) == canonical);
}

TEST_CASE("NormalizationConfig: tables load from CSV") {
    auto dir = std::filesystem::temp_directory_path() / "firerisk_addr_tables";
    std::filesystem::create_directories(dir);
    {
        std::ofstream(dir / "suffix.csv") << "variant,canonical\nSTREET,ST\nGATA,GT\n";
        std::ofstream(dir / "bad.csv") << "from,to\nA,B\n";
    }
    auto cfg = NormalizationConfig::load(dir / "suffix.csv", std::nullopt);
    CHECK(cfg.suffixTable.size() == 4);  // 2 variants + 2 self-mapped canonicals
    CHECK(cfg.is_canonical_suffix("GT"));
    CHECK(normalize_address("9 Long Gata", cfg).streetSuffix == "GT");
    CHECK_FALSE(normalize_address("9 Long Avenue", cfg).streetSuffix);
    CHECK_THROWS_AS(NormalizationConfig::load(dir / "bad.csv", std::nullopt), Error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("edit_distance: examples") {
    CHECK(edit_distance("", "") == 0);
    CHECK(edit_distance("abc", "abc") == 0);
    CHECK(brute_edit_distance("kitten", "sitting") == 3);
    CHECK(edit_distance("kitten", "sitting") == 3);
    CHECK(edit_distance("", "abcd") == 4);
}

TEST_CASE("edit_distance: matches brute force, symmetric, triangle inequality") {
    Rng rng(11);
    for (int i = 0; i < 300; ++i) {
        auto a = random_string(rng, 7), b = random_string(rng, 7), c = random_string(rng, 7);
        std::size_t ab = edit_distance(a, b);
        CHECK(ab == brute_edit_distance(a, b));
        CHECK(ab == edit_distance(b, a));
        CHECK((ab == 0) == (a == b));
        CHECK(edit_distance(a, c) <= ab + edit_distance(b, c));
    }
}

TEST_CASE("name_similarity") {
    CHECK(name_similarity("Joe's Diner", "JOES DINER") == 1.0);
    CHECK(name_similarity("", "") == 1.0);
    CHECK(name_similarity("ACME AUTO REPAIR", "ACME AUTO REPAIRS") == doctest::Approx(16.0 / 17.0).epsilon(1e-12));
    CHECK(name_similarity("abc", "") == 0.0);
    CHECK(fold("  Joe's   Diner, Inc. ") == "JOES DINER INC");

    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        auto a = random_string(rng, 10, "ab c'D"), b = random_string(rng, 10, "ab c'D");
        CHECK(name_similarity(a, a) == 1.0);
        CHECK(name_similarity(a, b) == name_similarity(b, a));
        double s = name_similarity(a, b);
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
    }
}
