#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include "doctest.h"
#include "firerisk/linkage.hpp"
#include "firerisk/synth.hpp"
#include "link_quality.hpp"

using namespace firerisk;
using namespace firerisk::linkage;
using ingest::Dataset;
using ingest::SourceRecord;

namespace {

SourceRecord rec(std::string id, Dataset d = Dataset::Parcel) {
    SourceRecord r;
    r.sourceId = std::move(id);
    r.dataset = d;
    return r;
}

geo::GeoPoint north_of(geo::GeoPoint p, double meters) {
    return {p.lat + meters / geo::kEarthRadiusMeters * 180.0 / 3.14159265358979323846, p.lon};
}

const geo::GeoPoint kCenter{33.75, -84.39};

}  // namespace

TEST_CASE("match_pair: tier cascade examples") {
    LinkConfig cfg;
    auto a = rec("a"), b = rec("b", Dataset::Costar);
    a.parcelId = b.parcelId = "14-0123-0456";
    a.address = address::normalize_address("1 Oak St");
    b.address = address::normalize_address("999 Elm Ave");
    CHECK(match_pair(a, b, cfg).tier == Tier::ParcelId);

    auto c = rec("c"), d = rec("d");
    c.address = address::normalize_address("123 PEACHTREE ST");
    d.address = address::normalize_address("123 peachtree street");
    CHECK(match_pair(c, d, cfg).tier == Tier::AddressExact);

    auto e = rec("e"), f = rec("f");
    e.point = kCenter;
    f.point = north_of(kCenter, 30.0);
    e.businessName = "ACME AUTO REPAIR";
    f.businessName = "ACME AUTO REPAIRS";
    auto m = match_pair(e, f, cfg);
    CHECK(m.tier == Tier::GeoFuzzy);
    CHECK(*m.similarity == doctest::Approx(16.0 / 17.0).epsilon(1e-12));
    CHECK(*m.distanceMeters == doctest::Approx(30.0).epsilon(1e-6));

    f.businessName = "ZENITH BAKERY";
    CHECK(match_pair(e, f, cfg).tier == Tier::NoMatch);
    auto loose = cfg;
    loose.requireNameWithGeo = false;
    CHECK(match_pair(e, f, loose).tier == Tier::GeoFuzzy);
    f.point = north_of(kCenter, 60.0);
    CHECK(match_pair(e, f, loose).tier == Tier::NoMatch);
}

TEST_CASE("match_pair: zip compared only when both sides carry one") {
    LinkConfig cfg;
    auto a = rec("a"), b = rec("b");
    a.address = address::normalize_address("5 Oak St, Atlanta, GA 30303");
    b.address = address::normalize_address("5 Oak St");
    CHECK(match_pair(a, b, cfg).tier == Tier::AddressExact);
    b.address = address::normalize_address("5 Oak St 30304");
    CHECK(match_pair(a, b, cfg).tier == Tier::NoMatch);
    b.address = address::normalize_address("5 Oak Ave 30303");
    CHECK(match_pair(a, b, cfg).tier == Tier::NoMatch);
}

TEST_CASE("match_pair: tier is symmetric") {
    synth::SynthConfig sc;
    sc.seed = 12;
    sc.nProperties = 120;
    sc.corruption = {0.2, 0.5, 30.0};
    auto out = synth::synth_generate(sc);
    std::vector<SourceRecord> all;
    for (const auto& [d, recs] : out.records) all.insert(all.end(), recs.begin(), recs.end());
    LinkConfig cfg;
    Rng rng(1);
    for (int i = 0; i < 3000; ++i) {
        const auto& a = all[rng.index(all.size())];
        const auto& b = all[rng.index(all.size())];
        CHECK(match_pair(a, b, cfg).tier == match_pair(b, a, cfg).tier);
    }
}

TEST_CASE("block_candidates: examples") {
    LinkConfig cfg;
    std::vector<SourceRecord> a{rec("a")}, b{rec("b")};
    auto pairs = [&] {
        auto va = views(a), vb = views(b);
        return block_candidates(va, vb, cfg);
    };
    a[0].point = kCenter;
    b[0].point = north_of(kCenter, 10.0);
    CHECK(pairs() == std::vector<CandidatePair>{{0, 0}});

    a[0].address = address::normalize_address("1 Oak St 30303");
    b[0].address = address::normalize_address("2 Elm St 30318");
    b[0].point = north_of(kCenter, 50000.0);
    CHECK(pairs().empty());

    a[0].parcelId = b[0].parcelId = "14-0001-0002";
    b[0].point = north_of(kCenter, 10000.0);
    CHECK(pairs() == std::vector<CandidatePair>{{0, 0}});

    auto vb = views(b);
    CHECK(block_candidates({}, vb, cfg).empty());
}

TEST_CASE("block_candidates: superset of every matching pair") {
    synth::SynthConfig sc;
    sc.seed = 31;
    sc.nProperties = 150;
    sc.corruption = {0.3, 0.5, 40.0};
    auto out = synth::synth_generate(sc);
    const auto& left = out.records.at(Dataset::BusinessLicense);
    const auto& right = out.records.at(Dataset::Costar);
    auto lv = views(left), rv = views(right);
    for (double radius : {50.0, 400.0, 3000.0}) {
        LinkConfig cfg;
        cfg.radiusMeters = radius;
        cfg.requireNameWithGeo = false;
        auto pairs = block_candidates(lv, rv, cfg);
        CHECK(std::is_sorted(pairs.begin(), pairs.end()));
        CHECK(std::adjacent_find(pairs.begin(), pairs.end()) == pairs.end());
        std::set<CandidatePair> blocked(pairs.begin(), pairs.end());
        std::size_t matched = 0;
        for (std::size_t i = 0; i < lv.size(); ++i)
            for (std::size_t j = 0; j < rv.size(); ++j)
                if (match_pair(lv[i], rv[j], cfg).tier != Tier::NoMatch) {
                    ++matched;
                    CHECK(blocked.count({i, j}) == 1);
                }
        CHECK(matched >= lv.size() / 2);
    }
}

TEST_CASE("link_datasets: ranking and tie-break") {
    LinkConfig cfg;
    std::string base(50, 'A');
    for (std::size_t i = 0; i < base.size(); ++i) base[i] = static_cast<char>('A' + i % 26);
    auto edits = [&](int k) {
        std::string s = base;
        for (int i = 0; i < k; ++i) s[static_cast<std::size_t>(i) * 3] = '9';
        return s;
    };
    auto l = rec("L"), r1 = rec("R1"), r2 = rec("R2");
    l.point = r1.point = r2.point = kCenter;
    l.businessName = base;
    r1.businessName = edits(6);  // 0.88
    r2.businessName = edits(5);  // 0.90
    std::vector left{l};
    std::vector right{r1, r2};
    auto links = link_datasets(left, right, cfg);
    REQUIRE(links.size() == 1);
    CHECK(links[0].rightId == "R2");
    CHECK(*links[0].similarity == doctest::Approx(0.90));

    r1.businessName = r2.businessName = edits(5);
    right = {r2, r1};
    links = link_datasets(left, right, cfg);
    REQUIRE(links.size() == 1);
    CHECK(links[0].rightId == "R1");
}

TEST_CASE("link_datasets: one-to-one, serial equals parallel, threshold monotone") {
    synth::SynthConfig sc;
    sc.seed = 77;
    sc.nProperties = 300;
    sc.corruption = {0.2, 0.4, 30.0};
    auto out = synth::synth_generate(sc);
    const auto& left = out.records.at(Dataset::Costar);
    const auto& right = out.records.at(Dataset::BusinessLicense);
    auto lv = views(left), rv = views(right);

    LinkConfig cfg;
    auto par = link_datasets(lv, rv, cfg);
    auto ser = link_datasets_serial(lv, rv, cfg);
    REQUIRE(par.size() == ser.size());
    for (std::size_t i = 0; i < par.size(); ++i) {
        CHECK(par[i].leftId == ser[i].leftId);
        CHECK(par[i].rightId == ser[i].rightId);
        CHECK(par[i].tier == ser[i].tier);
    }
    std::set<std::string> ls, rs;
    for (const auto& d : par) {
        CHECK(ls.insert(d.leftId).second);
        CHECK(rs.insert(d.rightId).second);
        CHECK(d.tier != Tier::NoMatch);
        if (d.tier == Tier::GeoFuzzy) {
            CHECK(*d.distanceMeters <= cfg.radiusMeters);
            CHECK(*d.similarity >= cfg.nameThreshold);
        }
    }
    auto pairs = block_candidates(lv, rv, cfg);
    auto a = score_candidates(lv, rv, pairs, cfg), b = score_candidates_serial(lv, rv, pairs, cfg);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].tier == b[i].tier);

    auto geo_links = [&](double thr) {
        LinkConfig c;
        c.nameThreshold = thr;
        auto pairs = block_candidates(lv, rv, c);
        std::size_t n = 0;
        for (const auto& d : score_candidates(lv, rv, pairs, c)) n += d.tier == Tier::GeoFuzzy;
        return n;
    };
    std::size_t prev = geo_links(0.5);
    for (double thr : {0.6, 0.7, 0.85, 0.9, 0.95, 1.0}) {
        std::size_t n = geo_links(thr);
        CHECK(n <= prev);
        prev = n;
    }
}

TEST_CASE("link quality: zero corruption is exact") {
    synth::SynthConfig sc;
    sc.seed = 5;
    sc.nProperties = 400;
    auto out = synth::synth_generate(sc);
    auto q = testsupport::link_quality(out, {Dataset::Parcel, Dataset::Costar, Dataset::BusinessLicense}, {});
    CHECK(q.truth == 3 * 400);
    CHECK(q.precision() == 1.0);
    CHECK(q.recall() == 1.0);
}

TEST_CASE("link quality: moderate corruption") {
    synth::SynthConfig sc;
    sc.seed = 6;
    sc.nProperties = 400;
    sc.corruption = {0.1, 0.3, 25.0};
    auto out = synth::synth_generate(sc);
    auto q = testsupport::link_quality(out, {Dataset::Parcel, Dataset::Costar, Dataset::BusinessLicense}, {});
    MESSAGE("precision ", q.precision(), " recall ", q.recall());
    CHECK(q.precision() >= 0.99);
    CHECK(q.recall() >= 0.95);
}

TEST_CASE("best_matches: many-to-one") {
    LinkConfig cfg;
    cfg.requireNameWithGeo = false;
    std::vector<SourceRecord> incidents{rec("i1", Dataset::FireIncidents), rec("i2", Dataset::FireIncidents),
                                        rec("i3", Dataset::FireIncidents)};
    std::vector<SourceRecord> props{rec("p1"), rec("p2")};
    props[0].point = kCenter;
    props[1].point = north_of(kCenter, 500.0);
    incidents[0].point = north_of(kCenter, 5.0);
    incidents[1].point = north_of(kCenter, 10.0);
    incidents[2].point = north_of(kCenter, 250.0);
    auto iv = views(incidents), pv = views(props);
    auto m = best_matches(iv, pv, cfg);
    CHECK(m[0] == std::optional<std::size_t>{0});
    CHECK(m[1] == std::optional<std::size_t>{0});
    CHECK_FALSE(m[2]);
}

TEST_CASE("fuse: precedence, prefixes, permutation invariance") {
    auto parcel = rec("PAR-1", Dataset::Parcel);
    parcel.parcelId = "14-1";
    parcel.address = address::normalize_address("10 Oak St");
    parcel.point = kCenter;
    parcel.attributes["land_area"] = 100.0;
    parcel.attributes["neighborhood"] = std::string("NBHD-01");

    auto costar = rec("CST-1", Dataset::Costar);
    costar.parcelId = "14-9";
    costar.address = address::normalize_address("10 Oak Street Suite 2");
    costar.point = north_of(kCenter, 5.0);
    costar.businessName = "acme";
    costar.attributes["floor_size"] = 2500.0;

    auto license = rec("BL-1", Dataset::BusinessLicense);
    license.address = address::normalize_address("10 Oak St");
    license.businessName = "ACME";
    license.usageType = "RESTAURANT";
    license.point = north_of(kCenter, 10.0);
    license.pointGeocoded = true;
    license.attributes["employees"] = 4.0;

    auto single = fuse(std::vector{costar});
    CHECK(single.parcelId == "14-9");
    CHECK(single.canonicalAddress->same_place(*costar.address));
    CHECK(single.point == costar.point);
    CHECK(single.businessName == "acme");
    CHECK(single.attributes.size() == 1);
    CHECK(single.provenance.size() == 1);

    std::vector cluster{costar, license, parcel};
    auto p = fuse(cluster);
    CHECK(p.parcelId == "14-1");
    CHECK(p.canonicalAddress->same_place(*parcel.address));
    CHECK(p.point == parcel.point);
    CHECK_FALSE(p.pointGeocoded);
    CHECK(p.businessName == "ACME");
    CHECK(p.usageType == "RESTAURANT");
    CHECK(p.attributes.at("costar.floor_size") == ingest::AttrValue{2500.0});
    CHECK(p.attributes.at("parcel.land_area") == ingest::AttrValue{100.0});
    CHECK(std::get<std::string>(p.attributes.at("costar.address")) == "10 OAK ST STE 2");
    CHECK_FALSE(p.attributes.count("license.address"));
    // 2 + 1 + 1 constituent attributes plus the preserved CoStar address.
    CHECK(p.attributes.size() == 5);

    for (int perm = 0; perm < 6; ++perm) {
        std::next_permutation(cluster.begin(), cluster.end(),
                              [](const SourceRecord& a, const SourceRecord& b) { return a.sourceId < b.sourceId; });
        CHECK(fuse(cluster).propertyId == p.propertyId);
    }

    // Source coordinates win over a geocoded point even from a preferred dataset.
    auto parcel_geo = parcel;
    parcel_geo.pointGeocoded = true;
    auto q = fuse(std::vector{parcel_geo, costar});
    CHECK(q.point == costar.point);
    CHECK_FALSE(q.pointGeocoded);
}

TEST_CASE("fuse: attribute count adds up when addresses agree") {
    auto a = rec("PAR-1", Dataset::Parcel), b = rec("CST-1", Dataset::Costar), c = rec("CST-2", Dataset::Costar);
    for (auto* r : {&a, &b, &c}) r->address = address::normalize_address("3 Elm Ave");
    a.attributes = {{"land_area", 1.0}, {"lot_size", 2.0}};
    b.attributes = {{"floor_size", 3.0}, {"num_units", 4.0}, {"year_built", 1990.0}};
    c.attributes = {{"floor_size", 5.0}};
    auto p = fuse(std::vector{a, b, c});
    CHECK(p.attributes.size() == 6);
    CHECK(p.attributes.at("costar:CST-2.floor_size") == ingest::AttrValue{5.0});
}

TEST_CASE("cluster and fuse_all follow transitive links") {
    std::vector<SourceRecord> recs{rec("PAR-1", Dataset::Parcel), rec("CST-1", Dataset::Costar),
                                   rec("BL-1", Dataset::BusinessLicense), rec("BL-2", Dataset::BusinessLicense)};
    for (auto& r : recs) r.parcelId = "x";
    std::vector<DatasetLink> links{
        {Dataset::Parcel, Dataset::Costar, {"PAR-1", "CST-1", Tier::ParcelId, {}, {}}},
        {Dataset::Costar, Dataset::BusinessLicense, {"CST-1", "BL-1", Tier::GeoFuzzy, 0.9, 10.0}},
        {Dataset::Parcel, Dataset::BusinessLicense, {"PAR-1", "BL-2", Tier::NoMatch, {}, {}}},
    };
    auto cs = cluster(recs, links);
    REQUIRE(cs.size() == 2);
    CHECK(cs[0].size() == 3);
    CHECK(cs[1].size() == 1);
    CHECK(cs[1][0].sourceId == "BL-2");
    CHECK(fuse_all(recs, links).size() == 2);

    links.push_back({Dataset::Parcel, Dataset::Costar, {"PAR-1", "CST-404", Tier::ParcelId, {}, {}}});
    CHECK_THROWS_AS(cluster(recs, links), Error);
}

TEST_CASE("links CSV and properties JSON round-trip") {
    auto dir = std::filesystem::temp_directory_path() / "firerisk_linkage_rt";
    std::filesystem::remove_all(dir);
    std::vector<DatasetLink> links{
        {Dataset::Parcel, Dataset::Costar, {"PAR-1", "CST-1", Tier::ParcelId, std::nullopt, 3.25}},
        {Dataset::Costar, Dataset::BusinessLicense, {"CST-1", "BL, 1", Tier::GeoFuzzy, 0.9411764705882353, 10.0}},
    };
    write_links(dir / "links.csv", links);
    auto back = read_links(dir / "links.csv");
    REQUIRE(back.size() == 2);
    CHECK(back[1].decision.rightId == "BL, 1");
    CHECK(back[1].decision.similarity == 0.9411764705882353);
    CHECK_FALSE(back[0].decision.similarity);
    CHECK(back[0].decision.distanceMeters == 3.25);
    CHECK(back[0].decision.tier == Tier::ParcelId);

    synth::SynthConfig sc;
    sc.seed = 2;
    sc.nProperties = 60;
    sc.corruption = {0.1, 0.3, 25.0};
    auto out = synth::synth_generate(sc);
    std::vector<SourceRecord> recs;
    std::vector<DatasetLink> dl;
    for (auto d : {Dataset::Parcel, Dataset::Costar}) {
        const auto& r = out.records.at(d);
        recs.insert(recs.end(), r.begin(), r.end());
    }
    for (auto& d : link_datasets(out.records.at(Dataset::Parcel), out.records.at(Dataset::Costar), {}))
        dl.push_back({Dataset::Parcel, Dataset::Costar, d});
    auto props = fuse_all(recs, dl);
    write_properties(dir / "props.json", props);
    auto again = read_properties(dir / "props.json");
    REQUIRE(again.size() == props.size());
    for (std::size_t i = 0; i < props.size(); ++i) {
        CHECK(again[i].propertyId == props[i].propertyId);
        CHECK(again[i].point == props[i].point);
        CHECK(again[i].attributes == props[i].attributes);
        CHECK(again[i].provenance == props[i].provenance);
        CHECK(again[i].canonicalAddress->same_place(*props[i].canonicalAddress));
        CHECK(again[i].canonicalAddress->raw == props[i].canonicalAddress->raw);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("config validation and tier names") {
    LinkConfig cfg;
    cfg.radiusMeters = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.nameThreshold = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    CHECK(parse_tier("GEO_FUZZY") == Tier::GeoFuzzy);
    CHECK_THROWS_AS(parse_tier("FUZZY"), Error);
}
