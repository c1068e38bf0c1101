#include <atomic>
#include <filesystem>
#include <thread>

#include "doctest.h"
#include "firerisk/csv.hpp"
#include "firerisk/ingest.hpp"
#include "firerisk/synth.hpp"
#include "httplib.h"

using namespace firerisk;
using namespace firerisk::ingest;

namespace {

std::string header_of(Dataset d) {
    std::string h;
    for (const auto& c : default_schema(d).header()) h += (h.empty() ? "" : ",") + c;
    return h + "\n";
}

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("csv: parse and escape") {
    auto rows = csv::parse("\xEF\xBB\xBF" "a,b\r\n\"x, y\",\"he said \"\"hi\"\"\"\n,\n");
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == csv::Row{"a", "b"});
    CHECK(rows[1] == csv::Row{"x, y", "he said \"hi\""});
    CHECK(rows[2] == csv::Row{"", ""});
    CHECK(csv::escape("plain") == "plain");
    CHECK(csv::escape("a,b") == "\"a,b\"");
    CHECK(csv::escape("q\"") == "\"q\"\"\"");
    CHECK_THROWS_AS(csv::parse("\"open"), csv::Error);

    auto again = csv::parse(csv::escape("x, y") + "," + csv::escape("line\nbreak") + "\n");
    CHECK(again == std::vector<csv::Row>{{"x, y", "line\nbreak"}});
}

TEST_CASE("read: empty CSV with valid header") {
    auto r = parse_dataset(header_of(Dataset::Parcel), default_schema(Dataset::Parcel), "t");
    CHECK(r.records.empty());
    CHECK(r.rejects.empty());
}

TEST_CASE("read: row without any location is rejected") {
    std::string text = header_of(Dataset::BusinessLicense) + "BL-1,,,,,ACME,AUTO REPAIR,,3\n";
    auto r = parse_dataset(text, default_schema(Dataset::BusinessLicense), "t");
    CHECK(r.records.empty());
    REQUIRE(r.rejects.size() == 1);
    CHECK(r.rejects[0].reason == RejectReason::NoLocation);
    CHECK(r.rejects[0].sourceId == "BL-1");
    CHECK(r.rejects[0].line == 2);
    CHECK(to_string(RejectReason::NoLocation) == "NO_LOCATION");
}

TEST_CASE("read: three rows, one with latitude 95") {
    std::string text = header_of(Dataset::Parcel) +
                       "P1,14-0001-0001,12 Oak St,33.75,-84.39,,,,,,,,\n"
                       "P2,,13 Oak St,95,-84.39,,,,,,,,\n"
                       "P3,,14 Oak St,,,,,,100,,,,NBHD-01\n";
    auto r = parse_dataset(text, default_schema(Dataset::Parcel), "t");
    CHECK(r.records.size() == 2);
    REQUIRE(r.rejects.size() == 1);
    CHECK(r.rejects[0].reason == RejectReason::BadCoordinate);
    CHECK(r.rejects[0].sourceId == "P2");
    CHECK(r.records[1].attributes.at("land_area") == AttrValue{100.0});
    CHECK(r.records[1].attributes.at("neighborhood") == AttrValue{std::string("NBHD-01")});
}

TEST_CASE("read: other reject reasons") {
    std::string text = header_of(Dataset::FirePermits) +
                       "FP-1,,1 A St,,,,,2012-01-01,\n"
                       "FP-1,,2 A St,,,,,2012-01-01,\n"
                       "FP-2,,3 A St,,,,,,\n"
                       "FP-3,,4 A St,,,,,2012-13-01,\n"
                       ",,5 A St,,,,,2012-01-01,\n"
                       "FP-4,too,few\n"
                       "\n"
                       "FP-5,,No Number Rd,33.7,-84.4,,,2013-02-03,ANNUAL\n";
    auto r = parse_dataset(text, default_schema(Dataset::FirePermits), "t");
    REQUIRE(r.records.size() == 2);
    CHECK(r.records[1].unparsedAddress == "No Number Rd");
    CHECK_FALSE(r.records[1].address);
    std::vector<RejectReason> reasons;
    for (const auto& j : r.rejects) reasons.push_back(j.reason);
    CHECK(reasons == std::vector<RejectReason>{RejectReason::DuplicateId, RejectReason::MissingEventDate,
                                               RejectReason::BadDate, RejectReason::MissingId,
                                               RejectReason::WrongFieldCount});
    CHECK(r.records.size() + r.rejects.size() == 7);
}

TEST_CASE("read: header mismatch") {
    CHECK_THROWS_AS(parse_dataset("a,b,c\n", default_schema(Dataset::Parcel), "t"), Error);
    CHECK_THROWS_AS(parse_dataset("", default_schema(Dataset::Parcel), "t"), Error);
    try {
        parse_dataset(header_of(Dataset::Costar), default_schema(Dataset::Parcel), "t");
        FAIL("expected SchemaMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::SchemaMismatch);
    }
    CHECK_THROWS_AS(read_dataset("/nonexistent/file.csv", default_schema(Dataset::Parcel)), Error);
}

TEST_CASE("dataset names") {
    for (std::size_t i = 0; i < kDatasetCount; ++i) {
        auto d = static_cast<Dataset>(i);
        CHECK(parse_dataset(to_string(d)) == d);
    }
    CHECK(file_name(Dataset::FireIncidents) == "fire_incidents.csv");
    CHECK(attribute_prefix(Dataset::Costar) == "costar");
    CHECK_FALSE(parse_dataset("NOPE"));
}

TEST_CASE("write then read reproduces synthetic records") {
    synth::SynthConfig cfg;
    cfg.seed = 4;
    cfg.nProperties = 150;
    cfg.corruption = {0.1, 0.2, 10.0};
    auto out = synth::synth_generate(cfg);
    auto dir = temp_dir("firerisk_ingest_rt");
    for (const auto& [d, recs] : out.records) {
        for (auto schema : {default_schema(d), ingested_schema(d)}) {
            write_dataset(dir / file_name(d), recs, schema);
            auto back = read_dataset(dir / file_name(d), schema);
            CHECK(back.rejects.empty());
            REQUIRE(back.records.size() == recs.size());
            for (std::size_t i = 0; i < recs.size(); ++i) {
                INFO(recs[i].sourceId);
                CHECK(same_fields(recs[i], back.records[i]));
            }
        }
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("stub geocoder: deterministic and inside the city extent") {
    auto box = default_city_box();
    auto city = geo::rectangle("atl", geo::OverlayKind::City, "Atlanta", box);
    StubGeocoder a(box), b(box);
    for (int i = 0; i < 100; ++i) {
        auto addr = address::normalize_address(std::to_string(100 + i) + " Peachtree St NE");
        auto ra = geocode(addr, a), rb = geocode(addr, b);
        CHECK(ra.point == rb.point);
        CHECK(ra.confidence == 1.0);
        CHECK(geo::point_in_polygon(ra.point, city));
    }
}

TEST_CASE("geocode_missing keeps source points") {
    std::vector<SourceRecord> recs(3);
    recs[0].sourceId = "a";
    recs[0].address = address::normalize_address("1 Oak St");
    recs[1].sourceId = "b";
    recs[1].address = address::normalize_address("2 Oak St");
    recs[1].point = geo::GeoPoint{33.7, -84.4};
    recs[2].sourceId = "c";
    recs[2].parcelId = "14-0000-0001";
    StubGeocoder stub(default_city_box());
    auto s = geocode_missing(recs, stub);
    CHECK(s.geocoded == 1);
    CHECK(recs[0].point);
    CHECK(recs[0].pointGeocoded);
    CHECK(recs[1].point == geo::GeoPoint{33.7, -84.4});
    CHECK_FALSE(recs[1].pointGeocoded);
    CHECK_FALSE(recs[2].point);
}

TEST_CASE("http geocoder: success, not found, rate limited") {
    httplib::Server svr;
    std::atomic<int> limited{0};
    svr.Get("/geocode", [&](const httplib::Request& req, httplib::Response& res) {
        auto q = req.get_param_value("address");
        if (q.find("MISSING") != std::string::npos) {
            res.status = 404;
        } else if (q.find("BUSY") != std::string::npos && limited.fetch_add(1) < 2) {
            res.status = 429;
            res.set_header("Retry-After", "0");
        } else {
            res.set_content(R"({"lat": 33.7, "lon": -84.4, "confidence": 0.9})", "application/json");
        }
    });
    int port = svr.bind_to_any_port("127.0.0.1");
    std::thread t([&] { svr.listen_after_bind(); });
    svr.wait_until_ready();

    HttpGeocoder client("http://127.0.0.1:" + std::to_string(port) + "/geocode");
    auto ok = client.geocode(address::normalize_address("1 Oak St"));
    CHECK(ok.point == geo::GeoPoint{33.7, -84.4});
    CHECK(ok.confidence == 0.9);
    try {
        client.geocode(address::normalize_address("1 MISSING St"));
        FAIL("expected NotFound");
    } catch (const GeocodeError& e) {
        CHECK(e.code() == GeocodeErrc::NotFound);
    }
    try {
        client.geocode(address::normalize_address("1 BUSY St"));
        FAIL("expected RateLimited");
    } catch (const GeocodeError& e) {
        CHECK(e.code() == GeocodeErrc::RateLimited);
    }

    std::vector<SourceRecord> recs(2);
    recs[0].sourceId = "busy";
    recs[0].address = address::normalize_address("2 BUSY St");
    recs[1].sourceId = "missing";
    recs[1].address = address::normalize_address("2 MISSING St");
    auto s = geocode_missing(recs, client);
    CHECK(s.geocoded == 1);
    CHECK(s.notFound == 1);
    CHECK(recs[0].point);

    svr.stop();
    t.join();

    HttpGeocoder dead("http://127.0.0.1:" + std::to_string(port) + "/geocode");
    try {
        dead.geocode(address::normalize_address("1 Oak St"));
        FAIL("expected Transport");
    } catch (const GeocodeError& e) {
        CHECK(e.code() == GeocodeErrc::Transport);
    }
}

TEST_CASE("city_filter") {
    auto city = geo::rectangle("atl", geo::OverlayKind::City, "Atlanta", default_city_box());
    std::vector<SourceRecord> recs(3);
    recs[0].sourceId = "in";
    recs[0].point = geo::GeoPoint{33.75, -84.39};
    recs[1].sourceId = "out";
    recs[1].point = geo::GeoPoint{34.2, -84.39};
    recs[2].sourceId = "nopoint";
    recs[2].parcelId = "x";
    auto r = city_filter(recs, city);
    REQUIRE(r.kept.size() == 2);
    CHECK(r.kept[0].sourceId == "in");
    CHECK(r.kept[1].sourceId == "nopoint");
    REQUIRE(r.removed.size() == 1);
    CHECK(r.removed[0].sourceId == "out");
}

TEST_CASE("rejects file") {
    auto dir = temp_dir("firerisk_rejects");
    std::vector<Reject> rj{{3, "X-1", RejectReason::BadNumber, "floor_size = 'abc'"}};
    write_rejects(dir / "rejects.csv", Dataset::Costar, rj);
    auto rows = csv::read_file(dir / "rejects.csv");
    REQUIRE(rows.size() == 2);
    CHECK(rows[1] == csv::Row{"COSTAR", "3", "X-1", "BAD_NUMBER", "floor_size = 'abc'"});
    std::filesystem::remove_all(dir);
}
