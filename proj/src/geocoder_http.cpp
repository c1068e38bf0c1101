#include <cstdlib>

#include "firerisk/ingest.hpp"
#include "httplib.h"

namespace firerisk::ingest {

HttpGeocoder::HttpGeocoder(std::string url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw GeocodeError(GeocodeErrc::Transport, "GEOCODER_URL needs a scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    scheme_host_ = url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
}

GeocodeResult HttpGeocoder::geocode(const address::PostalAddress& addr) {
    std::lock_guard lock(mutex_);
    std::string query = address::format(addr);
    httplib::Client client(scheme_host_);
    client.set_connection_timeout(5);
    client.set_read_timeout(10);
    auto res = client.Get(path_, httplib::Params{{"address", query}}, httplib::Headers{});
    if (!res) throw GeocodeError(GeocodeErrc::Transport, "geocoder unreachable: " + httplib::to_string(res.error()));
    if (res->status == 404) throw GeocodeError(GeocodeErrc::NotFound, "geocoder found nothing for '" + query + "'");
    if (res->status == 429) {
        long secs = 1;
        if (res->has_header("Retry-After")) secs = std::strtol(res->get_header_value("Retry-After").c_str(), nullptr, 10);
        throw GeocodeError(GeocodeErrc::RateLimited, "geocoder rate limit", std::chrono::seconds{secs});
    }
    if (res->status != 200)
        throw GeocodeError(GeocodeErrc::Transport, "geocoder returned HTTP " + std::to_string(res->status));
    try {
        auto body = nlohmann::json::parse(res->body);
        auto point = geo::make_point(body.at("lat").get<double>(), body.at("lon").get<double>());
        double confidence = body.value("confidence", 1.0);
        if (confidence <= 0.0) throw GeocodeError(GeocodeErrc::NotFound, "zero-confidence result for '" + query + "'");
        return {std::move(query), point, confidence};
    } catch (const nlohmann::json::exception& e) {
        throw GeocodeError(GeocodeErrc::Transport, std::string("bad geocoder response: ") + e.what());
    } catch (const geo::Error& e) {
        throw GeocodeError(GeocodeErrc::Transport, std::string("bad geocoder response: ") + e.what());
    }
}

std::unique_ptr<GeocoderClient> make_geocoder(const geo::BoundingBox& box) {
    if (const char* url = std::getenv("GEOCODER_URL"); url && *url) return std::make_unique<HttpGeocoder>(url);
    return std::make_unique<StubGeocoder>(box);
}

}  // namespace firerisk::ingest
