#include "config.hpp"

#include <fstream>
#include <set>

namespace firerisk::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j.items())
        if (!ok.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

template <class T>
T get(const json& j, const char* key, const T& fallback) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    return j.at(key).get<T>();
}

Date date_field(const json& j, const char* key, const Date& fallback) {
    if (!j.contains(key)) return fallback;
    auto d = parse_date(j.at(key).get<std::string>());
    if (!d) throw ConfigError(std::string(key) + " must be a YYYY-MM-DD date");
    return *d;
}

TimeWindow window_field(const json& j, const char* key) {
    if (!j.contains(key)) throw ConfigError(std::string("missing ") + key);
    const auto& w = j.at(key);
    check_keys(w, key, {"start", "end"});
    auto s = parse_date(w.at("start").get<std::string>());
    auto e = parse_date(w.at("end").get<std::string>());
    if (!s || !e) throw ConfigError(std::string(key) + " dates must be YYYY-MM-DD");
    return {*s, *e};
}

fs::path under(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : base / p; }

}  // namespace

std::string PipelineConfig::digest() const { return hex64(fnv1a64(effective.dump())); }

PipelineConfig parse_config(json doc, const Overrides& overrides) {
    if (overrides.seed) doc["seed"] = *overrides.seed;
    if (overrides.outDir) doc["outDir"] = overrides.outDir->string();
    if (overrides.port) doc["serve"]["port"] = *overrides.port;

    PipelineConfig c;
    try {
        check_keys(doc, "config",
                   {"dataDir", "outDir", "seed", "synth", "link", "schema", "trainWindow", "testWindow", "windows",
                    "perYear", "folds", "grid", "models", "shuffleLabels", "topWeights", "scoreModel", "scoreDate",
                    "riskMapping", "discovery", "cityBoundary", "overlays", "serve"});
        c.outDir = get<std::string>(doc, "outDir", "out");
        c.dataDir = get<std::string>(doc, "dataDir", (c.outDir / "data").string());
        c.seed = get<std::uint64_t>(doc, "seed", 1);

        const json synth = get<json>(doc, "synth", json::object());
        check_keys(synth, "synth",
                   {"nProperties", "nFires", "fireRate", "windowStart", "windowEnd", "corruption", "weights",
                    "inspectedFraction", "costarFraction", "costarParcelIdRate"});
        auto& sc = c.synth;
        sc.seed = c.seed;
        sc.nProperties = get<std::size_t>(synth, "nProperties", sc.nProperties);
        sc.nFires = get<std::size_t>(synth, "nFires", sc.nFires);
        if (synth.contains("fireRate")) c.fireRate = synth.at("fireRate").get<double>();
        if (c.fireRate && !(*c.fireRate > 0.0 && *c.fireRate < 1.0)) throw ConfigError("synth.fireRate must lie in (0,1)");
        if (c.fireRate && sc.nFires > 0) throw ConfigError("synth.fireRate and synth.nFires are exclusive");
        sc.windowStart = date_field(synth, "windowStart", sc.windowStart);
        sc.windowEnd = date_field(synth, "windowEnd", sc.windowEnd);
        const json corr = get<json>(synth, "corruption", json::object());
        check_keys(corr, "synth.corruption", {"typoRate", "abbrevRate", "jitterMeters"});
        sc.corruption.typoRate = get<double>(corr, "typoRate", 0.0);
        sc.corruption.abbrevRate = get<double>(corr, "abbrevRate", 0.0);
        sc.corruption.jitterMeters = get<double>(corr, "jitterMeters", 0.0);
        sc.signal.weights = get<std::map<std::string, double>>(synth, "weights", {});
        sc.inspectedFraction = get<double>(synth, "inspectedFraction", sc.inspectedFraction);
        sc.costarFraction = get<double>(synth, "costarFraction", sc.costarFraction);
        sc.costarParcelIdRate = get<double>(synth, "costarParcelIdRate", sc.costarParcelIdRate);
        sc.validate();

        const json link = get<json>(doc, "link", json::object());
        check_keys(link, "link", {"radiusMeters", "nameThreshold", "blockPrecision"});
        c.link.radiusMeters = get<double>(link, "radiusMeters", c.link.radiusMeters);
        c.link.nameThreshold = get<double>(link, "nameThreshold", c.link.nameThreshold);
        c.link.blockPrecision = get<int>(link, "blockPrecision", c.link.blockPrecision);
        c.link.validate();

        if (doc.contains("schema") && !doc.at("schema").is_null()) {
            c.schemaPath = doc.at("schema").get<std::string>();
            c.schema = features::FeatureSchema::load(*c.schemaPath);
        } else {
            c.schema = features::default_schema();
        }

        if (doc.contains("windows")) {
            for (const auto& w : doc.at("windows")) {
                check_keys(w, "windows[]", {"train", "test"});
                c.windows.push_back({window_field(w, "train"), window_field(w, "test")});
            }
            if (c.windows.empty()) throw ConfigError("windows must not be empty");
        } else {
            c.windows.push_back({window_field(doc, "trainWindow"), window_field(doc, "testWindow")});
        }
        c.perYear = get<bool>(doc, "perYear", false);
        c.folds = get<std::size_t>(doc, "folds", c.folds);
        if (c.folds < 2) throw ConfigError("folds must be at least 2");
        if (doc.contains("grid")) c.grid = model::GridSpec::from_json(doc.at("grid"));
        if (c.grid.forest_cells().empty() || c.grid.logistic_cells().empty())
            throw ConfigError("grid lists must not be empty");
        auto models = get<std::vector<std::string>>(doc, "models", {"RANDOM_FOREST", "LOGISTIC"});
        c.evalForest = c.evalLogistic = false;
        for (const auto& m : models) {
            auto a = model::parse_algorithm(m);
            (a == model::Algorithm::RandomForest ? c.evalForest : c.evalLogistic) = true;
        }
        if (!c.evalForest && !c.evalLogistic) throw ConfigError("models must name at least one algorithm");
        c.shuffleLabels = get<bool>(doc, "shuffleLabels", false);
        c.topWeights = get<std::size_t>(doc, "topWeights", c.topWeights);
        c.scoreModel = model::parse_algorithm(get<std::string>(doc, "scoreModel", "RANDOM_FOREST"));
        c.scoreDate = date_field(doc, "scoreDate", c.windows.back().test.end);
        c.mapping = risk::parse_mapping(get<std::string>(doc, "riskMapping", "AFFINE"));

        const json disc = get<json>(doc, "discovery", json::object());
        check_keys(disc, "discovery", {"topN", "exclude", "layer"});
        c.discovery.topN = get<std::size_t>(disc, "topN", c.discovery.topN);
        c.discovery.exclude = get<std::vector<std::string>>(disc, "exclude", {});
        c.discovery.link = c.link;
        auto layer = get<std::string>(disc, "layer", "LONG");
        if (layer != "LONG" && layer != "SHORT") throw ConfigError("discovery.layer must be LONG or SHORT");
        c.potentialShortList = layer == "SHORT";

        if (doc.contains("cityBoundary") && !doc.at("cityBoundary").is_null())
            c.cityBoundary = under(c.dataDir, doc.at("cityBoundary").get<std::string>());
        for (const auto& o : get<std::vector<std::string>>(doc, "overlays", {})) c.overlays.push_back(under(c.dataDir, o));

        const json serve = get<json>(doc, "serve", json::object());
        check_keys(serve, "serve", {"host", "port", "staticDir"});
        c.host = get<std::string>(serve, "host", c.host);
        c.port = get<int>(serve, "port", c.port);
        if (c.port < 0 || c.port > 65535) throw ConfigError("serve.port must lie in 0..65535");
        c.staticDir = get<std::string>(serve, "staticDir", "");
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const synth::Error& e) {
        throw ConfigError(e.what());
    } catch (const linkage::Error& e) {
        throw ConfigError(e.what());
    } catch (const features::Error& e) {
        throw ConfigError(e.what());
    } catch (const model::Error& e) {
        throw ConfigError(e.what());
    } catch (const risk::Error& e) {
        throw ConfigError(e.what());
    }
    c.effective = std::move(doc);
    return c;
}

PipelineConfig load_config(const fs::path& path, const Overrides& overrides) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_config(std::move(doc), overrides);
}

}  // namespace firerisk::cli
